"""Simulation data generators and ground-truth oracles.

Scenario keys follow the grammar

    {binary|cat|cont}-{weak|strong}-{d1|d4}-{nointer|inter}-{pareto<theta>|t<nu>}

e.g. ``binary-weak-d1-nointer-pareto5``. The interaction variant exists only
for the binary univariate design. All generated exposures come from
correctly specified models: a logistic propensity for a binary exposure, a
three-level multinomial logit for a categorical one, and a normal dose
model for a continuous one. Outcomes follow location-shift models, so the
homogeneous presets have an exactly known quantile exposure effect (1 per
exposure step or unit dose, and (+1, -1) for the categorical contrasts).

The dose model noise is read as variance 5 (SD sqrt(5)); flip
``DOSE_NOISE_IS_VARIANCE`` to treat it as SD 5 instead.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, ExposureKind
from .errors import ArgumentError, UsageError
from .quantreg import weighted_quantile
from .rngs import substream

# Interpretation of the dose-model noise parameter "5".
DOSE_NOISE_IS_VARIANCE = True
_DOSE_NOISE_PARAM = 5.0

SIGMA4 = np.array([
    [1.0, 0.5, 0.2, 0.3],
    [0.5, 1.0, 0.7, 0.0],
    [0.2, 0.7, 1.0, 0.0],
    [0.3, 0.0, 0.0, 1.0],
])

# Exposure-model parameters, keyed by (kind, confounding, d).
_BINARY_PARAMS = {
    ("weak", 1): np.array([0.5, 0.5]),        # (alpha0, alpha1), with intercept
    ("strong", 1): np.array([0.5, 2.0]),
    ("weak", 4): np.array([-0.1, 0.2, 0.2, -0.1]),   # no intercept
    ("strong", 4): np.array([-1.0, 2.0, 2.0, -1.0]),
}
_CAT_PARAMS = {
    ("weak", 1): (np.array([0.5, 0.2]), np.array([0.5, 0.3])),    # (alpha, gamma) with intercept
    ("strong", 1): (np.array([0.5, 1.5]), np.array([0.5, 2.0])),
    ("weak", 4): (1.0 * np.array([0.1, 0.2, 0.2, 0.1]),          # eta * base, no intercept
                  1.0 * np.array([0.1, 0.1, 0.2, 0.2])),
    ("strong", 4): (5.0 * np.array([0.1, 0.2, 0.2, 0.1]),
                    5.0 * np.array([0.1, 0.1, 0.2, 0.2])),
}
_CONT_PARAMS = {
    ("weak", 1): np.array([1.0, 0.3]),        # (a0, a1), with intercept
    ("strong", 1): np.array([1.0, 3.0]),
    ("weak", 4): 0.1 * np.array([1.0, 2.0, 2.0, 1.0]),   # no intercept
    ("strong", 4): 0.8 * np.array([1.0, 2.0, 2.0, 1.0]),
}

_KEY_RE = re.compile(
    r"^(binary|cat|cont)-(weak|strong)-d(1|4)-(nointer|inter)-(pareto(\d+)|t(\d+))$"
)


@dataclass(frozen=True)
class ErrorSpec:
    """Outcome error distribution: Pareto(location, shape) or Student-t(df)."""

    dist: str                 # "pareto" | "student_t"
    location: float = 1.0     # pareto only
    shape: float = 5.0        # pareto tail index
    df: float = 3.0           # student_t only

    def __post_init__(self):
        if self.dist not in ("pareto", "student_t"):
            raise ArgumentError(f"unknown error distribution {self.dist!r}")


@dataclass(frozen=True)
class SimScenario:
    """One data-generating configuration from the simulation study."""

    key: str
    exposure_kind: str          # "binary" | "cat" | "cont"
    confounding: str            # "weak" | "strong"
    d: int                      # 1 | 4
    interaction: bool
    error: ErrorSpec
    n: int = 2000
    seed: int = 0
    dose_sd: float = field(default=math.sqrt(_DOSE_NOISE_PARAM)
                           if DOSE_NOISE_IS_VARIANCE else _DOSE_NOISE_PARAM)
    # Test hook: outcome = 1 + exposure term exactly (no covariate effect, no
    # error), making every estimator's point deterministic.
    degenerate_outcome: bool = False

    def __post_init__(self):
        if self.exposure_kind not in ("binary", "cat", "cont"):
            raise ArgumentError(f"unknown exposure kind {self.exposure_kind!r}")
        if self.confounding not in ("weak", "strong"):
            raise ArgumentError("confounding must be 'weak' or 'strong'")
        if self.d not in (1, 4):
            raise ArgumentError("confounder dimension must be 1 or 4")
        if self.interaction and not (self.exposure_kind == "binary" and self.d == 1):
            raise ArgumentError(
                "the interaction variant exists only for the binary univariate design"
            )
        if self.error.dist == "pareto" and self.error.shape <= 2:
            raise ArgumentError("pareto presets need shape > 2 (finite variance)")
        if self.n < 1:
            raise ArgumentError("sample size must be positive")

    @property
    def dataset_kind(self) -> ExposureKind:
        if self.exposure_kind == "binary":
            return ExposureKind.binary()
        if self.exposure_kind == "cat":
            return ExposureKind.categorical(3)
        return ExposureKind.continuous()


def parse_scenario(key: str, n: int = 2000, seed: int = 0) -> SimScenario:
    """Build a scenario from its string key."""
    m = _KEY_RE.match(key.strip())
    if m is None:
        raise UsageError(
            f"unknown scenario key {key!r}; expected "
            "{binary|cat|cont}-{weak|strong}-{d1|d4}-{nointer|inter}-{pareto<theta>|t<nu>}, "
            f"e.g. {available_presets()[0]!r}"
        )
    kind, confounding, d, inter, err, theta, nu = m.groups()
    if theta is not None:
        error = ErrorSpec("pareto", location=1.0, shape=float(theta))
    else:
        error = ErrorSpec("student_t", df=float(nu))
    try:
        return SimScenario(key=key.strip(), exposure_kind=kind, confounding=confounding,
                           d=int(d), interaction=(inter == "inter"), error=error,
                           n=n, seed=seed)
    except ArgumentError as exc:
        raise UsageError(str(exc)) from None


def available_presets() -> list[str]:
    """Scenario keys from the simulation study grid (Pareto errors)."""
    keys = []
    for kind in ("binary", "cat", "cont"):
        for conf in ("weak", "strong"):
            for d in (1, 4):
                inters = ("nointer", "inter") if kind == "binary" and d == 1 else ("nointer",)
                for inter in inters:
                    for theta in (5, 7, 10):
                        keys.append(f"{kind}-{conf}-d{d}-{inter}-pareto{theta}")
    return keys


def gen_confounders(scenario: SimScenario, n: int, rng: np.random.Generator) -> np.ndarray:
    """iid N(0,1) for d=1; N_4(0, SIGMA4) via Cholesky for d=4."""
    if scenario.d == 1:
        return rng.standard_normal((n, 1))
    try:
        chol = np.linalg.cholesky(SIGMA4)
    except np.linalg.LinAlgError:
        raise ArgumentError("confounder covariance is not positive definite") from None
    return rng.standard_normal((n, 4)) @ chol.T


def true_binary_ps(scenario: SimScenario, X: np.ndarray) -> np.ndarray:
    """The generating e(X) for a binary scenario."""
    if scenario.exposure_kind != "binary":
        raise ArgumentError("true binary PS requested for a non-binary scenario")
    params = _BINARY_PARAMS[(scenario.confounding, scenario.d)]
    lin = params[0] + params[1] * X[:, 0] if scenario.d == 1 else X @ params
    return 1.0 / (1.0 + np.exp(-lin))


def true_categorical_ps(scenario: SimScenario, X: np.ndarray) -> np.ndarray:
    """The generating (e_1, e_2, e_3)(X) for a categorical scenario."""
    if scenario.exposure_kind != "cat":
        raise ArgumentError("true categorical PS requested for a non-categorical scenario")
    alpha, gamma = _CAT_PARAMS[(scenario.confounding, scenario.d)]
    if scenario.d == 1:
        u2 = alpha[0] + alpha[1] * X[:, 0]
        u3 = gamma[0] + gamma[1] * X[:, 0]
    else:
        u2 = X @ alpha
        u3 = X @ gamma
    den = 1.0 + np.exp(u2) + np.exp(u3)
    return np.column_stack([1.0 / den, np.exp(u2) / den, np.exp(u3) / den])


def true_dose_mean(scenario: SimScenario, X: np.ndarray) -> np.ndarray:
    """Conditional mean of the continuous dose model."""
    if scenario.exposure_kind != "cont":
        raise ArgumentError("dose mean requested for a non-continuous scenario")
    a = _CONT_PARAMS[(scenario.confounding, scenario.d)]
    return a[0] + a[1] * X[:, 0] if scenario.d == 1 else X @ a


def gen_exposure(scenario: SimScenario, X: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    if scenario.exposure_kind == "binary":
        return (rng.random(n) < true_binary_ps(scenario, X)).astype(float)
    if scenario.exposure_kind == "cat":
        scores = true_categorical_ps(scenario, X)
        u = rng.random(n)
        z = np.ones(n)
        z[u >= scores[:, 0]] = 2.0
        z[u >= scores[:, 0] + scores[:, 1]] = 3.0
        return z
    return true_dose_mean(scenario, X) + scenario.dose_sd * rng.standard_normal(n)


def gen_error(spec: ErrorSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Pareto draws via inverse CDF (eps = location * U^(-1/shape)) or Student-t."""
    if spec.dist == "pareto":
        if spec.shape <= 0:
            raise ArgumentError("pareto shape must be positive")
        return spec.location * rng.random(n) ** (-1.0 / spec.shape)
    if spec.df <= 0:
        raise ArgumentError("student-t degrees of freedom must be positive")
    return rng.standard_t(spec.df, size=n)


def gen_outcome(scenario: SimScenario, X: np.ndarray, z: np.ndarray,
                eps: np.ndarray) -> np.ndarray:
    n = X.shape[0]
    if z.shape[0] != n or eps.shape[0] != n:
        raise ArgumentError("X, z, and eps must have the same number of rows")
    if scenario.exposure_kind == "cat":
        exposure_term = (z == 2.0).astype(float) - (z == 3.0).astype(float)
    else:
        exposure_term = z
    if scenario.degenerate_outcome:
        return 1.0 + exposure_term
    if scenario.d == 1:
        base = 1.0 + exposure_term + X[:, 0] + eps
        if scenario.interaction:
            base = base + z * X[:, 0]
        return base
    return (1.0 + exposure_term + np.sin(X[:, 0]) + X[:, 1] ** 2
            + X[:, 2] + X[:, 3] + X[:, 2] * X[:, 3] + eps)


def gen_dataset(scenario: SimScenario, rng: np.random.Generator | None = None) -> Dataset:
    """Draw one dataset of scenario.n rows (substream of scenario.seed by default)."""
    if rng is None:
        rng = substream(scenario.seed)
    X = gen_confounders(scenario, scenario.n, rng)
    z = gen_exposure(scenario, X, rng)
    eps = gen_error(scenario.error, scenario.n, rng)
    y = gen_outcome(scenario, X, z, eps)
    return Dataset(y=y, exposure=z, covariates=X,
                   column_names=tuple(f"x{j + 1}" for j in range(scenario.d)),
                   kind=scenario.dataset_kind)


def _potential_outcomes(scenario: SimScenario, n_mc: int, rng: np.random.Generator):
    """Confounders, errors, and every potential outcome for oracle evaluation."""
    X = gen_confounders(scenario, n_mc, rng)
    eps = gen_error(scenario.error, n_mc, rng)
    if scenario.exposure_kind == "cat":
        levels = (1.0, 2.0, 3.0)
    else:
        levels = (0.0, 1.0)
    outs = {lv: gen_outcome(scenario, X, np.full(n_mc, lv), eps) for lv in levels}
    return X, outs


def _oracle_tilt(scenario: SimScenario, tilting: str, X: np.ndarray) -> np.ndarray:
    """g(X) under the true propensity scores."""
    if tilting == "uniform":
        return np.ones(X.shape[0])
    if scenario.exposure_kind == "binary":
        e = true_binary_ps(scenario, X)
        if tilting == "overlap":
            return e * (1.0 - e)
        if tilting == "treated":
            return e
        if tilting == "untreated":
            return 1.0 - e
    elif scenario.exposure_kind == "cat" and tilting == "overlap":
        scores = true_categorical_ps(scenario, X)
        return 1.0 / np.sum(1.0 / scores, axis=1)
    raise ArgumentError(
        f"tilting {tilting!r} has no oracle for a {scenario.exposure_kind} exposure"
    )


def true_qte_oracle(scenario: SimScenario, tau: float, n_mc: int = 1_000_000,
                    seed: int = 0):
    """Monte-Carlo population QTE: quantile difference of potential outcomes.

    Returns a float for binary scenarios and a (contrast 2 vs 1, contrast
    3 vs 1) pair for categorical ones. Continuous scenarios follow a
    location-shift dose model, so the per-unit-dose effect is exactly 1.
    """
    return true_wqte_oracle(scenario, "uniform", tau, n_mc=n_mc, seed=seed)


def true_wqte_oracle(scenario: SimScenario, tilting: str, tau: float,
                     n_mc: int = 1_000_000, seed: int = 0):
    """Monte-Carlo weighted QTE under the true PS and the named tilt."""
    if not 0.0 < tau < 1.0:
        raise ArgumentError("tau must lie strictly inside (0, 1)")
    if scenario.exposure_kind == "cont":
        return 1.0
    rng = substream(seed, 900_000)
    X, outs = _potential_outcomes(scenario, n_mc, rng)
    g = _oracle_tilt(scenario, tilting, X)
    if scenario.exposure_kind == "binary":
        q1 = weighted_quantile(outs[1.0], g, tau)
        q0 = weighted_quantile(outs[0.0], g, tau)
        return float(q1 - q0)
    q1 = weighted_quantile(outs[1.0], g, tau)
    q2 = weighted_quantile(outs[2.0], g, tau)
    q3 = weighted_quantile(outs[3.0], g, tau)
    return (float(q2 - q1), float(q3 - q1))


def analytic_effects(scenario: SimScenario):
    """Exact effects for homogeneous (location-shift, no interaction) presets."""
    if scenario.interaction:
        return None
    if scenario.exposure_kind == "cat":
        return (1.0, -1.0)
    return 1.0


def true_effects(scenario: SimScenario, tau: float) -> dict:
    """Ground truth {qte, wqte_overlap} for a scenario at level tau.

    Homogeneous presets are resolved exactly (the location-shift effect,
    where QTE and every WQTE coincide); interaction presets are looked up
    in the frozen oracle constants.
    """
    exact = analytic_effects(scenario)
    if exact is not None:
        return {"qte": exact, "wqte_overlap": exact, "method": "analytic"}
    from .oracle_constants import FROZEN_EFFECTS

    key = f"{scenario.key}|tau={tau:g}"
    if key not in FROZEN_EFFECTS:
        raise UsageError(
            f"no frozen oracle constants for {key!r}; run scripts/freeze_oracles.py"
        )
    return FROZEN_EFFECTS[key]


def scenario_with(scenario: SimScenario, **changes) -> SimScenario:
    """Convenience wrapper around dataclasses.replace."""
    return replace(scenario, **changes)
