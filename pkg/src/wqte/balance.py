"""Balancing weights from a tilting function g(x) and the propensity score.

The tilting function selects the target population: g = 1 targets the whole
population (the plain QTE), g = e(1-e) the overlap population, g = e the
exposed, g = 1-e the unexposed. Weights are stored raw (unnormalised);
any normalisation cancels inside the weighted-quantile argmin downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ArgumentError, DegenerateArmError, TiltingError
from .propensity import PropensityModel

UNIFORM = "uniform"
OVERLAP = "overlap"
TREATED = "treated"
UNTREATED = "untreated"
CUSTOM = "custom"

GENERALIZED_IPW = "generalized_ipw"
GENERALIZED_OW = "generalized_ow"


@dataclass(frozen=True)
class TiltingSpec:
    """Target-population tilt; ``fn`` maps the covariate matrix to g(x_i) > 0."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.name not in (UNIFORM, OVERLAP, TREATED, UNTREATED, CUSTOM):
            raise ArgumentError(f"unknown tilting function {self.name!r}")
        if self.name == CUSTOM and self.fn is None:
            raise ArgumentError("custom tilting needs a callable")

    @classmethod
    def uniform(cls) -> "TiltingSpec":
        return cls(UNIFORM)

    @classmethod
    def overlap(cls) -> "TiltingSpec":
        return cls(OVERLAP)

    @classmethod
    def treated(cls) -> "TiltingSpec":
        return cls(TREATED)

    @classmethod
    def untreated(cls) -> "TiltingSpec":
        return cls(UNTREATED)

    @classmethod
    def custom(cls, fn: Callable) -> "TiltingSpec":
        return cls(CUSTOM, fn)

    def values(self, e: np.ndarray, X=None) -> np.ndarray:
        """g(x_i) for every unit, given the binary PS vector e."""
        if self.name == UNIFORM:
            return np.ones_like(e)
        if self.name == OVERLAP:
            return e * (1.0 - e)
        if self.name == TREATED:
            return np.asarray(e, dtype=float)
        if self.name == UNTREATED:
            return 1.0 - np.asarray(e, dtype=float)
        g = np.asarray(self.fn(X), dtype=float).ravel()
        if g.shape != np.shape(e):
            raise TiltingError("custom tilting must return one value per unit")
        if not np.all(np.isfinite(g)) or np.any(g <= 0.0):
            raise TiltingError("custom tilting must be positive and finite at every unit")
        return g


@dataclass(frozen=True)
class WeightVector:
    """Per-unit balancing weights; off-arm entries are zero."""

    w1: np.ndarray | None  # binary: arm z=1
    w0: np.ndarray | None  # binary: arm z=0
    w: np.ndarray | None   # categorical: weight attached to the received level
    tilting: str

    def __post_init__(self):
        for arr in (self.w1, self.w0, self.w):
            if arr is not None and (not np.all(np.isfinite(arr)) or np.any(arr < 0.0)):
                raise ArgumentError("weights must be finite and nonnegative")

    def effective_sample_sizes(self) -> dict[str, float]:
        """ESS = (sum w)^2 / sum w^2, per arm or overall."""
        out = {}
        for name, arr in (("arm1", self.w1), ("arm0", self.w0), ("all", self.w)):
            if arr is not None:
                pos = arr[arr > 0]
                out[name] = float(pos.sum() ** 2 / np.sum(pos**2)) if pos.size else 0.0
        return out

    def max_weight(self) -> float:
        parts = [a for a in (self.w1, self.w0, self.w) if a is not None]
        return float(max(np.max(a) for a in parts))


def _binary_e(ps) -> np.ndarray:
    if isinstance(ps, PropensityModel):
        return ps.binary_scores()
    e = np.asarray(ps, dtype=float).ravel()
    if np.any(e <= 0.0) or np.any(e >= 1.0):
        raise ArgumentError("binary propensity scores must lie strictly inside (0, 1)")
    return e


def _score_matrix(ps) -> np.ndarray:
    if isinstance(ps, PropensityModel):
        return ps.scores
    scores = np.asarray(ps, dtype=float)
    if scores.ndim != 2:
        raise ArgumentError("generalized propensity scores must be an (n, J) matrix")
    if np.any(scores <= 0.0):
        raise ArgumentError("generalized propensity scores must be positive")
    return scores


def make_weights_binary(ps, z, g: TiltingSpec, X=None) -> WeightVector:
    """w1 = g/e on the exposed, w0 = g/(1-e) on the unexposed.

    With g = 1 the combined weight is z/e + (1-z)/(1-e) (inverse probability
    weights); with g = e(1-e) it collapses to |z - e| (overlap weights).
    ``ps`` may be a fitted :class:`PropensityModel` or a raw score vector
    (e.g. the true PS in simulations).
    """
    e = _binary_e(ps)
    z = np.asarray(z, dtype=float).ravel()
    if z.shape != e.shape:
        raise ArgumentError("z and propensity scores must have the same length")
    gv = g.values(e, X)
    w1 = gv / e * z
    w0 = gv / (1.0 - e) * (1.0 - z)
    if w1.sum() <= 0.0 or w0.sum() <= 0.0:
        raise DegenerateArmError("an exposure arm carries no positive weight")
    return WeightVector(w1=w1, w0=w0, w=None, tilting=g.name)


def make_weights_categorical(ps, z, scheme: str = GENERALIZED_IPW) -> WeightVector:
    """Per-unit weight on the received level.

    ``generalized_ipw``: w_i = 1 / e_{z_i}(x_i).
    ``generalized_ow``:  w_i = (1 / e_{z_i}(x_i)) * (sum_j 1/e_j(x_i))^{-1};
    for J = 2 these reduce to the binary overlap weights.
    """
    scores = _score_matrix(ps)
    z = np.asarray(z, dtype=float).ravel()
    n, J = scores.shape
    if z.shape[0] != n:
        raise ArgumentError("z and scores must have the same number of rows")
    idx = (z - 1).astype(int)
    if idx.min() < 0 or idx.max() >= J:
        raise ArgumentError(f"labels must lie in 1..{J}")
    e_received = scores[np.arange(n), idx]
    if scheme == GENERALIZED_IPW:
        w = 1.0 / e_received
    elif scheme == GENERALIZED_OW:
        w = (1.0 / e_received) / np.sum(1.0 / scores, axis=1)
    else:
        raise ArgumentError(f"unknown weighting scheme {scheme!r}")
    for j in range(J):
        if w[idx == j].sum() <= 0.0:
            raise DegenerateArmError(f"level {j + 1} carries no positive weight")
    return WeightVector(w1=None, w0=None, w=w, tilting=scheme)


@dataclass(frozen=True)
class BalanceRow:
    covariate: str
    smd_weighted: float
    smd_unweighted: float
    degenerate: bool  # pooled SD is zero; SMDs undefined


def balance_table(X, z, weights: WeightVector, column_names=None) -> list[BalanceRow]:
    """Weighted and unweighted standardized mean differences per covariate.

    The difference of arm means is scaled by the pooled unweighted SD,
    ``sqrt((sd1^2 + sd0^2) / 2)``; covariates with zero pooled SD are
    flagged instead of producing an SMD.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    z = np.asarray(z, dtype=float).ravel()
    if weights.w1 is None or weights.w0 is None:
        raise ArgumentError("balance diagnostics require binary arm weights")
    names = list(column_names) if column_names is not None else \
        [f"x{j + 1}" for j in range(X.shape[1])]
    m1, m0 = z == 1.0, z == 0.0
    rows = []
    for j, name in enumerate(names):
        col = X[:, j]
        sd1 = np.var(col[m1], ddof=1) if m1.sum() > 1 else 0.0
        sd0 = np.var(col[m0], ddof=1) if m0.sum() > 1 else 0.0
        pooled = np.sqrt((sd1 + sd0) / 2.0)
        if pooled == 0.0:
            rows.append(BalanceRow(name, float("nan"), float("nan"), True))
            continue
        raw = (col[m1].mean() - col[m0].mean()) / pooled
        wmean1 = np.average(col[m1], weights=weights.w1[m1])
        wmean0 = np.average(col[m0], weights=weights.w0[m0])
        rows.append(BalanceRow(name, float((wmean1 - wmean0) / pooled), float(raw), False))
    return rows
