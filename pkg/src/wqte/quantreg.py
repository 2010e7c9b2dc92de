"""Check-loss minimisation: weighted quantiles and weighted linear quantile regression.

The regression solver runs iteratively reweighted least squares on a
smoothed check loss (quadratic inside a band ``|u| <= eps``), annealing the
band geometrically from ``1e-2 * scale(y)`` down to ``1e-8 * scale(y)``, and
then polishes the smoothed solution with exact simplex-style exchange steps
on the active interpolation set. The polishing loop terminates with a
subgradient certificate, so the returned coefficients are an exact optimum
of the piecewise-linear objective whenever ``converged`` is true.

IRLS is only a warm start here: the exchange stage is what certifies the
optimum, and the number of exchange pivots is insensitive to how hard IRLS
is driven. The per-level sweep budgets below reflect that; ``max_iter``
remains the hard cap per level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ArgumentError,
    DegenerateWeightsError,
    SingularDesignError,
)

# Geometric annealing of the smoothing band, relative to scale(y), with the
# IRLS sweep budget spent at each level.
_EPS_LEVELS = (1e-2, 1e-4, 1e-6, 1e-8)
_LEVEL_SWEEPS = (15, 6, 4, 3)
_DEFAULT_MAX_ITER = 500
_S_TOL = 1e-9  # slack allowed on the dual multipliers in the optimality certificate


@dataclass(frozen=True)
class QuantileFit:
    """Result of a weighted quantile regression."""

    tau: float
    beta: np.ndarray
    objective: float
    n_effective: int
    converged: bool
    n_iter: int


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ArgumentError(f"tau must lie strictly inside (0, 1), got {tau}")
    return tau


def check_loss(u, tau: float):
    """Check loss rho_tau(u) = u * (tau - 1{u < 0}); accepts scalars or arrays."""
    tau = _check_tau(tau)
    u = np.asarray(u, dtype=float)
    out = u * np.where(u >= 0.0, tau, tau - 1.0)
    return float(out) if out.ndim == 0 else out


def _validate_weights(y: np.ndarray, w) -> np.ndarray:
    if w is None:
        return np.ones_like(y)
    w = np.asarray(w, dtype=float).ravel()
    if w.shape != y.shape:
        raise ArgumentError("weights must have the same length as y")
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise ArgumentError("weights must be finite and nonnegative")
    return w


def weighted_quantile(y, w, tau: float) -> float:
    """Smallest y value whose normalised cumulative weight reaches tau.

    This is the left endpoint of the minimising interval of the weighted
    check loss, i.e. ``inf{y : F_hat(y) >= tau}`` for the weighted empirical
    CDF ``F_hat``.
    """
    tau = _check_tau(tau)
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise ArgumentError("empty input")
    if not np.all(np.isfinite(y)):
        raise ArgumentError("y must be finite")
    w = _validate_weights(y, w)
    total = float(w.sum())
    if total <= 0.0:
        raise DegenerateWeightsError("all observation weights are zero")
    order = np.argsort(y, kind="stable")
    cum = np.cumsum(w[order])
    k = int(np.searchsorted(cum, tau * total, side="left"))
    return float(y[order][min(k, y.size - 1)])


def _obj(X, y, w, beta, tau):
    r = y - X @ beta
    return float(np.dot(w, r * np.where(r >= 0.0, tau, tau - 1.0)))


def _irls(X, y, w, tau, scale, max_iter):
    """Smoothed-loss warm start; returns (beta, iterations used)."""
    sw = np.sqrt(w)
    beta, *_ = np.linalg.lstsq(sw[:, None] * X, sw * y, rcond=None)
    xtw = X.T @ w
    iters = 0
    for level, sweeps in zip(_EPS_LEVELS, _LEVEL_SWEEPS):
        eps = level * scale
        for _ in range(min(max_iter, sweeps)):
            iters += 1
            r = y - X @ beta
            d = w / np.maximum(np.abs(r), eps)
            a = X.T @ (d[:, None] * X)
            b = X.T @ (d * y) + (tau - 0.5) * xtw
            try:
                beta_new = np.linalg.solve(a, b)
            except np.linalg.LinAlgError:
                sd = np.sqrt(d)
                beta_new, *_ = np.linalg.lstsq(sd[:, None] * X, sd * y + (tau - 0.5) * w / sd,
                                               rcond=None)
            step = np.max(np.abs(beta_new - beta))
            beta = beta_new
            if step <= 0.05 * eps:
                break
    return beta, iters


def _independent_rows(X, order, k):
    """First k rows (in the given order) whose design rows are independent.

    Incremental Gram-Schmidt; returns None if fewer than k independent rows
    exist.
    """
    chosen: list[int] = []
    basis = np.empty((k, k))
    for idx in order:
        x = X[idx].astype(float)
        nrm0 = np.linalg.norm(x)
        if nrm0 == 0.0:
            continue
        v = x.copy()
        for j in range(len(chosen)):
            v -= np.dot(basis[j], v) * basis[j]
        if np.linalg.norm(v) > 1e-10 * nrm0:
            basis[len(chosen)] = v / np.linalg.norm(v)
            chosen.append(int(idx))
            if len(chosen) == k:
                return chosen
    return None


def _polish(X, y, w, tau, beta, max_pivots, zero_obj_tol):
    """Exchange steps to the exact piecewise-linear optimum.

    Maintains an active set A of k interpolated rows; at each step solves
    for the dual multipliers on A and either certifies optimality (all
    multipliers inside [tau-1, tau]) or pivots the worst violator out along
    an exact line search.
    """
    n, k = X.shape
    r = y - X @ beta
    active = _independent_rows(X, np.argsort(np.abs(r), kind="stable"), k)
    if active is None:
        raise SingularDesignError("design is rank deficient on positive-weight rows")
    A = list(active)

    best_beta = beta
    best_obj = _obj(X, y, w, beta, tau)
    pivots = 0
    converged = False
    while pivots <= max_pivots:
        XA = X[A]
        try:
            beta = np.linalg.solve(XA, y[A])
        except np.linalg.LinAlgError:
            break
        obj = _obj(X, y, w, beta, tau)
        if obj < best_obj:
            best_obj, best_beta = obj, beta
        if best_obj <= zero_obj_tol:
            converged = True  # a zero of a nonnegative objective is globally optimal
            break
        r = y - X @ beta
        r[A] = 0.0
        in_A = np.zeros(n, dtype=bool)
        in_A[A] = True
        psi = np.where(r < 0.0, tau - 1.0, tau)
        g = X.T @ (np.where(in_A, 0.0, w) * psi)
        try:
            s = np.linalg.solve(XA.T, -g) / w[A]
        except np.linalg.LinAlgError:
            break
        over = s - tau
        under = (tau - 1.0) - s
        violation = np.maximum(over, under)
        worst = int(np.argmax(violation))
        if violation[worst] <= _S_TOL:
            converged = True
            break

        pivots += 1
        sigma = -1.0 if over[worst] >= under[worst] else 1.0
        e = np.zeros(k)
        e[worst] = sigma
        d = np.linalg.solve(XA, e)
        u = X @ d
        u[A] = 0.0
        u[A[worst]] = sigma

        # Directional derivative just past t = 0.
        psi0 = np.where(r > 0.0, tau, np.where(r < 0.0, tau - 1.0,
                                               np.where(u > 0.0, tau - 1.0, tau)))
        slope0 = -float(np.dot(w * u, psi0))
        if slope0 >= -1e-14 * (1.0 + abs(best_obj)):
            converged = True  # violation is numerical noise
            break

        # Kinks sitting exactly at t = 0 are already reflected in psi0, so
        # only strictly positive crossings count as blocking events.
        movable = (~in_A) & (u != 0.0)
        t = np.where(movable, r / np.where(u == 0.0, 1.0, u), -1.0)
        cand = np.flatnonzero(t > 0.0)
        if cand.size == 0:
            break  # descent ray unblocked: degenerate instance, keep best iterate
        order = cand[np.lexsort((cand, t[cand]))]
        slopes = slope0 + np.cumsum(w[order] * np.abs(u[order]))
        stop = int(np.searchsorted(slopes >= 0.0, True))
        if stop >= order.size:
            break
        A[worst] = int(order[stop])

    return best_beta, best_obj, converged, pivots


def _full_column_rank(X) -> bool:
    # Scale-free Gram-matrix eigenvalue test: cheap for narrow designs.
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0.0):
        return False
    gram = (X / norms).T @ (X / norms)
    ev = np.linalg.eigvalsh(gram)
    return bool(ev[0] > X.shape[0] * np.finfo(float).eps)


def fit_weighted_qr(X, y, w=None, tau: float = 0.5, *,
                    max_iter: int = _DEFAULT_MAX_ITER,
                    max_pivots: int = 500) -> QuantileFit:
    """Minimise ``sum_i w_i * rho_tau(y_i - x_i' beta)`` over beta.

    Parameters
    ----------
    X : (n, k) design matrix, intercept column included by the caller.
    y : outcome vector.
    w : nonnegative observation weights; ``None`` means unit weights.
    tau : quantile level in (0, 1).
    max_iter : IRLS iteration cap per annealing level.
    max_pivots : cap on exchange steps in the polishing stage.

    Zero-weight rows are dropped before solving. Raises
    :class:`SingularDesignError` if the design is rank deficient on the
    positive-weight rows; if the exchange stage hits ``max_pivots`` the best
    iterate is returned with ``converged=False``.
    """
    tau = _check_tau(tau)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise ArgumentError("X must be a 2-d design matrix")
    if X.shape[0] != y.shape[0]:
        raise ArgumentError("X and y must have the same number of rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ArgumentError("X and y must be finite")
    w = _validate_weights(y, w)
    if float(w.sum()) <= 0.0:
        raise DegenerateWeightsError("all observation weights are zero")

    keep = w > 0.0
    Xp, yp, wp = X[keep], y[keep], w[keep]
    n_eff, k = Xp.shape
    if n_eff <= k:
        raise ArgumentError(f"need more positive-weight rows ({n_eff}) than columns ({k})")
    if not _full_column_rank(Xp):
        raise SingularDesignError("design is rank deficient on positive-weight rows")

    # Intercept-only problems coincide with the weighted quantile.
    col0 = Xp[:, 0]
    if k == 1 and np.all(col0 == col0[0]) and col0[0] != 0.0:
        q = weighted_quantile(yp, wp, tau)
        beta = np.array([q / col0[0]])
        return QuantileFit(tau=tau, beta=beta, objective=_obj(Xp, yp, wp, beta, tau),
                           n_effective=n_eff, converged=True, n_iter=0)

    sd = float(np.std(yp))
    scale = sd if sd > 0.0 else max(1.0, float(np.max(np.abs(yp))))
    beta, iters = _irls(Xp, yp, wp, tau, scale, max_iter)
    irls_obj = _obj(Xp, yp, wp, beta, tau)
    zero_obj_tol = 1e-12 * scale * float(wp.sum())
    beta_v, obj_v, converged, pivots = _polish(Xp, yp, wp, tau, beta, max_pivots, zero_obj_tol)
    if obj_v <= irls_obj or converged:
        beta, obj = beta_v, obj_v
    else:
        beta, obj = beta, irls_obj
    return QuantileFit(tau=tau, beta=np.asarray(beta, dtype=float),
                       objective=float(obj), n_effective=int(n_eff),
                       converged=bool(converged), n_iter=iters + pivots)
