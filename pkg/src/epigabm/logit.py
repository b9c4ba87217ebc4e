"""Binary logit by iteratively reweighted least squares, with optional group fixed effects.

Fixed effects are handled without materialising the dummy matrix: the Hessian
block for the group intercepts is diagonal, so each Newton step solves the
slope system through its Schur complement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit


class DegenerateOutcomeError(ValueError):
    """The outcome has no variation, so no logit model is identified."""


@dataclass
class LogitResult:
    names: list[str]
    coef: np.ndarray
    se: np.ndarray
    loglik: float
    null_loglik: float
    n_obs: int
    n_params: int
    converged: bool
    iterations: int
    fixed_effects: bool = False
    n_groups: int = 0
    dropped_groups: int = 0
    separation: bool = False
    group_effects: dict = field(default_factory=dict, repr=False)

    @property
    def pseudo_r2(self) -> float:
        return 1.0 - self.loglik / self.null_loglik

    @property
    def bic(self) -> float:
        return self.n_params * np.log(self.n_obs) - 2.0 * self.loglik

    @property
    def z(self) -> np.ndarray:
        return self.coef / self.se

    def params(self) -> dict[str, float]:
        return dict(zip(self.names, self.coef.tolist()))

    def to_dict(self) -> dict:
        return {
            "coefficients": [{"name": n, "coef": float(c), "se": float(s)}
                             for n, c, s in zip(self.names, self.coef, self.se)],
            "loglik": self.loglik, "null_loglik": self.null_loglik, "pseudo_r2": self.pseudo_r2,
            "bic": self.bic, "n_obs": self.n_obs, "n_params": self.n_params, "converged": self.converged,
            "iterations": self.iterations, "fixed_effects": self.fixed_effects, "n_groups": self.n_groups,
            "dropped_groups": self.dropped_groups, "separation": self.separation,
        }


def _loglik(y, eta):
    return float(np.sum(y * log_expit(eta) + (1 - y) * log_expit(-eta)))


def _irls(y, X, gidx, n_groups, ridge, max_iter, tol, coef_bound):
    """Newton-Raphson on the (penalised) logit likelihood. Returns beta, alpha, info pieces."""
    n, p = X.shape
    beta = np.zeros(p)
    alpha = np.zeros(n_groups)
    if n_groups:
        # start each group at its empirical log-odds, shrunk away from 0/1
        s = np.bincount(gidx, weights=y, minlength=n_groups)
        c = np.bincount(gidx, minlength=n_groups)
        m = (s + 0.5) / (c + 1.0)
        alpha = np.log(m / (1 - m))

    def objective(b, a):
        eta = X @ b + (a[gidx] if n_groups else 0.0)
        return _loglik(y, eta) - 0.5 * ridge * (b @ b + (a @ a if n_groups else 0.0)), eta

    obj, eta = objective(beta, alpha)
    converged = False
    diverging = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(eta)
        w = mu * (1 - mu)
        r = y - mu
        g_b = X.T @ r - ridge * beta
        C = (X * w[:, None]).T @ X + ridge * np.eye(p)
        if n_groups:
            g_a = np.bincount(gidx, weights=r, minlength=n_groups) - ridge * alpha
            A = np.bincount(gidx, weights=w, minlength=n_groups) + ridge
            A = np.maximum(A, 1e-300)
            B = np.zeros((n_groups, p))
            np.add.at(B, gidx, X * w[:, None])
            S = C - B.T @ (B / A[:, None])
            rhs = g_b - B.T @ (g_a / A)
            d_b = np.linalg.solve(S, rhs) if p else np.zeros(0)
            d_a = (g_a - B @ d_b) / A
        else:
            d_b = np.linalg.solve(C, g_b)
            d_a = alpha
        # step halving keeps the objective monotone
        t = 1.0
        while True:
            nb = beta + t * d_b
            na = alpha + t * d_a if n_groups else alpha
            nobj, neta = objective(nb, na)
            if nobj >= obj - 1e-12 * abs(obj) or t < 1e-8:
                break
            t *= 0.5
        step = t * np.sqrt(d_b @ d_b + ((d_a @ d_a) if n_groups else 0.0))
        beta, alpha, obj, eta = nb, na, nobj, neta
        if np.max(np.abs(beta), initial=0.0) > coef_bound:
            diverging = True
            break
        if step < tol:
            converged = True
            break
    return beta, alpha, eta, converged, it, diverging


def logit_fit(y, X, names=None, *, groups=None, add_intercept=True, max_iter=100, tol=1e-8,
              coef_bound=30.0, ridge_fallback=1.0) -> LogitResult:
    """Maximum-likelihood logit.

    With ``groups`` given, one intercept per group is estimated (no common
    intercept) and groups whose outcome never varies are dropped first.
    Standard errors come from the inverse observed information of the slopes.
    If a coefficient exceeds ``coef_bound`` (separation), the model is refit
    with an L2 penalty of ``ridge_fallback`` and flagged.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y have different numbers of rows")
    names = list(names) if names is not None else [f"x{i}" for i in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise ValueError("names must match the number of columns")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("outcome must be binary 0/1")
    if y.size == 0 or y.min() == y.max():
        raise DegenerateOutcomeError("outcome has no variation (all zeros or all ones)")

    fixed = groups is not None
    dropped = 0
    labels = None
    if fixed:
        groups = np.asarray(groups)
        labels, gidx = np.unique(groups, return_inverse=True)
        s = np.bincount(gidx, weights=y)
        c = np.bincount(gidx)
        keep_g = (s > 0) & (s < c)
        dropped = int((~keep_g).sum())
        rows = keep_g[gidx]
        if not rows.any():
            raise DegenerateOutcomeError("no group has outcome variation")
        y, X = y[rows], X[rows]
        labels = labels[keep_g]
        remap = np.cumsum(keep_g) - 1
        gidx = remap[gidx[rows]]
        n_groups = len(labels)
    else:
        gidx = np.zeros(len(y), dtype=np.intp)
        n_groups = 0
        if add_intercept:
            X = np.column_stack([np.ones(len(y)), X])
            names = ["const", *names]

    beta, alpha, eta, converged, iters, diverging = _irls(y, X, gidx, n_groups, 0.0, max_iter, tol, coef_bound)
    ridge = 0.0
    if diverging:
        ridge = ridge_fallback
        beta, alpha, eta, converged, iters, _ = _irls(y, X, gidx, n_groups, ridge, max_iter, tol, np.inf)

    mu = expit(eta)
    w = mu * (1 - mu)
    C = (X * w[:, None]).T @ X + ridge * np.eye(X.shape[1])
    if n_groups:
        A = np.bincount(gidx, weights=w, minlength=n_groups) + ridge
        B = np.zeros((n_groups, X.shape[1]))
        np.add.at(B, gidx, X * w[:, None])
        info = C - B.T @ (B / A[:, None])
    else:
        info = C
    try:
        cov = np.linalg.inv(info)
        se = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        se = np.full(X.shape[1], np.nan)

    if n_groups:
        # null model: group intercepts only, whose MLE is each group's outcome share
        share = np.bincount(gidx, weights=y, minlength=n_groups) / np.bincount(gidx, minlength=n_groups)
        null_ll = _loglik(y, np.log(share / (1 - share))[gidx])
        k = X.shape[1] + n_groups
    else:
        ybar = y.mean()
        null_ll = _loglik(y, np.full(len(y), np.log(ybar / (1 - ybar))))
        k = X.shape[1]
    return LogitResult(
        names=names, coef=beta, se=se, loglik=_loglik(y, eta), null_loglik=null_ll, n_obs=len(y), n_params=k,
        converged=converged, iterations=iters, fixed_effects=fixed, n_groups=n_groups, dropped_groups=dropped,
        separation=diverging, group_effects=dict(zip(labels.tolist(), alpha.tolist())) if n_groups else {},
    )
