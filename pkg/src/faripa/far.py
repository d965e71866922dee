"""Functional autoregressive sources with their mixing and innovation estimation.

Time series are plain float arrays of shape ``(T, D)``; row ``t`` is the
sample at time ``t``.
"""
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (ConfigurationError, DegenerateRegressionError, InstabilityError,
                     NumericError, OutOfSupportError, PreconditionError)

# weights below exp(_LOG_TINY) = 1e-300 count as underflow
_LOG_TINY = math.log(1e-300)
_DIVERGENCE = 1e12


def as_series(x, name="series"):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise PreconditionError(f"{name} must be a nonempty (T, D) array")
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{name} has non-finite entries")
    return x


def lag_matrix(x, p):
    """Stack ``(x_{t-1}, ..., x_{t-p})`` for ``t = p..T-1`` into rows."""
    T = x.shape[0]
    return np.hstack([x[p - k:T - k] for k in range(1, p + 1)])


@dataclass(frozen=True, eq=False)
class FarDynamics:
    order: int
    map: Callable
    D: int
    F: Optional[np.ndarray] = None
    description: str = ""

    def __call__(self, u):
        return self.map(u)


def make_random_sine_dynamics(D, p, rng):
    """``f(u) = sin(F u)`` with ``F`` a ``D x pD`` matrix of U[0, 1] entries."""
    if D < 1 or p < 1:
        raise PreconditionError("D and p must be >= 1")
    F = rng.random((D, p * D))
    F.setflags(write=False)
    return FarDynamics(order=p, map=lambda u: np.sin(F @ u), D=D, F=F,
                       description="sine of random uniform[0,1] matrix")


def zero_dynamics(D, p=1):
    return FarDynamics(order=p, map=lambda u: np.zeros(D), D=D, description="zero")


def simulate_far(dyn, noise, T, burn_in=100):
    """Iterate ``s_t = f(s_{t-1}, ..., s_{t-p}) + e_t``.

    Parameters
    ----------
    dyn : FarDynamics
    noise : array_like or callable
        Either an array with at least ``p + burn_in + T`` rows of driving
        noise, or a callable ``noise(k) -> (k, D) array``. The first ``p``
        rows seed the state; the rest drive the recursion.
    T, burn_in : int

    Returns
    -------
    ndarray, shape (T, D)
        The last `T` states.
    """
    if T < 1 or burn_in < 0:
        raise PreconditionError("T must be >= 1 and burn_in >= 0")
    p, D = dyn.order, dyn.D
    n = p + burn_in + T
    e = noise(n) if callable(noise) else noise
    e = np.asarray(e, dtype=float)
    if e.ndim != 2 or e.shape[1] != D or e.shape[0] < n:
        raise PreconditionError(f"noise must provide ({n}, {D}) draws, got {e.shape}")
    s = np.empty((n, D))
    s[:p] = e[:p]
    for t in range(p, n):
        # most recent lag first
        u = s[t - p:t][::-1].ravel()
        s[t] = dyn(u) + e[t]
        if not np.all(np.abs(s[t]) <= _DIVERGENCE):
            raise InstabilityError(t)
    return s[n - T:]


@dataclass(frozen=True, eq=False)
class MixingSpec:
    A: np.ndarray
    seed: Optional[int] = None
    construction: str = ""

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise PreconditionError("mixing matrix must be square")
        sv = np.linalg.svd(A, compute_uv=False)
        if not sv[-1] > 1e-10 * sv[0]:
            raise PreconditionError("mixing matrix is singular")
        object.__setattr__(self, "A", A)

    @property
    def W(self):
        return np.linalg.inv(self.A)


def mix(spec, s):
    s = as_series(s, "sources")
    if s.shape[1] != spec.A.shape[1]:
        raise PreconditionError(f"sources have D={s.shape[1]}, mixing expects {spec.A.shape[1]}")
    return s @ spec.A.T


def unmix(spec, x):
    return as_series(x, "observation") @ spec.W.T


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel with either a fixed bandwidth ``h`` or the recursive
    time-indexed bandwidth ``t**-beta`` (``0 < beta < 1/d_reg``)."""
    mode: str = "recursive"
    h: Optional[float] = None
    beta: Optional[float] = None
    d_reg: Optional[int] = None

    def __post_init__(self):
        if self.mode == "fixed":
            if self.h is None or not self.h > 0:
                raise ConfigurationError("fixed kernel needs bandwidth h > 0")
        elif self.mode == "recursive":
            if self.beta is None or self.d_reg is None or self.d_reg < 1:
                raise ConfigurationError("recursive kernel needs beta and d_reg >= 1")
            if not 0 < self.beta < 1.0 / self.d_reg:
                raise ConfigurationError(
                    f"beta={self.beta} outside (0, 1/{self.d_reg})")
        else:
            raise ConfigurationError(f"unknown kernel mode {self.mode!r}")

    @classmethod
    def fixed(cls, h):
        return cls(mode="fixed", h=h)

    @classmethod
    def recursive(cls, beta, d_reg):
        return cls(mode="recursive", beta=beta, d_reg=d_reg)

    @classmethod
    def from_beta_c(cls, beta_c, d_reg):
        return cls.recursive(beta_c / d_reg, d_reg)


def _sq_dists(queries, train_u, sq_train=None):
    """Squared distances by the Gram expansion (batch queries)."""
    if sq_train is None:
        sq_train = np.einsum("ij,ij->i", train_u, train_u)
    d2 = (np.einsum("ij,ij->i", queries, queries)[:, None] + sq_train[None, :]
          - 2.0 * queries @ train_u.T)
    return np.maximum(d2, 0.0, out=d2)


def _log_weights(kernel, d2, q, times):
    """Log kernel weights from squared distances ``(n_queries, n_train)``."""
    const = -0.5 * q * math.log(2 * math.pi)
    if kernel.mode == "fixed":
        return const - d2 / (2.0 * kernel.h ** 2)
    logt = np.log(times)
    # t^(beta*D) K(t^beta (u - u_t)) in log space
    return (kernel.beta * kernel.d_reg * logt + const
            - 0.5 * np.exp(2.0 * kernel.beta * logt)[None, :] * d2)


def _weighted_average(logw, train_v):
    """Rows of `logw` -> convex combinations of `train_v`; also returns the
    per-row max log-weight for underflow checks."""
    top = logw.max(axis=1, keepdims=True)
    safe_top = np.where(np.isfinite(top), top, 0.0)
    w = np.exp(logw - safe_top)
    w /= w.sum(axis=1, keepdims=True)
    return w @ train_v, top[:, 0]


def _check_training(train_u, train_v):
    train_u = np.asarray(train_u, dtype=float)
    train_v = np.asarray(train_v, dtype=float)
    if train_u.ndim == 1:
        train_u = train_u[:, None]
    if train_v.ndim == 1:
        train_v = train_v[:, None]
    if train_u.shape[0] == 0 or train_u.shape[0] != train_v.shape[0]:
        raise PreconditionError("training lists must be nonempty and of equal length")
    return train_u, train_v


def _regress_one(train_u, train_v, query, kernel, times):
    train_u, train_v = _check_training(train_u, train_v)
    query = np.atleast_1d(np.asarray(query, dtype=float))
    if query.shape != (train_u.shape[1],):
        raise PreconditionError(f"query has shape {query.shape}, regressors are {train_u.shape[1]}-D")
    d2 = ((train_u - query) ** 2).sum(axis=1)[None, :]
    logw = _log_weights(kernel, d2, train_u.shape[1], times)
    est, top = _weighted_average(logw, train_v)
    if not top[0] >= _LOG_TINY:
        raise OutOfSupportError("all kernel weights underflow at this query")
    return est[0]


def nw_regress(train_u, train_v, query, kernel):
    """Nadaraya-Watson estimate at `query` with a fixed-bandwidth Gaussian
    kernel.

    Raises :class:`OutOfSupportError` when every weight is below 1e-300.
    """
    if kernel.mode != "fixed":
        raise ConfigurationError("nw_regress needs a fixed-bandwidth kernel")
    return _regress_one(train_u, train_v, query, kernel, None)


def recursive_nw_regress(train_u, train_v, query, kernel, times=None):
    """Recursive Nadaraya-Watson estimate: training pair ``t`` (1-based time
    index, overridable via `times`) gets weight
    ``t**(beta*d_reg) * K(t**beta * (query - u_t))``."""
    if kernel.mode != "recursive":
        raise ConfigurationError("recursive_nw_regress needs a recursive kernel")
    n = np.shape(train_u)[0]
    times = np.arange(1, n + 1, dtype=float) if times is None else np.asarray(times, dtype=float)
    if times.shape != (n,):
        raise PreconditionError("times must have one entry per training pair")
    return _regress_one(train_u, train_v, query, kernel, times)


@dataclass
class InnovationDiagnostics:
    n_queries: int
    n_train: int
    n_fallback: int
    fallback_index: list = field(default_factory=list)


def estimate_innovations(x, p, kernel, loo=True, n_max=5000, chunk=512,
                         return_diagnostics=False):
    """Residuals ``x_t - g_hat(x_{t-1}, ..., x_{t-p})`` of a kernel fit.

    Every ``t >= p`` is a query; training pairs are all ``(u_t, x_t)``,
    thinned uniformly to at most `n_max` when there are more. With `loo` a
    query never uses its own training pair. Queries whose weights all
    underflow get the mean training response and are reported in the
    diagnostics.

    Returns
    -------
    ndarray, shape (T - p, D)
        Innovation estimates for ``t = p, ..., T-1``.
    InnovationDiagnostics
        Only when `return_diagnostics` is set.
    """
    x = as_series(x, "observation")
    T, D = x.shape
    if p < 1 or T <= p + 1:
        raise PreconditionError(f"need p >= 1 and T > p + 1 (T={T}, p={p})")
    U = lag_matrix(x, p)
    V = x[p:]
    N = U.shape[0]
    times_all = np.arange(1, N + 1, dtype=float)
    if n_max is not None and N > n_max:
        keep = np.unique(np.round(np.linspace(0, N - 1, n_max)).astype(int))
    else:
        keep = np.arange(N)
    # shifting regressors leaves distances unchanged and limits cancellation
    shift = U[keep].mean(axis=0)
    Uc = U - shift
    tu, tv, tt = Uc[keep], V[keep], times_all[keep]
    sq_train = np.einsum("ij,ij->i", tu, tu)
    # position of each query's own pair inside the training set (or -1)
    own = np.full(N, -1)
    own[keep] = np.arange(keep.size)
    fallback_value = tv.mean(axis=0)
    out = np.empty_like(V)
    fallback = []
    for start in range(0, N, chunk):
        stop = min(start + chunk, N)
        d2 = _sq_dists(Uc[start:stop], tu, sq_train)
        logw = _log_weights(kernel, d2, tu.shape[1], tt)
        if loo:
            rows = np.arange(stop - start)
            cols = own[start:stop]
            hit = cols >= 0
            logw[rows[hit], cols[hit]] = -np.inf
        est, top = _weighted_average(logw, tv)
        bad = ~(top >= _LOG_TINY)
        if bad.any():
            est[bad] = fallback_value
            fallback.extend((start + np.nonzero(bad)[0]).tolist())
        out[start:stop] = V[start:stop] - est
    if return_diagnostics:
        return out, InnovationDiagnostics(N, int(keep.size), len(fallback), fallback)
    return out


@dataclass(eq=False)
class LinearArFit:
    coefs: np.ndarray      # (p, D, D); coefs[k] multiplies x_{t-k-1}
    intercept: np.ndarray  # (D,)
    residuals: np.ndarray  # (T - p, D)
    stderr: np.ndarray     # (p, D, D) standard errors of coefs


def fit_linear_ar(x, p):
    """Least-squares VAR(p) with intercept; residuals feed the linear
    baseline separation."""
    x = as_series(x, "observation")
    T, D = x.shape
    if p < 1 or T <= p * D + 1:
        raise PreconditionError(f"too few samples (T={T}) for a VAR({p}) in {D} dims")
    Z = np.hstack([np.ones((T - p, 1)), lag_matrix(x, p)])
    Y = x[p:]
    if np.linalg.matrix_rank(Z) < Z.shape[1]:
        raise DegenerateRegressionError("lagged design matrix is rank deficient")
    beta, *_ = np.linalg.lstsq(Z, Y, rcond=None)
    resid = Y - Z @ beta
    dof = max(Z.shape[0] - Z.shape[1], 1)
    sigma2 = (resid ** 2).sum(axis=0) / dof
    zinv_diag = np.diag(np.linalg.inv(Z.T @ Z))
    se = np.sqrt(np.outer(zinv_diag, sigma2))  # (1 + pD, D)
    coefs = beta[1:].reshape(p, D, D).transpose(0, 2, 1)
    stderr = se[1:].reshape(p, D, D).transpose(0, 2, 1)
    return LinearArFit(coefs=coefs, intercept=beta[0], residuals=resid, stderr=stderr)
