"""Whitening and symmetric fixed-point FastICA."""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateDataError, PreconditionError
from .far import as_series

_EIG_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class WhiteningTransform:
    mean: np.ndarray
    V: np.ndarray
    V_inv: np.ndarray

    def __call__(self, x):
        return (np.asarray(x, dtype=float) - self.mean) @ self.V.T


@dataclass(frozen=True, eq=False)
class IcaResult:
    W: np.ndarray          # orthogonal demixing acting on whitened data
    iterations: int
    converged: bool
    nonlinearity: str = "tanh"


def haar_orthogonal(D, rng):
    """Uniformly distributed ``D x D`` orthogonal matrix (QR of a Gaussian
    matrix with the signs of ``diag(R)`` folded into ``Q``)."""
    if D < 1:
        raise PreconditionError("D must be >= 1")
    Q, R = np.linalg.qr(rng.standard_normal((D, D)))
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def sym_inv_sqrt(C):
    """``C^{-1/2}`` for a symmetric positive semi-definite matrix, with the
    eigenvalues floored at 1e-12."""
    lam, E = np.linalg.eigh(C)
    lam = np.maximum(lam, _EIG_FLOOR)
    return (E / np.sqrt(lam)) @ E.T


def center_whiten(X):
    """Center `X` and whiten it with the symmetric (ZCA) whitening matrix.

    The covariance uses the ``1/T`` normalization, so the returned ``Z``
    satisfies ``Z.T @ Z / T == I`` up to rounding.

    Returns
    -------
    Z : ndarray, shape (T, D)
    transform : WhiteningTransform
    """
    X = as_series(X, "data")
    T, D = X.shape
    if T <= D:
        raise PreconditionError(f"need more samples than dimensions (T={T}, D={D})")
    mean = X.mean(axis=0)
    Xc = X - mean
    C = Xc.T @ Xc / T
    lam, E = np.linalg.eigh((C + C.T) / 2)
    if not lam[0] > 1e-12 * lam[-1]:
        raise DegenerateDataError("sample covariance is rank deficient")
    V = (E / np.sqrt(lam)) @ E.T
    V_inv = (E * np.sqrt(lam)) @ E.T
    return Xc @ V.T, WhiteningTransform(mean=mean, V=V, V_inv=V_inv)


def _contrast(name):
    if name == "tanh":
        def g(y):
            t = np.tanh(y)
            return t, 1.0 - t * t
    elif name == "cube":
        def g(y):
            return y ** 3, 3.0 * y * y
    else:
        raise ConfigurationError(f"unknown nonlinearity {name!r}")
    return g


def fastica(Z, rng, nonlinearity="tanh", tol=1e-6, max_iter=1000, w_init=None,
            callback=None):
    """Symmetric FastICA on whitened data.

    Each sweep replaces every row ``w`` by ``E[z g(w.z)] - E[g'(w.z)] w`` and
    then re-orthogonalizes with ``W <- (W W^T)^{-1/2} W``. Iteration stops
    once ``max_i |1 - |<w_i_new, w_i_old>|| < tol``.

    Parameters
    ----------
    Z : array_like, shape (T, D)
        Whitened data.
    rng : numpy.random.Generator
        Draws the random orthogonal starting point unless `w_init` is given.
    nonlinearity : {'tanh', 'cube'}
    callback : callable, optional
        Called as ``callback(iteration, W)`` after every sweep.

    Returns
    -------
    IcaResult
        Non-convergence is reported through ``converged=False``, not raised.
    """
    Z = as_series(Z, "whitened data")
    if not tol > 0:
        raise ConfigurationError("tol must be positive")
    T, D = Z.shape
    g = _contrast(nonlinearity)
    W = haar_orthogonal(D, rng) if w_init is None else np.asarray(w_init, dtype=float)
    W = sym_inv_sqrt(W @ W.T) @ W
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        gy, dgy = g(Z @ W.T)
        W_new = gy.T @ Z / T - dgy.mean(axis=0)[:, None] * W
        W_new = sym_inv_sqrt(W_new @ W_new.T) @ W_new
        change = np.max(np.abs(1.0 - np.abs(np.einsum("ij,ij->i", W_new, W))))
        W = W_new
        if callback is not None:
            callback(it, W)
        if change < tol:
            converged = True
            break
    return IcaResult(W=W, iterations=it, converged=converged, nonlinearity=nonlinearity)
