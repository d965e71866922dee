"""Grouping ICA coordinates into dependent subspaces.

Pairwise dependence is scored with regularized kernel canonical correlation;
the grouping is found by greedy swaps when the subspace dimensions are known
and by normalized-cut spectral clustering when they are not.
"""
import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist
from sklearn.cluster import KMeans

from .errors import PreconditionError
from .far import as_series
from .metrics import BlockStructure, amari_index, is_block_permutation

KCCA_POINTS = 1000
KCCA_REG = 0.1


@dataclass(frozen=True, eq=False)
class Partition:
    """Disjoint cover of ``range(D)``.

    Groups are stored in reporting order: ascending size, ties broken by
    smallest member. Members inside a group are ascending.
    """
    groups: tuple
    objective: Optional[float] = None
    notes: tuple = ()

    def __post_init__(self):
        groups = [tuple(sorted(int(i) for i in g)) for g in self.groups if len(g)]
        groups.sort(key=lambda g: (len(g), g[0]))
        flat = [i for g in groups for i in g]
        if sorted(flat) != list(range(len(flat))):
            raise PreconditionError(f"groups {groups} are not a disjoint cover of 0..{len(flat) - 1}")
        object.__setattr__(self, "groups", tuple(groups))

    @property
    def dims(self):
        return tuple(len(g) for g in self.groups)

    @property
    def D(self):
        return sum(self.dims)

    @property
    def order(self):
        """Coordinate order that makes each group contiguous."""
        return [i for g in self.groups for i in g]

    def labels(self):
        lab = np.empty(self.D, dtype=int)
        for m, g in enumerate(self.groups):
            lab[list(g)] = m
        return lab

    def to_dict(self):
        return {"groups": [list(g) for g in self.groups], "dims": list(self.dims),
                "objective": self.objective, "notes": list(self.notes)}


@dataclass(frozen=True, eq=False)
class DependenceMatrix:
    S: np.ndarray
    degenerate: tuple = ()   # coordinate indices with zero variance

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise PreconditionError("dependence matrix must be square")
        if not np.array_equal(S, S.T):
            raise PreconditionError("dependence matrix must be symmetric")
        if np.any(np.diag(S) != 0):
            raise PreconditionError("dependence matrix diagonal must be zero")
        object.__setattr__(self, "S", S)

    @property
    def D(self):
        return self.S.shape[0]


# --- kernel canonical correlation ------------------------------------------

def _subsample_index(n, n_max):
    if n <= n_max:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, n_max)).astype(int))


def _kcca_factor(a, reg):
    """Factor ``L = U diag(r)`` of ``R = Kc (Kc + reg I)^{-1}`` for the
    centered Gaussian Gram matrix of `a` (median-distance bandwidth), so that
    ``La.T @ Lb`` has the singular values of ``Ra @ Rb``. ``None`` for a
    constant series."""
    a = np.asarray(a, dtype=float)
    dist = pdist(a[:, None])
    sigma = np.median(dist)
    if not sigma > 0:
        sigma = dist.max() if dist.size else 0.0
    if not sigma > 0:
        return None
    K = np.exp(-((a[:, None] - a[None, :]) ** 2) / (2.0 * sigma ** 2))
    Kc = K - K.mean(axis=0) - K.mean(axis=1)[:, None] + K.mean()
    lam, U = np.linalg.eigh((Kc + Kc.T) / 2)
    lam = np.maximum(lam, 0.0)
    r = lam / (lam + reg)
    keep = r > 1e-9
    return U[:, keep] * r[keep]


def _kcca_from_factors(La, Lb):
    if La is None or Lb is None or La.shape[1] == 0 or Lb.shape[1] == 0:
        return 0.0
    # both orders, so swapping the arguments is bitwise neutral
    C = La.T @ Lb
    rho = max(np.linalg.svd(C, compute_uv=False)[0], np.linalg.svd(C.T, compute_uv=False)[0])
    return float(min(max(rho, 0.0), 1.0))


def kcca_dependence(a, b, reg=KCCA_REG, n_points=KCCA_POINTS, full_output=False):
    """Largest regularized kernel canonical correlation of two series.

    Both series are subsampled on a common evenly spaced index set of at
    most `n_points`. With centered Gaussian Gram matrices ``Ka``, ``Kb`` the
    score is the top generalized eigenvalue of::

        [0      Ka Kb] [x]       [(Ka + reg I)^2  0             ] [x]
        [Kb Ka  0    ] [y] = rho [0               (Kb + reg I)^2] [y]

    i.e. the largest singular value of ``Ra Rb`` with
    ``R = K (K + reg I)^{-1}``, clipped to [0, 1].

    A constant input yields 0; with `full_output` a ``(rho, degenerate)``
    pair is returned.
    """
    a = np.ravel(np.asarray(a, dtype=float))
    b = np.ravel(np.asarray(b, dtype=float))
    if a.shape != b.shape or a.size < 8:
        raise PreconditionError("series must have equal length >= 8")
    if not reg > 0:
        raise PreconditionError("regularizer must be positive")
    idx = _subsample_index(a.size, n_points)
    La, Lb = _kcca_factor(a[idx], reg), _kcca_factor(b[idx], reg)
    rho = _kcca_from_factors(La, Lb)
    if full_output:
        return rho, (La is None or Lb is None)
    return rho


def dependence_matrix(Y, reg=KCCA_REG, n_points=KCCA_POINTS):
    """Pairwise KCCA scores of the columns of `Y` (diagonal 0)."""
    Y = as_series(Y, "ICA coordinates")
    T, D = Y.shape
    if D < 2:
        raise PreconditionError("need at least two coordinates")
    if T < 8:
        raise PreconditionError("need at least 8 samples")
    idx = _subsample_index(T, n_points)
    factors = [_kcca_factor(Y[idx, i], reg) for i in range(D)]
    S = np.zeros((D, D))
    for i, j in itertools.combinations(range(D), 2):
        S[i, j] = S[j, i] = _kcca_from_factors(factors[i], factors[j])
    degenerate = tuple(i for i, f in enumerate(factors) if f is None)
    return DependenceMatrix(S, degenerate)


# --- clustering --------------------------------------------------------------

def _as_S(S):
    return S.S if isinstance(S, DependenceMatrix) else np.asarray(S, dtype=float)


def partition_objective(S, groups):
    """Total within-group dependence ``sum_m sum_{i<j in group m} S[i, j]``."""
    S = _as_S(S)
    return float(sum(S[np.ix_(g, g)].sum() / 2.0 for g in map(list, groups)))


def _greedy_from(S, labels):
    """Best-improvement single-swap ascent from `labels` (modified in place)."""
    D = len(labels)
    # affinity of each coordinate to each group
    M = labels.max() + 1
    history = []
    while True:
        onehot = np.eye(M)[labels]
        aff = S @ onehot  # aff[i, m] = sum of S[i, k] for k in group m
        best, best_pair = 1e-12, None
        for i in range(D):
            for j in range(i + 1, D):
                a, b = labels[i], labels[j]
                if a == b:
                    continue
                gain = (aff[i, b] - S[i, j] - aff[i, a]
                        + aff[j, a] - S[i, j] - aff[j, b])
                if gain > best:
                    best, best_pair = gain, (i, j)
        history.append(partition_objective(S, [np.nonzero(labels == m)[0] for m in range(M)]))
        if best_pair is None:
            return labels, history
        i, j = best_pair
        labels[i], labels[j] = labels[j], labels[i]


def greedy_cluster(S, dims, restarts=3, seed=0, return_history=False):
    """Group coordinates into subspaces of the given sizes by maximizing the
    within-group dependence with greedy pairwise swaps.

    The first ascent starts from the contiguous assignment (group ``m`` gets
    the next ``dims[m]`` indices); `restarts` further ascents start from
    seeded random assignments. At every step the best improving cross-group
    swap is applied, ties going to the lowest ``(i, j)``. The best local
    optimum wins, earlier ascents winning ties.
    """
    S = _as_S(S).copy()
    np.fill_diagonal(S, 0.0)
    D = S.shape[0]
    dims = [int(d) for d in dims]
    if sum(dims) != D or min(dims) < 1:
        raise PreconditionError(f"dims {dims} do not sum to D={D}")
    base = np.repeat(np.arange(len(dims)), dims)
    rng = np.random.default_rng(seed)
    starts = [base.copy()] + [rng.permutation(base) for _ in range(restarts)]
    best_labels, best_obj, histories = None, -np.inf, []
    for start in starts:
        labels, hist = _greedy_from(S, start)
        histories.append(hist)
        if hist[-1] > best_obj + 1e-12:
            best_labels, best_obj = labels.copy(), hist[-1]
    groups = [np.nonzero(best_labels == m)[0] for m in range(len(dims))]
    part = Partition(groups, objective=best_obj)
    return (part, histories) if return_history else part


def _eigengap_count(evals, D):
    if D <= 2:
        return 2
    gaps = np.diff(evals)  # gaps[k] = evals[k+1] - evals[k]
    candidates = np.arange(2, D)  # M groups <-> gap after the M-th eigenvalue
    return int(candidates[np.argmax(gaps[candidates - 1])])


def ncut_cluster(S, n_groups=None, seed=0, n_init=20):
    """Normalized-cut spectral clustering of the dependence graph.

    The affinity is `S` plus 1e-12 on the diagonal. Coordinates are embedded
    with the `n_groups` leading eigenvectors of ``D^-1/2 W D^-1/2``,
    row-normalized, and clustered by k-means (`n_init` seeded restarts).
    Without `n_groups`, the count maximizes the eigengap of the symmetric
    normalized Laplacian over ``2 <= M < D``; a disconnected graph is then
    split into its connected components instead.
    """
    S = _as_S(S)
    D = S.shape[0]
    if D < 2:
        raise PreconditionError("need at least two coordinates")
    notes = []
    if n_groups is None:
        ncomp, comp = connected_components(S > 0, directed=False)
        if ncomp > 1:
            notes.append(f"affinity graph disconnected; returned its {ncomp} components")
            groups = [np.nonzero(comp == c)[0] for c in range(ncomp)]
            return Partition(groups, notes=tuple(notes))
    W = S + 1e-12 * np.eye(D)
    d_isqrt = 1.0 / np.sqrt(W.sum(axis=1))
    N = d_isqrt[:, None] * W * d_isqrt[None, :]
    mu, vecs = np.linalg.eigh((N + N.T) / 2)   # ascending
    lap = 1.0 - mu[::-1]                      # Laplacian eigenvalues, ascending
    vecs = vecs[:, ::-1]
    if n_groups is None:
        n_groups = _eigengap_count(lap, D)
        notes.append(f"group count {n_groups} chosen by eigengap")
    if not 1 <= n_groups <= D:
        raise PreconditionError(f"n_groups must be in [1, {D}]")
    if n_groups == D:
        return Partition([[i] for i in range(D)], notes=tuple(notes))
    if n_groups == 1:
        return Partition([list(range(D))], notes=tuple(notes))
    emb = vecs[:, :n_groups]
    emb = emb / np.maximum(np.linalg.norm(emb, axis=1, keepdims=True), 1e-300)
    km = KMeans(n_clusters=n_groups, n_init=n_init, random_state=seed).fit(emb)
    groups = [np.nonzero(km.labels_ == c)[0] for c in range(n_groups)]
    return Partition(groups, notes=tuple(notes))


# --- assembling the demixing -------------------------------------------------

@dataclass(eq=False)
class SeparationResult:
    W_isa: np.ndarray
    G: np.ndarray
    partition: Partition
    amari: Optional[float] = None
    block_permutation: Optional[bool] = None
    sources: Optional[np.ndarray] = None
    timings: dict = field(default_factory=dict)

    def apply(self, x):
        return np.asarray(x, dtype=float) @ self.W_isa.T


def assemble_separation(transform, ica, part, mixing, true_dims=None, data=None):
    """Compose the whitening, ICA rotation and grouping into ``W_isa`` and score it.

    ``W_isa = P @ W_ica @ V`` where ``P`` orders the ICA coordinates group by
    group (ascending group size). ``G = W_isa @ A`` is scored with the block
    Amari-index using the partition's dims for rows and `true_dims` (default:
    the partition's dims) for columns. If `data` is given its centered
    projection is stored as ``sources``.
    """
    A = mixing.A if hasattr(mixing, "A") else np.asarray(mixing, dtype=float)
    D = A.shape[0]
    if ica.W.shape != (D, D) or transform.V.shape != (D, D) or part.D != D:
        raise PreconditionError("inconsistent dimensions in separation assembly")
    W_isa = (ica.W @ transform.V)[part.order]
    G = W_isa @ A
    blocks = BlockStructure(part.dims, tuple(true_dims) if true_dims is not None else part.dims)
    try:
        r = amari_index(G, blocks)
    except ValueError:
        r = None
    result = SeparationResult(W_isa=W_isa, G=G, partition=part, amari=r,
                              block_permutation=is_block_permutation(G, blocks, tol=1e-12))
    if data is not None:
        result.sources = (np.asarray(data, dtype=float) - transform.mean) @ W_isa.T
    return result
