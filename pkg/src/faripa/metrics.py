"""Block Amari-index and block-permutation diagnostics.

The global matrix ``G = W_isa @ A`` is cut into blocks whose row sizes are
the estimated subspace dimensions and whose column sizes are the true ones
(both sorted ascending). A perfect separation makes ``G`` a block
permutation matrix.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMatrixError, PreconditionError, UndefinedIndexError


@dataclass(frozen=True)
class BlockStructure:
    row_dims: tuple
    col_dims: tuple

    def __post_init__(self):
        rows = tuple(int(d) for d in self.row_dims)
        cols = tuple(int(d) for d in self.col_dims)
        if not rows or not cols or min(rows) < 1 or min(cols) < 1:
            raise PreconditionError("all block dimensions must be >= 1")
        if sum(rows) != sum(cols):
            raise PreconditionError(
                f"row dims sum {sum(rows)} != col dims sum {sum(cols)}")
        object.__setattr__(self, "row_dims", tuple(sorted(rows)))
        object.__setattr__(self, "col_dims", tuple(sorted(cols)))

    @classmethod
    def square(cls, dims):
        return cls(tuple(dims), tuple(dims))

    @property
    def D(self):
        return sum(self.row_dims)


def _as_blocks(blocks):
    if isinstance(blocks, BlockStructure):
        return blocks
    return BlockStructure.square(blocks)


def block_sums(G, blocks):
    """Sum of absolute entries of every ``(i, j)`` block of `G`.

    Parameters
    ----------
    G : array_like, shape (D, D)
    blocks : BlockStructure or sequence of int
        A plain sequence is used for both rows and columns.

    Returns
    -------
    ndarray, shape (len(row_dims), len(col_dims))
    """
    G = np.asarray(G, dtype=float)
    blocks = _as_blocks(blocks)
    if G.ndim != 2 or G.shape != (blocks.D, blocks.D):
        raise PreconditionError(
            f"G has shape {G.shape}, block structure needs {(blocks.D, blocks.D)}")
    r = np.concatenate(([0], np.cumsum(blocks.row_dims)))
    c = np.concatenate(([0], np.cumsum(blocks.col_dims)))
    absG = np.abs(G)
    # reduceat sums contiguous slices starting at the given offsets
    return np.add.reduceat(np.add.reduceat(absG, r[:-1], axis=0), c[:-1], axis=1)


def amari_index(G, blocks):
    """Amari-index extended to blocks of unequal dimension.

    With ``g`` the block-sum matrix (``Mr`` block rows, ``Mc`` block
    columns)::

        r = (sum_i (sum_j g_ij / max_j g_ij - 1)
             + sum_j (sum_i g_ij / max_i g_ij - 1)) / (Mr (Mc-1) + Mc (Mr-1))

    The normalizer reduces to ``2M(M-1)`` when ``Mr == Mc == M``; the
    rectangular case arises when the estimated number of subspaces differs
    from the true one. ``r`` lies in [0, 1], is 0 exactly for block
    permutation matrices and 1 when all block sums are equal.
    """
    g = block_sums(G, blocks)
    Mr, Mc = g.shape
    denom = Mr * (Mc - 1) + Mc * (Mr - 1)
    if denom == 0:
        raise UndefinedIndexError("Amari-index is undefined for a single block (M = 1)")
    row_max = g.max(axis=1)
    col_max = g.max(axis=0)
    if np.any(row_max <= 0) or np.any(col_max <= 0):
        raise DegenerateMatrixError("G has an all-zero block row or block column")
    rows = (g.sum(axis=1) / row_max - 1.0).sum()
    cols = (g.sum(axis=0) / col_max - 1.0).sum()
    return float((rows + cols) / denom)


def is_block_permutation(G, blocks, tol=0.0):
    """True when exactly one block per block-row and block-column is
    significant (``> tol * max g``) and every significant block is square."""
    if tol < 0:
        raise PreconditionError("tol must be nonnegative")
    blocks = _as_blocks(blocks)
    g = block_sums(G, blocks)
    if g.max() <= 0:
        return False
    big = g > tol * g.max()
    if not (np.all(big.sum(axis=1) == 1) and np.all(big.sum(axis=0) == 1)):
        return False
    for i, j in zip(*np.nonzero(big)):
        if blocks.row_dims[i] != blocks.col_dims[j]:
            return False
    return True
