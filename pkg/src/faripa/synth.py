"""Hidden-source generators: driving-noise samplers and the ikeda map.

All samplers take an explicit ``numpy.random.Generator``; identical seeds give
bit-identical samples.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegenerateDensityError, NumericError, PreconditionError
from .fileio import read_pgm, write_pgm

EXPRESSIONS = ("happy", "sad", "surprised", "angry", "disgusted", "fearful")
GEOM_VARIANTS = ("sphere", "cube-diagonals", "broken-line", "square-skeleton")


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Pixel masses of a grayscale image, ``mass[row, col]``, summing to 1.

    Row 0 is the top of the image.
    """
    mass: np.ndarray

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float)
        if mass.ndim != 2 or mass.size == 0:
            raise PreconditionError("mass must be a nonempty 2-D array")
        if np.any(mass < 0) or not np.all(np.isfinite(mass)):
            raise PreconditionError("masses must be finite and nonnegative")
        if abs(mass.sum() - 1.0) > 1e-12:
            raise PreconditionError(f"masses sum to {mass.sum()!r}, not 1")
        object.__setattr__(self, "mass", mass)

    @property
    def width(self):
        return self.mass.shape[1]

    @property
    def height(self):
        return self.mass.shape[0]

    @classmethod
    def from_intensities(cls, pixels):
        pixels = np.asarray(pixels)
        if pixels.ndim != 2:
            raise PreconditionError("intensity image must be 2-D")
        # exact integer total keeps the normalization error at one rounding
        total = int(pixels.astype(np.int64).sum()) if pixels.dtype.kind in "iu" else pixels.sum()
        if total <= 0:
            raise DegenerateDensityError("image has zero total intensity")
        return cls(pixels / total)


def load_density_image(path):
    """Read a P2/P5 PGM file and normalize its intensities to a density."""
    pixels, _ = read_pgm(path)
    return DensityGrid.from_intensities(pixels)


def sample_from_density(grid, n, rng, center=True):
    """Draw `n` points in the unit square with density proportional to the
    pixel masses.

    A pixel is chosen categorically, then the point is placed uniformly in
    that pixel's cell. The image is mapped upright onto ``[0, 1]^2`` (x to
    the right, y up). With `center` the sample is shifted to zero empirical
    mean.
    """
    if n < 1:
        raise PreconditionError("n must be >= 1")
    flat = grid.mass.ravel()
    idx = rng.choice(flat.size, size=n, p=flat)
    row, col = np.divmod(idx, grid.width)
    jitter = rng.random((n, 2))
    x = (col + jitter[:, 0]) / grid.width
    y = 1.0 - (row + jitter[:, 1]) / grid.height
    pts = np.column_stack([x, y])
    if center:
        pts -= pts.mean(axis=0)
    return pts


@dataclass(frozen=True)
class GeomForm:
    variant: str
    dim: int

    def __post_init__(self):
        if self.variant not in GEOM_VARIANTS:
            raise ConfigurationError(f"unknown geometric form {self.variant!r}")
        if self.dim < 1:
            raise ConfigurationError("dim must be >= 1")
        if self.variant == "sphere" and self.dim < 2:
            raise ConfigurationError("sphere surface needs dim >= 2")
        if self.variant == "square-skeleton" and self.dim != 2:
            raise ConfigurationError("square skeleton is 2-dimensional")


def sample_geometric(form, n, rng):
    """Uniform sample of `n` points on a geometric form in ``R^dim``.

    ``sphere``
        unit sphere surface, via normalized isotropic Gaussians
    ``cube-diagonals``
        the ``2^(dim-1)`` main diagonals of ``[0,1]^dim``, one chosen
        uniformly, position uniform along it
    ``broken-line``
        path ``0 -> e1 -> e1+e2 -> ... -> e1+...+e_dim``, uniform in arc length
    ``square-skeleton``
        boundary of ``[0,1]^2``, uniform in arc length
    """
    if n < 1:
        raise PreconditionError("n must be >= 1")
    d = form.dim
    if form.variant == "sphere":
        g = rng.standard_normal((n, d))
        return g / np.linalg.norm(g, axis=1, keepdims=True)
    if form.variant == "cube-diagonals":
        # corners with first coordinate 0 label the diagonals uniquely
        corners = np.zeros((n, d))
        if d > 1:
            corners[:, 1:] = rng.integers(0, 2, size=(n, d - 1))
        t = rng.random((n, 1))
        return corners + t * (1.0 - 2.0 * corners)
    if form.variant == "broken-line":
        s = rng.random(n) * d
        seg = np.minimum(np.floor(s).astype(int), d - 1)
        cols = np.arange(d)
        pts = (cols[None, :] < seg[:, None]).astype(float)
        pts[np.arange(n), seg] = s - seg
        return pts
    # square skeleton: edges bottom, right, top, left
    s = rng.random(n) * 4.0
    edge = np.minimum(np.floor(s).astype(int), 3)
    t = s - edge
    u = np.choose(edge, [t, np.ones(n), 1.0 - t, np.zeros(n)])
    v = np.choose(edge, [np.zeros(n), t, np.ones(n), 1.0 - t])
    return np.column_stack([u, v])


# --- procedural face images -------------------------------------------------

def _arc(cx, cy, rx, ry, t0, t1, k=200):
    t = np.linspace(t0, t1, k)
    return np.column_stack([cx + rx * np.cos(t), cy + ry * np.sin(t)])


def _segment(p, q, k=100):
    t = np.linspace(0.0, 1.0, k)[:, None]
    return (1 - t) * np.asarray(p, float) + t * np.asarray(q, float)


def _wave(x0, x1, y, amp, periods, k=200):
    x = np.linspace(x0, x1, k)
    return np.column_stack([x, y + amp * np.sin(2 * np.pi * periods * (x - x0) / (x1 - x0))])


def _face_strokes(expression):
    strokes = [_arc(0, 0, 0.9, 0.9, 0, 2 * np.pi, 400)]
    if expression == "happy":
        strokes += [_arc(-0.32, 0.3, 0.08, 0.12, 0, 2 * np.pi),
                    _arc(0.32, 0.3, 0.08, 0.12, 0, 2 * np.pi),
                    _arc(0, 0.05, 0.5, 0.45, np.pi * 1.15, np.pi * 1.85)]
    elif expression == "sad":
        strokes += [_arc(-0.32, 0.25, 0.07, 0.1, 0, 2 * np.pi),
                    _arc(0.32, 0.25, 0.07, 0.1, 0, 2 * np.pi),
                    _segment((-0.5, 0.5), (-0.15, 0.6)), _segment((0.15, 0.6), (0.5, 0.5)),
                    _arc(0, -0.65, 0.4, 0.3, np.pi * 0.2, np.pi * 0.8)]
    elif expression == "surprised":
        strokes += [_arc(-0.32, 0.28, 0.12, 0.14, 0, 2 * np.pi),
                    _arc(0.32, 0.28, 0.12, 0.14, 0, 2 * np.pi),
                    _arc(-0.32, 0.62, 0.18, 0.08, 0.1 * np.pi, 0.9 * np.pi),
                    _arc(0.32, 0.62, 0.18, 0.08, 0.1 * np.pi, 0.9 * np.pi),
                    _arc(0, -0.4, 0.16, 0.22, 0, 2 * np.pi)]
    elif expression == "angry":
        strokes += [_arc(-0.3, 0.2, 0.08, 0.07, 0, 2 * np.pi),
                    _arc(0.3, 0.2, 0.08, 0.07, 0, 2 * np.pi),
                    _segment((-0.55, 0.5), (-0.12, 0.32)), _segment((0.12, 0.32), (0.55, 0.5)),
                    _segment((-0.4, -0.45), (0.4, -0.45)),
                    _arc(0, -0.75, 0.4, 0.2, np.pi * 0.25, np.pi * 0.75)]
    elif expression == "disgusted":
        strokes += [_segment((-0.45, 0.25), (-0.15, 0.25)),
                    _arc(0.3, 0.25, 0.08, 0.1, 0, 2 * np.pi),
                    _segment((0.12, 0.5), (0.5, 0.6)),
                    _wave(-0.45, 0.45, -0.4, 0.08, 1.5)]
    elif expression == "fearful":
        strokes += [_arc(-0.32, 0.25, 0.14, 0.16, 0, 2 * np.pi),
                    _arc(0.32, 0.25, 0.14, 0.16, 0, 2 * np.pi),
                    _arc(-0.32, 0.25, 0.03, 0.03, 0, 2 * np.pi, 40),
                    _arc(0.32, 0.25, 0.03, 0.03, 0, 2 * np.pi, 40),
                    _segment((-0.5, 0.55), (-0.15, 0.65)), _segment((0.15, 0.65), (0.5, 0.55)),
                    _wave(-0.4, 0.4, -0.35, 0.06, 2.0), _wave(-0.4, 0.4, -0.5, 0.06, 2.0)]
    else:
        raise ConfigurationError(
            f"unknown expression {expression!r}; choose from {', '.join(EXPRESSIONS)}")
    return np.vstack(strokes)


def smiley_image(expression="happy", size=48, thickness=0.06):
    """Procedurally drawn face-like grayscale image (uint8, ``size x size``).

    Six expressions are available (see ``EXPRESSIONS``); strokes are 255 on
    a black background.
    """
    pts = _face_strokes(expression)
    c = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    X, Y = np.meshgrid(c, -c)  # row 0 is the top
    grid = np.column_stack([X.ravel(), Y.ravel()])
    d2 = np.full(grid.shape[0], np.inf)
    for chunk in np.array_split(pts, max(1, len(pts) // 256)):
        d2 = np.minimum(d2, ((grid[:, None, :] - chunk[None, :, :]) ** 2).sum(-1).min(1))
    img = np.where(d2 <= thickness ** 2, 255, 0).astype(np.uint8)
    return img.reshape(size, size)


def smiley_grid(expression="happy", size=48):
    return DensityGrid.from_intensities(smiley_image(expression, size))


def write_smiley_pgm(path, expression="happy", size=48):
    write_pgm(path, smiley_image(expression, size))


# --- ikeda map --------------------------------------------------------------

@dataclass(frozen=True)
class IkedaParams:
    lam: float
    initial: tuple = field(default=(0.0, 0.0))

    def __post_init__(self):
        object.__setattr__(self, "initial", tuple(float(v) for v in self.initial))
        if len(self.initial) != 2:
            raise PreconditionError("ikeda initial point must be a 2-vector")
        if abs(self.lam) >= 1:
            warnings.warn(f"ikeda lambda={self.lam} >= 1 in magnitude; "
                          "trajectory may be unbounded", RuntimeWarning, stacklevel=3)


DEFAULT_IKEDA = (IkedaParams(0.9994, (20.0, 20.0)), IkedaParams(0.998, (-100.0, 30.0)))


def ikeda_step(state, lam):
    s1, s2 = float(state[0]), float(state[1])
    if not (np.isfinite(s1) and np.isfinite(s2)):
        raise NumericError(f"non-finite ikeda state ({s1}, {s2})")
    w = 0.4 - 6.0 / (1.0 + s1 * s1 + s2 * s2)
    c, s = np.cos(w), np.sin(w)
    return np.array([1.0 + lam * (s1 * c - s2 * s), lam * (s1 * s + s2 * c)])


def generate_ikeda_sources(params, T):
    """Iterate one ikeda map per parameter set; component ``m`` occupies
    columns ``2m, 2m+1`` and row 0 holds the initial points."""
    if T < 1:
        raise PreconditionError("T must be >= 1")
    if not params:
        raise PreconditionError("need at least one ikeda component")
    out = np.empty((T, 2 * len(params)))
    for m, p in enumerate(params):
        state = np.array(p.initial, dtype=float)
        out[0, 2 * m:2 * m + 2] = state
        for t in range(1, T):
            state = ikeda_step(state, p.lam)
            out[t, 2 * m:2 * m + 2] = state
    return out
