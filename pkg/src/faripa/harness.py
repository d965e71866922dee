"""Seeded experiment runs of the full separation pipeline and their
aggregation into box-plot statistics."""
import dataclasses
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import far, ica, isa, synth
from .errors import ConfigurationError, FaripaError, PreconditionError
from .metrics import BlockStructure, block_sums

log = logging.getLogger(__name__)

DATASETS = ("smiley", "d-geom", "ikeda")
ESTIMATORS = ("far-ipa", "ar-ipa")
CLUSTERINGS = ("auto", "greedy", "ncut")
THREADS_ENV = "FARIPA_THREADS"


def random_orthogonal(D, rng, seed=None):
    """Haar-distributed orthogonal mixing matrix."""
    return far.MixingSpec(ica.haar_orthogonal(D, rng), seed=seed, construction="haar-qr")


@dataclass
class ExperimentConfig:
    """Everything that determines a batch of runs.

    ``beta_c`` is the reparameterized bandwidth exponent: the recursive kernel
    uses ``beta = beta_c / (p * D)``. ``clustering='auto'`` uses greedy search
    with the true dims for smiley/d-geom and NCut with an inferred group count
    for ikeda.

    ``loo`` and ``n_max`` default by dataset. Noise-driven data (smiley,
    d-geom) use leave-one-out residuals and 5000 training pairs. The ikeda
    trajectories are noiseless and visit the transient once, so there every
    query keeps its own pair and the training set is not thinned.
    """
    dataset: str = "smiley"
    dims: Optional[list] = None
    T: int = 20000
    p: int = 1
    beta_c: float = 0.25
    estimator: str = "far-ipa"
    runs: int = 10
    seed: int = 0
    clustering: str = "auto"
    n_groups: Optional[int] = None
    burn_in: int = 100
    dynamics: str = "sine"
    kernel_mode: str = "recursive"
    h: Optional[float] = None
    n_max: Optional[int] = None    # None: auto, 0: no thinning
    loo: Optional[bool] = None     # None: auto
    kcca_reg: float = isa.KCCA_REG
    kcca_points: int = isa.KCCA_POINTS
    ica_nonlinearity: str = "tanh"
    ica_tol: float = 1e-6
    ica_max_iter: int = 1000
    ica_retries: int = 2
    greedy_restarts: int = 3
    ncut_init: int = 20
    expressions: Optional[list] = None
    forms: Optional[list] = None
    ikeda: Optional[list] = None   # [[lambda, s1, s2], ...]
    smiley_size: int = 48
    debug_identity: bool = False

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ConfigurationError(f"dataset must be one of {DATASETS}")
        if self.estimator not in ESTIMATORS:
            raise ConfigurationError(f"estimator must be one of {ESTIMATORS}")
        if self.clustering not in CLUSTERINGS:
            raise ConfigurationError(f"clustering must be one of {CLUSTERINGS}")
        if self.dataset == "ikeda":
            n = len(self.ikeda) if self.ikeda else len(synth.DEFAULT_IKEDA)
            if self.dims is not None and list(self.dims) != [2] * n:
                raise ConfigurationError("ikeda components are 2-dimensional")
            self.dims = [2] * n
        elif self.dims is None:
            self.dims = [2, 2] if self.dataset == "smiley" else [2, 3]
        self.dims = sorted(int(d) for d in self.dims)
        if min(self.dims) < 1:
            raise ConfigurationError("dims must be positive")
        if self.dataset == "smiley":
            if any(d != 2 for d in self.dims):
                raise ConfigurationError("smiley components are 2-dimensional")
            if len(self.dims) > len(synth.EXPRESSIONS):
                raise ConfigurationError(f"at most {len(synth.EXPRESSIONS)} smiley components")
        if not 0 < self.beta_c < 1:
            raise ConfigurationError("beta_c must lie in (0, 1)")
        if self.runs < 1 or self.T < 2 or self.p < 1:
            raise ConfigurationError("need runs >= 1, T >= 2, p >= 1")
        if self.dynamics not in ("sine", "zero"):
            raise ConfigurationError("dynamics must be 'sine' or 'zero'")
        if self.kernel_mode == "fixed" and not (self.h and self.h > 0):
            raise ConfigurationError("fixed kernel mode needs h > 0")
        if self.loo is None:
            self.loo = self.dataset != "ikeda"
        if self.n_max is None:
            self.n_max = 0 if self.dataset == "ikeda" else 5000
        if self.n_max < 0:
            raise ConfigurationError("n_max must be >= 0")

    @property
    def D(self):
        return sum(self.dims)

    def kernel(self):
        if self.kernel_mode == "fixed":
            return far.KernelSpec.fixed(self.h)
        return far.KernelSpec.from_beta_c(self.beta_c, self.p * self.D)

    def cluster_method(self):
        if self.clustering != "auto":
            return self.clustering
        return "ncut" if self.dataset == "ikeda" else "greedy"

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class BoxStats:
    q1: float
    q2: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: list
    notch_low: float
    notch_high: float
    n: int

    def to_dict(self):
        return dataclasses.asdict(self)


def boxplot_stats(values):
    """Quartiles, 1.5 IQR fences and whiskers of a sample, with its outliers.

    Quantile ``q`` is the linear interpolation at position ``q * (n - 1)``
    of the sorted sample. Whiskers are the most extreme values inside the
    fences; notches are ``q2 -/+ 1.57 IQR / sqrt(n)``.
    """
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise PreconditionError("boxplot_stats needs at least one value")
    q1, q2, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo) & (v <= hi)]
    notch = 1.57 * iqr / np.sqrt(v.size)
    return BoxStats(q1=float(q1), q2=float(q2), q3=float(q3),
                    whisker_low=float(inside.min()), whisker_high=float(inside.max()),
                    outliers=[float(x) for x in v[(v < lo) | (v > hi)]],
                    notch_low=float(q2 - notch), notch_high=float(q2 + notch), n=int(v.size))


# --- data generation ----------------------------------------------------------

def _default_forms(dims):
    forms = []
    for m, d in enumerate(dims):
        for k in range(len(synth.GEOM_VARIANTS)):
            variant = synth.GEOM_VARIANTS[(m + k) % len(synth.GEOM_VARIANTS)]
            try:
                forms.append(synth.GeomForm(variant, d))
                break
            except ConfigurationError:
                continue
    return forms


def draw_drivers(config, n, rng):
    """``(n, D)`` i.i.d. driving noise, one centered block per component."""
    blocks = []
    if config.dataset == "smiley":
        names = config.expressions or synth.EXPRESSIONS
        for m in range(len(config.dims)):
            grid = synth.smiley_grid(names[m % len(names)], config.smiley_size)
            blocks.append(synth.sample_from_density(grid, n, rng))
    elif config.dataset == "d-geom":
        if config.forms:
            forms = [synth.GeomForm(v, d) for v, d in zip(config.forms, config.dims)]
        else:
            forms = _default_forms(config.dims)
        for form in forms:
            pts = synth.sample_geometric(form, n, rng)
            blocks.append(pts - pts.mean(axis=0))
    else:
        raise ConfigurationError("ikeda sources have no driving noise")
    return np.hstack(blocks)


def ikeda_params(config):
    if config.ikeda:
        return [synth.IkedaParams(lam, (s1, s2)) for lam, s1, s2 in config.ikeda]
    return list(synth.DEFAULT_IKEDA)


def generate_sources(config, rng):
    """Hidden sources ``s`` and the dynamics used, shape ``(T, D)``."""
    if config.dataset == "ikeda":
        return synth.generate_ikeda_sources(ikeda_params(config), config.T), None
    D, p = config.D, config.p
    if config.dynamics == "sine":
        dyn = far.make_random_sine_dynamics(D, p, rng)
    else:
        dyn = far.zero_dynamics(D, p)
    e = draw_drivers(config, p + config.burn_in + config.T, rng)
    return far.simulate_far(dyn, e, config.T, config.burn_in), dyn


# --- single run ------------------------------------------------------------------

def _stage_rngs(seed):
    names = ("sources", "mixing", "ica", "cluster")
    return dict(zip(names, (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4))))


def separate(x, config, rngs, timings):
    """Innovation estimate -> whitening -> FastICA -> dependence -> clustering.

    Returns ``(transform, ica_result, partition, dependence, info)``.
    """
    info = {}
    t0 = time.perf_counter()
    if config.estimator == "far-ipa":
        innov, diag = far.estimate_innovations(x, config.p, config.kernel(), loo=config.loo,
                                               n_max=config.n_max or None,
                                               return_diagnostics=True)
        info["fallback_queries"] = diag.n_fallback
        info["train_size"] = diag.n_train
    else:
        innov = far.fit_linear_ar(x, config.p).residuals
    timings["innovations"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    Z, transform = ica.center_whiten(innov)
    res = None
    for attempt in range(config.ica_retries + 1):
        res = ica.fastica(Z, rngs["ica"], nonlinearity=config.ica_nonlinearity,
                          tol=config.ica_tol, max_iter=config.ica_max_iter)
        if res.converged:
            break
        log.warning("FastICA did not converge (attempt %d)", attempt + 1)
    info["ica_attempts"] = attempt + 1
    timings["ica"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    Y = Z @ res.W.T
    dep = isa.dependence_matrix(Y, reg=config.kcca_reg, n_points=config.kcca_points)
    timings["dependence"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cluster_seed = int(rngs["cluster"].integers(2 ** 31))
    if config.cluster_method() == "greedy":
        part = isa.greedy_cluster(dep, config.dims, restarts=config.greedy_restarts,
                                  seed=cluster_seed)
    else:
        part = isa.ncut_cluster(dep, n_groups=config.n_groups, seed=cluster_seed,
                                n_init=config.ncut_init)
    timings["clustering"] = time.perf_counter() - t0
    return transform, res, part, dep, info


def run_single(config, index):
    """One seeded run; returns ``(record, timings)``. Stage failures are
    captured in the record instead of raised."""
    seed = config.seed + index
    record = {"run": index, "seed": seed, "status": "ok", "error": None}
    timings = {}
    rngs = _stage_rngs(seed)
    try:
        t0 = time.perf_counter()
        s, dyn = generate_sources(config, rngs["sources"])
        if config.debug_identity:
            mixing = far.MixingSpec(np.eye(config.D), seed=seed, construction="identity")
        else:
            mixing = random_orthogonal(config.D, rngs["mixing"], seed=seed)
        x = far.mix(mixing, s)
        timings["generate"] = time.perf_counter() - t0
        record["A"] = mixing.A.tolist()
        if dyn is not None and dyn.F is not None:
            record["F"] = dyn.F.tolist()

        if config.debug_identity:
            # wiring check: identity whitening/ICA and the true grouping
            D = config.D
            transform = ica.WhiteningTransform(np.zeros(D), np.eye(D), np.eye(D))
            ica_res = ica.IcaResult(np.eye(D), 0, True)
            offsets = np.concatenate(([0], np.cumsum(config.dims)))
            part = isa.Partition([range(a, b) for a, b in zip(offsets[:-1], offsets[1:])])
            dep, info = None, {}
        else:
            transform, ica_res, part, dep, info = separate(x, config, rngs, timings)

        t0 = time.perf_counter()
        sep = isa.assemble_separation(transform, ica_res, part, mixing, true_dims=config.dims)
        timings["assemble"] = time.perf_counter() - t0
        record.update(info)
        record.update({
            "amari": sep.amari,
            "G": sep.G.tolist(),
            "block_sums": block_sums(sep.G, BlockStructure(part.dims, config.dims)).tolist(),
            "partition": part.to_dict(),
            "dims_estimated": list(part.dims),
            "dims_correct": sorted(part.dims) == list(config.dims),
            "block_permutation": sep.block_permutation,
            "ica_converged": ica_res.converged,
            "ica_iterations": ica_res.iterations,
            "W_ica": ica_res.W.tolist(),
            "dependence": None if dep is None else dep.S.tolist(),
        })
        if sep.amari is None:
            raise FaripaError("Amari-index undefined for the estimated partition")
    except (FaripaError, np.linalg.LinAlgError) as exc:
        log.warning("run %d (seed %d) failed: %s", index, seed, exc)
        record["status"] = "failed"
        record["error"] = f"{type(exc).__name__}: {exc}"
    return record, timings


# --- batches ------------------------------------------------------------------

@dataclass
class RunReport:
    config: dict
    records: list
    stats: Optional[BoxStats]
    n_failed: int
    timings: list = field(default_factory=list)

    @property
    def amari(self):
        return [r["amari"] for r in self.records if r["status"] == "ok"]

    @property
    def median(self):
        return self.stats.q2 if self.stats else float("nan")

    def to_dict(self, include_timings=True):
        d = {"config": self.config, "records": self.records,
             "stats": self.stats.to_dict() if self.stats else None,
             "n_failed": self.n_failed}
        if include_timings:
            d["timings"] = self.timings
        return d

    def fingerprint(self):
        """Canonical JSON of everything except wall-clock timings."""
        return json.dumps(self.to_dict(include_timings=False), sort_keys=True)

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    def write_summary_csv(self, path):
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["run", "seed", "status", "amari", "ica_converged", "dims_estimated",
                        "wall_time"])
            for rec, tim in zip(self.records, self.timings):
                w.writerow([rec["run"], rec["seed"], rec["status"],
                            "" if rec.get("amari") is None else repr(rec["amari"]),
                            rec.get("ica_converged", ""),
                            " ".join(str(d) for d in rec.get("dims_estimated", [])),
                            f"{sum(tim.values()):.4f}"])


def _worker_count():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}")


def _run_index(args):
    return run_single(*args)


def run_experiment(config, workers=None):
    """Execute ``config.runs`` seeded runs (seed ``config.seed + r``) and
    aggregate the Amari-indices of the successful ones.

    Runs may execute in parallel (`workers`, default from ``FARIPA_THREADS``);
    results are joined by run index so the report does not depend on it.
    """
    workers = _worker_count() if workers is None else workers
    jobs = [(config, r) for r in range(config.runs)]
    if workers > 1 and config.runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_index, jobs))
    else:
        results = [_run_index(j) for j in jobs]
    records = [r for r, _ in results]
    timings = [t for _, t in results]
    ok = [r["amari"] for r in records if r["status"] == "ok"]
    stats = boxplot_stats(ok) if ok else None
    return RunReport(config=config.to_dict(), records=records, stats=stats,
                     n_failed=len(records) - len(ok), timings=timings)


def sweep(config, T_values=None, beta_c_values=None, workers=None):
    """Run `config` over a grid of sample sizes and bandwidth exponents.

    Returns a list of ``(T, beta_c, RunReport)``.
    """
    out = []
    for T in T_values or [config.T]:
        for bc in beta_c_values or [config.beta_c]:
            cfg = dataclasses.replace(config, T=int(T), beta_c=float(bc))
            log.info("sweep cell T=%d beta_c=%g", cfg.T, cfg.beta_c)
            out.append((cfg.T, cfg.beta_c, run_experiment(cfg, workers)))
    return out
