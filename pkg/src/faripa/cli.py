"""Command line entry point: ``faripa {generate,run,amari,stats}``."""
import argparse
import csv
import dataclasses
import json
import logging
import os
import sys

from . import far, synth
from .errors import FaripaError
from .fileio import read_matrix_csv, write_matrix_csv, write_series_csv
from .harness import (DATASETS, ESTIMATORS, ExperimentConfig, boxplot_stats,
                      generate_sources, random_orthogonal, sweep, _stage_rngs)
from .metrics import BlockStructure, amari_index, block_sums, is_block_permutation


def _dims(text):
    return [int(d) for d in text.replace(",", " ").split()]


def _config_from_args(args):
    base = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
    overrides = {
        "dataset": args.dataset, "dims": args.dims, "runs": args.runs, "seed": args.seed,
        "estimator": args.estimator, "clustering": args.clustering,
        "n_groups": args.n_groups, "p": args.p, "n_max": args.n_max,
    }
    if args.T and len(args.T) == 1:
        overrides["T"] = args.T[0]
    if args.beta_c and len(args.beta_c) == 1:
        overrides["beta_c"] = args.beta_c[0]
    base.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(base)


def cmd_generate(args):
    if args.pgm_dir:
        os.makedirs(args.pgm_dir, exist_ok=True)
        for name in synth.EXPRESSIONS:
            synth.write_smiley_pgm(os.path.join(args.pgm_dir, f"{name}.pgm"), name, args.size)
        print(f"wrote {len(synth.EXPRESSIONS)} PGM images to {args.pgm_dir}")
        if not args.out:
            return 0
    if not args.out:
        raise FaripaError("generate needs --out (or --pgm-dir)")
    fields = {"dataset": args.dataset, "T": args.T[0] if args.T else 20000,
              "seed": args.seed or 0, "p": args.p or 1}
    if args.dims:
        fields["dims"] = args.dims
    cfg = ExperimentConfig(**fields)
    rngs = _stage_rngs(cfg.seed)
    s, dyn = generate_sources(cfg, rngs["sources"])
    mixing = random_orthogonal(cfg.D, rngs["mixing"], seed=cfg.seed)
    x = far.mix(mixing, s)
    write_series_csv(args.out, x, [f"x{i + 1}" for i in range(cfg.D)])
    if args.hidden:
        write_series_csv(args.hidden, s, [f"s{i + 1}" for i in range(cfg.D)])
    if args.mixing:
        write_matrix_csv(args.mixing, mixing.A)
    print(f"wrote {x.shape[0]} x {x.shape[1]} observations to {args.out}")
    return 0


def _write_report(report, outdir):
    os.makedirs(outdir, exist_ok=True)
    report.write_json(os.path.join(outdir, "report.json"))
    report.write_summary_csv(os.path.join(outdir, "summary.csv"))
    for rec in report.records:
        if rec["status"] != "ok":
            continue
        write_matrix_csv(os.path.join(outdir, f"G_run{rec['run']:03d}.csv"), rec["G"])
        write_matrix_csv(os.path.join(outdir, f"blocksums_run{rec['run']:03d}.csv"),
                         rec["block_sums"])
        if rec.get("dependence") is not None:
            write_matrix_csv(os.path.join(outdir, f"dependence_run{rec['run']:03d}.csv"),
                             rec["dependence"])


def cmd_run(args):
    cfg = _config_from_args(args)
    cells = sweep(cfg, args.T, args.beta_c)
    rows = []
    for T, bc, report in cells:
        sub = args.out if len(cells) == 1 else os.path.join(args.out, f"T{T}_bc{bc:g}")
        if args.out:
            _write_report(report, sub)
        st = report.stats
        rows.append([T, bc, report.n_failed] + (
            [st.q1, st.q2, st.q3, st.whisker_low, st.whisker_high, len(st.outliers)]
            if st else [""] * 6))
        print(f"T={T} beta_c={bc:g} median_r={report.median:.6g} failed={report.n_failed}")
    if args.out:
        with open(os.path.join(args.out, "sweep.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["T", "beta_c", "n_failed", "q1", "q2", "q3",
                        "whisker_low", "whisker_high", "n_outliers"])
            w.writerows(rows)
    return 0


def cmd_amari(args):
    G = read_matrix_csv(args.G)
    blocks = BlockStructure(args.est_dims or args.dims, args.dims)
    r = amari_index(G, blocks)
    out = {"amari": r, "block_permutation": is_block_permutation(G, blocks, args.tol),
           "row_dims": list(blocks.row_dims), "col_dims": list(blocks.col_dims)}
    if args.block_sums:
        write_matrix_csv(args.block_sums, block_sums(G, blocks))
    print(json.dumps(out))
    return 0


def _read_column(path, column):
    """Numeric values of one CSV column (header name or 0-based index);
    blank cells such as failed runs are skipped."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FaripaError(f"{path} is empty")
    header = rows[0]
    if column in header:
        col = header.index(column)
    else:
        try:
            col = int(column)
        except ValueError:
            raise FaripaError(f"no column {column!r} in {path}") from None
    values = []
    for row in rows[1:]:
        if col < len(row) and row[col].strip():
            try:
                values.append(float(row[col]))
            except ValueError:
                raise FaripaError(f"non-numeric entry {row[col]!r} in column {column!r}") from None
    return values


def cmd_stats(args):
    values = _read_column(args.csv, args.column)
    print(json.dumps(dataclasses.asdict(boxplot_stats(values))))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="faripa", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--dataset", choices=DATASETS)
        p.add_argument("--dims", type=_dims, help="component dims, e.g. '2,3'")
        p.add_argument("--T", type=int, nargs="+", help="sample count(s)")
        p.add_argument("--seed", type=int)
        p.add_argument("--p", type=int, help="fAR order")

    g = sub.add_parser("generate", help="write a mixed dataset as CSV")
    common(g)
    g.add_argument("--out", help="observation CSV")
    g.add_argument("--hidden", help="also write the hidden sources here")
    g.add_argument("--mixing", help="also write the mixing matrix here")
    g.add_argument("--pgm-dir", help="write the procedural face densities as PGM files")
    g.add_argument("--size", type=int, default=48, help="PGM edge length")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run an experiment (or a T x beta_c sweep)")
    common(r)
    r.add_argument("--config", help="JSON file with ExperimentConfig fields")
    r.add_argument("--beta-c", type=float, nargs="+")
    r.add_argument("--runs", type=int)
    r.add_argument("--estimator", choices=ESTIMATORS)
    r.add_argument("--clustering", choices=("auto", "greedy", "ncut"))
    r.add_argument("--n-groups", type=int)
    r.add_argument("--n-max", type=int, help="training-pair cap (0: no thinning)")
    r.add_argument("--out", help="output directory for report.json, summary.csv, CSVs")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("amari", help="Amari-index of a G matrix CSV")
    a.add_argument("--G", required=True)
    a.add_argument("--dims", type=_dims, required=True, help="true component dims")
    a.add_argument("--est-dims", type=_dims, help="estimated dims (default: --dims)")
    a.add_argument("--tol", type=float, default=1e-12)
    a.add_argument("--block-sums", help="write the block-sum matrix to this CSV")
    a.set_defaults(func=cmd_amari)

    s = sub.add_parser("stats", help="box-plot statistics of a CSV column")
    s.add_argument("--csv", required=True)
    s.add_argument("--column", required=True, help="header name or 0-based index")
    s.set_defaults(func=cmd_stats)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FaripaError, OSError) as exc:
        print(f"faripa: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
