"""Command-line interface: solve, bench, verify, inspect."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, qp_relax
from .dataio import load_dataset, normalize_features, parse_registry
from .harness import DEFAULT_QP_CAP, METHODS, run_experiment, verify
from .kernels import KernelSpec
from .qp_relax import S3vmConfig


def _kernel_from_args(args) -> KernelSpec:
    if args.kernel == "rbf":
        return KernelSpec("rbf", gamma=args.gamma if args.gamma else 1.0)
    return KernelSpec("linear")


def _config_from_args(args) -> S3vmConfig:
    return S3vmConfig(C=args.C, C_star=args.Cstar, r=args.r if args.r else 0.5,
                      seed=args.seed)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="libsvm file (.gz accepted)")
    p.add_argument("--method", choices=METHODS, default="s-qp-s3vm")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--Cstar", type=float, default=0.1)
    p.add_argument("--r", type=float, default=None,
                   help="positive ratio; defaults to the true ratio in U")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--splits", type=int, default=10)
    p.add_argument("--n-labeled", type=int, default=10)
    p.add_argument("--kernel", choices=("linear", "rbf"), default="linear")
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--k-cap", type=int, default=DEFAULT_QP_CAP,
                   help="largest |U| the qp-s3vm path accepts")
    p.add_argument("--parallel-splits", action="store_true")
    p.add_argument("--csv", type=Path, default=None)
    p.add_argument("--json", type=Path, default=None)


def _print_reports(reports, aggregate) -> None:
    print(f"{'dataset':<14}{'method':<12}{'seed':>6}{'acc%':>9}{'solve_s':>10}{'total_s':>10}")
    for r in reports:
        print(f"{r.dataset:<14}{r.method:<12}{r.seed:>6}{r.accuracy:>9.2f}"
              f"{r.solve_seconds:>10.4f}{r.total_seconds:>10.4f}")
    print(f"mean accuracy {aggregate['mean_accuracy']:.2f}%  "
          f"mean solve {aggregate['mean_solve_seconds']:.4f}s  "
          f"mean total {aggregate['mean_total_seconds']:.4f}s")


def _write_outputs(args, reports, aggregates) -> None:
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dataset", "method", "seed", "accuracy",
                             "solve_seconds", "total_seconds"])
            for r in reports:
                writer.writerow([r.dataset, r.method, r.seed, f"{r.accuracy:.6f}",
                                 f"{r.solve_seconds:.6f}", f"{r.total_seconds:.6f}"])
        print(f"wrote {args.csv}")
    if args.json:
        payload = {
            "reports": [r.__dict__ for r in reports],
            "aggregates": aggregates,
        }
        args.json.write_text(json.dumps(payload, indent=2, default=float))
        print(f"wrote {args.json}")


def _load_normalized(path, binary_map=False):
    return normalize_features(load_dataset(path, binary_map=binary_map))


def cmd_solve(args) -> int:
    data = _load_normalized(args.data)
    reports, aggregate = run_experiment(
        data, Path(args.data).stem, args.method, _config_from_args(args),
        n_labeled=args.n_labeled, splits=args.splits,
        kernel=_kernel_from_args(args), r_override=args.r,
        qp_cap=args.k_cap, parallel=args.parallel_splits,
    )
    _print_reports(reports, aggregate)
    _write_outputs(args, reports, [aggregate])
    return 0


def cmd_bench(args) -> int:
    entries = parse_registry(Path(args.registry).read_text())
    methods = args.methods.split(",") if args.methods else list(METHODS)
    all_reports = []
    aggregates = []
    for entry in entries:
        path = Path(args.registry).parent / entry.path
        if not path.exists():
            print(f"[skip] {entry.name}: data file {path} not found", file=sys.stderr)
            continue
        data = _load_normalized(path)
        cfg = S3vmConfig(C=entry.C, C_star=entry.C * entry.cstar_over_c,
                         r=entry.r, seed=args.seed)
        for method in methods:
            try:
                reports, aggregate = run_experiment(
                    data, entry.name, method, cfg, n_labeled=entry.n_labeled,
                    splits=args.splits, kernel=KernelSpec("linear"),
                    qp_cap=args.k_cap, parallel=args.parallel_splits,
                )
            except ValueError as exc:
                print(f"[skip] {entry.name}/{method}: {exc}", file=sys.stderr)
                continue
            all_reports.extend(reports)
            aggregates.append(aggregate)
    if aggregates:
        print(f"{'dataset':<14}{'method':<12}{'mean acc%':>11}{'mean solve_s':>14}")
        for a in aggregates:
            print(f"{a['dataset']:<14}{a['method']:<12}{a['mean_accuracy']:>11.2f}"
                  f"{a['mean_solve_seconds']:>14.4f}")
    _write_outputs(args, all_reports, aggregates)
    return 0


def cmd_verify(args) -> int:
    kwargs = {}
    if args.fixtures:
        kwargs["n_fixtures"] = args.fixtures
    report = verify(args.checks, seed=args.seed, **kwargs)
    for name, res in report["checks"].items():
        status = "PASS" if res["passed"] else "FAIL"
        detail = {k: v for k, v in res.items() if k not in ("check", "passed")}
        print(f"[{status}] {name}: {json.dumps(detail, default=float)}")
    if args.json:
        args.json.write_text(json.dumps(report, indent=2, default=float))
        print(f"wrote {args.json}")
    return 0 if report["passed"] else 1


def cmd_inspect(args) -> int:
    data = _load_normalized(args.data)
    from .dataio import SplitSpec, make_split
    from .kernels import build_blocks

    split = make_split(data, SplitSpec(n_labeled=args.n_labeled, seed=args.seed))
    r = args.r if args.r is not None else split.positive_ratio_unlabeled()
    cfg = S3vmConfig(C=args.C, C_star=args.Cstar, r=r, seed=args.seed)
    Y = split.labeled_labels().astype(np.float64)
    blocks = build_blocks(split, _kernel_from_args(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.method == "qp-s3vm":
        P = qp_relax.solve_qp(blocks, cfg, Y)
        target = out / "soft_labels.csv"
        with open(target, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "p"])
            for j, pj in enumerate(P.p):
                writer.writerow([j, f"{pj:.12g}"])
        print(f"wrote {target}")
    elif args.method == "s-qp-s3vm":
        from .submodular import labels_from_selection, lazy_greedy_maximize

        k = qp_relax.positive_count(cfg.r, blocks.n_unlabeled)
        selected, trace = lazy_greedy_maximize(blocks, cfg, Y, k)
        labels = labels_from_selection(selected, blocks.n_unlabeled)
        rounds = {row["index"]: row["round"] for row in trace["rounds"]}
        target = out / "selection.csv"
        with open(target, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "label", "round"])
            for j in range(blocks.n_unlabeled):
                writer.writerow([j, int(labels[j]), rounds.get(j, -1)])
        trace_file = out / "trace.json"
        trace_file.write_text(json.dumps(trace["rounds"], indent=2, default=float))
        print(f"wrote {target}")
        print(f"wrote {trace_file}")
    else:
        print("inspect supports qp-s3vm (soft labels) and s-qp-s3vm (selection)",
              file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="s3vmkit",
        description="Semi-supervised SVM labeling via a QP relaxation and its "
                    "submodular greedy solver",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one method on one dataset")
    _add_run_flags(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_bench = sub.add_parser("bench", help="sweep the dataset registry")
    p_bench.add_argument("--registry", default="data/registry.txt")
    p_bench.add_argument("--methods", default=None,
                         help="comma-separated subset of " + ",".join(METHODS))
    p_bench.add_argument("--splits", type=int, default=10)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--k-cap", type=int, default=DEFAULT_QP_CAP)
    p_bench.add_argument("--parallel-splits", action="store_true")
    p_bench.add_argument("--csv", type=Path, default=None)
    p_bench.add_argument("--json", type=Path, default=None)
    p_bench.set_defaults(func=cmd_bench)

    p_verify = sub.add_parser("verify", help="run the property suites")
    p_verify.add_argument("--checks", default="all",
                          choices=("all", "bound", "submodularity", "greedy",
                                   "equivalence"))
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--fixtures", type=int, default=None)
    p_verify.add_argument("--json", type=Path, default=None)
    p_verify.set_defaults(func=cmd_verify)

    p_inspect = sub.add_parser("inspect", help="dump soft labels or selection traces")
    _add_run_flags(p_inspect)
    p_inspect.add_argument("--out", default="inspect_out")
    p_inspect.set_defaults(func=cmd_inspect)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
