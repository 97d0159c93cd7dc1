"""Command-line entry point.

Subcommands: gen-data, train-teacher, distill, report, export-logit-diff,
export-embeddings, run. Exit codes: 0 success, 1 configuration or input
error, 2 runtime error (training divergence).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiment
from .config import ExperimentConfig, load_config
from .data import save_csv
from .errors import (
    ConfigError,
    DataError,
    DistillError,
    DivergenceError,
    ParameterError,
)
from .models import load_checkpoint


def _out_dir(cfg: ExperimentConfig, args) -> Path:
    return Path(args.out if args.out else cfg.output_dir)


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    ds = experiment.build_dataset(cfg)
    dest = out / "dataset.csv"
    save_csv(ds, dest)
    print(f"wrote {dest} ({len(ds.labels)} rows, {ds.num_classes} classes, "
          f"{len(ds.train_idx)} train / {len(ds.test_idx)} test)")
    return 0


def cmd_train_teacher(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    out.mkdir(parents=True, exist_ok=True)
    experiment._check_config_echo(out, cfg)
    ds = experiment.build_dataset(cfg)
    seeds = [args.seed] if args.seed is not None else cfg.seeds
    stats = {"trained": 0, "skipped": 0}
    for seed in seeds:
        ckpt = experiment._ensure_teacher(cfg, ds, out, seed, stats)
        print(f"teacher seed {seed}: {ckpt}")
    print(f"trained {stats['trained']}, skipped {stats['skipped']}")
    return 0


def cmd_distill(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    out.mkdir(parents=True, exist_ok=True)
    experiment._check_config_echo(out, cfg)
    ds = experiment.build_dataset(cfg)
    rows = {r.label: r for r in experiment.method_rows(cfg)}
    if args.method not in rows:
        raise ConfigError(
            f"unknown method {args.method!r}; this grid offers: "
            f"{', '.join(sorted(rows))}"
        )
    row = rows[args.method]
    seeds = [args.seed] if args.seed is not None else cfg.seeds
    stats = {"trained": 0, "skipped": 0}
    for seed in seeds:
        teacher_ckpt = None
        if row.kind == "distill":
            teacher_ckpt = experiment._ensure_teacher(cfg, ds, out, seed, stats)
        experiment._ensure_row_cell(cfg, ds, out, row, seed, teacher_ckpt, stats)
        print(f"{row.label} seed {seed}: {experiment.row_dir(out, row.label, seed)}")
    print(f"trained {stats['trained']}, skipped {stats['skipped']}")
    return 0


def cmd_report(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    if not out.exists():
        raise ConfigError(f"output directory not found: {out}")
    table = experiment.aggregate(cfg, out)
    if not table.rows:
        raise ConfigError(f"no completed cells under {out}; run training first")
    experiment.write_results(cfg, out, table, figures=not args.no_figures)
    print(experiment.render_table_txt(table, cfg.seeds))
    return 0


def cmd_export_logit_diff(args) -> int:
    from . import export

    cfg = load_config(args.config)
    ds = experiment.build_dataset(cfg)
    teacher = load_checkpoint(args.teacher)
    student = load_checkpoint(args.student)
    tau = args.tau if args.tau is not None else cfg.pcd.tau
    matrix = export.logit_diff_matrix(teacher, student, ds, tau=tau,
                                      split=args.split)
    export.save_matrix_csv(matrix, args.out)
    print(f"wrote {args.out} ({matrix.shape[0]}x{matrix.shape[1]})")
    if not args.no_figures:
        from . import plots

        png = Path(args.out).with_suffix(".png")
        plots.render_matrix_heatmap(matrix, png,
                                    title="teacher-student probability gap")
        print(f"wrote {png}")
    return 0


def cmd_export_embeddings(args) -> int:
    from . import export

    cfg = load_config(args.config)
    ds = experiment.build_dataset(cfg)
    params = load_checkpoint(args.ckpt)
    table = export.embeddings_table(params, ds, split=args.split)
    export.save_embeddings_csv(table, args.out)
    print(f"wrote {args.out} ({table.shape[0]} rows, {table.shape[1]} columns)")
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    table, stats = experiment.run_experiment(cfg, out_dir=out,
                                             figures=not args.no_figures)
    print(experiment.render_table_txt(table, cfg.seeds))
    print(f"trained {stats['trained']} cells, skipped {stats['skipped']} "
          f"(already complete); results under {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcdistill",
        description="Progressive class-level distillation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help="output directory (default: config output_dir)"):
        p.add_argument("--config", required=True, help="path to JSON config")
        p.add_argument("--out", default=None, help=out_help)

    p = sub.add_parser("gen-data", help="generate the dataset CSV")
    common(p)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train-teacher", help="train teacher checkpoints")
    common(p)
    p.add_argument("--seed", type=int, default=None,
                   help="single experiment seed (default: all config seeds)")
    p.set_defaults(fn=cmd_train_teacher)

    p = sub.add_parser("distill", help="train one method row")
    common(p)
    p.add_argument("--method", required=True,
                   help="row label from the config's grid (e.g. kd, pcd)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_distill)

    p = sub.add_parser("report", help="aggregate results and render figures")
    common(p)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("export-logit-diff",
                       help="write the class-by-class probability-gap matrix")
    p.add_argument("--config", required=True)
    p.add_argument("--teacher", required=True, help="teacher checkpoint")
    p.add_argument("--student", required=True, help="student checkpoint")
    p.add_argument("--out", required=True, help="destination CSV path")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--tau", type=float, default=None,
                   help="softening temperature (default: pcd.tau)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_export_logit_diff)

    p = sub.add_parser("export-embeddings",
                       help="write penultimate-layer activations plus labels")
    p.add_argument("--config", required=True)
    p.add_argument("--ckpt", required=True, help="model checkpoint")
    p.add_argument("--out", required=True, help="destination CSV path")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.set_defaults(fn=cmd_export_embeddings)

    p = sub.add_parser("run", help="full pipeline: data, teacher, rows, report")
    common(p)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_run)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, DataError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DivergenceError, DistillError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
