"""Experiment pipeline: dataset -> teacher -> method rows -> results table.

Every run cell (teacher per seed, student per method row and seed) owns a
directory under the experiment output and is skipped when its report already
exists, so re-running a complete experiment is a no-op. A resolved copy of
the config is written once and compared on resume; a changed config in an
existing directory is an error rather than a silent mix of settings.

Seed derivation: for experiment seed s, the teacher initializes from
SeedSequence([s, 1]) and shuffles from [s, 2]; students use [s, 3] and
[s, 4]. All method rows of one seed therefore share identical student
initialization and batch order and differ only in the loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ExperimentConfig
from .data import Dataset, gen_synthetic, load_csv_dataset, save_csv
from .errors import ConfigError
from .losses import PcdConfig
from .models import MlpSpec, load_checkpoint
from .trainer import distill_student, train_teacher, with_seed

_TEACHER_INIT, _TEACHER_TRAIN, _STUDENT_INIT, _STUDENT_TRAIN = 1, 2, 3, 4


def derived_seed(seed: int, role: int) -> int:
    return int(np.random.SeedSequence([seed, role]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class MethodRow:
    label: str
    kind: str  # "plain" (no teacher) or "distill"
    pcd: Optional[PcdConfig] = None


@dataclass
class ResultRow:
    label: str
    use_ldr: Optional[bool]
    use_f2cl: Optional[bool]
    use_c2fl: Optional[bool]
    use_wdm: Optional[bool]
    stages: Optional[int]
    alpha: Optional[float]
    per_seed: dict[int, float] = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(list(self.per_seed.values())))

    @property
    def std(self) -> float:
        return float(np.std(list(self.per_seed.values())))


@dataclass
class ResultsTable:
    rows: list[ResultRow]
    extras: dict = field(default_factory=dict)

    def row(self, label: str) -> ResultRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "label": r.label,
                    "use_ldr": r.use_ldr,
                    "use_f2cl": r.use_f2cl,
                    "use_c2fl": r.use_c2fl,
                    "use_wdm": r.use_wdm,
                    "stages": r.stages,
                    "alpha": r.alpha,
                    "per_seed": {str(k): v for k, v in sorted(r.per_seed.items())},
                    "mean": r.mean,
                    "std": r.std,
                }
                for r in self.rows
            ],
            "extras": self.extras,
        }


def method_rows(cfg: ExperimentConfig) -> list[MethodRow]:
    """Rows of the requested grid; the teacher anchor is handled separately."""
    base = cfg.pcd
    if cfg.grid_kind == "main":
        return [
            MethodRow("student_alone", "plain"),
            MethodRow("kd", "distill",
                      replace(base, use_ldr=False, use_f2cl=False,
                              use_c2fl=False, use_wdm=False)),
            MethodRow("pcd", "distill",
                      replace(base, use_ldr=True, use_f2cl=True,
                              use_c2fl=True, use_wdm=True)),
        ]
    if cfg.grid_kind == "ablation":
        rows = []
        for ldr in (False, True):
            for f2cl in (False, True):
                for c2fl in (False, True):
                    bits = f"{'ldr' if ldr else '---'}_{'f2cl' if f2cl else '----'}_" \
                           f"{'c2fl' if c2fl else '----'}"
                    rows.append(MethodRow(
                        f"ab_{bits}", "distill",
                        replace(base, use_ldr=ldr, use_f2cl=f2cl, use_c2fl=c2fl),
                    ))
        rows.append(MethodRow(
            "ab_full_no_wdm", "distill",
            replace(base, use_ldr=True, use_f2cl=True, use_c2fl=True, use_wdm=False),
        ))
        return rows
    if cfg.grid_kind == "s_sweep":
        return [
            MethodRow(f"pcd_s{s}", "distill", replace(base, stages=s))
            for s in cfg.s_values
        ]
    if cfg.grid_kind == "alpha_sweep":
        return [
            MethodRow(f"pcd_alpha{a:g}", "distill", replace(base, alpha=a))
            for a in cfg.alpha_values
        ]
    raise ConfigError(f"unknown grid kind {cfg.grid_kind!r}")


def build_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.dataset_kind == "synthetic":
        return gen_synthetic(cfg.synthetic)
    return load_csv_dataset(cfg.csv_path, cfg.num_classes)


# -- directory layout ---------------------------------------------------------

def teacher_dir(out: Path, seed: int) -> Path:
    return out / "seeds" / f"s{seed}" / "teacher"


def row_dir(out: Path, label: str, seed: int) -> Path:
    return out / "seeds" / f"s{seed}" / "rows" / label


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _check_config_echo(out: Path, cfg: ExperimentConfig) -> None:
    echo_path = out / "config.json"
    if echo_path.exists():
        previous = json.loads(echo_path.read_text(encoding="utf-8"))
        if previous != cfg.raw:
            raise ConfigError(
                f"{out} was produced by a different config; "
                "use a fresh output directory"
            )
    else:
        _write_json(echo_path, cfg.raw)


def _ensure_teacher(cfg: ExperimentConfig, ds: Dataset, out: Path, seed: int,
                    stats: dict) -> Path:
    tdir = teacher_dir(out, seed)
    ckpt, rep_path = tdir / "teacher.npz", tdir / "report.json"
    if ckpt.exists() and rep_path.exists():
        stats["skipped"] += 1
        return ckpt
    spec = MlpSpec(ds.dim, cfg.teacher_hidden, ds.num_classes,
                   seed=derived_seed(seed, _TEACHER_INIT))
    tcfg = with_seed(cfg.teacher_train, derived_seed(seed, _TEACHER_TRAIN))
    _, report = train_teacher(ds, spec, tcfg, ckpt_path=ckpt)
    payload = report.to_dict()
    payload["label"] = "teacher"
    payload["experiment_seed"] = seed
    _write_json(rep_path, payload)
    stats["trained"] += 1
    return ckpt


def _ensure_row_cell(cfg: ExperimentConfig, ds: Dataset, out: Path,
                     row: MethodRow, seed: int, teacher_ckpt: Optional[Path],
                     stats: dict) -> None:
    rdir = row_dir(out, row.label, seed)
    ckpt, rep_path = rdir / "student.npz", rdir / "report.json"
    if ckpt.exists() and rep_path.exists():
        stats["skipped"] += 1
        return
    spec = MlpSpec(ds.dim, cfg.student_hidden, ds.num_classes,
                   seed=derived_seed(seed, _STUDENT_INIT))
    scfg = with_seed(cfg.student_train, derived_seed(seed, _STUDENT_TRAIN))
    if row.kind == "plain":
        _, report = train_teacher(ds, spec, scfg, ckpt_path=ckpt)
    else:
        teacher = load_checkpoint(teacher_ckpt)
        _, report = distill_student(ds, teacher, spec, scfg, row.pcd,
                                    ckpt_path=ckpt)
    payload = report.to_dict()
    payload["label"] = row.label
    payload["experiment_seed"] = seed
    if row.pcd is not None:
        payload["pcd"] = {
            "tau": row.pcd.tau, "alpha": row.pcd.alpha, "stages": row.pcd.stages,
            "use_ldr": row.pcd.use_ldr, "use_f2cl": row.pcd.use_f2cl,
            "use_c2fl": row.pcd.use_c2fl, "use_wdm": row.pcd.use_wdm,
            "kd_beta": row.pcd.kd_beta,
        }
    _write_json(rep_path, payload)
    stats["trained"] += 1


def _result_row(label: str, pcd: Optional[PcdConfig]) -> ResultRow:
    if pcd is None:
        return ResultRow(label, None, None, None, None, None, None)
    return ResultRow(label, pcd.use_ldr, pcd.use_f2cl, pcd.use_c2fl,
                     pcd.use_wdm, pcd.stages, pcd.alpha)


def aggregate(cfg: ExperimentConfig, out: Path) -> ResultsTable:
    """Collect per-cell reports into a table (teacher row first)."""
    rows = [_result_row("teacher", None)]
    rows.extend(_result_row(r.label, r.pcd) for r in method_rows(cfg))
    needs_teacher = any(r.kind == "distill" for r in method_rows(cfg))
    for seed in cfg.seeds:
        if needs_teacher:
            t_rep = teacher_dir(out, seed) / "report.json"
            if t_rep.exists():
                rows[0].per_seed[seed] = json.loads(t_rep.read_text())["final_top1"]
        for row, mrow in zip(rows[1:], method_rows(cfg)):
            rep = row_dir(out, mrow.label, seed) / "report.json"
            if rep.exists():
                row.per_seed[seed] = json.loads(rep.read_text())["final_top1"]
    rows = [r for r in rows if r.per_seed]
    table = ResultsTable(rows=rows)
    if cfg.grid_kind == "main":
        by = {r.label: r for r in rows}
        if {"teacher", "student_alone", "kd", "pcd"} <= set(by):
            table.extras["teacher_minus_alone"] = by["teacher"].mean - by["student_alone"].mean
            table.extras["kd_minus_alone"] = by["kd"].mean - by["student_alone"].mean
            table.extras["pcd_minus_kd"] = by["pcd"].mean - by["kd"].mean
            table.extras["pcd_improves_over_kd"] = bool(by["pcd"].mean > by["kd"].mean)
    return table


def _format_cell(v, width: int = 7) -> str:
    if v is None:
        return "-".center(width)
    if isinstance(v, bool):
        return ("yes" if v else "no").center(width)
    if isinstance(v, float):
        return f"{v:{width}.2f}"
    return str(v).center(width)


def render_table_txt(table: ResultsTable, seeds: list[int]) -> str:
    header = ["method".ljust(18), "LDR".center(5), "F2CL".center(5),
              "C2FL".center(5), "WDM".center(5), "S".center(4), "alpha".center(6)]
    header += [f"s{seed}".center(7) for seed in seeds]
    header += ["mean".center(7), "std".center(7)]
    lines = ["  ".join(header)]
    lines.append("-" * len(lines[0]))
    for r in table.rows:
        cells = [r.label.ljust(18)]
        for v, w in ((r.use_ldr, 5), (r.use_f2cl, 5), (r.use_c2fl, 5),
                     (r.use_wdm, 5), (r.stages, 4), (r.alpha, 6)):
            cells.append("-".center(w) if v is None else
                         (_format_cell(v, w) if not isinstance(v, float)
                          else f"{v:{w}.2f}"))
        for seed in seeds:
            cells.append(_format_cell(r.per_seed.get(seed)))
        cells.append(f"{r.mean:7.2f}")
        cells.append(f"{r.std:7.2f}")
        lines.append("  ".join(cells))
    if table.extras:
        lines.append("")
        for k, v in sorted(table.extras.items()):
            lines.append(f"{k}: {v}")
    return "\n".join(lines) + "\n"


def render_table_csv(table: ResultsTable, seeds: list[int]) -> str:
    cols = ["label", "use_ldr", "use_f2cl", "use_c2fl", "use_wdm", "stages",
            "alpha"] + [f"top1_s{seed}" for seed in seeds] + ["mean", "std"]
    out = [",".join(cols)]
    for r in table.rows:
        vals = [r.label]
        for v in (r.use_ldr, r.use_f2cl, r.use_c2fl, r.use_wdm, r.stages, r.alpha):
            vals.append("" if v is None else str(v))
        for seed in seeds:
            v = r.per_seed.get(seed)
            vals.append("" if v is None else repr(float(v)))
        vals.append(repr(r.mean))
        vals.append(repr(r.std))
        out.append(",".join(vals))
    return "\n".join(out) + "\n"


def write_results(cfg: ExperimentConfig, out: Path, table: ResultsTable,
                  figures: bool = True) -> None:
    _write_json(out / "results.json", table.to_dict())
    (out / "results.txt").write_text(render_table_txt(table, cfg.seeds),
                                     encoding="utf-8")
    (out / "results.csv").write_text(render_table_csv(table, cfg.seeds),
                                     encoding="utf-8")
    if figures:
        from . import plots  # deferred: matplotlib import is slow

        plots.render_results_bar(table, out / "results_top1.png")
        curves = _collect_curves(cfg, out)
        if curves:
            plots.render_training_curves(curves, out / "curves_top1.png")


def _collect_curves(cfg: ExperimentConfig, out: Path) -> list[tuple[str, list[float]]]:
    curves = []
    for row in method_rows(cfg):
        per_seed = []
        for seed in cfg.seeds:
            rep = row_dir(out, row.label, seed) / "report.json"
            if rep.exists():
                epochs = json.loads(rep.read_text())["epochs"]
                per_seed.append([e["test_top1"] for e in epochs])
        if per_seed and len({len(c) for c in per_seed}) == 1:
            curves.append((row.label, list(np.mean(per_seed, axis=0))))
    return curves


def _main_grid_exports(cfg: ExperimentConfig, ds: Dataset, out: Path,
                       table: ResultsTable) -> None:
    """Teacher-student probability-gap matrices for the kd and pcd rows."""
    from . import export  # deferred: pulls in matplotlib via plots

    norms: dict[str, list[float]] = {"kd": [], "pcd": []}
    for label in ("kd", "pcd"):
        for seed in cfg.seeds:
            student_ckpt = row_dir(out, label, seed) / "student.npz"
            t_ckpt = teacher_dir(out, seed) / "teacher.npz"
            if not (student_ckpt.exists() and t_ckpt.exists()):
                return
            matrix = export.logit_diff_matrix(
                load_checkpoint(t_ckpt), load_checkpoint(student_ckpt), ds,
                tau=cfg.pcd.tau,
            )
            dest = row_dir(out, label, seed) / "logit_diff.csv"
            export.save_matrix_csv(matrix, dest)
            if seed == cfg.seeds[0]:
                from . import plots

                plots.render_matrix_heatmap(
                    matrix, dest.with_suffix(".png"),
                    title=f"{label}: teacher-student probability gap",
                )
            norms[label].append(float(np.linalg.norm(matrix)))
    table.extras["logit_diff_frobenius"] = {
        label: float(np.mean(vals)) for label, vals in norms.items()
    }


def run_experiment(cfg: ExperimentConfig, out_dir=None,
                   figures: bool = True) -> tuple[ResultsTable, dict]:
    """Execute all phases; returns the table and {trained, skipped} counts."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _check_config_echo(out, cfg)
    ds = build_dataset(cfg)
    if cfg.dataset_kind == "synthetic" and not (out / "dataset.csv").exists():
        save_csv(ds, out / "dataset.csv")
    stats = {"trained": 0, "skipped": 0}
    rows = method_rows(cfg)
    needs_teacher = any(r.kind == "distill" for r in rows)
    teacher_ckpts: dict[int, Path] = {}
    for seed in cfg.seeds:
        if needs_teacher:
            teacher_ckpts[seed] = _ensure_teacher(cfg, ds, out, seed, stats)
    for row in rows:
        for seed in cfg.seeds:
            _ensure_row_cell(cfg, ds, out, row, seed, teacher_ckpts.get(seed), stats)
    table = aggregate(cfg, out)
    if cfg.grid_kind == "main":
        _main_grid_exports(cfg, ds, out, table)
    write_results(cfg, out, table, figures=figures)
    return table, stats
