"""Report writers: plain-text summaries, delimited rows, and figures.

Every CLI command that reports writes the same content three ways
where it makes sense: a .txt summary for humans, a .csv for machines,
and a .png figure rendered next to them. All writers are deterministic
so repeated runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .corpus import Manifest
from .evaluation import AccuracyReport, MetaEvalReport
from .theory import TheoremReport

_FIG_DPI = 150
# Strip the library version stamp so PNG bytes do not change across
# patch releases.
_PNG_METADATA = {"Software": None}


def write_text(path: str | Path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_records(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, dpi=_FIG_DPI, metadata=_PNG_METADATA)
    plt.close(fig)


def _flag(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def theorem_report_text(report: TheoremReport) -> str:
    lines = [
        "consistency bound verification",
        f"trials={report.trials} pairs={report.n_pairs} "
        f"pair_trials={report.pair_trials} seed={report.seed}",
        "",
        f"{'p':>6} {'k':>3} {'bound':>8} {'sim P(Y|E)':>11} {'stderr':>9} "
        f"{'thm1':>5} {'joint':>9} {'closed':>9} {'thm2':>5} {'order':>5}",
    ]
    for r in report.grid_results:
        lines.append(
            f"{r.p:>6.3f} {r.k:>3d} {r.analytic_bound:>8.4f} "
            f"{r.sim.p_y_given_e:>11.5f} {r.sim.stderr:>9.6f} "
            f"{_flag(r.thm1_ok and r.bound_dominates and r.joint_bounds_ok):>5} "
            f"{r.mean_indep_joint:>9.6f} {r.closed_form_joint:>9.6f} "
            f"{_flag(r.thm2_joint_ok and r.thm2_posterior_ok):>5} "
            f"{_flag(r.thm2_ordering_ok):>5}"
        )
    lines += [
        "",
        f"bound dominance sweep ({report.dominance.n_points} points): "
        f"{_flag(report.dominance.ok)}",
        f"sum-of-squares lower bound ({report.lemmas.n_vectors} vectors, "
        f"min gap {report.lemmas.min_sum_sq_gap:.3e}): {_flag(report.lemmas.sum_sq_ok)}",
        f"uniform-weights equality (max gap {report.lemmas.max_uniform_gap:.3e}): "
        f"{_flag(report.lemmas.uniform_equality_ok)}",
        f"covariance identity (max residual {report.lemmas.max_cov_residual:.3e}): "
        f"{_flag(report.lemmas.covariance_ok)}",
        "",
        f"overall: {_flag(report.passed)}",
        "",
    ]
    return "\n".join(lines)


def theorem_report_rows(report: TheoremReport) -> tuple[list[str], list[list]]:
    rows = report.rows()
    header = list(rows[0].keys()) if rows else []
    return header, [[row[h] for h in header] for row in rows]


def plot_theorem_report(report: TheoremReport, path: str | Path) -> None:
    """Bound curve over p with the simulated conditionals overlaid."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ps = np.linspace(0.5, 1.0, 501)
    ax1.plot(ps, ps * ps / (ps * ps + (1 - ps) ** 2), label="analytic bound")
    ax1.plot(ps, ps, linestyle="--", color="gray", label="y = p")
    ks = sorted({r.k for r in report.grid_results})
    for k in ks:
        pts = [r for r in report.grid_results if r.k == k]
        ax1.scatter(
            [r.p for r in pts],
            [r.sim.p_y_given_e for r in pts],
            s=18,
            label=f"simulated, k={k}",
        )
    ax1.set_xlabel("p")
    ax1.set_ylabel("P(correct | agree)")
    ax1.legend(fontsize=7)
    ax1.set_title("agreement implies correctness")

    for k in ks:
        pts = [r for r in report.grid_results if r.k == k]
        ax2.plot(
            [r.p for r in pts],
            [r.mean_indep_joint for r in pts],
            marker="o",
            markersize=3,
            label=f"independent, k={k}",
        )
        ax2.plot(
            [r.p for r in pts],
            [r.closed_form_joint for r in pts],
            linestyle=":",
            color="gray",
        )
    ax2.set_xlabel("p")
    ax2.set_ylabel("P(agree and wrong)")
    ax2.set_yscale("log")
    ax2.legend(fontsize=7)
    ax2.set_title("agree-and-wrong mass vs (1-p)^2/k")
    fig.tight_layout()
    _save(fig, path)


def accuracy_report_text(report: AccuracyReport) -> str:
    lines = [f"accuracy by {report.group_by}", ""]
    width = max((len(g.name) for g in report.groups), default=5)
    lines.append(f"{'group':<{width}}  {'n':>6} {'correct':>8} {'accuracy':>9}")
    for g in report.groups:
        lines.append(f"{g.name:<{width}}  {g.n:>6d} {g.n_correct:>8d} {g.accuracy:>9.4f}")
    lines += [
        "",
        f"overall: {report.overall_correct}/{report.overall_n} = {report.overall:.4f}",
        f"average over groups: {report.average:.4f}",
        "",
    ]
    return "\n".join(lines)


def accuracy_report_rows(report: AccuracyReport) -> tuple[list[str], list[list]]:
    header = ["group", "n", "n_correct", "accuracy"]
    rows: list[list] = [[g.name, g.n, g.n_correct, g.accuracy] for g in report.groups]
    rows.append(["<overall>", report.overall_n, report.overall_correct, report.overall])
    rows.append(["<average>", "", "", report.average])
    return header, rows


def plot_accuracy(report: AccuracyReport, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(max(4, 1.0 * len(report.groups) + 2), 4))
    names = [g.name for g in report.groups]
    ax.bar(names, [g.accuracy for g in report.groups], color="#4878a8")
    ax.axhline(report.average, linestyle="--", color="gray", label="group average")
    ax.set_ylim(0, 1)
    ax.set_ylabel("accuracy")
    ax.set_title(f"accuracy by {report.group_by}")
    ax.tick_params(axis="x", rotation=30)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def manifest_text(manifest: Manifest) -> str:
    lines = ["corpus manifest", ""]
    lines.append(f"{'scenario':<22} {'source':<12} {'operation':<16} {'count':>7}")
    for e in manifest.entries:
        lines.append(f"{e.scenario:<22} {e.source:<12} {e.operation:<16} {e.count:>7d}")
    lines.append("")
    lines.append("per source:")
    for src, count in manifest.source_counts().items():
        lines.append(f"  {src or 'unknown':<12} {count:>7d}")
    lines.append("")
    lines.append(f"total: {manifest.total}")
    lines.append("")
    return "\n".join(lines)


def manifest_rows(manifest: Manifest) -> tuple[list[str], list[list]]:
    header = ["scenario", "source", "operation", "count"]
    rows: list[list] = [
        [e.scenario, e.source, e.operation, e.count] for e in manifest.entries
    ]
    rows.append(["<total>", "", "", manifest.total])
    return header, rows


def plot_manifest(manifest: Manifest, path: str | Path) -> None:
    counts = manifest.source_counts()
    fig, ax = plt.subplots(figsize=(max(4, 0.9 * len(counts) + 2), 4))
    names = [s or "unknown" for s in counts]
    ax.bar(names, list(counts.values()), color="#6a9a58")
    ax.set_ylabel("instances")
    ax.set_title(f"instances per source (total {manifest.total})")
    ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    _save(fig, path)


def meta_report_text(report: MetaEvalReport) -> str:
    lines = [
        "judge vs human agreement",
        "",
        f"paired instances: {report.n}",
        f"false positives: {report.fp_count} ({report.false_positive_rate:.2%})",
        f"false negatives: {report.fn_count} ({report.false_negative_rate:.2%})",
    ]
    if report.per_scenario:
        lines.append("")
        for name, s in sorted(report.per_scenario.items()):
            lines.append(
                f"  {name}: n={s.n} fp={s.fp_count} ({s.false_positive_rate:.2%}) "
                f"fn={s.fn_count} ({s.false_negative_rate:.2%})"
            )
    lines.append("")
    return "\n".join(lines)


def validation_summary_text(
    n_total: int, n_accepted: int, n_errors: int, what: str
) -> str:
    rate = n_accepted / n_total if n_total else 0.0
    return (
        f"{what}\n\n"
        f"instances: {n_total}\n"
        f"accepted: {n_accepted} ({rate:.2%})\n"
        f"errors: {n_errors}\n"
    )
