"""Render an EvalReport to disk: JSON, TSV tables, CSV curves, example dumps."""

from __future__ import annotations

import csv
import json
import os

from .evaluation import EvalReport

CONTEXT_HEAD_CHARS = 160


def _run_order(report: EvalReport) -> list[str]:
    names = sorted(report.runs)
    if report.baseline in names:
        names.remove(report.baseline)
        names.insert(0, report.baseline)
    return names


def write_report(report: EvalReport, out_dir: str, raw_rows: dict[str, list[dict]] | None = None) -> list[str]:
    """Write every report artifact into ``out_dir``; returns the file list."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def _path(name: str) -> str:
        written.append(name)
        return os.path.join(out_dir, name)

    with open(_path("report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    runs = _run_order(report)
    _write_p1_table(report, runs, _path("p1_by_relation.tsv"))
    _write_flips_table(report, runs, _path("prediction_flips.tsv"))
    _write_nsp_rates(report, runs, _path("nsp_rates.tsv"))
    _write_sign_tests(report, _path("sign_tests.tsv"))

    if report.recall_curve:
        with open(_path("recall_curve.csv"), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "recall"])
            for k, recall in report.recall_curve:
                writer.writerow([k, f"{recall:.4f}"])

    for name in runs:
        curve = report.runs[name].nsp_curve
        if curve is None:
            continue
        with open(_path(f"nsp_delta_bins_{name}.csv"), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_hi", "mean_delta", "count"])
            for hi, mean, count in curve.bins:
                writer.writerow([f"{hi:.1f}", "" if mean is None else f"{mean:.6f}", count])

    if raw_rows:
        for name in runs:
            rows = raw_rows.get(name)
            if rows:
                _write_example_dump(rows, _path(f"examples_{name}.txt"))

    return written


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.1f}"


def _write_p1_table(report: EvalReport, runs: list[str], path: str) -> None:
    """Per-relation and per-corpus P@1, one column per run."""
    seen = {rel for name in runs for rel in report.runs[name].per_relation_p1}
    corpora = sorted({c for name in runs for c in report.runs[name].per_corpus_p1})

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(["group", "key"] + runs) + "\n")
        for rel in sorted(seen):
            cells = [_fmt(report.runs[name].per_relation_p1.get(rel)) for name in runs]
            fh.write("\t".join(["relation", rel] + cells) + "\n")
        for corpus in corpora:
            cells = [_fmt(report.runs[name].per_corpus_p1.get(corpus)) for name in runs]
            fh.write("\t".join(["corpus", corpus] + cells) + "\n")
        cells = [_fmt(report.runs[name].weighted_average_p1) for name in runs]
        fh.write("\t".join(["summary", "weighted_average"] + cells) + "\n")


def _write_flips_table(report: EvalReport, runs: list[str], path: str) -> None:
    """Better/worse flip percentages split by answer presence."""
    context_runs = [n for n in runs if report.runs[n].better_worse is not None]
    rows = [
        ("better_present", lambda bw: bw.better_present),
        ("better_absent", lambda bw: bw.better_absent),
        ("better_total", lambda bw: bw.better_total),
        ("worse_present", lambda bw: bw.worse_present),
        ("worse_absent", lambda bw: bw.worse_absent),
        ("worse_total", lambda bw: bw.worse_total),
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(["cell"] + context_runs) + "\n")
        for label, getter in rows:
            cells = [f"{getter(report.runs[n].better_worse):.1f}" for n in context_runs]
            fh.write("\t".join([label] + cells) + "\n")
        cells = [str(report.runs[n].better_worse.n_relations_improved) for n in context_runs]
        fh.write("\t".join(["n_relations_improved"] + cells) + "\n")


def _write_nsp_rates(report: EvalReport, runs: list[str], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("run\tpct_next_sentence\n")
        for name in runs:
            rate = report.runs[name].nsp_rate_percent
            if rate is not None:
                fh.write(f"{name}\t{rate:.1f}\n")


def _write_sign_tests(report: EvalReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("run_a\trun_b\tp_value\n")
        for pair, p in sorted(report.sign_tests.items()):
            a, b = pair.split("|", 1)
            fh.write(f"{a}\t{b}\t{p:.6g}\n")


def _write_example_dump(rows: list[dict], path: str) -> None:
    """Qualitative dump: query, context head, top-3 candidates, NSP."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in sorted(rows, key=lambda r: r.get("uuid", "")):
            fh.write(f"[{row.get('relation', '?')}] {row.get('query', '')}\n")
            context_head = (row.get("context_head") or "").strip()
            if context_head:
                nsp = row.get("nsp_prob")
                nsp_str = "" if nsp is None else f"  [{nsp:.2f}]"
                fh.write(f"  ctx: {context_head}{nsp_str}\n")
            for entry in (row.get("top_k") or [])[:3]:
                token, logprob = entry[0], entry[1]
                fh.write(f"    {token} [{logprob:.1f}]\n")
            fh.write("\n")
