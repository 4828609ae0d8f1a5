"""Evaluation battery: P@1 tables, paired deltas, sign tests, NSP analyses.

All aggregations reduce in a fixed order (sorted by fact uuid) so reports
are byte-stable regardless of how the records were produced or
partitioned.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

from scipy import stats as scipy_stats

from .errors import PairingError
from .probe_data import GOOGLE_RE, SQUAD, TREX

logger = logging.getLogger(__name__)

DEFAULT_CORPUS_WEIGHTS = {GOOGLE_RE: 3.0, TREX: 41.0, SQUAD: 1.0}

NSP_THRESHOLD = 0.5
N_DELTA_BINS = 10


@dataclass(frozen=True)
class RunRecord:
    """Per-example outcome of one scoring run."""

    fact_uuid: str
    relation: str
    corpus: str
    strategy: str
    answer: str
    argmax_token: str
    answer_logprob: float
    answer_logprob_nocontext: float | None = None
    nsp_prob: float | None = None
    answer_present: bool = False

    @property
    def correct(self) -> bool:
        return self.argmax_token == self.answer

    def to_json(self) -> dict:
        return {
            "uuid": self.fact_uuid,
            "relation": self.relation,
            "corpus": self.corpus,
            "strategy": self.strategy,
            "answer": self.answer,
            "argmax_token": self.argmax_token,
            "answer_logprob": self.answer_logprob,
            "answer_logprob_nocontext": self.answer_logprob_nocontext,
            "nsp_prob": self.nsp_prob,
            "answer_present": self.answer_present,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RunRecord":
        return cls(
            fact_uuid=str(obj["uuid"]),
            relation=str(obj["relation"]),
            corpus=str(obj["corpus"]),
            strategy=str(obj["strategy"]),
            answer=str(obj["answer"]),
            argmax_token=str(obj["argmax_token"]),
            answer_logprob=float(obj["answer_logprob"]),
            answer_logprob_nocontext=(
                None
                if obj.get("answer_logprob_nocontext") is None
                else float(obj["answer_logprob_nocontext"])
            ),
            nsp_prob=None if obj.get("nsp_prob") is None else float(obj["nsp_prob"]),
            answer_present=bool(obj.get("answer_present", False)),
        )


def read_records(path: str) -> list[RunRecord]:
    """Read a predictions JSONL file; extra fields are ignored."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(RunRecord.from_json(json.loads(line)))
    return records


def _sorted(records) -> list[RunRecord]:
    return sorted(records, key=lambda r: r.fact_uuid)


def precision_at_1(records) -> tuple[dict[str, float], dict[str, float]]:
    """P@1 percentage per relation and per corpus (exact string match)."""
    by_relation: dict[str, list[RunRecord]] = {}
    by_corpus: dict[str, list[RunRecord]] = {}
    for rec in _sorted(records):
        by_relation.setdefault(rec.relation, []).append(rec)
        by_corpus.setdefault(rec.corpus, []).append(rec)

    def p1(group: list[RunRecord]) -> float:
        return 100.0 * sum(1 for r in group if r.correct) / len(group)

    per_relation = {rel: p1(group) for rel, group in sorted(by_relation.items()) if group}
    per_corpus = {corpus: p1(group) for corpus, group in sorted(by_corpus.items()) if group}
    return per_relation, per_corpus


def weighted_average(
    per_corpus_p1: dict[str, float],
    weights: dict[str, float] | None = None,
) -> float:
    """Relation-count-weighted average of per-corpus P@1 values."""
    if weights is None:
        weights = DEFAULT_CORPUS_WEIGHTS
    missing = [c for c in weights if c not in per_corpus_p1]
    if missing:
        raise ValueError(f"weighted_average: missing corpora {missing}")
    total_weight = sum(weights.values())
    return sum(weights[c] * per_corpus_p1[c] for c in weights) / total_weight


def sign_test(
    per_relation_p1_a: dict[str, float],
    per_relation_p1_b: dict[str, float],
) -> float:
    """Exact two-sided binomial sign test over paired per-relation scores.

    Ties are dropped; with n informative relations and m = min(wins,
    losses), the p-value is ``min(1, 2 * P(X <= m))`` for
    ``X ~ Binomial(n, 1/2)``, computed with exact integer arithmetic.
    """
    if set(per_relation_p1_a) != set(per_relation_p1_b):
        raise ValueError("sign_test requires identical relation key sets")
    wins = losses = 0
    for rel, a in per_relation_p1_a.items():
        b = per_relation_p1_b[rel]
        if a > b:
            wins += 1
        elif a < b:
            losses += 1
    n = wins + losses
    if n == 0:
        logger.warning("sign_test: all relations tied; p-value is 1.0")
        return 1.0
    m = min(wins, losses)
    tail = sum(math.comb(n, i) for i in range(m + 1))
    return min(1.0, 2.0 * tail / 2.0**n)


@dataclass(frozen=True)
class BetterWorse:
    """How often a context flipped the prediction, split by answer presence.

    All cells are percentages over the paired records.
    """

    better_present: float
    better_absent: float
    better_total: float
    worse_present: float
    worse_absent: float
    worse_total: float
    n_relations_improved: int
    n_paired: int

    def to_json(self) -> dict:
        return {
            "better_present": self.better_present,
            "better_absent": self.better_absent,
            "better_total": self.better_total,
            "worse_present": self.worse_present,
            "worse_absent": self.worse_absent,
            "worse_total": self.worse_total,
            "n_relations_improved": self.n_relations_improved,
            "n_paired": self.n_paired,
        }


def delta_analysis(records, baseline_records) -> BetterWorse:
    """Pair a context run against its no-context baseline by fact uuid."""
    baseline = {r.fact_uuid: r for r in baseline_records}
    paired = []
    for rec in _sorted(records):
        base = baseline.get(rec.fact_uuid)
        if base is None:
            raise PairingError(f"no baseline record for uuid {rec.fact_uuid}")
        paired.append((rec, base))
    if not paired:
        raise PairingError("no records to pair")

    n = len(paired)
    cells = {"bp": 0, "ba": 0, "wp": 0, "wa": 0}
    for rec, base in paired:
        if not base.correct and rec.correct:
            cells["bp" if rec.answer_present else "ba"] += 1
        elif base.correct and not rec.correct:
            cells["wp" if rec.answer_present else "wa"] += 1

    rel_ctx, _ = precision_at_1([rec for rec, _ in paired])
    rel_base, _ = precision_at_1([base for _, base in paired])
    improved = sum(1 for rel in rel_ctx if rel_ctx[rel] > rel_base.get(rel, 0.0))

    pct = lambda x: 100.0 * x / n
    return BetterWorse(
        better_present=pct(cells["bp"]),
        better_absent=pct(cells["ba"]),
        better_total=pct(cells["bp"] + cells["ba"]),
        worse_present=pct(cells["wp"]),
        worse_absent=pct(cells["wa"]),
        worse_total=pct(cells["wp"] + cells["wa"]),
        n_relations_improved=improved,
        n_paired=n,
    )


def nsp_rate(records) -> float:
    """Percentage of records whose context was classified as a next sentence."""
    records = list(records)
    if not records:
        raise ValueError("nsp_rate: no records")
    for rec in records:
        if rec.nsp_prob is None:
            raise ValueError(f"nsp_rate: record {rec.fact_uuid} lacks nsp_prob")
    classified = sum(1 for r in records if r.nsp_prob > NSP_THRESHOLD)
    return 100.0 * classified / len(records)


@dataclass(frozen=True)
class NspDeltaCurve:
    """Mean |change in answer probability| per NSP decile, plus Spearman rho."""

    bins: tuple[tuple[float, float | None, int], ...]  # (bin hi, mean |dP|, count)
    spearman_rho: float
    degenerate: bool

    def to_json(self) -> dict:
        return {
            "bins": [list(b) for b in self.bins],
            "spearman_rho": self.spearman_rho,
            "degenerate": self.degenerate,
        }


def nsp_delta_correlation(records) -> NspDeltaCurve:
    """Relate NSP probability to |P(answer | q+c) - P(answer | q)|.

    Deltas are computed in probability space. NSP probabilities are
    histogrammed into 10 equal-width bins on [0, 1]; Spearman uses average
    ranks and reports 0 (flagged) when either variable is constant.
    """
    pairs = []
    for rec in _sorted(records):
        if rec.nsp_prob is None or rec.answer_logprob_nocontext is None:
            raise ValueError(
                f"nsp_delta_correlation: record {rec.fact_uuid} lacks nsp_prob or baseline"
            )
        delta = abs(math.exp(rec.answer_logprob) - math.exp(rec.answer_logprob_nocontext))
        pairs.append((rec.nsp_prob, delta))
    if len(pairs) < 2:
        raise ValueError("nsp_delta_correlation needs at least 2 records")

    sums = [0.0] * N_DELTA_BINS
    counts = [0] * N_DELTA_BINS
    for nsp, delta in pairs:
        idx = min(int(nsp * N_DELTA_BINS), N_DELTA_BINS - 1)
        sums[idx] += delta
        counts[idx] += 1
    bins = tuple(
        (
            (i + 1) / N_DELTA_BINS,
            (sums[i] / counts[i]) if counts[i] else None,
            counts[i],
        )
        for i in range(N_DELTA_BINS)
    )

    nsps = [p[0] for p in pairs]
    deltas = [p[1] for p in pairs]
    if len(set(nsps)) < 2 or len(set(deltas)) < 2:
        return NspDeltaCurve(bins=bins, spearman_rho=0.0, degenerate=True)
    rho = scipy_stats.spearmanr(nsps, deltas).correlation
    if math.isnan(rho):
        return NspDeltaCurve(bins=bins, spearman_rho=0.0, degenerate=True)
    return NspDeltaCurve(bins=bins, spearman_rho=float(rho), degenerate=False)


@dataclass
class RunSummary:
    """All aggregates for one run (one context strategy, one mode)."""

    name: str
    n_records: int
    per_relation_p1: dict[str, float]
    per_corpus_p1: dict[str, float]
    weighted_average_p1: float | None
    better_worse: BetterWorse | None = None
    nsp_rate_percent: float | None = None
    nsp_curve: NspDeltaCurve | None = None

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "n_records": self.n_records,
            "per_relation_p1": self.per_relation_p1,
            "per_corpus_p1": self.per_corpus_p1,
            "weighted_average_p1": self.weighted_average_p1,
            "better_worse": self.better_worse.to_json() if self.better_worse else None,
            "nsp_rate_percent": self.nsp_rate_percent,
            "nsp_curve": self.nsp_curve.to_json() if self.nsp_curve else None,
        }


@dataclass
class EvalReport:
    """Everything a run emits: per-run summaries, sign tests, recall curve."""

    baseline: str
    runs: dict[str, RunSummary]
    sign_tests: dict[str, float] = field(default_factory=dict)
    recall_curve: tuple[tuple[int, float], ...] | None = None

    def to_json(self) -> dict:
        return {
            "baseline": self.baseline,
            "runs": {name: summary.to_json() for name, summary in sorted(self.runs.items())},
            "sign_tests": dict(sorted(self.sign_tests.items())),
            "recall_curve": [list(p) for p in self.recall_curve] if self.recall_curve else None,
        }


def summarize_run(
    name: str,
    records: list[RunRecord],
    baseline_records: list[RunRecord] | None = None,
) -> RunSummary:
    """Build one run's summary; NSP analyses cover context-bearing records only."""
    per_relation, per_corpus = precision_at_1(records)
    try:
        weighted = weighted_average(per_corpus)
    except ValueError:
        weighted = None

    summary = RunSummary(
        name=name,
        n_records=len(records),
        per_relation_p1=per_relation,
        per_corpus_p1=per_corpus,
        weighted_average_p1=weighted,
    )

    with_nsp = [r for r in records if r.nsp_prob is not None]
    if with_nsp:
        summary.nsp_rate_percent = nsp_rate(with_nsp)

    if baseline_records is not None:
        summary.better_worse = delta_analysis(records, baseline_records)
        baseline_lp = {r.fact_uuid: r.answer_logprob for r in baseline_records}
        paired_nsp = [
            RunRecord(
                fact_uuid=r.fact_uuid,
                relation=r.relation,
                corpus=r.corpus,
                strategy=r.strategy,
                answer=r.answer,
                argmax_token=r.argmax_token,
                answer_logprob=r.answer_logprob,
                answer_logprob_nocontext=baseline_lp.get(r.fact_uuid),
                nsp_prob=r.nsp_prob,
                answer_present=r.answer_present,
            )
            for r in with_nsp
            if r.fact_uuid in baseline_lp
        ]
        if len(paired_nsp) >= 2:
            summary.nsp_curve = nsp_delta_correlation(paired_nsp)

    return summary


def build_report(
    baseline_name: str,
    runs: dict[str, list[RunRecord]],
    recall_curve=None,
) -> EvalReport:
    """Assemble the full report: summaries for every run plus pairwise sign tests."""
    if baseline_name not in runs:
        raise ValueError(f"baseline run {baseline_name!r} not among runs")
    baseline_records = runs[baseline_name]

    summaries = {}
    for name, records in runs.items():
        base = baseline_records if name != baseline_name else None
        summaries[name] = summarize_run(name, records, baseline_records=base)

    sign_tests = {}
    names = sorted(runs)
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            rel_a = summaries[a].per_relation_p1
            rel_b = summaries[b].per_relation_p1
            shared = sorted(set(rel_a) & set(rel_b))
            if not shared:
                continue
            p = sign_test({r: rel_a[r] for r in shared}, {r: rel_b[r] for r in shared})
            sign_tests[f"{a}|{b}"] = p

    points = None
    if recall_curve is not None:
        points = tuple(recall_curve.points) if hasattr(recall_curve, "points") else tuple(recall_curve)
    return EvalReport(
        baseline=baseline_name,
        runs=summaries,
        sign_tests=sign_tests,
        recall_curve=points,
    )
