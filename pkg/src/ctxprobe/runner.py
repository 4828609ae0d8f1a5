"""End-to-end run orchestration: contexts, batch scoring, report, manifest.

A run is resumable: prediction rows are appended as they complete, and a
rerun with the same configuration skips already-scored facts. Final
prediction files are rewritten sorted by fact uuid, so two complete runs
with the same seed are byte-identical under any concurrency bound.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

from . import context_builder, corpus_index, evaluation, featurizer, probe_data, report, scorer, wire
from .errors import ConfigError, CtxprobeError, ScorerError
from .textnorm import MASK_TOKEN

logger = logging.getLogger(__name__)

ENV_ENDPOINT = "CTXPROBE_ENDPOINT"
ENV_SEED = "CTXPROBE_SEED"

CONTEXT_HEAD_CHARS = 160


@dataclass
class RunConfig:
    """Validated configuration for one end-to-end run."""

    facts: list[dict]  # [{"path": ..., "corpus": ...}]
    vocab: str
    out_dir: str
    strategies: list[str]
    relations: str | None = None
    index: str | None = None
    corpus: str | None = None
    generated: str | None = None
    mode: str = featurizer.MODE_TWO_SEGMENT
    query_mode: str = "question"
    scorer_spec: dict = field(default_factory=lambda: {"name": "copy"})
    seed: int = 0
    concurrency: int = 8
    max_sentences: int = 5
    top_k: int = 10
    recall_k_max: int | None = None
    filter_vocab: bool = True

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        obj = dict(obj)
        facts = obj.get("facts")
        if isinstance(facts, str):
            facts = [{"path": facts, "corpus": obj.pop("corpus_tag", "Other")}]
        if not isinstance(facts, list) or not facts:
            raise ConfigError("config needs 'facts': a path or a list of {path, corpus}")
        seed = obj.get("seed")
        if seed is None:
            seed = int(os.environ.get(ENV_SEED, "0"))
        scorer_spec = obj.get("scorer", {"name": "copy"})
        if isinstance(scorer_spec, str):
            scorer_spec = {"name": scorer_spec}
        return cls(
            facts=[{"path": f["path"], "corpus": f.get("corpus", "Other")} for f in facts],
            vocab=obj["vocab"],
            out_dir=obj["out_dir"],
            strategies=list(obj.get("strategies", [])),
            relations=obj.get("relations"),
            index=obj.get("index"),
            corpus=obj.get("corpus"),
            generated=obj.get("generated"),
            mode=obj.get("mode", featurizer.MODE_TWO_SEGMENT),
            query_mode=obj.get("query_mode", "question"),
            scorer_spec=scorer_spec,
            seed=int(seed),
            concurrency=int(obj.get("concurrency", 8)),
            max_sentences=int(obj.get("max_sentences", 5)),
            top_k=int(obj.get("top_k", 10)),
            recall_k_max=obj.get("recall_k_max"),
            filter_vocab=bool(obj.get("filter_vocab", True)),
        )

    @classmethod
    def from_file(cls, path: str, overrides: list[str] | None = None) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        for override in overrides or []:
            if "=" not in override:
                raise ConfigError(f"--set expects key=value, got {override!r}")
            key, raw = override.split("=", 1)
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            obj[key] = value
        return cls.from_dict(obj)

    def validate(self) -> None:
        if not self.strategies:
            raise ConfigError("strategies must be non-empty")
        for strategy in self.strategies:
            if strategy not in context_builder.STRATEGIES:
                raise ConfigError(f"unknown strategy {strategy!r}")
        if self.mode not in featurizer.MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.query_mode not in ("question", "cloze"):
            raise ConfigError(f"unknown query_mode {self.query_mode!r}")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        for entry in self.facts:
            if not os.path.exists(entry["path"]):
                raise ConfigError(f"facts file not found: {entry['path']}")
        for label, path in (
            ("vocab", self.vocab),
            ("relations", self.relations),
            ("index", self.index),
            ("corpus", self.corpus),
            ("generated", self.generated),
        ):
            if path is not None and not os.path.exists(path):
                raise ConfigError(f"{label} file not found: {path}")
        needs_index = context_builder.STRATEGY_RETRIEVED in self.strategies or self.recall_k_max
        if needs_index and not (self.index or self.corpus):
            raise ConfigError("retrieved strategy needs an index or corpus path")
        if context_builder.STRATEGY_GENERATED in self.strategies and not self.generated:
            raise ConfigError("generated strategy needs a generated-contexts file")

    def canonical_hash(self) -> str:
        payload = {
            "facts": self.facts,
            "vocab": self.vocab,
            "strategies": sorted(set(self.strategies)),
            "relations": self.relations,
            "index": self.index,
            "corpus": self.corpus,
            "generated": self.generated,
            "mode": self.mode,
            "query_mode": self.query_mode,
            "scorer": self.scorer_spec,
            "seed": self.seed,
            "max_sentences": self.max_sentences,
            "top_k": self.top_k,
            "recall_k_max": self.recall_k_max,
            "filter_vocab": self.filter_vocab,
        }
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def make_scorer(spec: dict):
    """Instantiate the scorer described by a config's scorer spec."""
    endpoint = spec.get("endpoint")
    if spec.get("name") == "remote" and not endpoint:
        endpoint = os.environ.get(ENV_ENDPOINT)
        if not endpoint:
            raise ConfigError(f"remote scorer needs an endpoint or {ENV_ENDPOINT}")
    if endpoint:
        return wire.RemoteScorer(endpoint)
    name = spec.get("name", "copy")
    prior = None
    prior_path = spec.get("prior")
    if prior_path:
        with open(prior_path, encoding="utf-8") as fh:
            prior = {str(k): float(v) for k, v in json.load(fh).items()}
    return scorer.make_mock_scorer(
        name,
        lam=float(spec.get("lambda", scorer.DEFAULT_LAMBDA)),
        gate_threshold=float(spec.get("gate", scorer.DEFAULT_GATE_THRESHOLD)),
        prior=prior,
    )


@dataclass
class SkipEntry:
    uuid: str
    run: str
    reason: str

    def to_json(self) -> dict:
        return {"uuid": self.uuid, "run": self.run, "reason": self.reason}


def build_contexts_for_strategy(
    strategy: str,
    facts: probe_data.FactSet,
    index: corpus_index.TfidfIndex | None,
    generated_path: str | None,
    seed: int,
    query_mode: str,
    max_sentences: int,
) -> tuple[dict[str, context_builder.Context], list[SkipEntry]]:
    """Build one context per fact; failures become skip entries, not aborts."""
    contexts: dict[str, context_builder.Context] = {}
    skips: list[SkipEntry] = []

    if strategy == context_builder.STRATEGY_GENERATED:
        imported, imp_report = context_builder.import_generated(generated_path, facts)
        contexts.update(imported)
        for uuid in imp_report.missing_uuids:
            skips.append(SkipEntry(uuid, strategy, "no generated context"))
        return contexts, skips

    for fact in facts:
        try:
            if strategy == context_builder.STRATEGY_NONE:
                ctx = context_builder.none_context(fact)
            elif strategy == context_builder.STRATEGY_ORACLE:
                ctx = context_builder.oracle_context(fact, max_sentences=max_sentences)
            elif strategy == context_builder.STRATEGY_RETRIEVED:
                ctx = context_builder.retrieved_context(fact, index, query_mode=query_mode)
                if ctx.miss:
                    logger.warning("retrieval miss for fact %s", fact.uuid)
            elif strategy == context_builder.STRATEGY_ADVERSARIAL:
                ctx = context_builder.adversarial_context(
                    fact, facts, seed=seed, max_sentences=max_sentences
                )
            else:
                raise ConfigError(f"unknown strategy {strategy!r}")
        except CtxprobeError as exc:
            skips.append(SkipEntry(fact.uuid, strategy, str(exc)))
            continue
        contexts[fact.uuid] = ctx
    return contexts, skips


def score_one(
    fact: probe_data.Fact,
    context: context_builder.Context,
    vocab: scorer.Vocabulary,
    scoring,
    mode: str,
    top_k: int,
) -> dict:
    """Score one (query, context) pair and emit the prediction row."""
    cloze = probe_data.instantiate_cloze(fact)
    context_text = context.text if context.text else None

    # Layout validation: the reference featurizer enforces the token budget
    # and the one-mask invariant before anything reaches a scorer.
    featurized = featurizer.assemble(
        featurizer.tokenize(cloze.text),
        featurizer.tokenize(context_text or ""),
        mode,
        fact_uuid=fact.uuid,
        strategy=context.strategy,
    )
    assert featurized.tokens[featurized.mask_index] == MASK_TOKEN

    request = scorer.ScoreRequest(
        query_text=cloze.text,
        context_text=context_text,
        mode=mode,
        candidates=vocab,
        top_k=top_k,
        request_id=fact.uuid,
    )
    prediction = scoring.score(request)
    answer_pos = vocab.index.get(fact.answer)
    answer_logprob = (
        prediction.candidate_logprobs[answer_pos] if answer_pos is not None else float("-inf")
    )
    return {
        "uuid": fact.uuid,
        "relation": fact.relation,
        "corpus": fact.corpus,
        "strategy": context.strategy,
        "answer": fact.answer,
        "argmax_token": prediction.argmax_token,
        "answer_logprob": answer_logprob,
        "answer_logprob_nocontext": None,
        "nsp_prob": prediction.nsp_prob,
        "answer_present": context.answer_present,
        "top_k": [[t, lp] for t, lp in prediction.top_k],
        "query": cloze.text,
        "context_head": context.text[:CONTEXT_HEAD_CHARS],
        "source_id": context.source_id,
    }


def _atomic_write(path: str, write_fn) -> None:
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _read_rows(path: str) -> dict[str, dict]:
    rows = {}
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError:
                    # An interrupted append can leave a torn final line;
                    # the fact will simply be scored again.
                    logger.warning("%s: skipping torn row", path)
                    continue
                rows[row["uuid"]] = row
    return rows


class Runner:
    """Executes one configured run; exposes the artifacts it wrote."""

    def __init__(self, config: RunConfig):
        config.validate()
        self.config = config
        self.manifest: dict = {}

    def _prediction_path(self, run_name: str) -> str:
        return os.path.join(self.config.out_dir, f"predictions_{run_name}.jsonl")

    def run(self) -> dict:
        cfg = self.config
        os.makedirs(cfg.out_dir, exist_ok=True)
        config_hash = cfg.canonical_hash()

        manifest_path = os.path.join(cfg.out_dir, "manifest.json")
        if os.path.exists(manifest_path):
            with open(manifest_path, encoding="utf-8") as fh:
                previous = json.load(fh)
            if previous.get("config_hash") != config_hash:
                raise ConfigError(
                    f"output dir {cfg.out_dir} holds a run with a different config; "
                    "use a fresh directory"
                )

        relations = probe_data.load_relations(cfg.relations) if cfg.relations else {}
        all_facts: list[probe_data.Fact] = []
        load_errors = []
        for entry in cfg.facts:
            fact_set, errors = probe_data.load_facts(entry["path"], entry["corpus"], relations)
            all_facts.extend(fact_set.facts)
            relations.update(fact_set.relations)
            load_errors.extend(
                {"path": entry["path"], "line": e.line_no, "message": e.message} for e in errors
            )
        facts = probe_data.FactSet(facts=tuple(all_facts), relations=relations)

        vocab = scorer.Vocabulary.from_file(cfg.vocab)
        removed_fraction = 0.0
        if cfg.filter_vocab:
            facts, removed_fraction = probe_data.filter_by_vocab(facts, vocab)
        if not facts.facts:
            raise CtxprobeError("no facts to score after loading and filtering")

        index = None
        if cfg.index:
            index = corpus_index.load_index(cfg.index)
        elif cfg.corpus:
            index = corpus_index.build_index(corpus_index.load_corpus(cfg.corpus))

        scoring = make_scorer(cfg.scorer_spec)

        run_names = [context_builder.STRATEGY_NONE] + [
            s for s in cfg.strategies if s != context_builder.STRATEGY_NONE
        ]
        skips: list[SkipEntry] = []
        scorer_errors: list[dict] = []
        rows_by_run: dict[str, dict[str, dict]] = {}

        for run_name in run_names:
            contexts, run_skips = build_contexts_for_strategy(
                run_name,
                facts,
                index,
                cfg.generated,
                cfg.seed,
                cfg.query_mode,
                cfg.max_sentences,
            )
            skips.extend(run_skips)
            context_builder.write_contexts(
                sorted(contexts.values(), key=lambda c: c.fact_uuid),
                os.path.join(cfg.out_dir, f"contexts_{run_name}.jsonl"),
            )

            path = self._prediction_path(run_name)
            existing = _read_rows(path)
            todo = [
                fact for fact in facts if fact.uuid in contexts and fact.uuid not in existing
            ]
            if existing:
                logger.info("%s: resuming, %d rows already scored", run_name, len(existing))

            with open(path, "a", encoding="utf-8") as out, ThreadPoolExecutor(
                max_workers=cfg.concurrency
            ) as pool:
                futures = {
                    pool.submit(
                        score_one, fact, contexts[fact.uuid], vocab, scoring, cfg.mode, cfg.top_k
                    ): fact.uuid
                    for fact in todo
                }
                for future in as_completed(futures):
                    uuid = futures[future]
                    try:
                        row = future.result()
                    except ScorerError as exc:
                        scorer_errors.append({"uuid": uuid, "run": run_name, "error": str(exc)})
                        continue
                    except CtxprobeError as exc:
                        skips.append(SkipEntry(uuid, run_name, str(exc)))
                        continue
                    existing[uuid] = row
                    out.write(json.dumps(row) + "\n")
                    out.flush()

            rows_by_run[run_name] = existing

        # Pair every context run against the no-context baseline.
        baseline_rows = rows_by_run[context_builder.STRATEGY_NONE]
        for run_name, rows in rows_by_run.items():
            if run_name == context_builder.STRATEGY_NONE:
                continue
            for uuid, row in rows.items():
                base = baseline_rows.get(uuid)
                row["answer_logprob_nocontext"] = base["answer_logprob"] if base else None

        artifacts: dict[str, str] = {}
        for run_name, rows in rows_by_run.items():
            path = self._prediction_path(run_name)

            def _write(fh, rows=rows):
                for uuid in sorted(rows):
                    fh.write(json.dumps(rows[uuid]) + "\n")

            _atomic_write(path, _write)
            artifacts[os.path.basename(path)] = _sha256(path)

        recall_curve = None
        if index is not None and cfg.recall_k_max:
            query_fn = (
                probe_data.to_natural_question
                if cfg.query_mode == "question"
                else lambda f: probe_data.instantiate_cloze(f).text
            )
            recall_curve = corpus_index.recall_at_k(index, facts, query_fn, cfg.recall_k_max)

        records_by_run = {
            name: [evaluation.RunRecord.from_json(row) for _, row in sorted(rows.items())]
            for name, rows in rows_by_run.items()
        }
        eval_report = evaluation.build_report(
            context_builder.STRATEGY_NONE, records_by_run, recall_curve=recall_curve
        )
        report_dir = os.path.join(cfg.out_dir, "report")
        raw_rows = {name: list(rows.values()) for name, rows in rows_by_run.items()}
        for name in report.write_report(eval_report, report_dir, raw_rows):
            artifacts[os.path.join("report", name)] = _sha256(os.path.join(report_dir, name))

        manifest = {
            "config_hash": config_hash,
            "seed": cfg.seed,
            "mode": cfg.mode,
            "n_facts": len(facts.facts),
            "vocab_size": len(vocab),
            "removed_fraction": removed_fraction,
            "load_errors": load_errors,
            "skips": [s.to_json() for s in sorted(skips, key=lambda s: (s.run, s.uuid))],
            "scorer_errors": sorted(scorer_errors, key=lambda e: (e["run"], e["uuid"])),
            "artifacts": dict(sorted(artifacts.items())),
            "complete": True,
        }

        def _write_manifest(fh):
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

        _atomic_write(manifest_path, _write_manifest)
        self.manifest = manifest
        return manifest


def run(config: RunConfig) -> dict:
    """Execute a configured run end to end; returns the manifest."""
    return Runner(config).run()
