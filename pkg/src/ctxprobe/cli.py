"""Command-line entry points: index, contexts, run, report, serve-mock.

Exit codes: 0 success, 1 global failure, 2 validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import context_builder, corpus_index, evaluation, probe_data, report, runner, scorer, wire
from .errors import ConfigError, CtxprobeError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxprobe",
        description="Quantify how contexts change masked-LM cloze predictions.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="build or query a TF-IDF paragraph index")
    index_sub = p_index.add_subparsers(dest="index_command", required=True)

    p_build = index_sub.add_parser("build", help="build an index from a corpus JSONL")
    p_build.add_argument("--corpus", required=True)
    p_build.add_argument("--out", required=True)
    p_build.add_argument("--hash-bits", type=int, default=corpus_index.DEFAULT_HASH_BITS)
    p_build.add_argument("--ngrams", type=int, default=corpus_index.DEFAULT_NGRAM_ORDER)
    p_build.add_argument("--stopwords", help="optional stopword file, one word per line")

    p_query = index_sub.add_parser("query", help="query an index")
    p_query.add_argument("--index", required=True)
    p_query.add_argument("--text", required=True)
    p_query.add_argument("-k", type=int, default=10)

    p_ctx = sub.add_parser("contexts", help="build per-fact contexts")
    ctx_sub = p_ctx.add_subparsers(dest="contexts_command", required=True)
    p_cb = ctx_sub.add_parser("build", help="build contexts for one strategy")
    p_cb.add_argument("--facts", required=True)
    p_cb.add_argument("--relations")
    p_cb.add_argument("--corpus-tag", default="Other")
    p_cb.add_argument(
        "--strategy",
        required=True,
        choices=[s for s in context_builder.STRATEGIES if s != context_builder.STRATEGY_NONE],
    )
    p_cb.add_argument("--index")
    p_cb.add_argument("--generated")
    p_cb.add_argument("--seed", type=int, default=None)
    p_cb.add_argument("--query-mode", choices=["question", "cloze"], default="question")
    p_cb.add_argument("--max-sentences", type=int, default=5)
    p_cb.add_argument("--out", required=True)

    p_run = sub.add_parser("run", help="full pipeline from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")

    p_report = sub.add_parser("report", help="aggregate prediction files into a report")
    p_report.add_argument("--baseline", required=True, help="no-context predictions JSONL")
    p_report.add_argument("--preds", action="append", default=[], required=True)
    p_report.add_argument("--facts", required=True)
    p_report.add_argument("--out", required=True)

    p_serve = sub.add_parser("serve-mock", help="serve a mock scorer over the wire protocol")
    p_serve.add_argument("--port", type=int, required=True)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--scorer", choices=list(scorer.MOCK_SCORERS), default="copy")
    p_serve.add_argument("--lambda", dest="lam", type=float, default=scorer.DEFAULT_LAMBDA)
    p_serve.add_argument("--gate", type=float, default=scorer.DEFAULT_GATE_THRESHOLD)
    p_serve.add_argument("--prior", help="JSON file with a token -> frequency table")

    return parser


def _cmd_index_build(args) -> int:
    stopwords = None
    if args.stopwords:
        with open(args.stopwords, encoding="utf-8") as fh:
            stopwords = frozenset(line.strip() for line in fh if line.strip())
    paragraphs = corpus_index.load_corpus(args.corpus)
    index = corpus_index.build_index(
        paragraphs, hash_bits=args.hash_bits, ngram_order=args.ngrams, stopwords=stopwords
    )
    corpus_index.save_index(index, args.out)
    print(f"indexed {index.num_paragraphs} paragraphs -> {args.out}")
    return EXIT_OK


def _cmd_index_query(args) -> int:
    index = corpus_index.load_index(args.index)
    for para_id, score in corpus_index.query(index, args.text, args.k):
        print(f"{score:.6f}\t{para_id}\t{index.text_of(para_id)[:100]}")
    return EXIT_OK


def _cmd_contexts_build(args) -> int:
    relations = probe_data.load_relations(args.relations) if args.relations else {}
    facts, errors = probe_data.load_facts(args.facts, args.corpus_tag, relations)
    for err in errors:
        logger.warning("%s:%d: %s", args.facts, err.line_no, err.message)

    index = corpus_index.load_index(args.index) if args.index else None
    if args.strategy == context_builder.STRATEGY_RETRIEVED and index is None:
        raise ConfigError("--index is required for the retrieved strategy")
    if args.strategy == context_builder.STRATEGY_GENERATED and not args.generated:
        raise ConfigError("--generated is required for the generated strategy")
    seed = args.seed
    if seed is None:
        seed = int(os.environ.get(runner.ENV_SEED, "0"))

    contexts, skips = runner.build_contexts_for_strategy(
        args.strategy, facts, index, args.generated, seed, args.query_mode, args.max_sentences
    )
    context_builder.write_contexts(
        sorted(contexts.values(), key=lambda c: c.fact_uuid), args.out
    )
    for skip in skips:
        logger.warning("skipped %s: %s", skip.uuid, skip.reason)
    print(f"wrote {len(contexts)} contexts ({len(skips)} skipped) -> {args.out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = runner.RunConfig.from_file(args.config, overrides=args.set)
    manifest = runner.run(config)
    print(f"run complete: {manifest['n_facts']} facts -> {config.out_dir}")
    if manifest["scorer_errors"]:
        print(f"warning: {len(manifest['scorer_errors'])} facts failed to score", file=sys.stderr)
    return EXIT_OK


def _cmd_report(args) -> int:
    facts_uuids = set()
    with open(args.facts, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                try:
                    facts_uuids.add(str(json.loads(line)["uuid"]))
                except (json.JSONDecodeError, KeyError):
                    continue

    def load(path: str) -> tuple[str, list, list]:
        raw = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    raw.append(json.loads(line))
        if not raw:
            raise CtxprobeError(f"{path}: no prediction rows")
        records = [evaluation.RunRecord.from_json(row) for row in raw]
        unknown = [r.fact_uuid for r in records if r.fact_uuid not in facts_uuids]
        if unknown:
            logger.warning("%s: %d records with uuids not in the facts file", path, len(unknown))
        return records[0].strategy, records, raw

    baseline_name, baseline_records, baseline_raw = load(args.baseline)
    runs = {baseline_name: baseline_records}
    raw_rows = {baseline_name: baseline_raw}
    for path in args.preds:
        name, records, raw = load(path)
        if name in runs:
            raise ConfigError(f"duplicate run name {name!r} (from {path})")
        runs[name] = records
        raw_rows[name] = raw

    eval_report = evaluation.build_report(baseline_name, runs)
    written = report.write_report(eval_report, args.out, raw_rows)
    print(f"wrote {len(written)} report files -> {args.out}")
    return EXIT_OK


def _cmd_serve_mock(args) -> int:
    prior = None
    if args.prior:
        with open(args.prior, encoding="utf-8") as fh:
            prior = {str(k): float(v) for k, v in json.load(fh).items()}
    mock = scorer.make_mock_scorer(args.scorer, lam=args.lam, gate_threshold=args.gate, prior=prior)
    server = wire.MockServer(mock, host=args.host, port=args.port, model_name=f"mock-{args.scorer}")
    print(f"serving mock scorer {args.scorer!r} on {server.endpoint}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "index":
            if args.index_command == "build":
                return _cmd_index_build(args)
            return _cmd_index_query(args)
        if args.command == "contexts":
            return _cmd_contexts_build(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "serve-mock":
            return _cmd_serve_mock(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CtxprobeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
