"""Operator CLI: reproducible commands over the pipeline modules.

Subcommands: ``corpus ingest``, ``index build``, ``index search``,
``iterate``, ``build-context``, ``combine``, ``audit``. Each command
validates configuration before doing work, writes its declared outputs
plus a run manifest, and exits nonzero with a machine-readable JSON
error on failure.
"""

from __future__ import annotations

import functools
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import audit as audit_mod
from . import context as context_mod
from . import corpus as corpus_mod
from . import dense_index
from .combine import (
    EITHER_OR_BOTH,
    RATIONALE_DEFAULT,
    CombinationStrategy,
    batch_combine,
    combine_line,
    default_strategy_grid,
)
from .config import PipelineConfig, load_config, write_manifest
from .errors import ConfigError, HopfuseError
from .evidence import EvidenceSet
from .hops import IteratorConfig, RunFailure, batch_run, sentence_from_record, trace_line


def _fail(exc: Exception) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    click.echo(json.dumps(payload, sort_keys=True), err=True)
    sys.exit(1)


def _command(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except HopfuseError as exc:
            _fail(exc)
        except (OSError, ValueError, KeyError) as exc:
            _fail(exc)

    return wrapper


def _load_pipeline_config(config_path: str | None, **overrides) -> PipelineConfig:
    cfg = load_config(config_path)
    backend_overrides = {}
    for key in ("kind", "seed", "dim", "url"):
        value = overrides.pop(f"backend_{key}", None)
        if value is not None:
            backend_overrides[key] = value
    if backend_overrides:
        from .config import BackendConfig

        merged = {
            "kind": cfg.backend.kind,
            "dim": cfg.backend.dim,
            "seed": cfg.backend.seed,
            "url": cfg.backend.url,
            "timeout": cfg.backend.timeout,
            "max_retries": cfg.backend.max_retries,
            "max_in_flight": cfg.backend.max_in_flight,
        }
        merged.update(backend_overrides)
        cfg.backend = BackendConfig(**merged)
    iterator_overrides = {k: v for k, v in overrides.items()
                          if k in ("t_max", "k", "dedup_across_hops") and v is not None}
    if iterator_overrides:
        cfg.iterator = IteratorConfig(
            t_max=iterator_overrides.get("t_max", cfg.iterator.t_max),
            k=iterator_overrides.get("k", cfg.iterator.k),
            fusion=cfg.iterator.fusion,
            evidence=cfg.iterator.evidence,
            dedup_across_hops=iterator_overrides.get(
                "dedup_across_hops", cfg.iterator.dedup_across_hops
            ),
            early_exit_score=cfg.iterator.early_exit_score,
        )
    if overrides.get("budget") is not None:
        cfg.budget = overrides["budget"]
    return cfg


def _read_jsonl(path: str) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{line_no}: invalid JSON ({exc})") from exc
    return records


def _require(value, flag: str):
    if value is None:
        raise ConfigError(f"missing required option {flag} (or config key)")
    return value


_CONFIG_OPT = click.option("--config", "config_path", type=click.Path(), default=None,
                           help="TOML or JSON pipeline config file.")


@click.group()
def main():
    """Multi-hop retrieval, context construction, and overlap auditing."""


@main.group("corpus")
def corpus_group():
    """Corpus management."""


@corpus_group.command("ingest")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="JSON Lines paragraph records.")
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--on-error", type=click.Choice(["abort", "skip"]), default="abort",
              show_default=True, help="Malformed-record policy.")
@_CONFIG_OPT
@_command
def corpus_ingest(input_path, output_path, on_error, config_path):
    """Ingest paragraph records into a persisted corpus."""
    cfg = _load_pipeline_config(config_path)
    rules = corpus_mod.IngestRules(on_error=on_error)
    built, stats = corpus_mod.ingest_path(input_path, rules)
    corpus_mod.save(built, output_path)
    manifest = write_manifest("corpus ingest", cfg, {"input": input_path},
                              {"corpus": output_path})
    click.echo(json.dumps({"ok": True, "stats": stats.as_dict(), "manifest": manifest},
                          sort_keys=True))


@main.group("index")
def index_group():
    """Dense index management."""


@index_group.command("build")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None)
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--seed", "backend_seed", type=int, default=None, help="Mock backend seed override.")
@click.option("--dim", "backend_dim", type=int, default=None, help="Embedding dimension override.")
@_CONFIG_OPT
@_command
def index_build(corpus_path, output_path, workers, backend_seed, backend_dim, config_path):
    """Embed every corpus paragraph and write the vector file."""
    cfg = _load_pipeline_config(config_path, backend_seed=backend_seed, backend_dim=backend_dim)
    corpus_file = _require(corpus_path or cfg.corpus_path, "--corpus")
    loaded = corpus_mod.load(corpus_file)
    suite = cfg.backend.make_suite()
    paragraphs = list(loaded)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vectors = list(pool.map(suite.encoder.encode_doc, paragraphs))
    else:
        vectors = [suite.encoder.encode_doc(p) for p in paragraphs]
    index = dense_index.build(
        [(p.doc_id, v) for p, v in zip(paragraphs, vectors)], dim=suite.encoder.dim
    )
    index.save(output_path)
    manifest = write_manifest("index build", cfg, {"corpus": corpus_file},
                              {"vectors": output_path})
    click.echo(json.dumps({"ok": True, "count": len(index), "dim": index.dim,
                           "manifest": manifest}, sort_keys=True))


@index_group.command("search")
@click.option("--index", "index_path", type=click.Path(exists=True), default=None)
@click.option("--query", required=True, help="Query text.")
@click.option("--k", type=int, default=10, show_default=True)
@click.option("--exclude", multiple=True, help="doc_ids to exclude (repeatable).")
@click.option("--approx", is_flag=True, help="Use the approximate graph index.")
@click.option("--seed", "backend_seed", type=int, default=None)
@click.option("--dim", "backend_dim", type=int, default=None)
@_CONFIG_OPT
@_command
def index_search(index_path, query, k, exclude, approx, backend_seed, backend_dim, config_path):
    """Search the index with an encoded question."""
    cfg = _load_pipeline_config(config_path, backend_seed=backend_seed, backend_dim=backend_dim)
    index_file = _require(index_path or cfg.index_path, "--index")
    ids, matrix = dense_index.load_vectors(index_file)
    searcher = (dense_index.HnswIndex(ids, matrix) if approx
                else dense_index.DenseIndex(ids, matrix))
    suite = cfg.backend.make_suite()
    query_vec = suite.encoder.encode_query(query, [])
    hits = searcher.search(query_vec, k, set(exclude))
    click.echo(dense_index.dump_hits(hits))


@main.command("iterate")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None)
@click.option("--index", "index_path", type=click.Path(exists=True), default=None)
@click.option("--questions", "questions_path", required=True, type=click.Path(exists=True),
              help="JSON Lines with a 'question' field per record.")
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--k", type=int, default=None, help="Paragraphs per hop override.")
@click.option("--t-max", "t_max", type=int, default=None, help="Hop count override.")
@click.option("--approx", is_flag=True, help="Use the approximate graph index.")
@click.option("--seed", "backend_seed", type=int, default=None)
@click.option("--dim", "backend_dim", type=int, default=None)
@click.option("--backend-url", "backend_url", type=str, default=None)
@_CONFIG_OPT
@_command
def iterate(corpus_path, index_path, questions_path, output_path, workers, k, t_max,
            approx, backend_seed, backend_dim, backend_url, config_path):
    """Run the hop loop for each question and write the trace JSONL."""
    cfg = _load_pipeline_config(config_path, k=k, t_max=t_max, backend_seed=backend_seed,
                                backend_dim=backend_dim, backend_url=backend_url)
    corpus_file = _require(corpus_path or cfg.corpus_path, "--corpus")
    index_file = _require(index_path or cfg.index_path, "--index")
    loaded = corpus_mod.load(corpus_file)
    ids, matrix = dense_index.load_vectors(index_file)
    searcher = (dense_index.HnswIndex(ids, matrix) if approx
                else dense_index.DenseIndex(ids, matrix))
    suite = cfg.backend.make_suite()
    questions = _read_jsonl(questions_path)
    for record in questions:
        if "question" not in record:
            raise ConfigError(f"question record missing 'question' field: {record}")
    outcomes = batch_run([r["question"] for r in questions], loaded, searcher, suite,
                         cfg.iterator, workers=workers)
    with open(output_path, "w", encoding="utf-8") as fh:
        for record, outcome in zip(questions, outcomes):
            extras = {key: record[key] for key in ("id", "answer", "initial_paragraph")
                      if key in record}
            fh.write(trace_line(outcome, extras) + "\n")
    failures = sum(isinstance(o, RunFailure) for o in outcomes)
    manifest = write_manifest("iterate", cfg,
                              {"corpus": corpus_file, "index": index_file,
                               "questions": questions_path},
                              {"trace": output_path})
    click.echo(json.dumps({"ok": True, "questions": len(questions), "failures": failures,
                           "manifest": manifest}, sort_keys=True))


@main.command("build-context")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None)
@click.option("--trace", "trace_path", required=True, type=click.Path(exists=True))
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--budget", type=int, default=None, help="Token budget override.")
@_CONFIG_OPT
@_command
def build_context_cmd(corpus_path, trace_path, output_path, budget, config_path):
    """Serialize each trace's best-hop evidence into a titled context."""
    cfg = _load_pipeline_config(config_path, budget=budget)
    corpus_file = _require(corpus_path or cfg.corpus_path, "--corpus")
    loaded = corpus_mod.load(corpus_file)
    tokenizer = context_mod.WhitespaceTokenizer()
    lines = []
    for record in _read_jsonl(trace_path):
        if "error" in record:
            lines.append(json.dumps({"question": record.get("question"),
                                     "error": record["error"]},
                                    sort_keys=True, ensure_ascii=False,
                                    separators=(",", ":")))
            continue
        best_hop_record = next(h for h in record["hops"] if h["hop"] == record["best_hop"])
        evidence = EvidenceSet(
            hop=record["best_hop"],
            sentences=tuple(sentence_from_record(s) for s in best_hop_record["evidence"]),
            set_score=record["best_score"],
        )
        built = context_mod.build_context(
            evidence, loaded, tokenizer, cfg.budget,
            initial_paragraph=record.get("initial_paragraph"),
        )
        out = context_mod.sample_record(record["question"], built.serialized,
                                      record.get("answer"))
        if "id" in record:
            out["id"] = record["id"]
        out["token_count"] = built.token_count
        lines.append(json.dumps(out, sort_keys=True, ensure_ascii=False,
                                separators=(",", ":")))
    with open(output_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))
    manifest = write_manifest("build-context", cfg,
                              {"corpus": corpus_file, "trace": trace_path},
                              {"contexts": output_path})
    click.echo(json.dumps({"ok": True, "records": len(lines), "manifest": manifest},
                          sort_keys=True))


def _strategy_from_flags(strategy: str, threshold: float | None) -> CombinationStrategy:
    variant = strategy.replace("-", "_")
    if variant in (RATIONALE_DEFAULT, EITHER_OR_BOTH):
        if threshold is None:
            raise ConfigError(f"--threshold is required for strategy {strategy}")
        return CombinationStrategy(variant, threshold)
    return CombinationStrategy(variant)


@main.command("combine")
@click.option("--rationales", "rationales_path", required=True, type=click.Path(exists=True),
              help="JSON Lines with question/rationale records.")
@click.option("--contexts", "contexts_path", required=True, type=click.Path(exists=True),
              help="JSON Lines with question/context records (build-context output).")
@click.option("--output", "output_path", type=click.Path(), default=None,
              help="Output JSONL (single-strategy mode).")
@click.option("--output-dir", "output_dir", type=click.Path(), default=None,
              help="Output directory (grid mode).")
@click.option("--strategy", type=click.Choice(["naive", "max-score", "rationale-default",
                                               "either-or-both"]), default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--grid", is_flag=True, help="Emit every strategy in the default grid.")
@click.option("--seed", "backend_seed", type=int, default=None)
@click.option("--backend-url", "backend_url", type=str, default=None)
@_CONFIG_OPT
@_command
def combine_cmd(rationales_path, contexts_path, output_path, output_dir, strategy,
                threshold, grid, backend_seed, backend_url, config_path):
    """Merge rationale and retrieved contexts using RR scores."""
    cfg = _load_pipeline_config(config_path, backend_seed=backend_seed,
                                backend_url=backend_url)
    if grid == (strategy is not None):
        raise ConfigError("pass exactly one of --grid or --strategy")
    if grid and output_dir is None:
        raise ConfigError("--grid requires --output-dir")
    if not grid and output_path is None:
        raise ConfigError("--strategy requires --output")
    rationales = _read_jsonl(rationales_path)
    contexts = _read_jsonl(contexts_path)

    def join_key(record: dict):
        return record["id"] if "id" in record else record["question"]

    context_by_key = {join_key(r): r for r in contexts}
    samples = []
    for record in rationales:
        match = context_by_key.get(join_key(record))
        if match is None:
            raise ConfigError(f"no retrieved context for rationale record {join_key(record)!r}")
        sample = {"question": record["question"], "rationale": record["rationale"],
                  "context": match["context"]}
        for key in ("id", "answer"):
            if key in record:
                sample[key] = record[key]
        samples.append(sample)

    suite = cfg.backend.make_suite()
    strategies = (default_strategy_grid() if grid
                  else [_strategy_from_flags(strategy, threshold)])
    outputs: dict[str, str] = {}
    summaries = []
    for strat in strategies:
        records, summary = batch_combine(samples, strat, suite.rr,
                                                     budget=cfg.budget)
        if grid:
            out_path = str(Path(output_dir) / f"{strat.label}.jsonl")
            Path(output_dir).mkdir(parents=True, exist_ok=True)
        else:
            out_path = output_path
        with open(out_path, "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(combine_line(record) + "\n")
        summary_path = f"{out_path}.summary.json"
        with open(summary_path, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, sort_keys=True, indent=2)
            fh.write("\n")
        outputs[strat.label] = out_path
        outputs[f"{strat.label}.summary"] = summary_path
        summaries.append(summary)
    manifest = write_manifest("combine", cfg,
                              {"rationales": rationales_path, "contexts": contexts_path},
                              outputs,
                              manifest_path=(str(Path(output_dir) / "combine.manifest.json")
                                             if grid else None))
    click.echo(json.dumps({"ok": True, "variants": len(strategies),
                           "summaries": summaries, "manifest": manifest}, sort_keys=True))


@main.command("audit")
@click.option("--eval", "eval_path", required=True, type=click.Path(exists=True),
              help="JSON Lines with id/question/answer records.")
@click.option("--train", "train_path", required=True, type=click.Path(exists=True))
@click.option("--output", "output_path", required=True, type=click.Path(),
              help="Report JSON path.")
@click.option("--nearest-csv", "csv_path", type=click.Path(), default=None,
              help="CSV of per-eval nearest train pairs.")
@click.option("--threshold", type=float, default=None)
@click.option("--drop-numeric-answers", is_flag=True, default=None)
@click.option("--dedup", is_flag=True, default=None)
@click.option("--seed", "backend_seed", type=int, default=None)
@click.option("--backend-url", "backend_url", type=str, default=None)
@_CONFIG_OPT
@_command
def audit_cmd(eval_path, train_path, output_path, csv_path, threshold,
              drop_numeric_answers, dedup, backend_seed, backend_url, config_path):
    """Similarity audit of an evaluation split against a training set."""
    cfg = _load_pipeline_config(config_path, backend_seed=backend_seed,
                                backend_url=backend_url)
    audit_config = audit_mod.AuditConfig(
        threshold=cfg.audit.threshold if threshold is None else threshold,
        drop_numeric_answers=(cfg.audit.drop_numeric_answers
                              if drop_numeric_answers is None else drop_numeric_answers),
        dedup=cfg.audit.dedup if dedup is None else dedup,
    )
    cfg.audit = audit_config
    eval_samples = _read_jsonl(eval_path)
    train_samples = _read_jsonl(train_path)
    for name, samples in (("eval", eval_samples), ("train", train_samples)):
        for record in samples:
            for key in ("id", "question", "answer"):
                if key not in record:
                    raise ConfigError(f"{name} record missing {key!r}: {record}")
    suite = cfg.backend.make_suite()
    report = audit_mod.audit_datasets(eval_samples, train_samples,
                                      suite.encoder.embed_texts, audit_config)
    report.write_json(output_path)
    outputs = {"report": output_path}
    if csv_path:
        report.write_nearest_csv(csv_path)
        outputs["nearest_csv"] = csv_path
    manifest = write_manifest("audit", cfg, {"eval": eval_path, "train": train_path},
                              outputs, manifest_path=f"{output_path}.manifest.json")
    click.echo(json.dumps({"ok": True, "counts": report.counts, "manifest": manifest},
                          sort_keys=True))


if __name__ == "__main__":
    main()
