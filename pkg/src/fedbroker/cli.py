"""Command-line surface: ingestion, selection, the synthetic-label
pipeline stages, query generation, evaluation, and the HTTP service.

Every subcommand is a thin composition of library operations. Exit codes:
0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import functools
import json
import random
import sys
from pathlib import Path

import click

from . import ingest as ingest_mod
from . import report as report_mod
from .config import AppConfig, load_config
from .errors import FedbrokerError
from .evaluation import ResourceQrels, evaluate_run
from .llm import LlmClient
from .model import (
    Query,
    QueryKind,
    QueryOrigin,
    SelectionMethod,
    ranking_from_record,
)
from .prompting import RepresentationConfig
from .selector import (
    SelectionRequest,
    build_embedding_index,
    rank_resources,
    save_index,
)
from .service import ServiceContext, create_app, derived_query_id
from .slat import (
    aggregate_judgments,
    emit_training_examples,
    generate_conversational_query,
    judge_query_log,
    pseudo_label,
)


def domain_errors(command):
    """Map FedbrokerError / OSError to exit code 1 with a stderr message."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except FedbrokerError as error:
            click.echo(f"error: {error}", err=True)
            sys.exit(1)
        except OSError as error:
            click.echo(f"io error: {error}", err=True)
            sys.exit(1)

    return wrapper


def _load_app_config(config_path: str | None) -> AppConfig:
    return load_config(config_path)


def _data_dir(app_config: AppConfig, override: str | None) -> Path:
    return Path(override) if override else app_config.data_dir


config_option = click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
    help="Path to fedbroker.toml.",
)
data_dir_option = click.option(
    "--data-dir", "data_dir", type=click.Path(file_okay=False), default=None,
    help="Data directory with the canonical JSONL files.",
)


@click.group()
def cli():
    """Federated-search resource selection and synthetic-label tooling."""


@cli.command("ingest")
@config_option
@data_dir_option
@domain_errors
def ingest_cmd(config_path, data_dir):
    """Validate a data directory and write its manifest."""
    app_config = _load_app_config(config_path)
    directory = _data_dir(app_config, data_dir)
    dataset = ingest_mod.load_dataset(directory)
    manifest = ingest_mod.build_manifest(directory)
    manifest.write(directory / ingest_mod.MANIFEST_NAME)
    click.echo(
        f"loaded {len(dataset.registry)} resources, {len(dataset.queries)} queries "
        f"({len(dataset.logged_queries())} logged, {len(dataset.test_queries())} test), "
        f"{len(dataset.snippets)} snippets"
    )
    click.echo(f"manifest written to {directory / ingest_mod.MANIFEST_NAME}")


def _representation_from_flags(
    app_config: AppConfig, description: bool | None, snippets: bool | None
) -> RepresentationConfig:
    base = app_config.representation
    return RepresentationConfig(
        use_description=base.use_description if description is None else description,
        use_similar_snippets=base.use_similar_snippets if snippets is None else snippets,
        snippet_count=base.snippet_count,
    )


@cli.command("select")
@config_option
@data_dir_option
@click.option("--query", "query_text", required=True, help="Query text to route.")
@click.option("--k", type=int, default=None, help="Keep only the top-k resources.")
@click.option(
    "--method", type=click.Choice(["resllm", "embedding"]), default="resllm",
    show_default=True,
)
@click.option("--description/--no-description", "description", default=None,
              help="Include resource descriptions in the prompt.")
@click.option("--snippets/--no-snippets", "snippets", default=None,
              help="Include similar logged snippets in the prompt.")
@click.option("--filter-nonpositive", is_flag=True, default=False,
              help="Drop resources with score < 0.")
@click.option("--run-out", type=click.Path(dir_okay=False), default=None,
              help="Append the ranking to a JSONL run file.")
@domain_errors
def select_cmd(config_path, data_dir, query_text, k, method, description, snippets,
               filter_nonpositive, run_out):
    """Rank the federation's resources for one query."""
    app_config = _load_app_config(config_path)
    dataset = ingest_mod.load_dataset(_data_dir(app_config, data_dir))
    representation = _representation_from_flags(app_config, description, snippets)
    request = SelectionRequest(
        query=Query(
            id=derived_query_id(query_text),
            text=query_text,
            kind=QueryKind.AD_HOC,
            origin=QueryOrigin.TEST,
        ),
        method=SelectionMethod(method),
        k=k,
        representation=representation,
        filter_nonpositive=filter_nonpositive,
    )

    client: LlmClient | None = None
    index = None
    encoder = None
    if request.method is SelectionMethod.RESLLM:
        client = app_config.build_client()
    if request.method is SelectionMethod.EMBEDDING or representation.use_similar_snippets:
        encoder = app_config.build_encoder()
        index = build_embedding_index(dataset.query_log, encoder, dataset.registry)

    ranking = rank_resources(request, dataset.registry, client=client, index=index,
                             encoder=encoder)
    width = max(len(rid) for rid, _ in ranking.entries) if ranking.entries else 8
    click.echo(f"{'rank':>4}  {'resource'.ljust(width)}  {'score':>9}  name")
    for position, (resource_id, score) in enumerate(ranking.entries, start=1):
        name = dataset.registry[resource_id].name
        click.echo(f"{position:>4}  {resource_id.ljust(width)}  {score:>9.4f}  {name}")
    if run_out:
        path = Path(run_out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(ranking.to_record(), ensure_ascii=False) + "\n")
        click.echo(f"ranking appended to {path}", err=True)


@cli.command("judge")
@config_option
@data_dir_option
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Output judgments file (default: <data-dir>/judgments_synthetic.jsonl).")
@domain_errors
def judge_cmd(config_path, data_dir, out_path):
    """Judge every logged (query, resource, snippet) triple with the LLM."""
    app_config = _load_app_config(config_path)
    directory = _data_dir(app_config, data_dir)
    dataset = ingest_mod.load_dataset(directory)
    client = app_config.build_client()
    judgments = judge_query_log(dataset.query_log, dataset.registry, client)
    target = Path(out_path) if out_path else directory / "judgments_synthetic.jsonl"
    entry = ingest_mod.persist_jsonl((j.to_record() for j in judgments), target)
    failures = sum(1 for j in judgments if j.parse_failed)
    click.echo(f"wrote {entry.count} judgments to {entry.path} ({failures} parse failures)")


@cli.command("aggregate")
@config_option
@click.option("--judgments", "judgments_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--cutoff", type=int, default=10, show_default=True)
@domain_errors
def aggregate_cmd(config_path, judgments_path, out_path, cutoff):
    """Aggregate judgments into 0-100 per-(query, resource) scores."""
    from .model import judgment_from_record

    app_config = _load_app_config(config_path)
    judgments = [judgment_from_record(r) for _, r in ingest_mod.read_jsonl(judgments_path)]
    scores = aggregate_judgments(judgments, cutoff=cutoff, weights=app_config.weights)
    entry = ingest_mod.persist_jsonl((s.to_record() for s in scores), out_path)
    click.echo(f"wrote {entry.count} resource scores to {entry.path}")


@cli.command("make-training-data")
@config_option
@data_dir_option
@click.option("--scores", "scores_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@domain_errors
def make_training_data_cmd(config_path, data_dir, scores_path, out_path):
    """Turn resource scores into yes/no instruction pairs."""
    from .errors import DanglingReference

    app_config = _load_app_config(config_path)
    dataset = ingest_mod.load_dataset(_data_dir(app_config, data_dir))
    queries = {q.id: q for q in dataset.queries}
    rows = []
    for _, record in ingest_mod.read_jsonl(scores_path):
        rows.append((str(record["query_id"]), str(record["resource_id"]), int(record["score"])))
    rows.sort()
    examples = []
    for query_id, resource_id, score in rows:
        if query_id not in queries:
            raise DanglingReference("query", query_id)
        label = pseudo_label(score, app_config.high_threshold, app_config.marginal_threshold)
        examples.extend(
            emit_training_examples(
                label, dataset.registry[resource_id], queries[query_id],
                app_config.representation,
            )
        )
    entry = ingest_mod.persist_jsonl((e.to_record() for e in examples), out_path)
    click.echo(f"wrote {entry.count} training examples to {entry.path}")


@cli.command("gen-conversational")
@config_option
@data_dir_option
@click.option("--judgments", "judgments_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@domain_errors
def gen_conversational_cmd(config_path, data_dir, judgments_path, seed, out_path):
    """Generate conversational variants of logged queries from their
    navigational snippets."""
    from .errors import InsufficientNavigationalSnippets
    from .model import judgment_from_record

    app_config = _load_app_config(config_path)
    dataset = ingest_mod.load_dataset(_data_dir(app_config, data_dir))
    client = app_config.build_client()
    judgments = [judgment_from_record(r) for _, r in ingest_mod.read_jsonl(judgments_path)]
    by_query: dict[str, list] = {}
    for judgment in judgments:
        by_query.setdefault(judgment.query_id, []).append(judgment)

    rng = random.Random(seed)
    generated = []
    skipped = 0
    for query in dataset.query_log.queries:
        pairs = []
        for judgment in by_query.get(query.id, []):
            for snippet in dataset.query_log.snippets_for(query.id, judgment.resource_id):
                if snippet.rank == judgment.snippet_rank:
                    pairs.append((snippet, judgment))
        try:
            generated.append(generate_conversational_query(query, pairs, client, rng))
        except InsufficientNavigationalSnippets:
            skipped += 1
    entry = ingest_mod.persist_jsonl((q.to_record() for q in generated), out_path)
    click.echo(f"wrote {entry.count} conversational queries to {entry.path} "
               f"({skipped} queries skipped)")


@cli.command("evaluate")
@click.option("--run", "run_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--qrels", "qrels_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--report-dir", type=click.Path(file_okay=False), default=None,
              help="Also write report.json, report.txt, per_query.csv and figures here.")
@click.option("--table", "as_table", is_flag=True, default=False,
              help="Print the aligned table instead of JSON.")
@domain_errors
def evaluate_cmd(run_path, qrels_path, report_dir, as_table):
    """Score a run file against qrels."""
    rankings = [ranking_from_record(r) for _, r in ingest_mod.read_jsonl(run_path)]
    qrels = ResourceQrels.from_records(r for _, r in ingest_mod.read_jsonl(qrels_path))
    report = evaluate_run(rankings, qrels)
    if as_table:
        click.echo(report_mod.format_table(report))
    else:
        click.echo(json.dumps(report.to_json_dict(), indent=2))
    if report_dir:
        bundle = report_mod.write_report_bundle(report, report_dir)
        click.echo(f"report bundle written to {Path(report_dir)}", err=True)
        for name, path in bundle.items():
            click.echo(f"  {name}: {path}", err=True)


@cli.command("baseline-index")
@config_option
@data_dir_option
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--dim", type=int, default=None, help="Embedding dimension override.")
@click.option("--seed", type=int, default=None, help="Encoder seed override.")
@domain_errors
def baseline_index_cmd(config_path, data_dir, out_path, dim, seed):
    """Encode the query log's snippets into the embedding index."""
    from .selector import hash_encoder

    app_config = _load_app_config(config_path)
    dataset = ingest_mod.load_dataset(_data_dir(app_config, data_dir))
    encoder = hash_encoder(
        dim=dim if dim is not None else app_config.embedding.dim,
        seed=seed if seed is not None else app_config.embedding.seed,
    )
    index = build_embedding_index(dataset.query_log, encoder, dataset.registry)
    save_index(index, out_path)
    total = sum(len(entries) for entries in index.entries.values())
    click.echo(
        f"indexed {total} snippets across {len(index.entries)} resources "
        f"(dim {index.dim}) to {out_path}"
    )


@cli.command("serve")
@config_option
@data_dir_option
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
@domain_errors
def serve_cmd(config_path, data_dir, host, port):
    """Run the HTTP selection service."""
    import uvicorn

    app_config = _load_app_config(config_path)
    dataset = ingest_mod.load_dataset(_data_dir(app_config, data_dir))
    client = app_config.build_client()
    encoder = app_config.build_encoder()
    index = None
    if dataset.query_log.groups:
        index = build_embedding_index(dataset.query_log, encoder, dataset.registry)
    ctx = ServiceContext(
        registry=dataset.registry, client=client, config=app_config,
        index=index, encoder=encoder,
    )
    uvicorn.run(create_app(ctx), host=host, port=port)


def main():
    cli(standalone_mode=True)


if __name__ == "__main__":
    main()
