"""Command-line pipeline: build-kb, enrich, embed, split, assess, evaluate,
report, sweep.

Exit codes: 0 success, 2 configuration or input error, 3 leakage isolation
violation, 4 provider failure after retries.
"""

from __future__ import annotations

import csv
import functools
import json
import logging
import os
import sys

import click

from .cwe import CweClient
from .dataset import SPLIT_NAMES, SplitSpec, stratified_split
from .embedding import FallbackEmbedder, RemoteEmbeddingProvider
from .errors import (
    AuthFailedError,
    ConfigError,
    IsolationViolationError,
    NetworkError,
    ProviderError,
    ProviderUnavailableError,
    RateLimitedError,
    SvaError,
    ValidationError,
)
from .knowledge_base import KnowledgeStore, enrich_store, ingest_dataset, normalize_entry
from .llm import LlmConfig, make_completer
from .models import Severity, VulnerabilityRecord
from .nvd import DEFAULT_MIN_INTERVAL, NvdClient, TokenBucket
from .pipeline import (
    RunManifest,
    assess as run_assess,
    build_report,
    embed_store,
    render_report_table,
    render_sweep_tables,
    run_sweep,
)
from .prompting import PromptTemplate
from .retrieval import RetrievalConfig
from .evaluation import evaluate_run

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ISOLATION = 3
EXIT_PROVIDER = 4

_PROVIDER_ERRORS = (
    AuthFailedError,
    ProviderError,
    ProviderUnavailableError,
    RateLimitedError,
    NetworkError,
)


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except IsolationViolationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_ISOLATION)
        except _PROVIDER_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_PROVIDER)
        except (SvaError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)

    return wrapper


@click.group()
@click.option("-v", "--verbose", count=True, help="-v for info, -vv for debug logging.")
def main(verbose: int) -> None:
    """Retrieval-augmented severity assessment for known vulnerabilities."""
    level = logging.WARNING
    if verbose == 1:
        level = logging.INFO
    elif verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _load_records(path: str) -> list[VulnerabilityRecord]:
    result = ingest_dataset(path)
    for bad in result.errors:
        logger.warning("%s:%d: skipped: %s", path, bad.line_no, bad.reason)
    return result.records


def _embedding_provider(provider: str, endpoint: str | None, code_dim: int, desc_dim: int, seed: int):
    if provider == "fallback":
        return FallbackEmbedder(code_dimension=code_dim, desc_dimension=desc_dim, seed=seed)
    if provider == "remote":
        return RemoteEmbeddingProvider(endpoint=endpoint)
    raise ConfigError(f"unknown embedding provider: {provider!r}")


_provider_options = [
    click.option(
        "--provider",
        type=click.Choice(["fallback", "remote"]),
        default="fallback",
        show_default=True,
        help="Embedding provider: deterministic local hasher or HTTP sidecar.",
    ),
    click.option("--endpoint", default=None, help="Embedding service URL (remote provider)."),
    click.option("--code-dim", default=256, show_default=True, help="Fallback code dimension."),
    click.option("--desc-dim", default=256, show_default=True, help="Fallback description dimension."),
    click.option("--embed-seed", default=0, show_default=True, help="Fallback hashing seed."),
]


def _with_provider_options(fn):
    for option in reversed(_provider_options):
        fn = option(fn)
    return fn


@main.command("build-kb")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["jsonl"]), default="jsonl", show_default=True)
@_handle_errors
def build_kb(input_path: str, out_path: str, fmt: str) -> None:
    """Ingest a raw dataset into a knowledge store (no enrichment yet)."""
    result = ingest_dataset(input_path, fmt=fmt)
    store = KnowledgeStore.from_records(result.records)
    store.save(out_path)
    click.echo(f"ingested {result.ok_count} records ({result.error_count} malformed lines skipped)")
    for bad in result.errors:
        click.echo(f"  line {bad.line_no}: {bad.reason}", err=True)
    click.echo(f"wrote {out_path}")


@main.command("enrich")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--nvd-base-url", default=None, help="Override the NVD API endpoint.")
@click.option("--cwe-base-url", default=None, help="Override the CWE API endpoint.")
@click.option("--nvd-api-key", default=None, help="NVD API key (raises the rate limit).")
@click.option(
    "--min-interval",
    default=DEFAULT_MIN_INTERVAL,
    show_default=True,
    help="Minimum seconds between NVD requests.",
)
@_handle_errors
def enrich(store_path, out_path, nvd_base_url, cwe_base_url, nvd_api_key, min_interval) -> None:
    """Attach CVSS metrics and weakness knowledge to every store entry."""
    store = KnowledgeStore.load(store_path)
    nvd = NvdClient(
        base_url=nvd_base_url,
        api_key=nvd_api_key,
        rate_limiter=TokenBucket(rate=1.0 / min_interval) if min_interval > 0 else TokenBucket(rate=1e9),
    )
    cwe = CweClient(base_url=cwe_base_url)
    summary = enrich_store(store, nvd, cwe)
    store.save(out_path)
    click.echo(
        f"nvd added {summary.nvd_added}, absent {summary.nvd_absent}; "
        f"cwe added {summary.cwe_added}; failures {len(summary.failures)}"
    )
    for failure in summary.failures:
        click.echo(f"  {failure}", err=True)
    click.echo(f"wrote {out_path}")


@main.command("embed")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@_with_provider_options
@_handle_errors
def embed(store_path, out_path, provider, endpoint, code_dim, desc_dim, embed_seed) -> None:
    """Embed every store entry's code and description."""
    store = KnowledgeStore.load(store_path)
    emb = _embedding_provider(provider, endpoint, code_dim, desc_dim, embed_seed)
    changed = embed_store(store, emb)
    store.save(out_path)
    click.echo(f"embedded {changed} entries with {emb.provider_id}; wrote {out_path}")


@main.command("split")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=42, show_default=True)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option(
    "--ratios",
    default="0.8,0.1,0.1",
    show_default=True,
    help="knowledge,validation,test fractions.",
)
@_handle_errors
def split(input_path, seed, out_dir, ratios) -> None:
    """Stratified split into knowledge/validation/test JSONL files."""
    try:
        parts = tuple(float(x) for x in ratios.split(","))
    except ValueError:
        raise ConfigError(f"cannot parse ratios {ratios!r}") from None
    spec = SplitSpec(ratios=parts, seed=seed)
    records = _load_records(input_path)
    result = stratified_split(records, spec)
    os.makedirs(out_dir, exist_ok=True)
    for name in SPLIT_NAMES:
        rows = getattr(result, name)
        path = os.path.join(out_dir, f"{name}.jsonl")
        with open(path, "w", encoding="utf-8") as fh:
            for record in rows:
                fh.write(json.dumps(record.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")
        click.echo(f"{name}: {len(rows)} records -> {path}")


@main.command("assess")
@click.option("--test", "test_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--out", "manifest_path", required=True, type=click.Path(dir_okay=False))
@click.option("--phi", default=0.6, show_default=True, help="Code-similarity weight.")
@click.option("--top-k", default=5, show_default=True, help="Demonstrations per prompt.")
@click.option(
    "--llm",
    default="mock:echo_majority",
    show_default=True,
    help="mock:echo_majority | mock:fixed:<LABEL> | mock:script:<path> | http.",
)
@click.option("--llm-base-url", default=None, help="Chat endpoint (http provider).")
@click.option("--llm-model", default=None, help="Model name (http provider).")
@click.option("--template", "template_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=0, show_default=True, help="Recorded in the manifest header.")
@click.option("--max-samples", default=None, type=int, help="Stop after this many samples.")
@click.option("--budget-tokens", default=None, type=int, help="Stop once estimated input tokens reach this.")
@click.option("--resume", is_flag=True, help="Extend an existing manifest, skipping done ids.")
@click.option("--concurrency", default=1, show_default=True, help="Parallel in-flight completions.")
@_with_provider_options
@_handle_errors
def assess(
    test_path,
    store_path,
    manifest_path,
    phi,
    top_k,
    llm,
    llm_base_url,
    llm_model,
    template_path,
    seed,
    max_samples,
    budget_tokens,
    resume,
    concurrency,
    provider,
    endpoint,
    code_dim,
    desc_dim,
    embed_seed,
) -> None:
    """Assess every test record: retrieve, prompt, complete, parse."""
    test_records = _load_records(test_path)
    store = KnowledgeStore.load(store_path)
    emb = _embedding_provider(provider, endpoint, code_dim, desc_dim, embed_seed)
    if store.provider_id is not None and emb.provider_id != store.provider_id:
        raise ConfigError(
            f"store was embedded with {store.provider_id}, but targets would use "
            f"{emb.provider_id}; similarities would be meaningless"
        )
    llm_config = None
    if llm == "http":
        overrides = {}
        if llm_base_url:
            overrides["base_url"] = llm_base_url
        if llm_model:
            overrides["model_name"] = llm_model
        llm_config = LlmConfig.from_env(**overrides)
    completer = make_completer(llm, llm_config)
    template = PromptTemplate.load(template_path) if template_path else None
    config = RetrievalConfig(phi=phi, k=top_k)
    manifest = run_assess(
        test_records,
        store,
        config,
        completer,
        emb,
        template=template,
        manifest_path=manifest_path,
        resume=resume,
        max_samples=max_samples,
        budget_tokens=budget_tokens,
        concurrency=concurrency,
        seed=seed,
    )
    failures = sum(1 for s in manifest.samples if s["error"])
    click.echo(f"assessed {len(manifest.samples)} samples ({failures} failures) -> {manifest_path}")


def _read_jsonl(path: str) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except ValueError as exc:
                raise ValidationError(f"{path}:{line_no}: not JSON") from exc
    return rows


def _prediction_label(row: dict) -> str | None:
    for key in ("parsed_label", "label", "predicted"):
        if key in row:
            return row[key]
    raise ValidationError(f"prediction row for {row.get('cve_id')!r} has no label field")


def _truth_label(row: dict) -> str:
    for key in ("severity", "true_label"):
        if key in row and row[key]:
            return row[key]
    raise ValidationError(f"truth row for {row.get('cve_id')!r} has no severity field")


@main.command("evaluate")
@click.option("--predictions", "pred_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--truth", "truth_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--csv", "csv_path", default=None, type=click.Path(dir_okay=False))
@_handle_errors
def evaluate(pred_path, truth_path, out_path, csv_path) -> None:
    """Score predictions against ground truth; write a report JSON."""
    predictions = {}
    for row in _read_jsonl(pred_path):
        if row.get("type") == "header":  # run manifests carry a config line
            continue
        cve_id = row.get("cve_id")
        if not cve_id:
            raise ValidationError(f"{pred_path}: prediction row without cve_id")
        predictions[cve_id] = _prediction_label(row)
    pairs = []
    missing = []
    for row in _read_jsonl(truth_path):
        cve_id = row.get("cve_id")
        if not cve_id:
            raise ValidationError(f"{truth_path}: truth row without cve_id")
        if cve_id not in predictions:
            missing.append(cve_id)
            continue
        label = predictions[cve_id]
        pairs.append(
            (
                Severity.from_label(_truth_label(row)),
                Severity.from_label(label) if label else None,
            )
        )
    if missing:
        raise ValidationError(
            f"{len(missing)} truth record(s) have no prediction, e.g. {missing[:5]}"
        )
    report = evaluate_run(pairs)
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if csv_path:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["accuracy_pct", "macro_f1_pct", "macro_mcc_pct"])
            writer.writerow(
                [f"{report.accuracy * 100:.2f}", f"{report.macro_f1 * 100:.2f}", f"{report.macro_mcc * 100:.2f}"]
            )
    click.echo(
        f"accuracy {report.accuracy:.4f}, macro F1 {report.macro_f1:.4f}, "
        f"macro MCC {report.macro_mcc:.4f} ({report.unparseable_count} unparseable) -> {out_path}"
    )


@main.command("report")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", default=None, type=click.Path(dir_okay=False))
@_handle_errors
def report(manifest_path, out_path) -> None:
    """Metrics plus token statistics for a finished run manifest."""
    manifest = RunManifest.load(manifest_path)
    bundle = build_report(manifest)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(bundle, fh, indent=2, sort_keys=True)
            fh.write("\n")
    click.echo(render_report_table(bundle))
    if out_path:
        click.echo(f"wrote {out_path}")


@main.command("sweep")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--eval", "eval_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", default=None, type=click.Path(dir_okay=False))
@click.option("--phi-sweep", default=None, help="Comma-separated fusion weights (default 0..1 step 0.1).")
@click.option("--k-sweep", default=None, help="Comma-separated shot counts (default 0,3,5,7).")
@click.option("--phi", default=0.6, show_default=True, help="Base weight for the k sweep.")
@click.option("--top-k", default=5, show_default=True, help="Base shot count for the phi sweep.")
@click.option(
    "--llm",
    default="mock:echo_majority",
    show_default=True,
    help="Completer spec; sweeps are meant for the mock providers.",
)
@click.option("--template", "template_path", default=None, type=click.Path(exists=True, dir_okay=False))
@_with_provider_options
@_handle_errors
def sweep(
    store_path,
    eval_path,
    out_path,
    phi_sweep,
    k_sweep,
    phi,
    top_k,
    llm,
    template_path,
    provider,
    endpoint,
    code_dim,
    desc_dim,
    embed_seed,
) -> None:
    """Ablation grids over the fusion weight and the shot count."""
    store = KnowledgeStore.load(store_path)
    eval_records = _load_records(eval_path)
    emb = _embedding_provider(provider, endpoint, code_dim, desc_dim, embed_seed)
    if store.provider_id is not None and emb.provider_id != store.provider_id:
        raise ConfigError(
            f"store was embedded with {store.provider_id}, but targets would use {emb.provider_id}"
        )
    try:
        phi_values = [float(x) for x in phi_sweep.split(",")] if phi_sweep else None
        k_values = [int(x) for x in k_sweep.split(",")] if k_sweep else None
    except ValueError:
        raise ConfigError("cannot parse sweep grids; use comma-separated numbers") from None
    completer = make_completer(llm, LlmConfig.from_env() if llm == "http" else None)
    template = PromptTemplate.load(template_path) if template_path else None
    tables = run_sweep(
        eval_records,
        store,
        completer,
        emb,
        phi_values=phi_values,
        k_values=k_values,
        base_phi=phi,
        base_k=top_k,
        template=template,
    )
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(tables, fh, indent=2, sort_keys=True)
            fh.write("\n")
        click.echo(f"wrote {out_path}")
    click.echo(render_sweep_tables(tables))


if __name__ == "__main__":
    main()
