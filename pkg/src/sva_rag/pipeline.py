"""End-to-end assessment pipeline: embed, retrieve, prompt, complete, parse.

A run is recorded as a JSONL manifest: one header line holding the config
snapshot, then one line per assessed sample. Sample lines are fully
deterministic for a fixed store, seed, and mock provider; only the header
carries a timestamp. That makes reruns diffable and runs resumable.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .embedding import EmbeddingProvider
from .errors import (
    AuthFailedError,
    ConfigError,
    EmptyManifestError,
    IsolationViolationError,
    StoreNotEmbeddedError,
    SvaError,
    UnparseableReplyError,
    ValidationError,
)
from .knowledge_base import KnowledgeStore
from .models import Severity, VulnerabilityRecord
from .prompting import (
    AssembledPrompt,
    PromptTemplate,
    assemble_prompt,
    demonstration_from_entry,
    parse_severity,
)
from .retrieval import RetrievalConfig, RetrievalTarget, ScoredEntry, retrieve_top_k
from .evaluation import EvaluationReport, evaluate_run

logger = logging.getLogger(__name__)

MANIFEST_HEADER_TYPE = "header"
MANIFEST_SAMPLE_TYPE = "sample"


@dataclass
class RunManifest:
    """In-memory view of a run manifest (header + per-sample records)."""

    header: dict
    samples: list[dict] = field(default_factory=list)

    @classmethod
    def load(cls, path: str) -> "RunManifest":
        header = None
        samples = []
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except ValueError as exc:
                    raise ValidationError(f"{path}:{line_no}: not JSON") from exc
                kind = row.get("type")
                if kind == MANIFEST_HEADER_TYPE:
                    if header is not None:
                        raise ValidationError(f"{path}:{line_no}: duplicate manifest header")
                    header = row
                elif kind == MANIFEST_SAMPLE_TYPE:
                    if header is None:
                        raise ValidationError(f"{path}:{line_no}: sample before header")
                    samples.append(row)
                else:
                    raise ValidationError(f"{path}:{line_no}: unknown row type {kind!r}")
        if header is None:
            raise EmptyManifestError(f"{path}: no manifest header found")
        return cls(header=header, samples=samples)

    def assessed_ids(self) -> set[str]:
        return {s["cve_id"] for s in self.samples}

    def pairs(self) -> list[tuple[Severity, Severity | None]]:
        out = []
        for sample in self.samples:
            true = Severity.from_label(sample["true_label"])
            label = sample.get("parsed_label")
            out.append((true, Severity.from_label(label) if label else None))
        return out


def _dump_row(row: dict) -> str:
    return json.dumps(row, sort_keys=True, ensure_ascii=False)


def _headers_compatible(existing: dict, fresh: dict) -> bool:
    drop = {"created_at"}
    a = {k: v for k, v in existing.items() if k not in drop}
    b = {k: v for k, v in fresh.items() if k not in drop}
    return a == b


def template_sha256(template: PromptTemplate) -> str:
    return hashlib.sha256(template.text.encode("utf-8")).hexdigest()


def check_isolation(test_records: list[VulnerabilityRecord], store: KnowledgeStore) -> None:
    """Evaluation records must never be present in the retrieval store."""
    store_ids = set(store.ids())
    offending = sorted(r.cve_id for r in test_records if r.cve_id in store_ids)
    if offending:
        raise IsolationViolationError(
            "test records found in the knowledge store", offending_ids=offending
        )


def check_store_embedded(store: KnowledgeStore) -> None:
    for entry in store:
        if not entry.embedded:
            raise StoreNotEmbeddedError(
                f"entry {entry.cve_id} is missing embeddings; run the embed step first"
            )


def embed_store(store: KnowledgeStore, provider: EmbeddingProvider) -> int:
    """Fill missing embeddings in place; returns how many entries changed.

    Entries already embedded by the same provider are skipped so the embed
    step is idempotent. A store mixing providers is rejected downstream by
    KnowledgeStore.provider_id.
    """
    changed = 0
    for entry in store:
        if entry.embedded and entry.provider_id == provider.provider_id:
            continue
        entry.desc_embedding = provider.embed_description(entry.record.description)
        if entry.record.code.strip():
            entry.code_embedding = provider.embed_code(entry.record.code)
        else:
            entry.code_embedding = None
        entry.provider_id = provider.provider_id
        changed += 1
    return changed


def prepare_prompt(
    record: VulnerabilityRecord,
    store: KnowledgeStore,
    config: RetrievalConfig,
    provider: EmbeddingProvider,
    template: PromptTemplate | None = None,
) -> tuple[list[ScoredEntry], AssembledPrompt]:
    """Embed the target, retrieve demonstrations (self always excluded),
    and assemble the prompt."""
    desc_emb = provider.embed_description(record.description)
    code_emb = provider.embed_code(record.code) if record.code.strip() else None
    target = RetrievalTarget(desc_embedding=desc_emb, code_embedding=code_emb)
    effective = RetrievalConfig(
        phi=config.phi, k=config.k, exclude_ids=config.exclude_ids | {record.cve_id}
    )
    scored = retrieve_top_k(target, store, effective)
    demos = [demonstration_from_entry(s.entry) for s in scored]
    prompt = assemble_prompt(demos, record.code, record.description, template)
    return scored, prompt


def _assess_one(
    record: VulnerabilityRecord,
    store: KnowledgeStore,
    config: RetrievalConfig,
    provider: EmbeddingProvider,
    template: PromptTemplate,
    completer,
) -> dict:
    sample = {
        "type": MANIFEST_SAMPLE_TYPE,
        "cve_id": record.cve_id,
        "true_label": record.severity.label,
        "retrieved_ids": [],
        "prompt_tokens_est": None,
        "context_tokens_est": None,
        "reply": None,
        "parsed_label": None,
        "error": None,
    }
    try:
        scored, prompt = prepare_prompt(record, store, config, provider, template)
        sample["retrieved_ids"] = [s.cve_id for s in scored]
        sample["prompt_tokens_est"] = prompt.token_estimate
        sample["context_tokens_est"] = prompt.context_token_estimate
        result = completer.complete(prompt)
        sample["reply"] = result.reply
        sample["parsed_label"] = parse_severity(result.reply).label
    except UnparseableReplyError as exc:
        sample["error"] = f"UnparseableReply: {exc}"
    except AuthFailedError:
        raise  # fatal: every subsequent call would fail the same way
    except SvaError as exc:
        sample["error"] = f"{type(exc).__name__}: {exc}"
        logger.warning("%s: %s", record.cve_id, exc)
    return sample


def assess(
    test_records: list[VulnerabilityRecord],
    store: KnowledgeStore,
    config: RetrievalConfig,
    completer,
    provider: EmbeddingProvider,
    template: PromptTemplate | None = None,
    manifest_path: str | None = None,
    resume: bool = False,
    max_samples: int | None = None,
    budget_tokens: int | None = None,
    concurrency: int = 1,
    seed: int = 0,
) -> RunManifest:
    """Assess every test record against the store; returns the manifest.

    Per-sample failures are recorded and the run continues; only auth
    failures and isolation violations abort. With resume=True an existing
    manifest at manifest_path is extended, skipping already-assessed ids.
    """
    if concurrency < 1:
        raise ConfigError("concurrency must be >= 1")
    template = template or PromptTemplate.default()
    check_store_embedded(store)
    check_isolation(test_records, store)

    header = {
        "type": MANIFEST_HEADER_TYPE,
        "phi": config.phi,
        "k": config.k,
        "embedding_provider": store.provider_id,
        "llm": getattr(completer, "provider_label", type(completer).__name__),
        "template": template.name,
        "template_sha256": template_sha256(template),
        "seed": seed,
        "created_at": datetime.now(timezone.utc).isoformat(),
    }

    manifest = RunManifest(header=header)
    out = None
    if manifest_path is not None:
        if resume and os.path.exists(manifest_path):
            manifest = RunManifest.load(manifest_path)
            if not _headers_compatible(manifest.header, header):
                raise ConfigError(
                    "existing manifest was produced with a different configuration; "
                    "refusing to resume into it"
                )
            out = open(manifest_path, "a", encoding="utf-8")
        else:
            out = open(manifest_path, "w", encoding="utf-8")
            out.write(_dump_row(header) + "\n")
            out.flush()

    done = manifest.assessed_ids()
    pending = [r for r in test_records if r.cve_id not in done]
    spent = sum(s["prompt_tokens_est"] or 0 for s in manifest.samples)

    def finish(sample: dict) -> None:
        manifest.samples.append(sample)
        if out is not None:
            out.write(_dump_row(sample) + "\n")
            out.flush()

    try:
        stop = False
        cursor = 0
        while cursor < len(pending) and not stop:
            if max_samples is not None and len(manifest.samples) >= max_samples:
                logger.warning("max-samples limit (%d) reached, stopping", max_samples)
                break
            batch = pending[cursor : cursor + concurrency]
            cursor += len(batch)
            if max_samples is not None:
                batch = batch[: max_samples - len(manifest.samples)]
            if concurrency == 1:
                results = [
                    _assess_one(r, store, config, provider, template, completer) for r in batch
                ]
            else:
                with concurrent.futures.ThreadPoolExecutor(max_workers=concurrency) as pool:
                    futures = [
                        pool.submit(_assess_one, r, store, config, provider, template, completer)
                        for r in batch
                    ]
                    results = [f.result() for f in futures]
            for sample in results:
                finish(sample)
                spent += sample["prompt_tokens_est"] or 0
                if budget_tokens is not None and spent >= budget_tokens:
                    logger.warning(
                        "token budget exhausted (%d >= %d), stopping", spent, budget_tokens
                    )
                    stop = True
                    break
    finally:
        if out is not None:
            out.close()
    return manifest


@dataclass
class TokenStats:
    mean: float | None
    min: int | None
    max: int | None
    context_share: float | None

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "min": self.min,
            "max": self.max,
            "context_share": self.context_share,
        }


def token_stats(manifest: RunManifest) -> TokenStats:
    counts = [s["prompt_tokens_est"] for s in manifest.samples if s["prompt_tokens_est"] is not None]
    if not counts:
        return TokenStats(mean=None, min=None, max=None, context_share=None)
    context = [s["context_tokens_est"] or 0 for s in manifest.samples if s["prompt_tokens_est"] is not None]
    total = sum(counts)
    return TokenStats(
        mean=total / len(counts),
        min=min(counts),
        max=max(counts),
        context_share=(sum(context) / total) if total else 0.0,
    )


def build_report(manifest: RunManifest) -> dict:
    """Aggregate metrics and token statistics for a finished run.

    Samples that failed before producing a parseable label count as
    non-predictions for their true class; they are never dropped.
    """
    if not manifest.samples:
        raise EmptyManifestError("manifest has no assessed samples")
    metrics = evaluate_run(manifest.pairs())
    config = {k: v for k, v in manifest.header.items() if k not in ("type", "created_at")}
    return {
        "config": config,
        "metrics": metrics.to_dict(),
        "token_stats": token_stats(manifest).to_dict(),
        "errors": sum(1 for s in manifest.samples if s["error"]),
    }


def render_report_table(report: dict) -> str:
    """Human-readable twin of the report JSON."""
    m = report["metrics"]
    t = report["token_stats"]
    lines = [
        f"samples:          {m['total']}",
        f"accuracy:         {m['accuracy']:.4f}",
        f"macro F1:         {m['macro_f1']:.4f}",
        f"macro MCC:        {m['macro_mcc']:.4f}",
        f"multiclass MCC:   {m['multiclass_mcc']:.4f} (standard definition, reported for reference)",
        f"unparseable:      {m['unparseable_count']}",
        "",
        f"{'class':<10}{'precision':>10}{'recall':>10}{'f1':>10}{'mcc':>10}",
    ]
    for row in m["per_class"]:
        lines.append(
            f"{row['severity']:<10}{row['precision']:>10.4f}{row['recall']:>10.4f}"
            f"{row['f1']:>10.4f}{row['mcc']:>10.4f}"
        )
    if t["mean"] is not None:
        share = f"{t['context_share']:.1%}" if t["context_share"] is not None else "n/a"
        lines += [
            "",
            "input tokens (estimated): "
            f"mean {t['mean']:.0f}, min {t['min']}, max {t['max']}; "
            f"retrieved-context share {share}",
        ]
    return "\n".join(lines)


def _metric_row(report: EvaluationReport) -> dict:
    return {
        "accuracy": report.accuracy,
        "macro_f1": report.macro_f1,
        "macro_mcc": report.macro_mcc,
    }


def run_sweep(
    eval_records: list[VulnerabilityRecord],
    store: KnowledgeStore,
    completer,
    provider: EmbeddingProvider,
    phi_values: list[float] | None = None,
    k_values: list[int] | None = None,
    base_phi: float = 0.6,
    base_k: int = 5,
    template: PromptTemplate | None = None,
) -> dict:
    """Ablation grids over the fusion weight and the shot count.

    The phi table fixes k=base_k and varies the code/description weighting;
    the k table fixes phi=base_phi and varies the number of demonstrations.
    """
    phi_values = phi_values if phi_values is not None else [round(0.1 * i, 1) for i in range(11)]
    k_values = k_values if k_values is not None else [0, 3, 5, 7]
    template = template or PromptTemplate.default()

    def one_run(phi: float, k: int) -> EvaluationReport:
        config = RetrievalConfig(phi=phi, k=k)
        manifest = assess(eval_records, store, config, completer, provider, template=template)
        return evaluate_run(manifest.pairs())

    phi_table = []
    for phi in phi_values:
        report = one_run(phi, base_k)
        phi_table.append(
            {
                "code_weight_pct": round(phi * 100),
                "desc_weight_pct": round((1 - phi) * 100),
                **_metric_row(report),
            }
        )
    k_table = []
    for k in k_values:
        report = one_run(base_phi, k)
        k_table.append(
            {
                "setting": "zero-shot" if k == 0 else f"{k}-shot",
                **_metric_row(report),
            }
        )
    return {
        "base": {"phi": base_phi, "k": base_k},
        "phi_table": phi_table,
        "k_table": k_table,
    }


def render_sweep_tables(sweep: dict) -> str:
    lines = [
        f"fusion-weight sweep (k={sweep['base']['k']})",
        f"{'code%':>6}{'desc%':>7}{'accuracy':>10}{'macro_f1':>10}{'macro_mcc':>11}",
    ]
    for row in sweep["phi_table"]:
        lines.append(
            f"{row['code_weight_pct']:>6}{row['desc_weight_pct']:>7}"
            f"{row['accuracy']:>10.4f}{row['macro_f1']:>10.4f}{row['macro_mcc']:>11.4f}"
        )
    lines += [
        "",
        f"shot-count sweep (phi={sweep['base']['phi']})",
        f"{'setting':<12}{'accuracy':>10}{'macro_f1':>10}{'macro_mcc':>11}",
    ]
    for row in sweep["k_table"]:
        lines.append(
            f"{row['setting']:<12}{row['accuracy']:>10.4f}"
            f"{row['macro_f1']:>10.4f}{row['macro_mcc']:>11.4f}"
        )
    return "\n".join(lines)
