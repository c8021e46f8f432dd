"""Command-line surface for the pipeline.

Contract: stdout carries exactly one JSON summary object per run; all
human-readable logging goes to stderr. Exit codes: 0 success, 1
completed with per-item failures, 2 usage error, 3 fatal (config, IO,
provider unreachable).
"""
from __future__ import annotations

import csv
import json
import logging
import os
import sys

import click

from . import curate as curate_mod
from . import inspection, mixing, parsing, records
from .analytics import (
    CollapsedGibbsLda,
    DegenerateInput,
    EmptyCorpus,
    domain_stats,
    load_stopwords,
    name_topics,
    project_2d,
    tokenize_corpus,
)
from .config import ConfigError, load_config
from .curate import DedupConfig, DeterministicMockProvider, HttpEmbeddingProvider
from .distill import (
    STATUS_OK,
    HttpLvlmClient,
    MockLvlmClient,
    distill_batch,
)
from .ratelimit import RetryPolicy
from .rng import Xoshiro256StarStar

log = logging.getLogger("vldistill")

EXIT_OK = 0
EXIT_ITEM_FAILURES = 1
EXIT_USAGE = 2
EXIT_FATAL = 3


def emit(summary: dict, code: int):
    print(json.dumps(summary, ensure_ascii=False))
    sys.exit(code)


def fatal(message: str):
    log.error(message)
    sys.exit(EXIT_FATAL)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Pipeline config file (YAML).")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, config_path, verbose):
    logging.basicConfig(stream=sys.stderr,
                        level=logging.DEBUG if verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        ctx.obj = load_config(config_path)
    except ConfigError as exc:
        fatal(str(exc))


def _pick(flag, config_value):
    return config_value if flag is None else flag


@main.command()
@click.option("--kind", type=click.Choice(["laion", "vflan", "caption", "instruct"]),
              required=True)
@click.argument("path", type=click.Path())
def validate(kind, path):
    """Validate every record in a JSONL file and report violations."""
    cls = {"laion": records.ImageMeta, "vflan": records.VflanItem,
           "caption": records.CaptionRecord,
           "instruct": records.InstructRecord}[kind]
    try:
        rows = records.load_records(cls, path)
    except OSError as exc:
        fatal(str(exc))
    except records.RecordError as exc:
        emit({"ok": 0, "failed": 1, "error": str(exc)}, EXIT_ITEM_FAILURES)
    bad = 0
    for i, rec in enumerate(rows):
        violations = records.validate_record(rec)
        if violations:
            bad += 1
            for v in violations:
                log.warning("record %d (%s): %s", i, getattr(rec, "id", "?"), v)
    emit({"ok": len(rows) - bad, "failed": bad},
         EXIT_ITEM_FAILURES if bad else EXIT_OK)


@main.command()
@click.option("--manifest", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--min-dim", type=int, default=None)
@click.option("--tau", type=float, default=None)
@click.option("--blocklist", "blocklist_path", type=click.Path(), default=None)
@click.option("--fetch-dir", type=click.Path(), default=None)
@click.option("--dedup/--no-dedup", default=True)
@click.option("--embed-dims", type=int, default=32,
              help="Dims for the offline deterministic embedder.")
@click.pass_obj
def curate(cfg, manifest, out, min_dim, tau, blocklist_path, fetch_dir, dedup,
           embed_dims):
    """Stage-0 image selection: resolution, blocklist, fetch, dedup."""
    min_dim = _pick(min_dim, cfg.curation.min_dim)
    tau = _pick(tau, cfg.curation.tau)
    blocklist_path = _pick(blocklist_path, cfg.curation.blocklist or None)
    try:
        images = records.load_manifest("laion", manifest)
        blocklist = curate_mod.load_blocklist(blocklist_path) if blocklist_path else []
        if dedup:
            if cfg.embedding.endpoint:
                api_key = os.environ.get(cfg.embedding.auth_env_var or "", None)
                provider = HttpEmbeddingProvider(cfg.embedding.endpoint,
                                                 cfg.embedding.model, api_key)
            else:
                provider = DeterministicMockProvider(dims=embed_dims)
        else:
            provider = None
        kept, report = curate_mod.curate(
            images, min_dim=min_dim, blocklist=blocklist, provider=provider,
            dedup_cfg=DedupConfig(tau=tau), fetch_dir=fetch_dir)
        records.write_records(kept, out)
    except (OSError, records.RecordError, curate_mod.CurateError) as exc:
        fatal(str(exc))
    summary = report.to_dict()
    summary.pop("duplicate_witnesses", None)
    emit(summary,
         EXIT_ITEM_FAILURES if report.fetch_failures else EXIT_OK)


@main.command()
@click.option("--source", type=click.Choice(["laion", "vflan"]), required=True)
@click.option("--manifest", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--concurrency", type=int, default=None)
@click.option("--rpm", type=int, default=None)
@click.option("--max-attempts", type=int, default=None)
@click.option("--resume", "resume_path", type=click.Path(), default=None)
@click.option("--canned-response", type=click.Path(), default=None,
              help="Run against an in-process mock returning this file's text.")
@click.pass_obj
def distill(cfg, source, manifest, out, concurrency, rpm, max_attempts,
            resume_path, canned_response):
    """Send each manifest item through the LVLM endpoint."""
    concurrency = _pick(concurrency, cfg.distill.concurrency)
    rpm = _pick(rpm, cfg.distill.rpm)
    max_attempts = _pick(max_attempts, cfg.distill.max_attempts)
    try:
        items = records.load_manifest(source, manifest)
        if canned_response:
            with open(canned_response, encoding="utf-8") as fh:
                client = MockLvlmClient(default_text=fh.read())
        else:
            if not cfg.provider.endpoint:
                fatal("no provider endpoint configured")
            client = HttpLvlmClient(cfg.provider.endpoint, cfg.provider.model,
                                    cfg.api_key(),
                                    temperature=cfg.provider.temperature,
                                    max_tokens=cfg.provider.max_tokens)
        policy = RetryPolicy(max_attempts=max_attempts,
                             base_backoff_ms=cfg.distill.base_backoff_ms)
        if resume_path is None and os.path.exists(out):
            resume_path = out
        tmp = out + ".next"
        if os.path.exists(tmp):
            os.unlink(tmp)
        _, summary = distill_batch(client, items, source, policy,
                                   concurrency=concurrency, rpm=rpm,
                                   resume_from=resume_path, out_path=tmp)
        os.replace(tmp, out)
    except ConfigError as exc:
        fatal(str(exc))
    except (OSError, records.RecordError) as exc:
        fatal(str(exc))
    emit({"total": summary.total, "ok": summary.ok, "failed": summary.failed,
          "resumed": summary.resumed},
         EXIT_ITEM_FAILURES if summary.failed else EXIT_OK)


@main.command("parse")
@click.option("--source", type=click.Choice(["laion", "vflan"]), required=True)
@click.option("--exchanges", "exchanges_path", required=True, type=click.Path())
@click.option("--manifest", required=True, type=click.Path())
@click.option("--captions-out", required=True, type=click.Path())
@click.option("--instructs-out", required=True, type=click.Path())
@click.option("--rejects-out", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(["strict", "lenient"]), default="lenient")
@click.option("--refusal-patterns", "refusal_path", type=click.Path(), default=None)
def parse_cmd(source, exchanges_path, manifest, captions_out, instructs_out,
              rejects_out, mode, refusal_path):
    """Parse raw exchanges into caption/instruct records plus a rejects file."""
    from .distill import RawExchange

    try:
        items = {item.id: item for item in records.load_manifest(source, manifest)}
        patterns = parsing.load_refusal_patterns(refusal_path) if refusal_path else None
        captions, instructs, rejects = [], [], []
        with open(exchanges_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                ex = RawExchange.from_json(line)
                item = items.get(ex.item_id)
                if item is None:
                    rejects.append({"item_id": ex.item_id, "error": "unknown item"})
                    continue
                if ex.status != STATUS_OK:
                    rejects.append({"item_id": ex.item_id,
                                    "error": f"exchange status {ex.status}"})
                    continue
                try:
                    parsed = parsing.parse_response(ex.response_text, source, mode)
                except parsing.ParseError as exc:
                    rejects.append({"item_id": ex.item_id,
                                    "error": type(exc).__name__,
                                    "detail": str(exc)})
                    continue
                parsed = parsing.validate_parsed(parsed, source, patterns)
                prov = parsing.make_provenance(ex.model_id, ex.prompt_id,
                                               ex.request_digest)
                cap, inst = parsing.to_records(parsed, item, prov)
                captions.append(cap)
                instructs.append(inst)
        records.write_records(captions, captions_out)
        records.write_records(instructs, instructs_out)
        with open(rejects_out, "w", encoding="utf-8") as fh:
            for r in rejects:
                fh.write(json.dumps(r, ensure_ascii=False))
                fh.write("\n")
    except (OSError, records.RecordError) as exc:
        fatal(str(exc))
    emit({"ok": len(captions), "failed": len(rejects)},
         EXIT_ITEM_FAILURES if rejects else EXIT_OK)


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Override the spec seed.")
@click.option("--materialize", "materialize_out", type=click.Path(), default=None)
def mix(spec_path, out, seed, materialize_out):
    """Compose a seeded training mixture from a mix spec file."""
    try:
        spec = mixing.MixSpec.from_json_file(spec_path)
        if seed is not None:
            spec.seed = seed
        refs = mixing.compose_mix(spec)
        report = mixing.verify_mix(refs, spec)
        mixing.write_refs(refs, out)
        if materialize_out:
            mixing.materialize(refs, spec, materialize_out)
    except (OSError, mixing.MixError, json.JSONDecodeError, KeyError) as exc:
        fatal(str(exc))
    emit({"total": report.total, "per_dataset": report.per_dataset,
          "multiset_ok": report.ok}, EXIT_OK if report.ok else EXIT_ITEM_FAILURES)


@main.group()
def stats():
    """Corpus statistics."""


@stats.command()
@click.option("--manifest", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--top-k", type=int, default=12)
@click.option("--full-host", is_flag=True)
def domains(manifest, out, top_k, full_host):
    """Emit domains.csv (domain,count,pct,cumulative_pct)."""
    try:
        images = records.load_manifest("laion", manifest)
        unique, top, unparsable = domain_stats(images, top_k=top_k,
                                               full_host=full_host)
        with open(out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["domain", "count", "pct", "cumulative_pct"])
            for s in top:
                writer.writerow([s.domain, s.count, f"{s.pct:.4f}",
                                 f"{s.cumulative_pct:.4f}"])
    except (OSError, records.RecordError) as exc:
        fatal(str(exc))
    emit({"unique_domains": unique, "rows": len(top),
          "unparsable": len(unparsable)},
         EXIT_ITEM_FAILURES if unparsable else EXIT_OK)


@main.command()
@click.option("--captions", "caption_paths", multiple=True, required=True,
              type=click.Path())
@click.option("--k", type=int, default=25)
@click.option("--iters", type=int, default=1000)
@click.option("--alpha", type=float, default=None)
@click.option("--beta", type=float, default=0.01)
@click.option("--seed", type=int, default=0)
@click.option("--sample", "sample_size", type=int, default=100_000)
@click.option("--stopwords", "stopwords_path", type=click.Path(), default=None)
@click.option("--out-dir", required=True, type=click.Path())
@click.pass_obj
def topics(cfg, caption_paths, k, iters, alpha, beta, seed, sample_size,
           stopwords_path, out_dir):
    """Fit topics over caption records; emit topics.json and coords.csv."""
    try:
        texts = []
        for path in caption_paths:
            texts.extend(r.caption for r in
                         records.load_records(records.CaptionRecord, path))
        if sample_size and len(texts) > sample_size:
            rng = Xoshiro256StarStar(seed)
            texts = rng.sample(texts, sample_size)
        stop = load_stopwords(stopwords_path)
        vocab, docs = tokenize_corpus(texts, stopwords=stop)
        model = CollapsedGibbsLda(n_topics=k, alpha=alpha, beta=beta,
                                  n_iter=iters, seed=seed).fit(docs, vocab)
        per_topic = [model.top_words(t, 10) for t in range(k)]
        proportions = model.topic_proportions()

        if cfg.provider.endpoint:
            client = HttpLvlmClient(cfg.provider.endpoint, cfg.provider.model,
                                    cfg.api_key())
            names = name_topics(client, per_topic)
        else:
            names = [f"topic-{t}" for t in range(k)]

        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "topics.json"), "w",
                  encoding="utf-8") as fh:
            json.dump([{"topic": t, "name": names[t],
                        "proportion_pct": proportions[t],
                        "top_words": [{"word": w, "weight": wt}
                                      for w, wt in per_topic[t]]}
                       for t in range(k)], fh, ensure_ascii=False, indent=2)

        proportions_matrix = (model.doc_topic_counts_ /
                              model.doc_topic_counts_.sum(axis=1, keepdims=True)
                              .clip(min=1))
        coords = project_2d(proportions_matrix)
        with open(os.path.join(out_dir, "coords.csv"), "w", newline="",
                  encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["doc_id", "x", "y"])
            for i, (x, y) in enumerate(coords):
                writer.writerow([i, f"{x:.6f}", f"{y:.6f}"])
    except (ConfigError, OSError, records.RecordError, ValueError,
            EmptyCorpus, DegenerateInput) as exc:
        fatal(str(exc))
    emit({"topics": k, "docs": len(docs), "vocab": len(vocab)}, EXIT_OK)


@main.group("inspect")
def inspect_group():
    """Manual-inspection workflow: sample, run, grade, tally."""


@inspect_group.command("sample")
@click.option("--manifest", required=True, type=click.Path())
@click.option("--n", type=int, default=100)
@click.option("--seed", type=int, default=0)
@click.option("--out", required=True, type=click.Path())
def inspect_sample(manifest, n, seed, out):
    try:
        items = records.load_manifest("vflan", manifest)
        ids = inspection.sample_stratified(items, n=n, seed=seed)
        with open(out, "w", encoding="utf-8") as fh:
            for sid in ids:
                fh.write(json.dumps({"id": sid}))
                fh.write("\n")
    except (OSError, records.RecordError, inspection.InspectionError) as exc:
        fatal(str(exc))
    emit({"sampled": len(ids)}, EXIT_OK)


@inspect_group.command("run")
@click.option("--manifest", required=True, type=click.Path())
@click.option("--samples", "samples_path", required=True, type=click.Path())
@click.option("--modes", default="direct_answer,caption_then_answer",
              help="Comma-separated subset of vflan_gt,direct_answer,caption_then_answer.")
@click.option("--out", required=True, type=click.Path())
@click.option("--canned-response", type=click.Path(), default=None)
@click.pass_obj
def inspect_run(cfg, manifest, samples_path, modes, out, canned_response):
    try:
        items = {i.id: i for i in records.load_manifest("vflan", manifest)}
        with open(samples_path, encoding="utf-8") as fh:
            ids = [json.loads(line)["id"] for line in fh if line.strip()]
        samples = [items[i] for i in ids if i in items]
        mode_list = [m.strip() for m in modes.split(",") if m.strip()]
        if canned_response:
            with open(canned_response, encoding="utf-8") as fh:
                client = MockLvlmClient(default_text=fh.read())
        else:
            if not cfg.provider.endpoint:
                fatal("no provider endpoint configured")
            client = HttpLvlmClient(cfg.provider.endpoint, cfg.provider.model,
                                    cfg.api_key())
        policy = RetryPolicy(max_attempts=cfg.distill.max_attempts,
                             base_backoff_ms=cfg.distill.base_backoff_ms)
        recs = inspection.run_ablation(client, samples, mode_list, policy)
        inspection.append_records(recs, out)
    except ConfigError as exc:
        fatal(str(exc))
    except (OSError, records.RecordError, ValueError) as exc:
        fatal(str(exc))
    failed = sum(1 for r in recs if r.note)
    emit({"records": len(recs), "failed": failed},
         EXIT_ITEM_FAILURES if failed else EXIT_OK)


@inspect_group.command("grade")
@click.option("--annotations", "ann_path", required=True, type=click.Path())
@click.option("--manifest", required=True, type=click.Path())
@click.option("--inspector", required=True)
def inspect_grade(ann_path, manifest, inspector):
    """Interactively grade ungraded records (c=correct, i=incorrect,
    u=unsure, q=quit). Appends graded copies to the annotation file."""
    try:
        items = {i.id: i for i in records.load_manifest("vflan", manifest)}
        recs = inspection.load_inspection_records(ann_path)
    except (OSError, records.RecordError) as exc:
        fatal(str(exc))
    graded_keys = {(r.sample_id, r.mode) for r in recs if r.verdict != "ungraded"}
    pending = [r for r in recs
               if r.verdict == "ungraded" and (r.sample_id, r.mode) not in graded_keys]
    graded = 0
    for r in pending:
        item = items.get(r.sample_id)
        click.echo(f"\n--- {r.sample_id} [{r.mode}] ---", err=True)
        if item:
            click.echo(f"Q: {item.question}", err=True)
            click.echo(f"GT: {item.gt_answer}", err=True)
        click.echo(f"A: {r.answer_text}", err=True)
        choice = click.prompt("verdict [c/i/u/q]",
                              type=click.Choice(["c", "i", "u", "q"]), err=True)
        if choice == "q":
            break
        verdict = {"c": "correct", "i": "incorrect", "u": "unsure"}[choice]
        graded_copy = inspection.InspectionRecord(**json.loads(r.to_json()))
        inspection.grade_record(graded_copy, verdict, inspector)
        inspection.append_records([graded_copy], ann_path)
        graded += 1
    emit({"graded": graded, "pending": len(pending) - graded}, EXIT_OK)


@inspect_group.command("tally")
@click.option("--annotations", "ann_path", required=True, type=click.Path())
@click.option("--include-unsure", is_flag=True)
def inspect_tally(ann_path, include_unsure):
    try:
        recs = inspection.load_inspection_records(ann_path)
        report = inspection.tally_accuracy(recs, include_unsure=include_unsure)
    except OSError as exc:
        fatal(str(exc))
    except inspection.NoGradedRecords as exc:
        fatal(str(exc))
    emit({"per_mode": {m: {"graded": a.graded, "correct": a.correct,
                           "accuracy_pct": round(a.accuracy_pct, 1)}
                       for m, a in report.per_mode.items()},
          "excluded_unsure": report.excluded_unsure}, EXIT_OK)


if __name__ == "__main__":
    main()
