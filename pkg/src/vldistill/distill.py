"""Drive the LVLM endpoint over a batch of curated items.

One request carries one image and one prompt (a "session" is a single
request, not a chat). The batch is internally concurrent with a hard
in-flight bound, a shared rate limiter, per-item retries, and resumable
output. Exchanges are emitted in input order regardless of completion
order so output files are deterministic.
"""
from __future__ import annotations

import base64
import dataclasses
import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import requests

from .prompts import build_prompt, prompt_id_for
from .ratelimit import RateLimiter, RetryPolicy
from .records import ImageMeta, VflanItem

STATUS_OK = "ok"
STATUS_FAILED = "failed"
STATUS_REFUSED = "refused_by_policy"

# Synthetic status for transport-level errors (connection refused, timeout).
TRANSPORT_ERROR = 0


@dataclass
class RawExchange:
    item_id: str
    prompt_id: str
    image_ref: str
    request_digest: str
    response_text: str
    status: str
    attempts: int
    latency_ms: float
    model_id: str

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "RawExchange":
        return cls(**json.loads(line))


@dataclass
class BatchSummary:
    total: int = 0
    ok: int = 0
    failed: int = 0
    resumed: int = 0


class LvlmClient:
    """Interface for one image+text round trip. Must be thread-safe."""

    model_id = "unknown"

    def complete(self, prompt: str, image_ref: str | None = None):
        """Return (http_status, response_text)."""
        raise NotImplementedError


class HttpLvlmClient(LvlmClient):
    """Chat-completion-compatible HTTP client.

    Sends the image as a base64 data block by default; `image_mode="url"`
    passes the reference through for endpoints that fetch URLs themselves.
    """

    def __init__(self, endpoint: str, model: str, api_key: str | None = None,
                 temperature: float = 0.2, max_tokens: int = 2048,
                 image_mode: str = "base64", timeout: float = 120.0,
                 session: requests.Session | None = None):
        self.endpoint = endpoint
        self.model_id = model
        self.api_key = api_key
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.image_mode = image_mode
        self.timeout = timeout
        self._session = session or requests.Session()

    def _image_part(self, image_ref: str) -> dict:
        if self.image_mode == "url":
            return {"type": "image", "url": image_ref}
        with open(image_ref, "rb") as fh:
            data = base64.b64encode(fh.read()).decode("ascii")
        return {"type": "image", "data_base64": data}

    def complete(self, prompt: str, image_ref: str | None = None):
        content = [{"type": "text", "text": prompt}]
        if image_ref is not None:
            content.append(self._image_part(image_ref))
        payload = {
            "model": self.model_id,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "messages": [{"role": "user", "content": content}],
        }
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._session.post(self.endpoint, json=payload,
                                      headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            return TRANSPORT_ERROR, str(exc)
        if resp.status_code != 200:
            return resp.status_code, resp.text[:500]
        try:
            return 200, resp.json()["content"]
        except (ValueError, KeyError) as exc:
            return TRANSPORT_ERROR, f"malformed response body: {exc}"


class MockLvlmClient(LvlmClient):
    """Scriptable in-process client for tests.

    `script` maps an item key (the prompt+image pair is keyed by image_ref)
    to a list of (status, text) consumed one per attempt; unkeyed calls fall
    back to the global `sequence`, then to (200, default_text). Every call
    is appended to `request_log` as (monotonic_start, image_ref, prompt).
    """

    model_id = "mock-lvlm"

    def __init__(self, default_text: str = "ok", script: dict | None = None,
                 sequence: list | None = None, latency_fn=None,
                 text_fn=None):
        self.default_text = default_text
        self.script = {k: list(v) for k, v in (script or {}).items()}
        self.sequence = list(sequence or [])
        self.latency_fn = latency_fn
        self.text_fn = text_fn
        self.request_log = []
        self._lock = threading.Lock()

    def complete(self, prompt: str, image_ref: str | None = None):
        with self._lock:
            self.request_log.append((time.monotonic(), image_ref, prompt))
            per_item = self.script.get(image_ref)
            if per_item:
                status, text = per_item.pop(0)
            elif self.sequence:
                status, text = self.sequence.pop(0)
            else:
                status, text = 200, None
        if self.latency_fn is not None:
            time.sleep(self.latency_fn())
        if status == 200 and text is None:
            text = self.text_fn(prompt, image_ref) if self.text_fn else self.default_text
        return status, text


def request_digest(prompt: str, image_ref: str | None, model_id: str) -> str:
    """sha256 over prompt text, image bytes (or the ref when no file), model id."""
    h = hashlib.sha256()
    h.update(prompt.encode("utf-8"))
    h.update(b"\x00")
    if image_ref and os.path.isfile(image_ref):
        with open(image_ref, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    elif image_ref:
        h.update(image_ref.encode("utf-8"))
    h.update(b"\x00")
    h.update(model_id.encode("utf-8"))
    return h.hexdigest()


def distill_one(client: LvlmClient, item_id: str, image_ref: str, prompt: str,
                policy: RetryPolicy, prompt_id: str = "",
                sleep_fn=time.sleep) -> RawExchange:
    """One item through the endpoint with retries. Failures are recorded
    in the exchange, never raised."""
    digest = request_digest(prompt, image_ref, client.model_id)
    started = time.monotonic()
    attempts = 0
    status_code, text = None, ""
    while attempts < policy.max_attempts:
        attempts += 1
        status_code, text = client.complete(prompt, image_ref)
        if status_code == 200:
            break
        retryable = status_code == TRANSPORT_ERROR or policy.is_retryable(status_code)
        if not retryable or attempts >= policy.max_attempts:
            break
        sleep_fn(policy.backoff_s(attempts))
    latency_ms = (time.monotonic() - started) * 1000.0
    ok = status_code == 200 and bool(text)
    return RawExchange(
        item_id=item_id,
        prompt_id=prompt_id,
        image_ref=image_ref,
        request_digest=digest,
        response_text=text if ok else (text or ""),
        status=STATUS_OK if ok else STATUS_FAILED,
        attempts=attempts,
        latency_ms=latency_ms,
        model_id=client.model_id,
    )


def _item_request(item, kind: str):
    """(item_id, image_ref, prompt) for a manifest row."""
    if isinstance(item, ImageMeta):
        image_ref = item.local_path or item.url
        return item.id, image_ref, build_prompt("laion")
    if isinstance(item, VflanItem):
        return item.id, item.image_ref, build_prompt("vflan", item.question)
    raise TypeError(f"unsupported item type {type(item).__name__}")


def load_resume_ids(path: str) -> dict:
    """item_id -> RawExchange from a prior run's output."""
    done = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                ex = RawExchange.from_json(line)
                done[ex.item_id] = ex
    return done


def iter_distill_batch(client: LvlmClient, items: list, kind: str,
                       policy: RetryPolicy, concurrency: int = 4,
                       rpm: int = 600, resume_from: str | None = None,
                       limiter: RateLimiter | None = None,
                       summary: BatchSummary | None = None):
    """Yield one RawExchange per item, in input order.

    At most `concurrency` requests are in flight; request starts go through
    a shared limiter at `rpm` per minute. Items already present in
    `resume_from` are re-emitted without any request.
    """
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    if rpm < 1:
        raise ValueError("rpm must be >= 1")
    limiter = limiter or RateLimiter(rpm, 60.0)
    done = load_resume_ids(resume_from) if resume_from else {}
    prompt_id = prompt_id_for(kind)

    def work(item):
        item_id, image_ref, prompt = _item_request(item, kind)
        limiter.acquire()
        return distill_one(client, item_id, image_ref, prompt, policy, prompt_id)

    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        futures = []
        for item in items:
            if item.id in done:
                futures.append(done[item.id])
            else:
                futures.append(pool.submit(work, item))
        for fut in futures:
            if isinstance(fut, RawExchange):
                exchange, resumed = fut, True
            else:
                exchange, resumed = fut.result(), False
            if summary is not None:
                summary.total += 1
                if resumed:
                    summary.resumed += 1
                if exchange.status == STATUS_OK:
                    summary.ok += 1
                else:
                    summary.failed += 1
            yield exchange


def distill_batch(client: LvlmClient, items: list, kind: str,
                  policy: RetryPolicy, concurrency: int = 4, rpm: int = 600,
                  resume_from: str | None = None, out_path: str | None = None,
                  limiter: RateLimiter | None = None):
    """Run the batch to completion; returns (exchanges, summary).

    With `out_path`, exchanges are appended to a JSONL file as they are
    emitted, so an interrupted run can resume from its own output.
    """
    summary = BatchSummary()
    exchanges = []
    stream = iter_distill_batch(client, items, kind, policy, concurrency, rpm,
                                resume_from, limiter, summary)
    if out_path:
        with open(out_path, "a", encoding="utf-8") as fh:
            for ex in stream:
                fh.write(ex.to_json())
                fh.write("\n")
                exchanges.append(ex)
    else:
        exchanges = list(stream)
    return exchanges, summary
