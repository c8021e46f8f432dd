"""Image selection: resolution filter, URL blocklist, fetching with
content-addressed storage, and embedding-based near-duplicate removal.

Dedup is a greedy first-wins scan: an item survives iff its maximum
dot-product similarity to every previously retained item is <= tau.
Deterministic given input order; exact O(n^2) which is fine up to ~50k
items (above that, batch the scan).
"""
from __future__ import annotations

import dataclasses
import hashlib
import os
import threading
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import requests

from .ratelimit import RateLimiter, RetryPolicy
from .records import ImageMeta


class CurateError(Exception):
    pass


class DimMismatch(CurateError):
    pass


class ProviderError(CurateError):
    def __init__(self, status, body: str = ""):
        self.status = status
        self.body = body[:500]
        super().__init__(f"embedding provider error {status}: {self.body}")


@dataclass
class DedupConfig:
    tau: float = 0.44
    normalize: bool = True

    def __post_init__(self):
        if self.normalize and not -1.0 <= self.tau <= 1.0:
            raise ValueError("tau must be in [-1, 1] for normalized embeddings")


@dataclass
class FetchFailure:
    id: str
    url: str
    status: object  # last HTTP status, or transport error string
    attempts: int


@dataclass
class CurationReport:
    input_count: int = 0
    kept_count: int = 0
    rejected_resolution: int = 0
    rejected_blocklist: int = 0
    rejected_duplicate: int = 0
    fetch_failures: int = 0
    duplicate_witnesses: dict = field(default_factory=dict)  # removed id -> retained id

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def filter_resolution(images: list, min_dim: int = 512):
    """Keep images whose width AND height strictly exceed min_dim."""
    kept, rejected = [], []
    for img in images:
        (kept if img.width > min_dim and img.height > min_dim else rejected).append(img)
    return kept, rejected


def load_blocklist(path: str) -> list:
    """One substring pattern per line; # comments and blanks ignored."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                out.append(line)
    return out


def filter_blocklist(images: list, blocklist: list):
    """Reject images whose lowercase URL contains any lowercase pattern."""
    patterns = [p.lower() for p in blocklist if p]
    kept, rejected = [], []
    for img in images:
        url = img.url.lower()
        if any(p in url for p in patterns):
            rejected.append(img)
        else:
            kept.append(img)
    return kept, rejected


def _ext_from_url(url: str) -> str:
    tail = url.rsplit("/", 1)[-1]
    if "." in tail:
        ext = tail.rsplit(".", 1)[-1].split("?")[0].lower()
        if ext.isalnum() and len(ext) <= 5:
            return ext
    return "bin"


def fetch_images(images: list, out_dir: str, max_attempts: int = 3,
                 concurrency: int = 8, session: requests.Session | None = None,
                 timeout: float = 30.0, limiter: RateLimiter | None = None):
    """Download each image to out_dir/<sha256>.<ext>.

    Identical bytes are stored once. Already-fetched metas (local_path
    pointing at an existing file) are passed through with no request, so
    reruns are idempotent. Returns (updated_metas, failures) with
    successes in input order.
    """
    os.makedirs(out_dir, exist_ok=True)
    session = session or requests.Session()
    lock = threading.Lock()

    def fetch(img: ImageMeta):
        if img.local_path and os.path.isfile(img.local_path):
            return img, None
        last_status = None
        # Every non-200 is retried up to the attempt cap: web image hosts
        # routinely return transient 404/403 under load.
        for attempt in range(1, max_attempts + 1):
            if limiter is not None:
                limiter.acquire()
            try:
                resp = session.get(img.url, timeout=timeout)
                last_status = resp.status_code
            except requests.RequestException as exc:
                last_status = str(exc)
                continue
            if resp.status_code != 200:
                continue
            data = resp.content
            digest = hashlib.sha256(data).hexdigest()
            path = os.path.join(out_dir, f"{digest}.{_ext_from_url(img.url)}")
            with lock:
                if not os.path.exists(path):
                    tmp = path + ".part"
                    with open(tmp, "wb") as fh:
                        fh.write(data)
                    os.replace(tmp, path)
            return dataclasses.replace(img, local_path=path, content_sha256=digest), None
        return None, FetchFailure(img.id, img.url, last_status, max_attempts)

    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        results = list(pool.map(fetch, images))

    updated = [meta for meta, _ in results if meta is not None]
    failures = [fail for _, fail in results if fail is not None]
    return updated, failures


@dataclass
class EmbeddingVector:
    dims: int
    values: list

    def __post_init__(self):
        if len(self.values) != self.dims:
            raise DimMismatch(f"expected {self.dims} dims, got {len(self.values)}")


class EmbeddingProvider:
    """Text -> vector provider interface."""

    def embed(self, texts: list) -> list:
        """Return one list of floats per input text, aligned by index."""
        raise NotImplementedError


class HttpEmbeddingProvider(EmbeddingProvider):
    """POST {"model", "input": [...]} -> {"data": [{"index", "embedding"}]}."""

    def __init__(self, endpoint: str, model: str, api_key: str | None = None,
                 policy: RetryPolicy | None = None, timeout: float = 60.0,
                 session: requests.Session | None = None):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.policy = policy or RetryPolicy()
        self.timeout = timeout
        self._session = session or requests.Session()

    def embed(self, texts: list) -> list:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last = None
        for attempt in range(1, self.policy.max_attempts + 1):
            try:
                resp = self._session.post(
                    self.endpoint, json={"model": self.model, "input": list(texts)},
                    headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last = ProviderError("transport", str(exc))
                continue
            if resp.status_code != 200:
                last = ProviderError(resp.status_code, resp.text)
                if not self.policy.is_retryable(resp.status_code):
                    break
                continue
            data = resp.json()["data"]
            vectors = [None] * len(texts)
            for entry in data:
                vectors[entry["index"]] = entry["embedding"]
            if any(v is None for v in vectors):
                raise ProviderError("length mismatch",
                                    f"{len(data)} embeddings for {len(texts)} texts")
            return vectors
        raise last


class DeterministicMockProvider(EmbeddingProvider):
    """Seeded hash of the text -> fixed-dim unit vector.

    The same text maps to the same vector in every process, which makes
    dedup and the end-to-end smoke test reproducible without a model.
    """

    def __init__(self, dims: int = 32, seed: int = 0):
        self.dims = dims
        self.seed = seed

    def embed(self, texts: list) -> list:
        out = []
        for text in texts:
            h = hashlib.sha256(f"{self.seed}:{text}".encode("utf-8")).digest()
            rng = np.random.RandomState(int.from_bytes(h[:4], "big"))
            v = rng.standard_normal(self.dims)
            v /= np.linalg.norm(v)
            out.append(v.tolist())
        return out


def embed_texts(provider: EmbeddingProvider, texts: list,
                normalize: bool = True) -> list:
    """Embed texts, optionally L2-normalizing, as EmbeddingVector values."""
    raw = provider.embed(texts)
    if len(raw) != len(texts):
        raise ProviderError("length mismatch",
                            f"{len(raw)} embeddings for {len(texts)} texts")
    out = []
    for values in raw:
        v = np.asarray(values, dtype=np.float64)
        if normalize:
            norm = np.linalg.norm(v)
            if norm == 0:
                raise ProviderError("zero vector", "cannot normalize")
            v = v / norm
        out.append(EmbeddingVector(dims=len(v), values=v.tolist()))
    return out


def dedup_by_similarity(ids: list, vectors: list, cfg: DedupConfig):
    """Greedy first-wins near-duplicate removal.

    Returns (retained_ids, removed) where removed entries are
    (id, witness_id, similarity) and witness is the retained item that
    triggered the removal (similarity > tau).
    """
    if len(ids) != len(vectors):
        raise DimMismatch("ids and vectors must align")
    if not vectors:
        return [], []
    dims = vectors[0].dims
    if any(v.dims != dims for v in vectors):
        raise DimMismatch("all vectors must share dims")

    mat = np.asarray([v.values for v in vectors], dtype=np.float64)
    retained_idx: list = []
    retained_ids: list = []
    removed: list = []
    for i in range(len(ids)):
        if retained_idx:
            sims = mat[retained_idx] @ mat[i]
            j = int(np.argmax(sims))
            if sims[j] > cfg.tau:
                removed.append((ids[i], retained_ids[j], float(sims[j])))
                continue
        retained_idx.append(i)
        retained_ids.append(ids[i])
    return retained_ids, removed


def curate(images: list, min_dim: int = 512, blocklist: Iterable = (),
           provider: EmbeddingProvider | None = None,
           dedup_cfg: DedupConfig | None = None,
           fetch_dir: str | None = None, max_attempts: int = 3,
           concurrency: int = 8):
    """Full stage-0 pass: resolution -> blocklist -> (fetch) -> dedup.

    Returns (kept_images, CurationReport).
    """
    report = CurationReport(input_count=len(images))
    kept, rej = filter_resolution(images, min_dim)
    report.rejected_resolution = len(rej)
    kept, rej = filter_blocklist(kept, list(blocklist))
    report.rejected_blocklist = len(rej)

    if fetch_dir is not None:
        kept, failures = fetch_images(kept, fetch_dir,
                                      max_attempts=max_attempts,
                                      concurrency=concurrency)
        report.fetch_failures = len(failures)

    if provider is not None:
        cfg = dedup_cfg or DedupConfig()
        vectors = embed_texts(provider, [img.alt_caption for img in kept],
                              normalize=cfg.normalize)
        retained_ids, removed = dedup_by_similarity(
            [img.id for img in kept], vectors, cfg)
        report.rejected_duplicate = len(removed)
        report.duplicate_witnesses = {rid: wid for rid, wid, _ in removed}
        retained = set(retained_ids)
        kept = [img for img in kept if img.id in retained]

    report.kept_count = len(kept)
    return kept, report
