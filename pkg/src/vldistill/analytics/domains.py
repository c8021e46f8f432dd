"""URL-domain distribution over a curated image set."""
from __future__ import annotations

from dataclasses import dataclass
from urllib.parse import urlparse


@dataclass
class DomainStat:
    domain: str
    count: int
    pct: float
    cumulative_pct: float


@dataclass
class UnparsableUrl:
    index: int
    url: str


def _extract_domain(url: str, full_host: bool) -> str:
    host = urlparse(url).hostname
    if not host or "." not in host:
        raise ValueError(f"no hostname in {url!r}")
    if host.startswith("www."):
        host = host[4:]
    if full_host:
        return host
    # Last-two-labels heuristic; known limitation for ccTLDs like .co.uk.
    labels = host.split(".")
    return ".".join(labels[-2:])


def domain_stats(images: list, top_k: int = 12, full_host: bool = False):
    """Count images per domain.

    Returns (unique_domain_count, top_k stats sorted by count descending
    with lexicographic tie-break, unparsable urls). Percentages are over
    the parsable total; cumulative_pct follows the sorted order.
    """
    counts: dict = {}
    unparsable = []
    for i, img in enumerate(images):
        try:
            domain = _extract_domain(img.url, full_host)
        except ValueError:
            unparsable.append(UnparsableUrl(i, img.url))
            continue
        counts[domain] = counts.get(domain, 0) + 1

    total = sum(counts.values())
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    stats = []
    cumulative = 0.0
    for domain, count in ordered:
        pct = count / total * 100.0
        cumulative += pct
        stats.append(DomainStat(domain, count, pct, cumulative))
    return len(counts), stats[:top_k], unparsable
