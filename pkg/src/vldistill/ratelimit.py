"""Shared request pacing: sliding-window rate limiter and retry policy.

The limiter guarantees the strict contract "no window of `period`
seconds contains more than `rate` request starts", which a classic
token bucket with nonzero burst capacity cannot. Clock and sleep are
injectable for deterministic tests.
"""
from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field


DEFAULT_RETRYABLE = frozenset({429, 500, 502, 503, 504})


@dataclass
class RetryPolicy:
    max_attempts: int = 3
    base_backoff_ms: float = 100.0
    backoff_multiplier: float = 2.0
    retryable_statuses: frozenset = field(default_factory=lambda: DEFAULT_RETRYABLE)

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.backoff_multiplier < 1.0:
            raise ValueError("backoff must be nondecreasing across attempts")
        self.retryable_statuses = frozenset(self.retryable_statuses)

    def backoff_s(self, attempt: int) -> float:
        """Sleep before retry number `attempt` (1-based)."""
        return self.base_backoff_ms / 1000.0 * self.backoff_multiplier ** (attempt - 1)

    def is_retryable(self, status: int) -> bool:
        return status in self.retryable_statuses


class RateLimiter:
    """Thread-safe limiter: at most `rate` starts per sliding `period` seconds."""

    def __init__(self, rate: int, period: float = 60.0, *, time_fn=None, sleep_fn=None):
        if rate < 1:
            raise ValueError("rate must be >= 1")
        self.rate = rate
        self.period = period
        self._time = time_fn or time.monotonic
        self._sleep = sleep_fn or time.sleep
        self._starts = deque()
        self._lock = threading.Lock()

    def acquire(self) -> float:
        """Block until a request may start; returns the start timestamp."""
        while True:
            with self._lock:
                now = self._time()
                while self._starts and self._starts[0] <= now - self.period:
                    self._starts.popleft()
                if len(self._starts) < self.rate:
                    self._starts.append(now)
                    return now
                wait = self._starts[0] + self.period - now
            self._sleep(max(wait, 1e-4))
