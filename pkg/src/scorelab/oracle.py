"""Black-box verification oracle with strict query accounting."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceededError
from .geometry import as_waveform, cosine
from .synthworld import FeatureExtractor


@dataclass(frozen=True, eq=False)
class EnrolledTemplate:
    template: np.ndarray = field(repr=False)
    identity_label: int


def enroll(extractor: FeatureExtractor, w, label: int) -> EnrolledTemplate:
    return EnrolledTemplate(extractor.extract(as_waveform(w)), int(label))


class QueryLedger:
    """Thread-safe query counter with an optional hard budget."""

    def __init__(self, budget: int | None = None):
        if budget is not None and budget < 0:
            raise ValueError("budget must be non-negative")
        self.budget = budget
        self._count = 0
        self._lock = threading.Lock()

    @property
    def count(self) -> int:
        return self._count

    @property
    def remaining(self) -> int | None:
        return None if self.budget is None else self.budget - self._count

    def charge(self, k: int = 1) -> None:
        with self._lock:
            if self.budget is not None and self._count + k > self.budget:
                raise BudgetExceededError(self._count, self.budget)
            self._count += k


class VerificationOracle:
    """Score-only access to one enrolled identity.

    Only :meth:`query_score`, :meth:`query_scores` and :meth:`verify` are
    meant for attackers; each returns plain floats/booleans and charges the
    ledger once per waveform scored.
    """

    def __init__(self, extractor: FeatureExtractor, template: EnrolledTemplate, budget: int | None = None):
        self._extractor = extractor
        self._template = template
        self.ledger = QueryLedger(budget)

    @property
    def queries(self) -> int:
        return self.ledger.count

    def query_score(self, w) -> float:
        w = as_waveform(w)
        self.ledger.charge(1)
        return cosine(self._extractor.extract(w), self._template.template)

    def query_scores(self, batch) -> list[float]:
        """Score several waveforms; charged as ``len(batch)`` queries, all or nothing."""
        batch = np.atleast_2d(np.asarray(batch, dtype=float))
        for w in batch:
            as_waveform(w)
        self.ledger.charge(batch.shape[0])
        feats = self._extractor.extract(batch)
        return np.clip(feats @ self._template.template, -1.0, 1.0).tolist()

    def verify(self, w, tau: float) -> bool:
        """Accept iff score >= tau."""
        return self.query_score(w) >= tau


def judge(extractor: FeatureExtractor, template: EnrolledTemplate, w) -> float:
    """Evaluator-side score; never touches any attacker's ledger."""
    return cosine(extractor.extract(as_waveform(w)), template.template)
