"""Verification and attack metrics.

Thresholds follow the similarity convention: a trial is accepted iff
``score >= tau``. EER and minDCF sweep an exhaustive candidate set (the
midpoints between adjacent distinct pooled scores plus two sentinels), on
which FAR and FRR take every value they can take.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedCorrelationError

DEFAULT_P_TARGET = 0.01
DEFAULT_C_MISS = 1.0
DEFAULT_C_FA = 1.0


@dataclass(frozen=True)
class ScoreSample:
    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.genuine, dtype=float).ravel()
        i = np.asarray(self.impostor, dtype=float).ravel()
        if g.size == 0 or i.size == 0:
            raise ValueError("genuine and impostor score lists must be non-empty")
        if np.any(np.abs(g) > 1.0) or np.any(np.abs(i) > 1.0):
            raise ValueError("scores must lie in [-1, 1]")
        object.__setattr__(self, "genuine", g)
        object.__setattr__(self, "impostor", i)


@dataclass(frozen=True)
class OperatingPoint:
    tau: float
    far: float
    frr: float


def _as_sample(sample) -> ScoreSample:
    return sample if isinstance(sample, ScoreSample) else ScoreSample(*sample)


def far_frr(sample, tau: float) -> tuple[float, float]:
    s = _as_sample(sample)
    far = float(np.mean(s.impostor >= tau))
    frr = float(np.mean(s.genuine < tau))
    return far, frr


def candidate_thresholds(sample) -> np.ndarray:
    s = _as_sample(sample)
    pooled = np.unique(np.concatenate([s.genuine, s.impostor]))
    mids = (pooled[:-1] + pooled[1:]) / 2.0
    # +1 rejects everything unless some score is exactly 1
    hi = 1.0 if pooled[-1] < 1.0 else np.nextafter(1.0, 2.0)
    return np.unique(np.concatenate([[-1.0], mids, [hi]]))


def _counts(s: ScoreSample, taus: np.ndarray):
    imp = np.sort(s.impostor)
    gen = np.sort(s.genuine)
    fa = imp.size - np.searchsorted(imp, taus, side="left")
    miss = np.searchsorted(gen, taus, side="left")
    return fa, miss


def eer(sample) -> tuple[float, OperatingPoint]:
    """Equal error rate at the candidate minimizing |FAR - FRR|.

    Ties go to the smaller FAR, then the smaller threshold.
    """
    s = _as_sample(sample)
    taus = candidate_thresholds(s)
    fa, miss = _counts(s, taus)
    ni, ng = s.impostor.size, s.genuine.size
    # exact integer comparison of |fa/ni - miss/ng|
    gap = np.abs(fa * ng - miss * ni)
    k = np.lexsort((taus, fa, gap))[0]
    far, frr = fa[k] / ni, miss[k] / ng
    return (far + frr) / 2.0, OperatingPoint(float(taus[k]), float(far), float(frr))


def min_dcf(sample, p_target: float = DEFAULT_P_TARGET, c_miss: float = DEFAULT_C_MISS,
            c_fa: float = DEFAULT_C_FA) -> tuple[float, OperatingPoint]:
    """Minimum of ``c_miss * FRR * (1 - p_target) + c_fa * FAR * p_target``; ties to the smaller tau."""
    if not 0.0 < p_target < 1.0:
        raise ValueError("p_target must lie in (0, 1)")
    if c_miss <= 0 or c_fa <= 0:
        raise ValueError("costs must be positive")
    s = _as_sample(sample)
    taus = candidate_thresholds(s)
    fa, miss = _counts(s, taus)
    far, frr = fa / s.impostor.size, miss / s.genuine.size
    cost = c_miss * frr * (1.0 - p_target) + c_fa * far * p_target
    k = int(np.argmin(cost))
    return float(cost[k]), OperatingPoint(float(taus[k]), float(far[k]), float(frr[k]))


def asr(final_scores, tau: float) -> float:
    scores = np.asarray(final_scores, dtype=float)
    if scores.size == 0:
        raise ValueError("no scores")
    return float(np.mean(scores >= tau))


def score_discrepancy(local, target) -> tuple[float, float, float]:
    """Mean and population std of ``|local - target|``, and the Pearson r of the pairs."""
    a = np.asarray(local, dtype=float)
    b = np.asarray(target, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("need equal-length paired score lists of length >= 2")
    diff = np.abs(a - b)
    ac, bc = a - a.mean(), b - b.mean()
    denom = np.sqrt((ac @ ac) * (bc @ bc))
    if denom == 0.0:
        raise UndefinedCorrelationError("Pearson correlation undefined for zero-variance input")
    r = float(np.clip((ac @ bc) / denom, -1.0, 1.0))
    return float(diff.mean()), float(diff.std()), r


def metrics_report(sample, p_target: float = DEFAULT_P_TARGET, c_miss: float = DEFAULT_C_MISS,
                   c_fa: float = DEFAULT_C_FA) -> dict:
    s = _as_sample(sample)
    e, e_op = eer(s)
    dcf, d_op = min_dcf(s, p_target, c_miss, c_fa)
    return {
        "eer": e,
        "tau_E": e_op.tau,
        "min_dcf": dcf,
        "tau_M": d_op.tau,
        "p_target": p_target,
        "c_miss": c_miss,
        "c_fa": c_fa,
        "n_genuine": int(s.genuine.size),
        "n_impostor": int(s.impostor.size),
        "std_convention": "population",
    }
