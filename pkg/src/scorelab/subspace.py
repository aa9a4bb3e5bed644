"""Non-adaptive subspace-projection (SP) attack.

The attacker fixes a set of probe waveforms whose local features are nearly
orthogonal (a delta-orthogonal set), asks the oracle for one score per
probe, solves ``A r = s`` in the least-squares sense and decodes the
normalized solution with an inverse model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, InfeasibleDeltaError
from .geometry import condition_number, least_squares, normalize
from .inverse import InverseModel
from .synthworld import FeatureExtractor, Population

SCHEMA_VERSION = 1


@dataclass(frozen=True, eq=False)
class OrthogonalSet:
    members: np.ndarray = field(repr=False)
    features: np.ndarray = field(repr=False)
    delta: float
    indices: tuple[int, ...]
    max_abs_cos: float
    pool_seed: int | None = None

    @property
    def m(self) -> int:
        return self.members.shape[0]

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "pool_seed": self.pool_seed,
            "indices": list(self.indices),
            "delta": self.delta,
            "m": self.m,
            "max_abs_cos": self.max_abs_cos,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict, pool, extractor: FeatureExtractor) -> "OrthogonalSet":
        """Rebuild from the stored indices into ``pool``; the certificate is recomputed."""
        if doc.get("version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported orthogonal-set schema version {doc.get('version')!r}")
        waveforms, seed = _pool_waveforms(pool)
        idx = list(doc["indices"])
        members = waveforms[idx]
        feats = extractor.extract(members)
        worst = _max_offdiag(feats)
        if worst > doc["delta"]:
            raise InfeasibleDeltaError(len(idx), doc["m"], doc["delta"])
        return cls(members, feats, float(doc["delta"]), tuple(idx), worst, seed)


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    raw: np.ndarray = field(repr=False)
    recovered: np.ndarray = field(repr=False)
    scores: np.ndarray = field(repr=False)
    residual: float
    cond: float
    queries_used: int

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "recovered": self.recovered.tolist(),
            "scores": self.scores.tolist(),
            "residual": self.residual,
            "cond": self.cond,
            "queries_used": self.queries_used,
        }


def _pool_waveforms(pool) -> tuple[np.ndarray, int | None]:
    if isinstance(pool, Population):
        return pool.waveforms, pool.seed
    return np.atleast_2d(np.asarray(pool, dtype=float)), None


def _max_offdiag(features: np.ndarray) -> float:
    if features.shape[0] < 2:
        return 0.0
    G = np.abs(features @ features.T)
    np.fill_diagonal(G, 0.0)
    return float(G.max())


def build_delta_obs(pool, extractor: FeatureExtractor, delta: float, m: int, seed: int = 0) -> OrthogonalSet:
    """Greedy delta-orthogonal selection over ``pool`` in a seeded random order.

    A waveform is admitted iff the absolute cosine of its feature with every
    admitted feature is at most ``delta``. The final set is re-verified by a
    brute-force pairwise check. ``pool`` is a Population or an (N, n) array.
    """
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must lie in [0, 1)")
    if m < 1:
        raise ValueError("m must be at least 1")
    waveforms, pool_seed = _pool_waveforms(pool)
    if waveforms.shape[0] == 0:
        raise ValueError("empty pool")
    feats = extractor.extract(waveforms)
    order = np.random.default_rng(seed).permutation(waveforms.shape[0])
    chosen: list[int] = []
    for i in order:
        if not chosen or np.max(np.abs(feats[chosen] @ feats[i])) <= delta:
            chosen.append(int(i))
            if len(chosen) == m:
                break
    if len(chosen) < m:
        raise InfeasibleDeltaError(len(chosen), m, delta)
    A = feats[chosen]
    worst = _max_offdiag(A)
    # brute-force certificate, independent of the incremental checks above
    for a in range(m):
        for b in range(a + 1, m):
            if abs(float(A[a] @ A[b])) > delta:
                raise AssertionError(f"certification failed for members {a}, {b}")
    return OrthogonalSet(waveforms[chosen], A, float(delta), tuple(chosen), worst, pool_seed)


def sp_attack(oracle, local: FeatureExtractor, model: InverseModel, obs: OrthogonalSet):
    """Score every member once, solve ``A r = s``, decode ``r / |r|``.

    Uses exactly ``obs.m`` oracle queries. The query list is fixed before any
    score is seen. Returns ``(RecoveryResult, attack_waveform)``.
    """
    if obs.features.shape[1] != model.d or local.d != model.d:
        raise ValueError("orthogonal set, local extractor and inverse model disagree on d")
    scores = np.asarray(oracle.query_scores(obs.members), dtype=float)
    raw, residual = least_squares(obs.features, scores)
    if not np.linalg.norm(raw) > 0.0:
        raise DegenerateInputError("recovered vector is zero; cannot normalize")
    recovered = normalize(raw)
    result = RecoveryResult(raw, recovered, scores, float(residual), condition_number(obs.features), obs.m)
    return result, model.invert(recovered)


def recovery_error_check(A, y, noise_level: float, trials: int, rng: np.random.Generator) -> float:
    """Largest observed ``(|x' - x| / |x|) / (cond(A) * |y' - y| / |y|)`` over random perturbations.

    ``y' = y + eps`` with ``|eps| = noise_level * |y|``. The least-squares
    error bound says the ratio never exceeds 1.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    if A.ndim != 2 or y.shape != (A.shape[0],):
        raise ValueError("need an (m, d) matrix and a length-m vector")
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise DegenerateInputError("A must have full column rank")
    if noise_level <= 0 or trials < 1:
        raise ValueError("noise_level and trials must be positive")
    x, _ = least_squares(A, y)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0:
        raise DegenerateInputError("least-squares solution is zero; relative error undefined")
    kappa = condition_number(A)
    worst = 0.0
    for _ in range(trials):
        eps = rng.standard_normal(y.shape[0])
        eps *= noise_level * ny / np.linalg.norm(eps)
        x2, _ = least_squares(A, y + eps)
        ratio = (np.linalg.norm(x2 - x) / nx) / (kappa * noise_level)
        worst = max(worst, float(ratio))
    return worst
