"""Seeded synthetic speaker-recognition world.

Feature extractors are random linear maps (optionally preceded by an
elementwise tanh) followed by normalization onto the unit sphere. Every
object here is a pure function of its seed, so experiments can be rebuilt
from a JSON description without storing weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import clip, normalize, pinv

SCHEMA_VERSION = 1
KINDS = ("linear", "saturating")
SIGNATURE_AMPLITUDE = 0.8

_DEFAULT_N = 256
_DEFAULT_D = 32


def _rng(*words: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(w) for w in words]))


def _normalize_rows(W: np.ndarray) -> np.ndarray:
    return W / np.linalg.norm(W, axis=1, keepdims=True)


def _full_rank_weight(seed: int, n: int, d: int) -> np.ndarray:
    attempt = 0
    while True:
        W = _normalize_rows(_rng(seed, attempt).standard_normal((d, n)))
        if np.linalg.matrix_rank(W) == d:
            return W
        attempt += 1


@dataclass(frozen=True, eq=False)
class FeatureExtractor:
    """``extract(w) = normalize(weight @ phi(w))`` with phi = identity or tanh.

    ``base_seed``/``rho`` are set only for extractors derived with
    :func:`make_correlated_extractor`.
    """

    weight: np.ndarray = field(repr=False)
    kind: str
    seed: int
    base_seed: int | None = None
    rho: float = 1.0

    @property
    def n(self) -> int:
        return self.weight.shape[1]

    @property
    def d(self) -> int:
        return self.weight.shape[0]

    def phi(self, w: np.ndarray) -> np.ndarray:
        return np.tanh(w) if self.kind == "saturating" else w

    def extract(self, w) -> np.ndarray:
        """Features of one waveform (1-D) or a batch of waveforms (rows)."""
        w = np.asarray(w, dtype=float)
        return normalize(self.phi(w) @ self.weight.T)

    __call__ = extract

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "seed": self.seed,
            "n": self.n,
            "d": self.d,
            "kind": self.kind,
            "rho": self.rho,
            "base_seed": self.base_seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureExtractor":
        if doc.get("version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported extractor schema version {doc.get('version')!r}")
        if doc["base_seed"] is None:
            return make_extractor(doc["seed"], doc["n"], doc["d"], doc["kind"])
        base = make_extractor(doc["base_seed"], doc["n"], doc["d"], doc["kind"])
        return make_correlated_extractor(base, CorrelationSpec(doc["rho"], doc["seed"]))

    @classmethod
    def from_json(cls, text: str) -> "FeatureExtractor":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class CorrelationSpec:
    rho: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")


def make_extractor(seed: int, n: int = _DEFAULT_N, d: int = _DEFAULT_D, kind: str = "linear") -> FeatureExtractor:
    if kind not in KINDS:
        raise ValueError(f"unknown extractor kind {kind!r}; expected one of {KINDS}")
    if not 2 <= d <= n:
        raise ValueError(f"need 2 <= d <= n, got d={d}, n={n}")
    return FeatureExtractor(_full_rank_weight(seed, n, d), kind, int(seed))


def make_correlated_extractor(base: FeatureExtractor, spec: CorrelationSpec) -> FeatureExtractor:
    """Blend ``base`` with a fresh extractor: rows of rho*W_base + (1-rho)*W_fresh, renormalized.

    rho = 1 reproduces ``base`` exactly; rho = 0 is independent of it.
    """
    if base.base_seed is not None:
        raise ValueError("correlated extractors must be derived from a base extractor")
    fresh = _full_rank_weight(spec.seed, base.n, base.d)
    if spec.rho == 1.0:
        W = base.weight.copy()
    else:
        attempt = 0
        while True:
            W = _normalize_rows(spec.rho * base.weight + (1.0 - spec.rho) * fresh)
            if np.linalg.matrix_rank(W) == base.d:
                break
            attempt += 1
            fresh = _full_rank_weight(spec.seed + 7919 * attempt, base.n, base.d)
    return FeatureExtractor(W, base.kind, int(spec.seed), base_seed=base.seed, rho=float(spec.rho))


@dataclass(frozen=True, eq=False)
class Population:
    """Labeled synthetic utterances.

    ``identity_centers`` are the unit directions of the identity signatures
    in waveform space (the hidden speaker space of this world).
    """

    waveforms: np.ndarray = field(repr=False)
    identity_labels: np.ndarray = field(repr=False)
    identity_centers: np.ndarray = field(repr=False)
    within_spread: float
    seed: int

    def __len__(self) -> int:
        return self.waveforms.shape[0]

    @property
    def identities(self) -> int:
        return self.identity_centers.shape[0]

    def split_by_identity(self, holdout: float = 0.2) -> tuple["Population", "Population"]:
        """Deterministic split: the last ``holdout`` fraction of identities is held out."""
        k = self.identities - max(1, int(round(holdout * self.identities)))
        if k < 1:
            raise ValueError("split would leave no training identities")
        train = self.identity_labels < k
        return self._subset(train, np.arange(k)), self._subset(~train, np.arange(k, self.identities))

    def _subset(self, mask: np.ndarray, ids: np.ndarray) -> "Population":
        remap = {int(old): new for new, old in enumerate(ids)}
        labels = np.array([remap[int(l)] for l in self.identity_labels[mask]], dtype=int)
        return Population(self.waveforms[mask], labels, self.identity_centers[ids], self.within_spread, self.seed)

    def to_dict(self) -> dict:
        n_per = np.bincount(self.identity_labels)
        return {
            "version": SCHEMA_VERSION,
            "seed": self.seed,
            "identities": self.identities,
            "per_identity": int(n_per[0]),
            "within_spread": self.within_spread,
            "n": int(self.waveforms.shape[1]),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Population":
        if doc.get("version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported population schema version {doc.get('version')!r}")
        return make_population(doc["seed"], doc["identities"], doc["per_identity"], doc["within_spread"], doc["n"])


def make_population(
    seed: int,
    identities: int = 50,
    per_identity: int = 10,
    within_spread: float = 0.1,
    n: int = _DEFAULT_N,
) -> Population:
    """Utterances ``clip(signature + within_spread * noise)`` for each identity."""
    if identities < 2 or per_identity < 2:
        raise ValueError("need at least 2 identities and 2 utterances per identity")
    if within_spread < 0:
        raise ValueError("within_spread must be non-negative")
    rng = _rng(seed, 0x9E3779B9)
    signatures = SIGNATURE_AMPLITUDE * rng.uniform(-1.0, 1.0, size=(identities, n))
    labels = np.repeat(np.arange(identities), per_identity)
    noise = rng.standard_normal((identities * per_identity, n))
    waveforms = clip(signatures[labels] + within_spread * noise)
    return Population(waveforms, labels, normalize(signatures), float(within_spread), int(seed))


def analytic_inverse(extractor: FeatureExtractor):
    """Exact inverse of a linear extractor: ``x -> c * pinv(W) @ x``.

    ``c`` is the largest scale for which no unit feature produces an
    amplitude outside [-1, 1], so clipping never activates and
    ``extract(invert(x)) == x`` for every unit ``x``.
    """
    from .inverse import InverseModel

    if extractor.kind != "linear":
        raise ValueError("analytic inverse is only available for linear extractors; train one instead")
    Wp = pinv(extractor.weight)
    c = 1.0 / np.max(np.linalg.norm(Wp, axis=1))
    return InverseModel(
        kind="analytic",
        M=c * Wp,
        b=np.zeros(extractor.n),
        context=fixed_context(extractor.seed),
        source_extractor_seed=extractor.seed,
    )


def fixed_context(seed: int, size: int = 8) -> np.ndarray:
    """Constant conditioning vector carried by inverse models (fixed-text analog)."""
    return _rng(seed, 0xC0FFEE).standard_normal(size)


def hadamard(k: int) -> np.ndarray:
    """Sylvester Hadamard matrix; ``k`` must be a power of two."""
    if k < 1 or k & (k - 1):
        raise ValueError(f"Hadamard order must be a power of two, got {k}")
    H = np.ones((1, 1))
    while H.shape[0] < k:
        H = np.block([[H, H], [H, -H]])
    return H


def two_basis_frame(d: int, seed: int) -> np.ndarray:
    """2d unit vectors: a random orthonormal basis and its Hadamard rotation.

    Any two rows have |inner product| equal to 0 or 1/sqrt(d), so subsets of
    this frame are delta-orthogonal for every delta >= 1/sqrt(d).
    """
    H = hadamard(d) / np.sqrt(d)
    Q, R = np.linalg.qr(_rng(seed, 0xF4A3E).standard_normal((d, d)))
    Q = Q * np.sign(np.diag(R))
    return np.vstack([Q, H @ Q])


def synthesize_probes(inverse, frame: np.ndarray) -> np.ndarray:
    """Decode each frame direction into a waveform through ``inverse`` (one row per direction)."""
    return inverse.invert(normalize(frame))
