"""Inverse models (feature -> waveform), their training losses and evaluation.

The trained decoder is a single affine map followed by the amplitude clip:
``invert(x) = clip(M @ x + b)``. Analytic inverses from
:func:`scorelab.synthworld.analytic_inverse` use the same form with
``M = c * pinv(W)`` and ``b = 0``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionMismatchError, TrainingDivergedError
from .geometry import clip, normalize, perturb_angular
from .synthworld import FeatureExtractor, Population, fixed_context

SCHEMA_VERSION = 1


@dataclass(eq=False)
class InverseModel:
    kind: str  # "analytic" or "trained"
    M: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    context: np.ndarray = field(repr=False)
    source_extractor_seed: int
    config: dict | None = None

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @property
    def d(self) -> int:
        return self.M.shape[1]

    def invert(self, x) -> np.ndarray:
        """Waveform(s) for unit feature(s) ``x`` (1-D, or one feature per row)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise DimensionMismatchError(f"feature dimension {x.shape[-1]} != model dimension {self.d}")
        return clip(x @ self.M.T + self.b)

    __call__ = invert

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "kind": self.kind,
            "n": self.n,
            "d": self.d,
            "M": self.M.tolist(),
            "b": self.b.tolist(),
            "context": self.context.tolist(),
            "source_extractor_seed": self.source_extractor_seed,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "InverseModel":
        if doc.get("version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported inverse-model schema version {doc.get('version')!r}")
        M = np.asarray(doc["M"], dtype=float).reshape(doc["n"], doc["d"])
        return cls(doc["kind"], M, np.asarray(doc["b"], dtype=float), np.asarray(doc["context"], dtype=float),
                   doc["source_extractor_seed"], doc.get("config"))

    @classmethod
    def from_json(cls, text: str) -> "InverseModel":
        return cls.from_dict(json.loads(text))


def invert(model: InverseModel, x) -> np.ndarray:
    return model.invert(x)


@dataclass
class TrainConfig:
    lambda_ic: float = 5.0
    lambda_sc: float = 1.0
    batch_size: int = 64
    steps: int = 1500
    lr_initial: float = 0.1
    lr_final: float = 1e-3
    seed: int = 0
    init_scale: float = 0.01

    def __post_init__(self):
        if self.lambda_ic < 0 or self.lambda_sc < 0 or self.lambda_ic + self.lambda_sc <= 0:
            raise ValueError("loss weights must be non-negative with a positive sum")
        if self.batch_size < 2 or self.steps < 0:
            raise ValueError("batch_size must be >= 2 and steps >= 0")
        if not 0 < self.lr_final <= self.lr_initial:
            raise ValueError("need 0 < lr_final <= lr_initial")

    def learning_rate(self, step: int) -> float:
        """Geometric decay from ``lr_initial`` to ``lr_final`` over ``steps``."""
        if self.steps <= 1:
            return self.lr_initial
        return self.lr_initial * (self.lr_final / self.lr_initial) ** (step / (self.steps - 1))


# ---------------------------------------------------------------------------
# losses


def _round_trip(extractor: FeatureExtractor, model: InverseModel, batch: np.ndarray):
    x = extractor.extract(batch)
    u = x @ model.M.T + model.b
    v = clip(u)
    h = extractor.phi(v) @ extractor.weight.T
    norms = np.linalg.norm(h, axis=1, keepdims=True)
    y = normalize(h)
    return x, u, v, h, norms, y


def _ic(x, y) -> float:
    return float(np.mean(1.0 - np.sum(x * y, axis=1)))


def _sc_residual(x, y) -> np.ndarray:
    diff = x @ x.T - y @ y.T
    np.fill_diagonal(diff, 0.0)
    return diff


def loss_ic(extractor: FeatureExtractor, model: InverseModel, batch) -> float:
    """Mean of ``1 - <F(a_i), F(invert(F(a_i)))>`` over the batch."""
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    x, *_, y = _round_trip(extractor, model, batch)
    return _ic(x, y)


def loss_sc(extractor: FeatureExtractor, model: InverseModel, batch) -> float:
    """Mean absolute difference between original and round-trip similarity matrices."""
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    if batch.shape[0] < 2:
        raise ValueError("structure loss needs a batch of at least 2")
    x, *_, y = _round_trip(extractor, model, batch)
    return float(np.abs(_sc_residual(x, y)).sum() / batch.shape[0] ** 2)


def loss_total(extractor: FeatureExtractor, model: InverseModel, batch, config: TrainConfig) -> float:
    total = 0.0
    if config.lambda_ic:
        total += config.lambda_ic * loss_ic(extractor, model, batch)
    if config.lambda_sc:
        total += config.lambda_sc * loss_sc(extractor, model, batch)
    return total


def loss_and_gradients(extractor: FeatureExtractor, model: InverseModel, batch,
                       lambda_ic: float, lambda_sc: float):
    """Weighted loss and its gradients with respect to ``M`` and ``b``.

    Returns ``(total, l_ic, l_sc, grad_M, grad_b)``. The clip contributes
    derivative 1 strictly inside (-1, 1) and 0 elsewhere; ``|.|`` in the
    structure loss uses the sign subgradient.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    N = batch.shape[0]
    x, u, v, h, norms, y = _round_trip(extractor, model, batch)
    l_ic = _ic(x, y)
    resid = _sc_residual(x, y)
    l_sc = float(np.abs(resid).sum() / N**2)

    grad_y = -(lambda_ic / N) * x
    if lambda_sc:
        # d|S - S~| / dS~ = -sign(S - S~); S~ is symmetric so both (i,j), (j,i) count
        g = -np.sign(resid)
        grad_y = grad_y + (lambda_sc / N**2) * ((g + g.T) @ y)

    grad_h = (grad_y - y * np.sum(y * grad_y, axis=1, keepdims=True)) / norms
    grad_v = grad_h @ extractor.weight
    if extractor.kind == "saturating":
        grad_v = grad_v * (1.0 - np.tanh(v) ** 2)
    grad_u = grad_v * (np.abs(u) < 1.0)
    total = lambda_ic * l_ic + lambda_sc * l_sc
    return total, l_ic, l_sc, grad_u.T @ x, grad_u.sum(axis=0)


# ---------------------------------------------------------------------------
# training


def init_inverse(extractor: FeatureExtractor, config: TrainConfig) -> InverseModel:
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x1217]))
    M = config.init_scale * rng.standard_normal((extractor.n, extractor.d))
    return InverseModel("trained", M, np.zeros(extractor.n), fixed_context(extractor.seed),
                        extractor.seed, asdict(config))


def train_inverse(extractor: FeatureExtractor, pool: Population | np.ndarray, config: TrainConfig,
                  init: InverseModel | None = None) -> tuple[InverseModel, list[float]]:
    """Fit an affine decoder to ``extractor`` on ``pool`` by minibatch gradient descent.

    The update is plain gradient descent with a geometrically decaying step.
    ``loss_history[k]`` is the total loss on step ``k``'s batch before the
    update. Raises TrainingDivergedError if the loss stops being finite.
    """
    waveforms = pool.waveforms if isinstance(pool, Population) else np.asarray(pool, dtype=float)
    if waveforms.shape[0] < config.batch_size:
        raise ValueError(f"pool of {waveforms.shape[0]} is smaller than batch_size {config.batch_size}")
    model = init_inverse(extractor, config) if init is None else InverseModel(
        "trained", init.M.copy(), init.b.copy(), init.context.copy(), init.source_extractor_seed, asdict(config))
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xBA7C4]))
    history: list[float] = []
    for step in range(config.steps):
        idx = rng.choice(waveforms.shape[0], size=config.batch_size, replace=False)
        total, _, _, gM, gb = loss_and_gradients(extractor, model, waveforms[idx],
                                                 config.lambda_ic, config.lambda_sc)
        if not np.isfinite(total) or not (np.all(np.isfinite(gM)) and np.all(np.isfinite(gb))):
            raise TrainingDivergedError(f"non-finite loss at step {step}", history)
        history.append(float(total))
        lr = config.learning_rate(step)
        model.M -= lr * gM
        model.b -= lr * gb
    return model, history


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class RoundTripReport:
    local_scores: np.ndarray
    transfer_scores: np.ndarray
    positive_ref: np.ndarray
    negative_ref: np.ndarray
    pairing: str = "all same-identity pairs; equal-count random different-identity pairs"

    def summary(self) -> dict:
        def stats(a):
            return {"mean": float(np.mean(a)), "std": float(np.std(a)), "count": int(a.size)}

        return {
            "local": stats(self.local_scores),
            "transfer": stats(self.transfer_scores),
            "positive_ref": stats(self.positive_ref),
            "negative_ref": stats(self.negative_ref),
            "pairing": self.pairing,
        }


def reference_scores(extractor: FeatureExtractor, pool: Population, seed: int | None = None):
    """Same-identity (all pairs) and different-identity (equal-count sample) cosine scores."""
    feats = extractor.extract(pool.waveforms)
    S = np.clip(feats @ feats.T, -1.0, 1.0)
    labels = pool.identity_labels
    iu, ju = np.triu_indices(len(labels), k=1)
    same = labels[iu] == labels[ju]
    positive = S[iu[same], ju[same]]
    diff_i, diff_j = iu[~same], ju[~same]
    rng = np.random.default_rng(np.random.SeedSequence([pool.seed if seed is None else seed, 0x4E6]))
    pick = rng.choice(diff_i.size, size=min(positive.size, diff_i.size), replace=False)
    negative = S[diff_i[pick], diff_j[pick]]
    return positive, negative


def round_trip_scores(eval_extractor: FeatureExtractor, cond_extractor: FeatureExtractor,
                      model: InverseModel, waveforms: np.ndarray) -> np.ndarray:
    """``<F_eval(v), F_eval(invert(F_cond(v)))>`` for each waveform row."""
    recon = model.invert(cond_extractor.extract(waveforms))
    a = eval_extractor.extract(waveforms)
    b = eval_extractor.extract(recon)
    return np.clip(np.sum(a * b, axis=1), -1.0, 1.0)


def round_trip_report(eval_extractor: FeatureExtractor, cond_extractor: FeatureExtractor,
                      model: InverseModel, pool: Population) -> RoundTripReport:
    """Local (s_L, under ``cond_extractor``) and transfer (s_T, under ``eval_extractor``) round trips."""
    if len(pool) == 0:
        raise ValueError("empty pool")
    local = round_trip_scores(cond_extractor, cond_extractor, model, pool.waveforms)
    transfer = round_trip_scores(eval_extractor, cond_extractor, model, pool.waveforms)
    positive, negative = reference_scores(eval_extractor, pool)
    return RoundTripReport(local, transfer, positive, negative)


def angular_robustness(extractor: FeatureExtractor, model: InverseModel, pool: Population,
                       angles=(0, 10, 20, 30, 40), seed: int = 0) -> list[tuple[float, float, float]]:
    """Round-trip similarity to the clean feature after rotating it by each angle.

    Returns rows ``(angle, mean, std)``. The random rotation directions are
    shared across angles (same stream per angle), so rows are paired.
    """
    feats = extractor.extract(pool.waveforms)
    rows = []
    for theta in angles:
        if not 0.0 <= theta <= 90.0:
            raise ValueError(f"angle {theta} outside [0, 90] degrees")
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA96]))
        noisy = np.vstack([perturb_angular(x, theta, rng) for x in feats])
        recon = extractor.extract(model.invert(noisy))
        s = np.clip(np.sum(recon * feats, axis=1), -1.0, 1.0)
        rows.append((float(theta), float(np.mean(s)), float(np.std(s))))
    return rows
