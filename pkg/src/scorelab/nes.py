"""Score-query attack optimizers.

``audio_nes`` searches waveform space with sign-based NES steps,
``latent_nes`` searches the unit sphere of an inverse model's input, and
``audio_gd`` is the white-box gradient-descent baseline that needs the
extractor itself instead of an oracle.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import BudgetExceededError, DimensionMismatchError, TrainingDivergedError
from .geometry import clip, normalize
from .inverse import InverseModel
from .synthworld import FeatureExtractor


@dataclass(frozen=True)
class NesConfig:
    samples_per_draw: int = 50
    sigma: float = 1e-3
    lr_initial: float = 0.1
    lr_min: float = 1e-4
    momentum: float = 0.9
    max_iter: int = 1000
    candidate_pool: int = 100
    selected: int = 1
    early_stop_window: int | None = None
    query_budget: int = 50_000
    antithetic: bool = False
    # subtract the current point's loss from each sample loss before forming the estimate
    center_losses: bool = True
    # halve the step after this many iterations without a new best score
    plateau_patience: int = 5

    def __post_init__(self):
        if self.samples_per_draw < 1 or self.sigma <= 0 or self.lr_initial <= 0 or self.lr_min <= 0:
            raise ValueError("samples_per_draw, sigma and learning rates must be positive")
        if self.lr_min > self.lr_initial:
            raise ValueError("lr_min must not exceed lr_initial")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if not 1 <= self.selected <= self.candidate_pool:
            raise ValueError("need 1 <= selected <= candidate_pool")
        if self.antithetic and self.samples_per_draw % 2:
            raise ValueError("antithetic sampling needs an even samples_per_draw")
        if self.max_iter < 0 or self.query_budget < 0:
            raise ValueError("max_iter and query_budget must be non-negative")

    @classmethod
    def audio(cls, **overrides) -> "NesConfig":
        """Waveform-space defaults (sign descent, B = 50)."""
        return replace(cls(), **overrides)

    @classmethod
    def latent(cls, **overrides) -> "NesConfig":
        """Unit-sphere defaults for a 32-dimensional latent (B = 10)."""
        base = cls(samples_per_draw=10, sigma=0.1, lr_initial=0.5, lr_min=1e-6)
        return replace(base, **overrides)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AttackTrace:
    method: str
    best_scores: list[float] = field(default_factory=list)
    queries_per_step: list[int] = field(default_factory=list)
    total_queries: int = 0
    success: bool = False
    queries_at_success: int | None = None
    iterations: int = 0
    waveform: np.ndarray | None = field(default=None, repr=False)
    latent: np.ndarray | None = field(default=None, repr=False)
    stop_reason: str = ""

    @property
    def final_score(self) -> float:
        return self.best_scores[-1] if self.best_scores else float("nan")

    def jsonl(self) -> str:
        """One JSON record per step: iteration, cumulative queries, best score."""
        return "".join(
            json.dumps({"iteration": i, "queries": q, "best_score": round(s, 12)}) + "\n"
            for i, (q, s) in enumerate(zip(self.queries_per_step, self.best_scores))
        )

    def summary_row(self) -> dict:
        return {
            "success": self.success,
            "queries_at_success": self.queries_at_success,
            "final_score": self.final_score,
        }


def nes_gradient(losses, perturbations, sigma: float) -> np.ndarray:
    """NES estimate ``(1 / (B sigma)) * sum_i loss_i * eps_i``."""
    losses = np.asarray(losses, dtype=float)
    eps = np.atleast_2d(np.asarray(perturbations, dtype=float))
    if losses.ndim != 1 or losses.shape[0] != eps.shape[0] or losses.shape[0] == 0:
        raise DimensionMismatchError(f"{losses.shape[0]} losses for {eps.shape[0]} perturbations")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return losses @ eps / (losses.shape[0] * sigma)


def _draw(rng: np.random.Generator, config: NesConfig, dim: int) -> np.ndarray:
    if config.antithetic:
        half = rng.standard_normal((config.samples_per_draw // 2, dim))
        return np.vstack([half, -half])
    return rng.standard_normal((config.samples_per_draw, dim))


def _run(oracle, tau: float, config: NesConfig, rng: np.random.Generator, method: str, *,
         candidates: Callable[[int], np.ndarray], perturb: Callable, update: Callable,
         decode: Callable, dim: int, project_mean: Callable) -> AttackTrace:
    """Shared NES loop; the four callables define the search space."""
    trace = AttackTrace(method)
    used = 0

    def ask(batch) -> list[float] | None:
        nonlocal used
        batch = np.atleast_2d(batch)
        if used + batch.shape[0] > config.query_budget:
            return None
        try:
            scores = oracle.query_scores(batch)
        except BudgetExceededError:
            return None
        used += batch.shape[0]
        return scores

    def finish(reason: str) -> AttackTrace:
        trace.total_queries = used
        trace.stop_reason = reason
        return trace

    C = config.candidate_pool
    if config.query_budget < C:
        return finish("budget")
    starts = candidates(C)
    scores = ask(decode(starts))
    if scores is None:
        return finish("budget")
    order = np.argsort(scores)[::-1][: config.selected]
    x = starts[order[0]] if config.selected == 1 else project_mean(starts[order])
    if config.selected == 1:
        s_cur = scores[order[0]]
    else:
        s = ask(decode(x))
        if s is None:
            return finish("budget")
        s_cur = s[0]
    best, best_x = s_cur, x
    trace.best_scores.append(best)
    trace.queries_per_step.append(used)

    def record_success() -> AttackTrace:
        trace.success = True
        trace.queries_at_success = used
        return finish("success")

    if best >= tau:
        _attach(trace, decode, best_x, method)
        return record_success()

    velocity = np.zeros(dim)
    lr = config.lr_initial
    stall = since_best = 0
    reason = "max_iter"
    for _ in range(config.max_iter):
        eps = _draw(rng, config, dim)
        sample_scores = ask(decode(perturb(x, eps)))
        if sample_scores is None:
            reason = "budget"
            break
        losses = 1.0 - np.asarray(sample_scores)
        if config.center_losses:
            losses = losses - (1.0 - s_cur)
        g = nes_gradient(losses, eps, config.sigma)
        velocity = config.momentum * velocity + g
        x_new = update(x, lr, velocity)
        s = ask(decode(x_new))
        if s is None:
            reason = "budget"
            break
        x, s_cur = x_new, s[0]
        trace.iterations += 1
        if s_cur > best:
            best, best_x = s_cur, x
            stall = since_best = 0
        else:
            stall += 1
            since_best += 1
        trace.best_scores.append(best)
        trace.queries_per_step.append(used)
        if s_cur >= tau:
            _attach(trace, decode, x, method)
            return record_success()
        if stall >= config.plateau_patience:
            lr = max(lr / 2.0, config.lr_min)
            stall = 0
        if config.early_stop_window is not None and since_best >= config.early_stop_window:
            reason = "early_stop"
            break
    _attach(trace, decode, best_x, method)
    return finish(reason)


def _attach(trace: AttackTrace, decode, x, method: str) -> None:
    trace.waveform = np.asarray(decode(x)).reshape(-1)
    trace.latent = x.copy() if method == "latent-nes" else None


def audio_nes(oracle, tau: float, config: NesConfig, rng: np.random.Generator, n: int = 256) -> AttackTrace:
    """Score-only NES directly on the waveform.

    Starts from the best of ``candidate_pool`` clipped Gaussian waveforms,
    then repeats: B perturbed queries, NES estimate, momentum, signed step
    of size ``lr``, one query of the new point. Stops when the new point
    scores at least ``tau``, or on budget / max_iter / early stop.
    """
    return _run(
        oracle, tau, config, rng, "audio-nes",
        candidates=lambda k: clip(rng.standard_normal((k, n))),
        perturb=lambda w, eps: clip(w + config.sigma * eps),
        update=lambda w, lr, v: clip(w - lr * np.sign(v)),
        decode=lambda w: w,
        dim=n,
        project_mean=lambda ws: clip(ws.mean(axis=0)),
    )


def latent_nes(oracle, model: InverseModel, tau: float, config: NesConfig, rng: np.random.Generator) -> AttackTrace:
    """Score-only NES over unit latents decoded by ``model``.

    Every latent handed to the decoder is exactly renormalized.
    """
    d = model.d
    return _run(
        oracle, tau, config, rng, "latent-nes",
        candidates=lambda k: normalize(rng.standard_normal((k, d))),
        perturb=lambda z, eps: normalize(z + config.sigma * eps),
        update=lambda z, lr, v: normalize(z - lr * v),
        decode=model.invert,
        dim=d,
        project_mean=lambda zs: normalize(zs.mean(axis=0)),
    )


@dataclass(frozen=True)
class DescentConfig:
    lr: float = 1.0
    max_iter: int = 500
    tol: float = 1e-9
    init: np.ndarray | None = None
    seed: int = 0


def _cosine_loss_grad(extractor: FeatureExtractor, a: np.ndarray, target: np.ndarray):
    h = extractor.phi(a) @ extractor.weight.T
    norm = np.linalg.norm(h)
    if norm == 0.0:
        raise TrainingDivergedError("zero feature during descent", [])
    y = h / norm
    t = target / np.linalg.norm(target)
    loss = 1.0 - float(y @ t)
    grad_h = -(t - y * (y @ t)) / norm
    grad_a = extractor.weight.T @ grad_h
    if extractor.kind == "saturating":
        grad_a = grad_a * (1.0 - np.tanh(a) ** 2)
    return loss, grad_a


def audio_gd(extractor: FeatureExtractor, target, config: DescentConfig = DescentConfig()):
    """White-box descent on ``1 - cos(F(a), target)``; the waveform is clipped after each step.

    Returns ``(waveform, loss_history)`` with the loss recorded before each update.
    """
    target = np.asarray(target, dtype=float)
    if target.shape != (extractor.d,):
        raise DimensionMismatchError(f"target has shape {target.shape}, expected ({extractor.d},)")
    if config.init is None:
        a = clip(0.1 * np.random.default_rng(config.seed).standard_normal(extractor.n))
    else:
        a = clip(np.asarray(config.init, dtype=float))
    history: list[float] = []
    prev = np.inf
    for _ in range(config.max_iter):
        loss, grad = _cosine_loss_grad(extractor, a, target)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise TrainingDivergedError("non-finite loss during descent", history)
        history.append(loss)
        if abs(prev - loss) <= config.tol:
            break
        prev = loss
        a = clip(a - config.lr * grad)
    return a, history
