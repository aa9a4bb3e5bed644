"""Experiment orchestration: configuration, seeding, scenario runs and result files.

Every random draw in a run is derived from ``ExperimentConfig.seed`` through
``numpy.random.SeedSequence`` with fixed integer tags, so a config plus its
master seed reproduces every output byte. Wall-clock data lives only in
``meta.json``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ScorelabError
from .inverse import InverseModel, TrainConfig, angular_robustness, round_trip_report, train_inverse
from .metrics import ScoreSample, metrics_report
from .nes import DescentConfig, NesConfig, audio_gd, audio_nes, latent_nes
from .oracle import VerificationOracle, enroll, judge
from .subspace import OrthogonalSet, build_delta_obs, sp_attack
from .synthworld import (
    CorrelationSpec,
    FeatureExtractor,
    Population,
    analytic_inverse,
    make_correlated_extractor,
    make_extractor,
    make_population,
    synthesize_probes,
    two_basis_frame,
)

METHODS = ("sp", "audio-gd", "latent-nes", "audio-nes")
THRESHOLDS = ("tau_E", "tau_M")
RESULT_COLUMNS = (
    "scenario", "rho", "victim", "method", "threshold", "tau", "success",
    "queries_at_success", "total_queries", "final_score", "config_hash", "error",
)
ABLATION_COLUMNS = ("run", "lambda_ic", "lambda_sc", "rho", "s_L_mean", "s_T_mean", "positive_mean", "negative_mean")
ID_COLUMNS = ("inverse", "angle", "mean", "std")

# stream tags for derive_seed
_LOCAL, _TARGET, _CALIB, _VICTIMS, _FRAME, _OBS, _TRIAL, _TRAIN, _ANGLES, _ABLATION = range(1, 11)


def derive_seed(master: int, *tags: int) -> int:
    return int(np.random.SeedSequence([int(master), *map(int, tags)]).generate_state(1)[0])


def _rng(master: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master), *map(int, tags)]))


class ConfigError(ValueError):
    pass


class ReportError(ScorelabError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class ExperimentConfig:
    # world
    n: int = 256
    d: int = 32
    identities: int = 50
    per_identity: int = 10
    within_spread: float = 0.1
    kind: str = "linear"
    rhos: tuple = (0.5, 0.75, 0.9, 1.0)
    # attacks
    methods: tuple = METHODS
    thresholds: tuple = THRESHOLDS
    inverse: str = "analytic"
    nes_audio: dict = field(default_factory=dict)
    nes_latent: dict = field(default_factory=dict)
    descent: dict = field(default_factory=lambda: {"lr": 1.0, "max_iter": 500})
    train: dict = field(default_factory=dict)
    delta: float = 0.2
    m: int = 50
    # metrics
    p_target: float = 0.01
    c_miss: float = 1.0
    c_fa: float = 1.0
    # run
    trials: int = 20
    seed: int = 0
    out: str = "results"
    workers: int = 1
    ablation_runs: int = 5
    angles: tuple = (0, 10, 20, 30, 40)

    def __post_init__(self):
        for name in ("rhos", "methods", "thresholds", "angles"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; expected a subset of {METHODS}")
        bad = [t for t in self.thresholds if t not in THRESHOLDS]
        if bad:
            raise ConfigError(f"unknown thresholds {bad}; expected a subset of {THRESHOLDS}")
        if any(not 0.0 <= r <= 1.0 for r in self.rhos):
            raise ConfigError("every rho must lie in [0, 1]")
        if self.inverse not in ("analytic", "trained"):
            raise ConfigError("inverse must be 'analytic' or 'trained'")
        if self.inverse == "analytic" and self.kind != "linear":
            raise ConfigError("the analytic inverse needs kind='linear'; use inverse='trained'")
        if self.trials < 0 or self.workers < 1 or self.ablation_runs < 0:
            raise ConfigError("trials and ablation_runs must be >= 0, workers >= 1")
        # surface bad nested keys now instead of mid-run
        try:
            self.audio_config()
            self.latent_config()
            self.descent_config()
            self.train_config()
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def audio_config(self) -> NesConfig:
        return NesConfig.audio(**self.nes_audio)

    def latent_config(self) -> NesConfig:
        return NesConfig.latent(**self.nes_latent)

    def descent_config(self, seed: int = 0) -> DescentConfig:
        return DescentConfig(**{**self.descent, "seed": seed})

    def train_config(self, **overrides) -> TrainConfig:
        return TrainConfig(**{**self.train, **overrides})

    def to_dict(self) -> dict:
        doc = asdict(self)
        for name in ("rhos", "methods", "thresholds", "angles"):
            doc[name] = list(doc[name])
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())

    def config_hash(self) -> str:
        """Hash of everything that affects results (output path and worker count excluded)."""
        doc = self.to_dict()
        del doc["out"], doc["workers"]
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class World:
    local: FeatureExtractor
    targets: dict
    calibration: Population
    victims: Population | None
    inverse: InverseModel


def build_world(config: ExperimentConfig) -> World:
    s = config.seed
    local = make_extractor(derive_seed(s, _LOCAL), config.n, config.d, config.kind)
    targets = {
        rho: make_correlated_extractor(local, CorrelationSpec(rho, derive_seed(s, _TARGET, i)))
        for i, rho in enumerate(config.rhos)
    }
    calibration = make_population(derive_seed(s, _CALIB), config.identities, config.per_identity,
                                  config.within_spread, config.n)
    victims = None
    if config.trials > 0:
        victims = make_population(derive_seed(s, _VICTIMS), max(config.trials, 2), 2,
                                  config.within_spread, config.n)
    if config.inverse == "analytic":
        inverse = analytic_inverse(local)
    else:
        train_pool, _ = calibration.split_by_identity()
        inverse, _ = train_inverse(local, train_pool, config.train_config(seed=derive_seed(s, _TRAIN)))
    return World(local, targets, calibration, victims, inverse)


def _pair_scores(extractor: FeatureExtractor, pop: Population):
    F = extractor.extract(pop.waveforms)
    S = np.clip(F @ F.T, -1.0, 1.0)
    iu = np.triu_indices(len(pop), 1)
    same = (pop.identity_labels[:, None] == pop.identity_labels[None, :])[iu]
    return S[iu][same], S[iu][~same]


def calibrate(config: ExperimentConfig, world: World | None = None) -> dict:
    """EER/minDCF operating points of every target oracle on the calibration population."""
    world = world or build_world(config)
    out = {}
    for rho, target in world.targets.items():
        genuine, impostor = _pair_scores(target, world.calibration)
        report = metrics_report(ScoreSample(genuine, impostor), config.p_target, config.c_miss, config.c_fa)
        report["warnings"] = []
        if genuine.size + impostor.size < 100:
            report["warnings"].append("fewer than 100 calibration pairs; thresholds may be unstable")
        out[_rho_key(rho)] = report
    return out


def _rho_key(rho: float) -> str:
    return repr(float(rho))


@dataclass
class _Unit:
    rho_index: int
    rho: float
    victim: int
    method: str
    threshold: str
    tau: float


def probe_set(config: ExperimentConfig, world: World) -> OrthogonalSet:
    """Delta-orthogonal SP probes decoded from a two-basis frame through the world's inverse.

    Natural utterances cannot supply m = 50 members at delta = 0.2 in 32
    dimensions, so the pool is synthesized; selection is still greedy.
    """
    frame = two_basis_frame(config.d, derive_seed(config.seed, _FRAME))
    probes = synthesize_probes(world.inverse, frame)
    return build_delta_obs(probes, world.local, config.delta, config.m, seed=derive_seed(config.seed, _OBS))


def _run_unit(config: ExperimentConfig, world: World, obs, unit: _Unit, chash: str):
    target = world.targets[unit.rho]
    template = enroll(target, world.victims.waveforms[2 * unit.victim], unit.victim)
    rng = _rng(config.seed, _TRIAL, unit.rho_index, unit.victim,
               METHODS.index(unit.method), THRESHOLDS.index(unit.threshold))
    row = {
        "scenario": f"rho={unit.rho:g}", "rho": unit.rho, "victim": unit.victim, "method": unit.method,
        "threshold": unit.threshold, "tau": unit.tau, "success": False, "queries_at_success": "",
        "total_queries": 0, "final_score": "", "config_hash": chash, "error": "",
    }
    trace = None
    oracle = None
    try:
        if unit.method in ("sp", "audio-gd"):
            if isinstance(obs, Exception):
                raise obs
            oracle = VerificationOracle(target, template, budget=obs.m)
            result, wave = sp_attack(oracle, world.local, world.inverse, obs)
            if unit.method == "audio-gd":
                seed = int(rng.integers(2**32))
                wave, _ = audio_gd(world.local, result.recovered, config.descent_config(seed))
            score = judge(target, template, wave)
            success = score >= unit.tau
            row.update(success=success, final_score=score, queries_at_success=oracle.queries if success else "")
        else:
            cfg = config.audio_config() if unit.method == "audio-nes" else config.latent_config()
            oracle = VerificationOracle(target, template, budget=cfg.query_budget)
            if unit.method == "audio-nes":
                trace = audio_nes(oracle, unit.tau, cfg, rng, n=config.n)
            else:
                trace = latent_nes(oracle, world.inverse, unit.tau, cfg, rng)
            if trace.total_queries != oracle.queries:
                raise RuntimeError(f"trace reports {trace.total_queries} queries, ledger {oracle.queries}")
            row.update(success=trace.success, final_score=trace.final_score,
                       queries_at_success="" if trace.queries_at_success is None else trace.queries_at_success)
    except (ScorelabError, ValueError, RuntimeError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["total_queries"] = oracle.queries if oracle is not None else 0
    return row, trace


def run_attacks(config: ExperimentConfig, world: World | None = None, calibration: dict | None = None):
    """Run every (rho, victim, method, threshold) unit. Returns ``(rows, traces, summary)``."""
    if config.trials == 0 or not config.methods:
        return [], {}, []
    world = world or build_world(config)
    calibration = calibration or calibrate(config, world)
    chash = config.config_hash()
    obs = None
    if {"sp", "audio-gd"} & set(config.methods):
        try:
            obs = probe_set(config, world)
        except (ScorelabError, ValueError) as exc:
            obs = exc
    units = []
    for i, rho in enumerate(config.rhos):
        cal = calibration[_rho_key(rho)]
        for v in range(config.trials):
            for method in config.methods:
                for th in config.thresholds:
                    units.append(_Unit(i, rho, v, method, th, cal["tau_E" if th == "tau_E" else "tau_M"]))
    work = lambda u: _run_unit(config, world, obs, u, chash)  # noqa: E731
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            outcomes = list(pool.map(work, units))
    else:
        outcomes = [work(u) for u in units]
    rows = [r for r, _ in outcomes]
    traces = {_trace_name(u): t for u, (_, t) in zip(units, outcomes) if t is not None}
    return rows, traces, summarize(rows)


def _trace_name(u: _Unit) -> str:
    return f"{u.method}__{u.threshold}__rho{u.rho:g}__v{u.victim:03d}"


def summarize(rows) -> list[dict]:
    """ASR and mean queries over successful attacks per (method, threshold, rho)."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["method"], r["threshold"], float(r["rho"])), []).append(r)
    out = []
    for (method, th, rho), rs in sorted(groups.items(), key=lambda kv: (METHODS.index(kv[0][0]), kv[0][1], kv[0][2])):
        ok = [r for r in rs if _truthy(r["success"])]
        q = [int(r["queries_at_success"]) for r in ok]
        out.append({
            "method": method, "threshold": th, "rho": rho, "trials": len(rs),
            "asr": len(ok) / len(rs), "mean_queries": float(np.mean(q)) if q else None,
            "errors": sum(1 for r in rs if r["error"]),
        })
    return out


def _truthy(v) -> bool:
    return v is True or v == "True"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    path.write_text(buf.getvalue())


def render_summary(summary, config_hash: str, seed) -> str:
    lines = [f"config_hash {config_hash}  seed {seed}", ""]
    header = f"{'method':<11} {'threshold':<9} {'rho':>5} {'trials':>6} {'ASR':>7} {'mean_q':>9} {'errors':>6}"
    lines += [header, "-" * len(header)]
    for s in summary:
        q = "-" if s["mean_queries"] is None else f"{s['mean_queries']:.1f}"
        lines.append(f"{s['method']:<11} {s['threshold']:<9} {s['rho']:>5.2f} {s['trials']:>6d} "
                     f"{100 * s['asr']:>6.1f}% {q:>9} {s['errors']:>6d}")
    return "\n".join(lines) + "\n"


def _write_meta(out: Path, config: ExperimentConfig, command: str) -> None:
    meta = {
        "command": command,
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "config": config.to_dict(),
        "versions": {"scorelab": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "created_unix": time.time(),
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _prepare(config: ExperimentConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_calibration(out: Path, calibration: dict) -> None:
    (out / "calibration.json").write_text(json.dumps(calibration, indent=2, sort_keys=True) + "\n")


def calibrate_to_dir(config: ExperimentConfig) -> dict:
    out = _prepare(config)
    cal = calibrate(config)
    _write_calibration(out, cal)
    _write_meta(out, config, "calibrate")
    return cal


def attack_to_dir(config: ExperimentConfig) -> list[dict]:
    """Calibrate, run attacks, write results.csv, traces/, summary.txt, calibration.json, meta.json."""
    out = _prepare(config)
    world = build_world(config) if config.trials > 0 else None
    cal = calibrate(config, world) if world is not None else {}
    rows, traces, summary = run_attacks(config, world, cal)
    _write_csv(out / "results.csv", RESULT_COLUMNS, rows)
    tdir = out / "traces"
    tdir.mkdir(exist_ok=True)
    for name, trace in traces.items():
        (tdir / f"{name}.jsonl").write_text(trace.jsonl())
    (out / "summary.txt").write_text(render_summary(summary, config.config_hash(), config.seed))
    if cal:
        _write_calibration(out, cal)
    _write_meta(out, config, "attack")
    return summary


def ablation(config: ExperimentConfig) -> list[dict]:
    """Train with and without the structure loss on identical data and seeds; compare round trips.

    Each run draws a fresh local extractor and population. Transfer is
    measured against the correlated target at every configured rho.
    """
    rows = []
    for r in range(config.ablation_runs):
        local = make_extractor(derive_seed(config.seed, _ABLATION, r, 0), config.n, config.d, config.kind)
        pop = make_population(derive_seed(config.seed, _ABLATION, r, 1), config.identities, config.per_identity,
                              config.within_spread, config.n)
        train_pool, held_out = pop.split_by_identity()
        targets = {rho: make_correlated_extractor(local, CorrelationSpec(rho, derive_seed(config.seed, _ABLATION, r, 2, i)))
                   for i, rho in enumerate(config.rhos)}
        for lam in (0.0, 1.0):
            tc = config.train_config(lambda_sc=lam, seed=derive_seed(config.seed, _ABLATION, r, 3))
            model, _ = train_inverse(local, train_pool, tc)
            for rho, target in targets.items():
                s = round_trip_report(target, local, model, held_out).summary()
                rows.append({
                    "run": r, "lambda_ic": tc.lambda_ic, "lambda_sc": lam, "rho": rho,
                    "s_L_mean": s["local"]["mean"], "s_T_mean": s["transfer"]["mean"],
                    "positive_mean": s["positive_ref"]["mean"], "negative_mean": s["negative_ref"]["mean"],
                })
    return rows


def train_inverse_to_dir(config: ExperimentConfig) -> list[dict]:
    out = _prepare(config)
    rows = ablation(config)
    _write_csv(out / "ablation.csv", ABLATION_COLUMNS, rows)
    _write_meta(out, config, "train-inverse")
    return rows


def id_constraints(config: ExperimentConfig) -> list[dict]:
    """Round-trip similarity under angular feature noise, for each available inverse."""
    local = make_extractor(derive_seed(config.seed, _LOCAL), config.n, config.d, config.kind)
    pop = make_population(derive_seed(config.seed, _CALIB), config.identities, config.per_identity,
                          config.within_spread, config.n)
    train_pool, held_out = pop.split_by_identity()
    models = {}
    if config.kind == "linear":
        models["analytic"] = analytic_inverse(local)
    models["trained"], _ = train_inverse(local, train_pool, config.train_config(seed=derive_seed(config.seed, _TRAIN)))
    rows = []
    for name, model in models.items():
        for angle, mean, std in angular_robustness(local, model, held_out, config.angles,
                                                   seed=derive_seed(config.seed, _ANGLES)):
            rows.append({"inverse": name, "angle": angle, "mean": mean, "std": std})
    return rows


def id_constraints_to_dir(config: ExperimentConfig) -> list[dict]:
    out = _prepare(config)
    rows = id_constraints(config)
    _write_csv(out / "id_constraints.csv", ID_COLUMNS, rows)
    _write_meta(out, config, "id-constraints")
    return rows


def _read_csv(path: Path, columns, problems: list[str]):
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != tuple(columns):
                problems.append(f"{path.name}: unexpected header {reader.fieldnames}")
                return None
            return list(reader)
    except (OSError, csv.Error, UnicodeDecodeError) as exc:
        problems.append(f"{path.name}: {exc}")
        return None


def report(results_dir) -> tuple[str, list[dict]]:
    """Re-render every result file in ``results_dir`` from raw rows.

    Returns ``(text, csv_rows)`` and writes ``report.txt`` / ``report.csv``.
    Raises ReportError with one entry per problem found.
    """
    d = Path(results_dir)
    problems: list[str] = []
    if not d.is_dir():
        raise ReportError([f"{d}: not a directory", "no result files"])
    present = [p for p in ("results.csv", "ablation.csv", "id_constraints.csv", "calibration.json") if (d / p).exists()]
    if not present:
        raise ReportError(["no result files"])
    chash, seed = "-", "-"
    if (d / "meta.json").exists():
        try:
            meta = json.loads((d / "meta.json").read_text())
            chash, seed = meta["config_hash"], meta["seed"]
        except (ValueError, KeyError) as exc:
            problems.append(f"meta.json: {exc}")
    sections: list[str] = []
    table: list[dict] = []
    if "calibration.json" in present:
        try:
            cal = json.loads((d / "calibration.json").read_text())
            lines = ["calibration", f"{'rho':>5} {'EER':>8} {'tau_E':>9} {'minDCF':>8} {'tau_M':>9}"]
            for rho in sorted(cal, key=float):
                c = cal[rho]
                lines.append(f"{float(rho):>5.2f} {c['eer']:>8.4f} {c['tau_E']:>9.5f} {c['min_dcf']:>8.4f} {c['tau_M']:>9.5f}")
            sections.append("\n".join(lines) + "\n")
        except (ValueError, KeyError, TypeError) as exc:
            problems.append(f"calibration.json: {exc}")
    if "results.csv" in present:
        rows = _read_csv(d / "results.csv", RESULT_COLUMNS, problems)
        if rows is not None:
            try:
                summary = summarize(rows)
                sections.append("attacks\n" + render_summary(summary, chash, seed))
                table += [{"table": "attacks", **s} for s in summary]
            except (ValueError, KeyError) as exc:
                problems.append(f"results.csv: {exc}")
    if "ablation.csv" in present:
        rows = _read_csv(d / "ablation.csv", ABLATION_COLUMNS, problems)
        if rows is not None:
            try:
                groups: dict = {}
                for r in rows:
                    groups.setdefault((float(r["rho"]), float(r["lambda_sc"])), []).append(r)
                lines = ["inverse-training ablation", f"{'rho':>5} {'lambda_sc':>9} {'runs':>4} {'s_L':>8} {'s_T':>8}"]
                for (rho, lam), rs in sorted(groups.items()):
                    sl = float(np.mean([float(r["s_L_mean"]) for r in rs]))
                    st = float(np.mean([float(r["s_T_mean"]) for r in rs]))
                    lines.append(f"{rho:>5.2f} {lam:>9g} {len(rs):>4d} {sl:>8.4f} {st:>8.4f}")
                    table.append({"table": "ablation", "rho": rho, "lambda_sc": lam, "runs": len(rs), "s_L": sl, "s_T": st})
                sections.append("\n".join(lines) + "\n")
            except (ValueError, KeyError) as exc:
                problems.append(f"ablation.csv: {exc}")
    if "id_constraints.csv" in present:
        rows = _read_csv(d / "id_constraints.csv", ID_COLUMNS, problems)
        if rows is not None:
            try:
                lines = ["angular robustness", f"{'inverse':<9} {'angle':>5} {'mean':>8} {'std':>8}"]
                for r in rows:
                    lines.append(f"{r['inverse']:<9} {float(r['angle']):>5g} {float(r['mean']):>8.4f} {float(r['std']):>8.4f}")
                    table.append({"table": "id_constraints", "inverse": r["inverse"], "angle": float(r["angle"]),
                                  "mean": float(r["mean"]), "std": float(r["std"])})
                sections.append("\n".join(lines) + "\n")
            except (ValueError, KeyError) as exc:
                problems.append(f"id_constraints.csv: {exc}")
    if problems:
        raise ReportError(problems)
    text = f"config_hash {chash}  seed {seed}\n\n" + "\n".join(sections)
    (d / "report.txt").write_text(text)
    keys = sorted({k for row in table for k in row}, key=lambda k: (k != "table", k))
    _write_csv(d / "report.csv", keys, [{k: row.get(k, "") for k in keys} for row in table])
    return text, table


def with_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})
