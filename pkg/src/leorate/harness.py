"""Experiment configuration and orchestration (train / evaluate / sweep / ablate / report).

Configs are YAML. Every output directory gets a ``config.yaml`` snapshot with
the resolved settings and seed, plus a copy of the quality table it used, so
the directory can be re-run on its own.
"""
from __future__ import annotations

import dataclasses
import hashlib
import logging
import os
import shutil
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from . import agent as dqn
from .env import EnvConfig, RateControlEnv, RewardParams
from .gateway import LoopFlags, run_closed_loop
from .linkbudget import LinkParams, build_overpass
from .metrics import (EpisodeReport, compare, compare_ablation, read_step_trace, summarize,
                      write_frame_trace, write_queue_log, write_report, write_step_trace)
from .quality import QualityTable, QualityTableError, load_table
from .seeding import rng_for
from .txqueue import drain_budget_from_qdi, qdi_for, symbols_per_image

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "LEORATE_OUTPUT_ROOT"
ABLATION_ARMS = {
    "wo_snr_pred": {"predictor_enabled": False, "snr_to_encoder": "instantaneous"},
    "snr_pred_pl_only": {"predictor_enabled": True, "snr_to_encoder": "instantaneous"},
    "snr_pred_encoder": {"predictor_enabled": True, "snr_to_encoder": "predicted"},
}


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class OverpassSection:
    num_steps: int = 49
    decision_interval: float = 5.0
    min_elevation: float = 0.0


@dataclass
class QueueSection:
    batch_size: int = 12
    qci: int = 3
    drain_budget: int | None = 1_105_920
    qdi: int | None = None
    symbol_rate: float | None = None


@dataclass
class RatesSection:
    channels: list = field(default_factory=lambda: [32, 64, 96, 128, 192])
    initial_channel: int = 96
    image_height: int = 768
    image_width: int = 512
    stages: int = 4


@dataclass
class RewardSection:
    psnr_threshold: float = 32.0
    msssim_threshold: float = 0.94
    lambda_over: float = 1.0
    lambda_under: float = 0.1
    lambda_drop: float = 1.0
    q_th_fraction: float = 0.8
    q_low_fraction: float = 0.05
    penalty_sample: str = "post_drain"


@dataclass
class QualitySection:
    snr_source: str = "forward"
    content_jitter: bool = False


@dataclass
class AblationSection:
    predictor_enabled: bool = True
    snr_to_encoder: str = "instantaneous"


@dataclass
class GatewaySection:
    processing_delay: float = 0.0
    estimation_noise_db: float = 0.0


@dataclass
class AgentSection:
    hidden_layers: list = field(default_factory=lambda: [64, 64])
    learning_rate: float = 1e-3
    discount: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 5000
    replay_capacity: int = 50_000
    batch_size: int = 64
    target_sync_period: int = 500
    train_episodes: int = 400
    reward_scale: float = 0.1


@dataclass
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "runs/default"
    link: LinkParams = field(default_factory=LinkParams)
    overpass: OverpassSection = field(default_factory=OverpassSection)
    queue: QueueSection = field(default_factory=QueueSection)
    rates: RatesSection = field(default_factory=RatesSection)
    reward: RewardSection = field(default_factory=RewardSection)
    quality_table: str = "quality_table.csv"
    quality: QualitySection = field(default_factory=QualitySection)
    ablation: AblationSection = field(default_factory=AblationSection)
    gateway: GatewaySection = field(default_factory=GatewaySection)
    agent: AgentSection = field(default_factory=AgentSection)
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    # -- derived quantities ---------------------------------------------

    @property
    def table_path(self) -> Path:
        p = Path(self.quality_table)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def max_symbols(self) -> int:
        r = self.rates
        return symbols_per_image(max(r.channels), r.image_height, r.image_width, r.stages)

    @property
    def q_max(self) -> int:
        return self.queue.qci * self.queue.batch_size * self.max_symbols

    @property
    def drain_budget(self) -> int:
        q = self.queue
        if q.drain_budget is not None:
            return int(q.drain_budget)
        if q.symbol_rate is not None:
            return int(round(q.symbol_rate * self.overpass.decision_interval))
        return drain_budget_from_qdi(self.q_max, q.qdi)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            if f.name == "base_dir":
                continue
            v = getattr(self, f.name)
            out[f.name] = dataclasses.asdict(v) if dataclasses.is_dataclass(v) else v
        return out

    def with_overrides(self, **dotted) -> "ExperimentConfig":
        """Copy with dotted-path overrides, e.g. ``{"reward.lambda_under": 0.2}``."""
        data = self.to_dict()
        for key, value in dotted.items():
            set_dotted(data, key, value)
        return config_from_dict(data, self.base_dir)


SECTIONS = {
    "link": LinkParams, "overpass": OverpassSection, "queue": QueueSection,
    "rates": RatesSection, "reward": RewardSection, "quality": QualitySection,
    "ablation": AblationSection, "gateway": GatewaySection, "agent": AgentSection,
}
SCALARS = {"seed": int, "output_dir": str, "quality_table": str}


def set_dotted(data: dict, key: str, value) -> None:
    parts = key.split(".")
    node = data
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown config field {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config field {key!r}")
    node[parts[-1]] = value


def _coerce(name: str, value, default):
    if value is None or default is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string, got {value!r}")
    if isinstance(default, list) and not isinstance(value, list):
        raise ConfigError(f"{name}: expected a list, got {value!r}")
    return value


def _section(name: str, cls, raw) -> object:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a mapping")
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config field {name}.{unknown[0]}")
    kwargs = {k: _coerce(f"{name}.{k}", v, getattr(defaults, k)) for k, v in raw.items()}
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def config_from_dict(data: dict, base_dir: Path | str = ".") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    unknown = sorted(set(data) - set(SECTIONS) - set(SCALARS))
    if unknown:
        raise ConfigError(f"unknown config field {unknown[0]}")
    kwargs = {}
    for key, typ in SCALARS.items():
        if key in data:
            v = data[key]
            if typ is int and (isinstance(v, bool) or not isinstance(v, int)):
                raise ConfigError(f"{key}: expected an integer, got {v!r}")
            if typ is str and not isinstance(v, str):
                raise ConfigError(f"{key}: expected a string, got {v!r}")
            kwargs[key] = v
    for key, cls in SECTIONS.items():
        if key in data:
            kwargs[key] = _section(key, cls, data[key])
    cfg = ExperimentConfig(base_dir=Path(base_dir), **kwargs)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    q, r = cfg.queue, cfg.rates
    if q.batch_size <= 0:
        raise ConfigError("queue.batch_size must be positive")
    if q.qci <= 0:
        raise ConfigError("queue.qci must be positive")
    if not r.channels:
        raise ConfigError("rates.channels must not be empty")
    if sorted(set(r.channels)) != list(r.channels) or min(r.channels) <= 0:
        raise ConfigError("rates.channels must be strictly ascending positive integers")
    if r.initial_channel not in r.channels:
        raise ConfigError("rates.initial_channel must be one of rates.channels")
    try:
        cfg.max_symbols
    except ValueError as exc:
        raise ConfigError(f"rates: {exc}") from None
    if cfg.overpass.num_steps < 3:
        raise ConfigError("overpass.num_steps must be >= 3")
    if cfg.overpass.decision_interval <= 0:
        raise ConfigError("overpass.decision_interval must be positive")
    if not 0 <= cfg.overpass.min_elevation < 90:
        raise ConfigError("overpass.min_elevation must be in [0, 90)")
    for name in ("drain_budget", "qdi"):
        v = getattr(q, name)
        if v is not None and (isinstance(v, bool) or not isinstance(v, int)):
            raise ConfigError(f"queue.{name}: expected an integer, got {v!r}")
    if q.symbol_rate is not None and (isinstance(q.symbol_rate, bool)
                                      or not isinstance(q.symbol_rate, (int, float))):
        raise ConfigError(f"queue.symbol_rate: expected a number, got {q.symbol_rate!r}")
    if q.drain_budget is None and q.qdi is None and q.symbol_rate is None:
        raise ConfigError("queue: give one of drain_budget, qdi or symbol_rate")
    if q.drain_budget is not None and q.drain_budget <= 0:
        raise ConfigError("queue.drain_budget must be positive")
    if q.qdi is not None and q.qdi <= 0:
        raise ConfigError("queue.qdi must be positive")
    if q.symbol_rate is not None:
        if q.symbol_rate <= 0:
            raise ConfigError("queue.symbol_rate must be positive")
        implied = int(round(q.symbol_rate * cfg.overpass.decision_interval))
        if q.drain_budget is not None and implied != q.drain_budget:
            raise ConfigError(f"queue.symbol_rate implies drain_budget {implied}, "
                              f"config says {q.drain_budget}")
    budget = cfg.drain_budget
    if q.qdi is not None and qdi_for(cfg.q_max, budget) != q.qdi:
        raise ConfigError(f"queue.qdi={q.qdi} inconsistent with drain_budget {budget} "
                          f"(Q_max={cfg.q_max} drains in {qdi_for(cfg.q_max, budget)} intervals)")
    if cfg.quality.snr_source not in ("forward", "encode"):
        raise ConfigError("quality.snr_source must be 'forward' or 'encode'")
    if cfg.ablation.snr_to_encoder not in ("instantaneous", "predicted"):
        raise ConfigError("ablation.snr_to_encoder must be 'instantaneous' or 'predicted'")
    if cfg.gateway.estimation_noise_db < 0 or cfg.gateway.processing_delay < 0:
        raise ConfigError("gateway delays and noise must be non-negative")
    rw = cfg.reward
    if not 0 <= rw.q_low_fraction < rw.q_th_fraction < 1:
        raise ConfigError("reward: need 0 <= q_low_fraction < q_th_fraction < 1")
    if rw.penalty_sample not in ("post_drain", "post_enqueue"):
        raise ConfigError("reward.penalty_sample must be 'post_drain' or 'post_enqueue'")
    try:
        env_config(cfg)
        agent_config(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not cfg.table_path.is_file():
        raise ConfigError(f"quality_table: file not found: {cfg.table_path}")


def default_config_path() -> Path:
    return Path(str(resources.files("leorate") / "data" / "default.yaml"))


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    """Parse and validate a YAML experiment config (the shipped default if ``path`` is None)."""
    path = Path(path) if path is not None else default_config_path()
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"{path}: parse error at {where}: {getattr(exc, 'problem', exc)}") from None
    return config_from_dict(data or {}, path.parent)


# -- builders ---------------------------------------------------------------

def env_config(cfg: ExperimentConfig) -> EnvConfig:
    rw = cfg.reward
    reward = RewardParams.relative(
        cfg.q_max, rw.q_th_fraction, rw.q_low_fraction,
        psnr_threshold=rw.psnr_threshold, msssim_threshold=rw.msssim_threshold,
        lambda_over=rw.lambda_over, lambda_under=rw.lambda_under, lambda_drop=rw.lambda_drop)
    r = cfg.rates
    return EnvConfig(
        batch_size=cfg.queue.batch_size, q_max=cfg.q_max, drain_budget=cfg.drain_budget,
        channels=tuple(r.channels), image_height=r.image_height, image_width=r.image_width,
        stages=r.stages, reward=reward, initial_rate=list(r.channels).index(r.initial_channel),
        predictor_enabled=cfg.ablation.predictor_enabled,
        snr_to_encoder=cfg.ablation.snr_to_encoder, quality_snr=cfg.quality.snr_source,
        penalty_sample=rw.penalty_sample, content_jitter=cfg.quality.content_jitter)


def agent_config(cfg: ExperimentConfig) -> dqn.AgentConfig:
    a = dataclasses.asdict(cfg.agent)
    a["hidden_layers"] = tuple(a["hidden_layers"])
    return dqn.AgentConfig(seed=cfg.seed, **a)


def loop_flags(cfg: ExperimentConfig) -> LoopFlags:
    return LoopFlags(cfg.ablation.predictor_enabled, cfg.ablation.snr_to_encoder,
                     cfg.gateway.estimation_noise_db, cfg.gateway.processing_delay)


def load_quality(cfg: ExperimentConfig) -> QualityTable:
    try:
        return load_table(cfg.table_path)
    except QualityTableError as exc:
        raise ConfigError(f"quality_table ({cfg.table_path}): {exc}") from None


def make_env_factory(cfg: ExperimentConfig, table: QualityTable | None = None):
    table = table or load_quality(cfg)
    profile = build_overpass(cfg.link, cfg.overpass.num_steps, cfg.overpass.decision_interval,
                             cfg.overpass.min_elevation)
    ecfg = env_config(cfg)

    def factory() -> RateControlEnv:
        jitter = rng_for(cfg.seed, "jitter") if ecfg.content_jitter else None
        return RateControlEnv(profile, table, ecfg, jitter)

    return factory


# -- output handling --------------------------------------------------------

def resolve_output(cfg: ExperimentConfig, out: str | Path | None = None) -> Path:
    target = Path(out) if out is not None else Path(cfg.output_dir)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not target.is_absolute():
        target = Path(root) / target
    target.mkdir(parents=True, exist_ok=True)
    return target


def write_snapshot(cfg: ExperimentConfig, out: Path) -> Path:
    """Write ``config.yaml`` + a copy of the quality table; the snapshot points at the copy."""
    table_copy = out / "quality_table.csv"
    src = cfg.table_path.resolve()
    if src != table_copy.resolve():
        shutil.copyfile(src, table_copy)
    data = cfg.to_dict()
    data["quality_table"] = "quality_table.csv"
    data["output_dir"] = "."
    path = out / "config.yaml"
    path.write_text(yaml.safe_dump(data, sort_keys=True, default_flow_style=None))
    return path


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_curve(curve, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("episode,return,qualified,epsilon\n")
        for c in curve:
            fh.write(f"{c.episode},{c.ret!r},{c.qualified},{c.epsilon!r}\n")


# -- commands ---------------------------------------------------------------

def cmd_train(cfg: ExperimentConfig, out: str | Path | None = None) -> dict:
    out = resolve_output(cfg, out)
    write_snapshot(cfg, out)
    factory = make_env_factory(cfg)
    net, curve = dqn.train(factory, agent_config(cfg))
    ckpt = out / "checkpoint.lrqn"
    net.save(ckpt)
    write_curve(curve, out / "learning_curve.csv")
    log.info("trained %d episodes, checkpoint sha256 %s", len(curve), sha256_file(ckpt))
    return {"checkpoint": ckpt, "curve": curve, "network": net}


def _policy_for(choice: str, env: RateControlEnv):
    if choice in dqn.BASELINES:
        return choice, dqn.baseline_policy(choice, env.levels)
    path = Path(choice)
    if not path.is_file():
        raise ConfigError(f"policy {choice!r} is neither a baseline nor an existing checkpoint")
    net = dqn.QNetwork.load(path)
    bounds = dqn.StateBounds.for_env(env)
    if net.sizes[0] != bounds.dim or net.sizes[-1] != env.num_actions:
        raise ConfigError(f"checkpoint {path} has shape {net.sizes}, env needs "
                          f"{bounds.dim} inputs and {env.num_actions} outputs")
    return "rl_dqn", dqn.GreedyPolicy(net, bounds)


def evaluate_policy(cfg: ExperimentConfig, policy, out: Path | None = None,
                    table: QualityTable | None = None) -> EpisodeReport:
    """One greedy pass through the gateway loop; writes traces under ``out`` if given."""
    env = make_env_factory(cfg, table)()
    noise = rng_for(cfg.seed, "estimation") if cfg.gateway.estimation_noise_db > 0 else None
    report, gw = run_closed_loop(env, cfg.link, policy, loop_flags(cfg), noise)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_report(report, out / "report.csv")
        write_step_trace(env.records, out / "step_trace.csv")
        write_queue_log(env.records, out / "queue_log.csv")
        write_frame_trace(env.frames, out / "frame_trace.csv")
        gw.write_log(out / "commands.jsonl")
    return report


def cmd_evaluate(cfg: ExperimentConfig, policies, out: str | Path | None = None) -> dict:
    out = resolve_output(cfg, out)
    write_snapshot(cfg, out)
    table = load_quality(cfg)
    probe = make_env_factory(cfg, table)()
    reports = {}
    for choice in policies:
        name, policy = _policy_for(choice, probe)
        reports[name] = evaluate_policy(cfg, policy, out / name, table)
    text, csv_text = compare(reports)
    (out / "comparison.txt").write_text(text)
    (out / "comparison.csv").write_text(csv_text)
    return reports


def cmd_ablate(cfg: ExperimentConfig, out: str | Path | None = None, arms=None) -> dict:
    """Train (if needed) and evaluate each ablation arm; writes the by-arm table."""
    out = resolve_output(cfg, out)
    arms = list(arms or ABLATION_ARMS)
    reports = {}
    for arm in arms:
        if arm not in ABLATION_ARMS:
            raise ConfigError(f"unknown ablation arm {arm!r}")
        arm_cfg = cfg.with_overrides(**{f"ablation.{k}": v for k, v in ABLATION_ARMS[arm].items()})
        arm_dir = out / arm
        arm_dir.mkdir(parents=True, exist_ok=True)
        ckpt = arm_dir / "checkpoint.lrqn"
        if ckpt.is_file():
            write_snapshot(arm_cfg, arm_dir)
        else:
            cmd_train(arm_cfg, arm_dir)
        net = dqn.QNetwork.load(ckpt)
        env = make_env_factory(arm_cfg)()
        policy = dqn.GreedyPolicy(net, dqn.StateBounds.for_env(env))
        reports[arm] = evaluate_policy(arm_cfg, policy, arm_dir / "eval")
    text, csv_text = compare_ablation(reports)
    (out / "ablation.txt").write_text(text)
    (out / "ablation.csv").write_text(csv_text)
    return reports


def parse_value(text: str):
    """Interpret a sweep value literally via YAML (``0.2`` -> float, ``true`` -> bool)."""
    return yaml.safe_load(text)


def cmd_sweep(cfg: ExperimentConfig, field_name: str, values, policy: str = "mid_rate",
              out: str | Path | None = None) -> dict:
    out = resolve_output(cfg, out)
    write_snapshot(cfg, out)
    reports = {}
    rows = ["value,qualified,forwarded,dropped,residual_queued,mean_channel,mean_cbr,"
            "qual_fwd_pct,total_return"]
    for raw in values:
        value = parse_value(raw) if isinstance(raw, str) else raw
        point = cfg.with_overrides(**{field_name: value})
        table = load_quality(point)
        env = make_env_factory(point, table)()
        _, pol = _policy_for(policy, env)
        label = f"{field_name}={raw}"
        rep = evaluate_policy(point, pol, out / label.replace("/", "_"), table)
        reports[label] = rep
        q = "" if rep.qual_over_fwd is None else repr(rep.qual_over_fwd)
        rows.append(f"{raw},{rep.qualified},{rep.forwarded},{rep.dropped},"
                    f"{rep.residual_queued},{rep.mean_channel!r},{rep.mean_cbr!r},{q},"
                    f"{rep.total_return!r}")
    (out / "sweep.csv").write_text("\n".join(rows) + "\n")
    return reports


def cmd_report(run_dir: str | Path) -> dict:
    """Re-aggregate every ``*/step_trace.csv`` under a run directory."""
    run_dir = Path(run_dir)
    snapshot = run_dir / "config.yaml"
    cfg = load_config(snapshot) if snapshot.is_file() else ExperimentConfig(
        base_dir=Path(str(resources.files("leorate") / "data")))
    ecfg = env_config(cfg)
    reports = {}
    for trace in sorted(run_dir.glob("*/step_trace.csv")):
        reports[trace.parent.name] = summarize(read_step_trace(trace), ecfg)
    if not reports:
        raise ConfigError(f"no step traces found under {run_dir}")
    text, csv_text = compare(reports)
    (run_dir / "report.txt").write_text(text)
    (run_dir / "report.csv").write_text(csv_text)
    return reports
