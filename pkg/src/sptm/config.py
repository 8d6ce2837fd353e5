"""Layered run configuration: built-in defaults, overridden by an INI-style
file, overridden by command-line `section.key=value` pairs. Every field is
validated against a documented range at load time and unknown keys are
rejected outright.
"""

from __future__ import annotations

import configparser
import dataclasses
import io as _io
import math
import os
from dataclasses import dataclass, field, fields

from .memory import GraphParams
from .nav import NavParams
from .sim import SimParams
from .training import TrainSchedule


class ConfigError(ValueError):
    pass


@dataclass
class SimSection:
    frame_width: int = 32
    frame_height: int = 24
    move_speed: float = 0.25        # cells per primitive step
    turn_step_deg: float = 11.25    # degrees per primitive step
    action_repeat: int = 4
    agent_radius: float = 0.2
    fov_deg: float = 110.0
    shade_alpha: float = 0.15


@dataclass
class NetsSection:
    embed_dim: int = 32
    enc_hidden: int = 256
    head_hidden: int = 128
    head_layers: int = 4
    pol_hidden: str = "256,128"
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    close_steps: int = 20           # l: positive pairs at most this far apart
    margin: int = 5                 # negatives at least margin * l apart
    r_iterations: int = 40_000      # desk-scale default training budget for R
    l_iterations: int = 60_000      # desk-scale default training budget for L
    steps_per_round: int = 10_000
    iters_per_round: int = 50
    buffer_capacity: int = 10_000
    eval_every: int = 1000
    heldout_pairs: int = 512
    prefetch: bool = True
    texture_variants: int = 24      # size of the training texture pool
    encoder: str = "patch"
    patch: int = 8
    patch_units: int = 32


@dataclass
class MemorySection:
    subsample: int = 4
    shortcut_count: int = 2000
    min_shortcut_gap: int = 5
    window: int = 10


@dataclass
class NavSection:
    k_neighbors: int = 5
    s_local: float = 0.7
    local_window: int = 10
    s_reach: float = 0.95
    h_min: int = 1
    h_max: int = 7


@dataclass
class EvalSection:
    budget: int = 5000              # logical steps per trial
    success_radius: float = 1.5     # cells
    repeats: int = 6
    exploration_steps: int = 10_500
    train_layout: str = "train"
    val_layouts: str = "val-1,val-2,val-3"
    test_layouts: str = "test-1,test-2,test-3"


@dataclass
class RunSection:
    seed: int = 0
    threads: int = 1
    data_dir: str = ""              # empty -> $SPTM_DATA_DIR or ./sptm-data


@dataclass
class Config:
    sim: SimSection = field(default_factory=SimSection)
    nets: NetsSection = field(default_factory=NetsSection)
    memory: MemorySection = field(default_factory=MemorySection)
    nav: NavSection = field(default_factory=NavSection)
    eval: EvalSection = field(default_factory=EvalSection)
    run: RunSection = field(default_factory=RunSection)

    # -- adapters into the module-level parameter objects ------------------

    def sim_params(self) -> SimParams:
        s = self.sim
        return SimParams(
            move_speed=s.move_speed,
            turn_step=math.radians(s.turn_step_deg),
            action_repeat=s.action_repeat,
            agent_radius=s.agent_radius,
            frame_width=s.frame_width,
            frame_height=s.frame_height,
            fov=math.radians(s.fov_deg),
            shade_alpha=s.shade_alpha,
        )

    def graph_params(self) -> GraphParams:
        m = self.memory
        return GraphParams(subsample=m.subsample, shortcut_count=m.shortcut_count,
                           min_shortcut_gap=m.min_shortcut_gap, window=m.window)

    def nav_params(self) -> NavParams:
        n = self.nav
        return NavParams(k_neighbors=n.k_neighbors, s_local=n.s_local,
                         local_window=n.local_window, s_reach=n.s_reach,
                         h_min=n.h_min, h_max=n.h_max)

    def schedule(self, total_iterations: int) -> TrainSchedule:
        n = self.nets
        return TrainSchedule(
            total_iterations=total_iterations,
            steps_per_round=n.steps_per_round,
            iters_per_round=n.iters_per_round,
            batch_size=n.batch_size,
            buffer_capacity=n.buffer_capacity,
            lr=n.lr, beta1=n.beta1, beta2=n.beta2, eps=n.eps,
            close_steps=n.close_steps, margin=n.margin,
            eval_every=n.eval_every, heldout_pairs=n.heldout_pairs,
            prefetch=n.prefetch,
        )

    def pol_hidden(self) -> tuple[int, ...]:
        return tuple(int(v) for v in self.nets.pol_hidden.split(","))

    def val_layout_list(self) -> list[str]:
        return [v.strip() for v in self.eval.val_layouts.split(",") if v.strip()]

    def test_layout_list(self) -> list[str]:
        return [v.strip() for v in self.eval.test_layouts.split(",") if v.strip()]

    def data_dir(self) -> str:
        return self.run.data_dir or os.environ.get("SPTM_DATA_DIR", "sptm-data")


# documented legal ranges; None bound = open
_RANGES: dict[str, tuple[float | None, float | None]] = {
    "sim.frame_width": (4, 512), "sim.frame_height": (4, 512),
    "sim.move_speed": (0.01, 1.0), "sim.turn_step_deg": (1.0, 90.0),
    "sim.action_repeat": (1, 16), "sim.agent_radius": (0.05, 0.45),
    "sim.fov_deg": (20.0, 160.0), "sim.shade_alpha": (0.0, 2.0),
    "nets.embed_dim": (1, 4096), "nets.enc_hidden": (1, 65536),
    "nets.head_hidden": (1, 65536), "nets.head_layers": (1, 16),
    "nets.lr": (0.0, 1.0), "nets.beta1": (0.0, 1.0), "nets.beta2": (0.0, 1.0),
    "nets.eps": (0.0, 1.0), "nets.batch_size": (2, 8192),
    "nets.close_steps": (1, 1000), "nets.margin": (2, 1000),
    "nets.r_iterations": (0, 10_000_000), "nets.l_iterations": (0, 10_000_000),
    "nets.steps_per_round": (100, 1_000_000), "nets.iters_per_round": (1, 100_000),
    "nets.buffer_capacity": (100, 10_000_000), "nets.eval_every": (1, 1_000_000),
    "nets.heldout_pairs": (16, 100_000), "nets.texture_variants": (1, 100_000),
    "nets.patch": (1, 64), "nets.patch_units": (1, 4096),
    "memory.subsample": (1, 64), "memory.shortcut_count": (0, 1_000_000),
    "memory.min_shortcut_gap": (1, 10_000), "memory.window": (0, 1000),
    "nav.k_neighbors": (1, 100), "nav.s_local": (0.0, 1.0),
    "nav.local_window": (0, 10_000), "nav.s_reach": (0.0, 1.0),
    "nav.h_min": (1, 1000), "nav.h_max": (1, 1000),
    "eval.budget": (0, 1_000_000), "eval.success_radius": (0.1, 50.0),
    "eval.repeats": (1, 1000), "eval.exploration_steps": (10, 10_000_000),
    "run.seed": (0, 2**31), "run.threads": (1, 256),
}


def _coerce(name: str, current, text: str):
    t = type(current)
    try:
        if t is bool:
            low = text.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return t(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {t.__name__}") from None


def validate(cfg: Config) -> Config:
    for sec_field in fields(cfg):
        section = getattr(cfg, sec_field.name)
        for f in fields(section):
            key = f"{sec_field.name}.{f.name}"
            value = getattr(section, f.name)
            rng = _RANGES.get(key)
            if rng is not None:
                lo, hi = rng
                if (lo is not None and value < lo) or (hi is not None and value > hi):
                    raise ConfigError(f"{key}={value} outside [{lo}, {hi}]")
    if cfg.nav.h_min > cfg.nav.h_max:
        raise ConfigError("nav.h_min must be <= nav.h_max")
    if cfg.nets.beta1 >= 1.0 or cfg.nets.beta2 >= 1.0:
        raise ConfigError("Adam betas must be < 1")
    if cfg.nets.encoder not in ("patch", "flat"):
        raise ConfigError(f"nets.encoder must be patch or flat, not {cfg.nets.encoder!r}")
    if cfg.nets.encoder == "patch" and (cfg.sim.frame_width % cfg.nets.patch
                                        or cfg.sim.frame_height % cfg.nets.patch):
        raise ConfigError("frame size must be divisible by nets.patch")
    try:
        cfg.pol_hidden()
    except ValueError:
        raise ConfigError(f"nets.pol_hidden={cfg.nets.pol_hidden!r} is not a comma list of ints") from None
    return cfg


def _apply_pairs(cfg: Config, pairs: list[tuple[str, str, str]]) -> None:
    for sec_name, key, text in pairs:
        section = getattr(cfg, sec_name, None)
        if section is None or not dataclasses.is_dataclass(section):
            raise ConfigError(f"unknown config section [{sec_name}]")
        if not any(f.name == key for f in fields(section)):
            raise ConfigError(f"unknown key {sec_name}.{key}")
        setattr(section, key, _coerce(f"{sec_name}.{key}", getattr(section, key), text))


def load(path: str | None = None, overrides: list[str] | None = None) -> Config:
    """defaults <- file <- overrides, then validate."""
    cfg = Config()
    if path:
        parser = configparser.ConfigParser()
        with open(path) as f:
            parser.read_file(f)
        pairs = [(sec, key, parser.get(sec, key))
                 for sec in parser.sections() for key in parser[sec]]
        _apply_pairs(cfg, pairs)
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        dotted, text = item.split("=", 1)
        sec_name, key = dotted.split(".", 1)
        _apply_pairs(cfg, [(sec_name.strip(), key.strip(), text.strip())])
    return validate(cfg)


def dump(cfg: Config) -> str:
    """INI text containing every effective value; load(dump(c)) == c."""
    parser = configparser.ConfigParser()
    for sec_field in fields(cfg):
        section = getattr(cfg, sec_field.name)
        parser[sec_field.name] = {f.name: repr(getattr(section, f.name))
                                  if not isinstance(getattr(section, f.name), str)
                                  else getattr(section, f.name)
                                  for f in fields(section)}
    out = _io.StringIO()
    parser.write(out)
    return out.getvalue()
