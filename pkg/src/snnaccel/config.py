"""Run configuration: typed defaults, key=value files, stable hashing.

Every knob of a run lives here so a report can embed the exact
configuration it was produced under.  The file format is `key = value`
lines with `#` comments; the schema is versioned and unknown keys are
rejected rather than silently ignored.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

CONFIG_VERSION = 1

PRECISIONS = ("fxp16", "fxp32", "float")
LAYOUTS = ("colocated", "split")


class ConfigError(ValueError):
    """Invalid, unknown, or inconsistent configuration input."""


@dataclass
class RunConfig:
    config_version: int = CONFIG_VERSION
    seed: int = 1
    seeds: int = 5                    # accuracy runs report mean +/- std over this many seeds
    precision: str = "fxp16"          # fxp16 | fxp32 | float
    metaplasticity: bool = True
    layout: str = "colocated"         # colocated | split
    dataset_dir: str = "data/mnist"

    # workload
    n_train: int = 10000
    n_test: int = 2500
    n_inputs: int = 256               # 16x16 input pixels
    n_hidden: int = 200
    n_outputs: int = 2
    timesteps_train: int = 50
    timesteps_eval: int = 50
    rate_max: float = 0.5             # peak per-step spike probability
    label_period: int = 4             # correct-label neuron spikes every k-th step

    # neuron dynamics (dyadic exponents)
    current_exp: int = -1
    leak_exp: int = -2
    drive_exp: int = -1
    v_rest: float = 0.0
    v_th: float = 0.5
    v_reset: float = 0.0
    refractory_steps: int = 2
    error_v_th: float = 0.5
    dendrite_exp: int = -2

    # traces
    trace_increment: int = 25
    trace_leak_exp: int = -2

    # plasticity
    learning_rate: float = 2.0 ** -5
    auc_exp: int = -1
    i_min: float = 0.0
    i_max: float = 2.0
    theta_pre: int = 40
    theta_post: int = 20
    meta_step: float = 2.0 ** -6
    meta_max: float = 8.0
    weight_init: float = 0.25
    feedback_scale: float = 0.25

    # architecture
    mesh_rows: int = 8
    mesh_cols: int = 8
    banks: int = 8
    fifo_capacity: int = 256

    def validate(self) -> list[str]:
        """Collect every problem up front; empty list means usable."""
        errs = []
        if self.config_version != CONFIG_VERSION:
            errs.append(f"config_version must be {CONFIG_VERSION}, "
                        f"got {self.config_version}")
        if self.precision not in PRECISIONS:
            errs.append(f"precision must be one of {PRECISIONS}, "
                        f"got {self.precision!r}")
        if self.layout not in LAYOUTS:
            errs.append(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        if not (0.0 < self.rate_max <= 1.0):
            errs.append(f"rate_max must be in (0, 1], got {self.rate_max}")
        for name in ("n_train", "n_test", "n_hidden", "timesteps_train",
                     "timesteps_eval", "label_period", "seeds",
                     "mesh_rows", "mesh_cols", "banks", "fifo_capacity"):
            if getattr(self, name) <= 0:
                errs.append(f"{name} must be positive")
        if self.n_inputs != 256:
            errs.append("n_inputs is fixed at 256 (16x16 rescaled images)")
        if self.n_outputs != 2:
            errs.append("n_outputs is fixed at 2 (shared-label tasks)")
        if not self.v_th > self.v_rest:
            errs.append("v_th must exceed v_rest")
        if not self.i_min < self.i_max:
            errs.append("i_min must be < i_max")
        for name in ("current_exp", "leak_exp", "drive_exp", "dendrite_exp",
                     "trace_leak_exp"):
            if not (-15 <= getattr(self, name) <= 15):
                errs.append(f"{name} must be a dyadic exponent in [-15, 15]")
        if not (0 < self.trace_increment <= 255):
            errs.append("trace_increment must be in 1..255")
        elif self.trace_leak_exp < 0 and \
                self.trace_increment << -self.trace_leak_exp > 255:
            errs.append("trace steady state exceeds the 8-bit trace range")
        for name in ("theta_pre", "theta_post"):
            if not (0 < getattr(self, name) <= 255):
                errs.append(f"{name} must be in 1..255")
        if self.n_train % 10:
            errs.append("n_train must divide evenly into 10 digit classes")
        if self.n_test % 10:
            errs.append("n_test must divide evenly into 10 digit classes")
        return errs

    # -- serialization --------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _parse_value(name: str, text: str):
    ftype = _FIELD_TYPES[name]
    text = text.strip()
    try:
        if ftype == "bool":
            if text.lower() in ("true", "1", "yes", "on"):
                return True
            if text.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if ftype == "int":
            return int(text)
        if ftype == "float":
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse key=value lines over a base config; unknown keys are fatal."""
    cfg = base or RunConfig()
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        overrides[key] = _parse_value(key, value)
    return dataclasses.replace(cfg, **overrides)


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    return parse_config_text(Path(path).read_text(), base)
