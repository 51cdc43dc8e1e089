"""Plain-text (INI) experiment configuration.

Every key has a type and a default; unknown sections or keys are rejected
with their ``section.key`` path.  Floats accept ``inf`` and multiples of
``pi`` (``4pi``, ``0.5pi``); lists are comma separated; an empty value
means "unset" for optional keys.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .girsanov import EscortTable, build_profile
from .levy import LevyDensitySpec, MarkBand, TailTransform
from .operators import HeatModelSpec, WaveModelSpec

__all__ = ["ConfigError", "SCHEMA", "ExperimentConfig", "load_config", "parse_float"]


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the offending ``section.key``."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def parse_float(text: str) -> float:
    s = text.strip().lower().replace(" ", "")
    if s.endswith("pi"):
        head = s[:-2].rstrip("*")
        return (float(head) if head else 1.0) * math.pi
    return float(s)


def _int(s):
    return int(s.strip())


def _str(s):
    return s.strip()


def _floats(s):
    return [parse_float(x) for x in s.split(",") if x.strip()]


def _opt(conv):
    def f(s):
        return None if not s.strip() else conv(s)
    return f


_F, _OF = parse_float, _opt(parse_float)

# section -> key -> (parser, default)
SCHEMA = {
    "run": {"seed": (_int, 0), "replicas": (_int, 10000), "out": (_str, "")},
    "model": {"kind": (_str, "wave"), "n_modes": (_int, 16), "alpha_damp": (_F, 0.5),
              "damping_form": (_str, "restoring"), "quad_points": (_int, 4096)},
    "noise": {"alpha": (_F, 1.5), "K0": (_F, 1.5), "r0": (_F, 1.0), "jump_cap": (_OF, None)},
    "band": {"z_min": (_OF, None), "z_cut": (_F, 20.0)},
    "sigma": {"mode": (_str, "constant"), "c0": (_F, 1.0), "floor": (_OF, None),
              "cap": (_F, math.inf)},
    "profile": {"margin": (_F, 0.05), "start": (_str, "stated"), "buffer": (_F, 0.25)},
    "initial": {"kind": (_str, "zero"), "mode": (_int, 1), "energy": (_F, 1.0),
                "seed": (_int, 0), "kick_time": (_F, 0.9 * 4 * math.pi)},
    "simulate": {"horizon": (_F, 10.0), "n_obs": (_int, 101), "replica": (_int, 0)},
    "girsanov": {"horizon": (_F, 4 * math.pi), "n_steps": (_int, 256),
                 "radius_quantiles": (_floats, [0.25, 0.5, 0.75]), "pilot": (_int, 20000),
                 "martingale_v": (_F, 0.5), "martingale_times": (_floats, [0.25, 0.5, 1.0]),
                 "martingale_replicas": (_int, 100000), "nsigma": (_F, 3.0)},
    "laplace": {"lambdas": (_floats, [0.2, 0.5, 1.0]), "times": (_floats, [0.5, 1.0]),
                "nsigma": (_F, 3.0)},
    "control": {"horizon": (_F, 4 * math.pi), "n_steps": (_int, 256), "reg_floor": (_F, 1e-12),
                "max_condition": (_F, 1e14), "residual_tol": (_F, 1e-6),
                "forward_tol": (_F, 1e-10)},
    "vanishing": {"n_max": (_int, 6), "period": (_F, 2 * math.pi), "base_steps": (_int, 128),
                  "ratio": (_F, 0.1), "max_condition": (_F, math.inf),
                  "residual_tol": (_F, 1e-6)},
    "irreducibility": {"horizon": (_F, 4 * math.pi), "delta": (_F, 0.5)},
    "invariant": {"horizons": (_floats, [5.0, 10.0, 20.0, 40.0]), "n_times": (_int, 8),
                  "burn_in": (_F, 0.0), "ceiling": (_F, math.inf), "push": (_F, 1.0),
                  "scale": (_F, 1.0), "moment_points": (_int, 10), "nsigma": (_F, 3.0)},
    "asf": {"n_max": (_int, 6), "period": (_F, 2 * math.pi), "exponent": (_F, 0.5),
            "eps": (_floats, [0.0, 0.05, 0.1]), "steps_per_period": (_int, 64),
            "direction": (_str, "cheapest"), "direction_mode": (_int, 1)},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration: ``values[section][key]`` for every schema key."""

    values: dict
    source: str = ""

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def with_overrides(self, **run) -> "ExperimentConfig":
        vals = {s: dict(v) for s, v in self.values.items()}
        for k, v in run.items():
            if v is not None:
                vals["run"][k] = v
        return ExperimentConfig(vals, self.source)

    def to_dict(self) -> dict:
        return {s: {k: _plain(v) for k, v in kv.items()} for s, kv in self.values.items()}

    def sha256(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def model(self):
        m = self["model"]
        if m["kind"] == "wave":
            return WaveModelSpec(n_modes=m["n_modes"], alpha_damp=m["alpha_damp"],
                                 damping_form=m["damping_form"], quad_points=m["quad_points"])
        if m["kind"] == "heat":
            return HeatModelSpec(n_modes=m["n_modes"])
        raise ConfigError("model.kind", f"expected 'wave' or 'heat', got {m['kind']!r}")

    def noise(self) -> LevyDensitySpec:
        n = self["noise"]
        return LevyDensitySpec(alpha=n["alpha"], K0=n["K0"], r0=n["r0"], jump_cap=n["jump_cap"])

    def band(self) -> MarkBand:
        b = self["band"]
        floor = self.noise().mark_floor()
        z_min = floor if b["z_min"] is None else b["z_min"]
        return MarkBand(z_min, b["z_cut"])

    def sigma(self):
        from .spde import SigmaSpec
        s = self["sigma"]
        return SigmaSpec(mode=s["mode"], c0=s["c0"], floor=s["floor"], cap=s["cap"])

    def profile(self):
        p = self["profile"]
        return build_profile(TailTransform(self.noise()), margin=p["margin"], start=p["start"],
                             buffer=p["buffer"])

    def escort_table(self) -> EscortTable:
        params, _ = self.profile()
        return EscortTable.build(params, TailTransform(self.noise()))

    def initial_state(self, model=None) -> np.ndarray:
        """Flat initial state from ``[initial]``, scaled to the requested energy."""
        model = self.model() if model is None else model
        m = model.modes
        s = self["initial"]
        kind = s["kind"]
        if kind == "zero":
            return np.zeros(m.dim)
        if kind == "mode":
            if not 1 <= s["mode"] <= m.n_modes:
                raise ConfigError("initial.mode", f"must lie in 1..{m.n_modes}")
            x = np.zeros(m.dim)
            x[s["mode"] - 1] = 1.0
        elif kind == "random":
            x = np.random.default_rng([s["seed"]]).standard_normal(m.dim)
            if m.norm_weights[m.n_modes] == 0:
                x[m.n_modes:] = 0.0
        elif kind == "cancellable":
            # the state one boundary kick at time kick_time sends to 0
            x = -np.linalg.solve(m.propagator_matrix(s["kick_time"]), m.input)
        elif kind == "cheapest":
            from .ergodics import cheapest_direction
            x = cheapest_direction(model, s["kick_time"])
        else:
            raise ConfigError("initial.kind", f"unknown initial state kind {kind!r}")
        if not s["energy"] >= 0:
            raise ConfigError("initial.energy", "must be nonnegative")
        return x * math.sqrt(s["energy"]) / float(m.norm(x))

    def run_config(self, horizon: float, x0=None, model=None):
        from .spde import SdeRunConfig
        model = self.model() if model is None else model
        x0 = self.initial_state(model) if x0 is None else x0
        return SdeRunConfig(model, self.noise(), self.band(), self.sigma(), x0, horizon,
                            seed=self["run"]["seed"])

    def decisions(self) -> dict:
        """Branch decisions echoed in every manifest."""
        m, b = self["model"], self.band()
        params, rejected = self.profile()
        return {"model_kind": m["kind"], "n_modes": m["n_modes"],
                "damping_form": m["damping_form"] if m["kind"] == "wave" else None,
                "band": [b.z_min, b.z_cut], "jump_cap": self["noise"]["jump_cap"],
                "profile_branch": params.branch, "profile_rejected": rejected,
                "profile": _plain(params.to_dict()),
                "seed_derivation": "numpy default_rng([seed, purpose, replica])"}


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def load_config(path=None, text: str | None = None) -> ExperimentConfig:
    """Parse an INI file (or ``text``) against :data:`SCHEMA`; ``None`` gives defaults."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    source = ""
    if text is not None:
        cp.read_string(text)
        source = text
    elif path is not None:
        with open(path) as fh:
            source = fh.read()
        cp.read_string(source, source=str(path))
    values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(section, "unknown section")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")
            conv = SCHEMA[section][key][0]
            try:
                values[section][key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}", f"cannot parse {raw!r} ({exc})") from None
    cfg = ExperimentConfig(values, source)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    checks = [
        ("run.replicas", cfg["run"]["replicas"] > 0, "must be positive"),
        ("model.n_modes", cfg["model"]["n_modes"] > 0, "must be positive"),
        ("sigma.c0", cfg["sigma"]["c0"] > 0, "must be positive"),
        ("band.z_cut", cfg["band"]["z_cut"] >= 0, "must be nonnegative"),
        ("irreducibility.delta", cfg["irreducibility"]["delta"] > 0, "must be positive"),
        ("asf.n_max", cfg["asf"]["n_max"] >= 1, "must be at least 1"),
        ("asf.direction", cfg["asf"]["direction"] in ("cheapest", "mode"),
         "expected 'cheapest' or 'mode'"),
    ]
    for path, ok, msg in checks:
        if not ok:
            raise ConfigError(path, msg)
    for path, build in (("model", cfg.model), ("noise", cfg.noise), ("band", cfg.band),
                        ("sigma", cfg.sigma)):
        try:
            build()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from None
