"""Experiment configuration: YAML text with nested sections and unit-flagged times.

A time field is a one-key mapping, ``{kinetic: 0.1}`` or ``{microscopic: 4.0}``;
kinetic time t corresponds to microscopic time t * T_kin for the configured
torus.  Unknown keys anywhere are an error that lists them.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from .lattice import BetaVector, UsageError, kinetic_parameters
from .profiles import Profile

EXPERIMENTS = ("wke", "nls-ensemble", "compare-moments", "density", "hierarchy", "diagrams-verify",
               "cumulants-verify", "acceptance")

TIME = "time"          # marker for unit-flagged fields

SCHEMA: dict[str, dict[str, Any]] = {
    "torus": {"d": 3, "L": 8.0, "K": 8, "beta": "isotropic"},
    "law": {"kind": "gaussian", "radial": None, "cells": 4096},
    "profile": {"kind": "gaussian", "amplitude": 1.0, "width": 0.5},
    "scaling": {"gamma": 1.0},
    "kinetic": {"d": 2, "k_max": 3.0, "n": 21, "beta": None, "epsilon": None, "c_eps": 2.0,
                "quadrature": "deterministic_mollified", "n_samples": 200_000,
                "delta": (TIME, {"kinetic": 0.1}), "steps": 32, "snapshot_every": 8},
    "ensemble": {"M": 1000, "t_end": (TIME, {"microscopic": 1.0}), "dt": (TIME, None), "dealias": False,
                 "nonlinear": True, "precision": "double", "batch": 250, "n_times": 4,
                 "store_realizations": 2, "moments": [], "n_batches": 20},
    "density": {"points": [[0.0, 0.0]], "cells": 4096, "n_times": 4, "rmax": 3, "dt_steps": 256},
    "hierarchy": {"atoms": [], "orders": [1, 2], "n_tuples": 20, "levels": [8, 16]},
    "diagrams": {"max_scale": 6, "n_confluence": 1000, "n_roundtrip": 500, "molecules": True,
                 "n_molecule_random": 500, "n_counting": 50},
    "cumulants": {"n_max": 12, "n_random": 1000, "table_n": 8},
    "checks": {"names": [], "params": {}},
}

TOP = {"experiment", "output", "seed", *SCHEMA}


def _check_time(value, where: str, optional: bool = False) -> Optional[dict]:
    if value is None and optional:
        return None
    if not isinstance(value, dict) or len(value) != 1 or next(iter(value)) not in ("kinetic", "microscopic"):
        raise UsageError(f"{where} must be written as {{kinetic: t}} or {{microscopic: t}}, got {value!r}")
    unit, v = next(iter(value.items()))
    try:
        v = float(v)
    except (TypeError, ValueError):
        raise UsageError(f"{where}: time value {v!r} is not a number")
    if v < 0:
        raise UsageError(f"{where}: time must be nonnegative")
    return {unit: v}


@dataclass
class ExperimentConfig:
    experiment: str
    output: str
    seed: int
    sections: dict = field(default_factory=dict)

    # --- construction ---------------------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise UsageError("config must be a mapping")
        unknown = sorted(set(raw) - TOP)
        if unknown:
            raise UsageError(f"unknown top-level keys: {unknown}")
        exp = raw.get("experiment")
        if exp not in EXPERIMENTS:
            raise UsageError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
        seed = raw.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise UsageError("seed must be a nonnegative integer")
        sections = {}
        for name, defaults in SCHEMA.items():
            given = raw.get(name) or {}
            if not isinstance(given, dict):
                raise UsageError(f"section {name!r} must be a mapping")
            extra = sorted(set(given) - set(defaults))
            if name == "profile":
                extra = []          # profile parameters are validated by Profile itself
            if extra:
                raise UsageError(f"unknown keys in section {name!r}: {extra}")
            sec = {}
            for key, dv in defaults.items():
                if isinstance(dv, tuple) and dv and dv[0] == TIME:
                    sec[key] = _check_time(given.get(key, dv[1]), f"{name}.{key}", optional=dv[1] is None)
                else:
                    sec[key] = copy.deepcopy(given.get(key, dv))
            if name == "profile":
                sec = copy.deepcopy(given) if given else copy.deepcopy(defaults)
                Profile.from_dict(sec)
            sections[name] = sec
        output = raw.get("output", f"results/{exp}")
        cfg = cls(exp, str(output), int(seed), sections)
        cfg.validate()
        return cfg

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise UsageError(f"config is not valid YAML: {e}")
        return cls.from_dict(raw or {})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.parse(fh.read())
        except OSError as e:
            raise UsageError(f"cannot read config {path}: {e}")

    def validate(self) -> None:
        t = self.sections["torus"]
        if int(t["d"]) not in (1, 2, 3):
            raise UsageError("torus.d must be 1, 2 or 3")
        self.beta()
        k = self.sections["kinetic"]
        if int(k["n"]) % 2 == 0:
            raise UsageError("kinetic.n must be odd")
        if self.sections["law"]["kind"] not in ("gaussian", "uniform_phase", "radial_tabulated"):
            raise UsageError(f"unknown law {self.sections['law']['kind']!r}")
        if self.sections["law"]["kind"] == "radial_tabulated" and self.sections["law"]["radial"] not in ("gamma2", "exponential"):
            raise UsageError("law.radial must name a tabulated family: gamma2 or exponential")

    # --- serialization --------------------------------------------------------------------

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "output": self.output, "seed": self.seed,
                **copy.deepcopy(self.sections)}

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def hash(self) -> str:
        """SHA-256 of the canonical JSON form (output directory excluded)."""
        d = self.to_dict()
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    # --- derived quantities ---------------------------------------------------------------

    def beta(self, d: Optional[int] = None, spec=None) -> tuple:
        d = int(self.sections["torus"]["d"]) if d is None else d
        spec = self.sections["torus"]["beta"] if spec is None else spec
        if spec in (None, "isotropic"):
            return (1.0,) * d
        if isinstance(spec, str) and spec.startswith("generic:"):
            try:
                s = int(spec.split(":", 1)[1])
            except ValueError:
                raise UsageError(f"bad beta spec {spec!r}")
            return tuple(float(x) for x in BetaVector.generic(d, s).array())
        if isinstance(spec, (list, tuple)) and len(spec) == d:
            return tuple(float(x) for x in BetaVector(tuple(float(x) for x in spec)).array())
        raise UsageError(f"beta must be 'isotropic', 'generic:<seed>' or a list of {d} numbers")

    def kinetic_beta(self) -> tuple:
        k = self.sections["kinetic"]
        return self.beta(int(k["d"]), k["beta"] if k["beta"] is not None else self.sections["torus"]["beta"]
                         if int(k["d"]) == int(self.sections["torus"]["d"]) else "isotropic")

    def scaling(self):
        t = self.sections["torus"]
        return kinetic_parameters(float(t["L"]), int(t["d"]), float(self.sections["scaling"]["gamma"]))

    def kinetic_time(self, value: Optional[dict]) -> Optional[float]:
        if value is None:
            return None
        unit, v = next(iter(value.items()))
        return v if unit == "kinetic" else v / self.scaling().t_kin

    def microscopic_time(self, value: Optional[dict]) -> Optional[float]:
        if value is None:
            return None
        unit, v = next(iter(value.items()))
        return v if unit == "microscopic" else v * self.scaling().t_kin

    def profile(self) -> Profile:
        return Profile.from_dict(self.sections["profile"])
