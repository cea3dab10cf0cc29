"""Named analytic initial spectra n_in(k).

Profiles are evaluated exactly at the requested points; there is no
interpolation of tabulated data.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import UsageError

KINDS = ("gaussian", "plateau", "ring", "constant", "rayleigh_jeans")


@dataclass(frozen=True)
class Profile:
    """A named family with parameters.

    gaussian:        amplitude * exp(-|k - center|^2 / (2 width^2))
    plateau:         amplitude / (1 + (|k| / width)^(2 power))
    ring:            amplitude * exp(-(|k| - radius)^2 / (2 width^2))
    constant:        amplitude
    rayleigh_jeans:  amplitude / (|k|_beta^2 + mu)
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown profile kind {self.kind!r}; expected one of {KINDS}")
        allowed = {
            "gaussian": {"amplitude", "width", "center"},
            "plateau": {"amplitude", "width", "power"},
            "ring": {"amplitude", "width", "radius"},
            "constant": {"amplitude"},
            "rayleigh_jeans": {"amplitude", "mu", "beta"},
        }[self.kind]
        extra = set(self.params) - allowed
        if extra:
            raise UsageError(f"unknown parameters {sorted(extra)} for profile {self.kind!r}")

    def _get(self, name: str, default):
        return self.params.get(name, default)

    def __call__(self, k: np.ndarray) -> np.ndarray:
        """Evaluate at points k of shape (..., d)."""
        k = np.asarray(k, dtype=float)
        amp = float(self._get("amplitude", 1.0))
        if self.kind == "constant":
            return np.full(k.shape[:-1], amp)
        if self.kind == "gaussian":
            c = np.asarray(self._get("center", 0.0), dtype=float)
            w = float(self._get("width", 1.0))
            return amp * np.exp(-np.sum((k - c) ** 2, axis=-1) / (2 * w * w))
        r = np.sqrt(np.sum(k * k, axis=-1))
        if self.kind == "plateau":
            w = float(self._get("width", 1.0))
            p = float(self._get("power", 4))
            return amp / (1.0 + (r / w) ** (2 * p))
        if self.kind == "ring":
            w = float(self._get("width", 0.5))
            r0 = float(self._get("radius", 1.0))
            return amp * np.exp(-(r - r0) ** 2 / (2 * w * w))
        mu = float(self._get("mu", 1.0))
        beta = np.asarray(self._get("beta", np.ones(k.shape[-1])), dtype=float)
        if mu <= 0:
            raise UsageError("rayleigh_jeans needs mu > 0")
        return amp / (np.sum(beta * k * k, axis=-1) + mu)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **{k: _plain(v) for k, v in self.params.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "Profile":
        d = dict(d)
        if "kind" not in d:
            raise UsageError("profile needs a 'kind'")
        kind = d.pop("kind")
        return cls(kind, d)


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, tuple):
        return list(v)
    return v
