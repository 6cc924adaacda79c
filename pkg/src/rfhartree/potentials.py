"""Radial interaction potentials described on the Fourier side.

Convention: ``w_hat(k)`` is the plain transform of the measure,
ŵ(ξ) = ∫ e^{-ix·ξ} dw(x), so ŵ(0) is the total mass of w and the
convolution w * u has Fourier coefficients ŵ·û.  The response operator
then acts with the coupling (2π)^{d/2}·ŵ(ξ) times the symbol m_f
(see :func:`Potential.coupling`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

KINDS = ("point_mass", "gaussian", "yukawa3d", "custom_fourier", "function")

# log-spaced probe grid for sup-norms of ŵ
_PROBE = np.concatenate([[0.0], np.geomspace(1e-6, 1e6, 4001)])


@dataclass(frozen=True)
class Potential:
    kind: str
    weight: float = 0.0
    width: float = 0.0
    screening: float = 0.0
    table_k: tuple[float, ...] = ()
    table_w: tuple[float, ...] = ()
    func: Callable | None = field(default=None, compare=False, repr=False)
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "gaussian" and self.width <= 0:
            raise ValueError("gaussian potential needs width > 0")
        if self.kind == "yukawa3d" and self.screening <= 0:
            raise ValueError("yukawa potential needs screening > 0")
        if self.kind == "custom_fourier":
            k = np.asarray(self.table_k, float)
            if k.size < 2 or k[0] != 0.0 or np.any(np.diff(k) <= 0):
                raise ValueError("custom Fourier table must start at k=0 and increase strictly")
            if not np.all(np.isfinite(self.table_w)):
                raise ValueError("custom Fourier table has non-finite entries")
        if self.kind == "function" and self.func is None:
            raise ValueError("function potential needs a callable")

    # constructors ---------------------------------------------------------
    @classmethod
    def zero(cls) -> "Potential":
        return cls("point_mass", weight=0.0)

    @classmethod
    def point_mass(cls, weight: float) -> "Potential":
        return cls("point_mass", weight=float(weight))

    @classmethod
    def point_mass_coupling(cls, coupling: float, d: int) -> "Potential":
        """Delta potential whose response coupling (2π)^{d/2}ŵ equals ``coupling``."""
        return cls("point_mass", weight=float(coupling) / (2 * math.pi) ** (d / 2))

    @classmethod
    def gaussian(cls, weight: float, width: float) -> "Potential":
        return cls("gaussian", weight=float(weight), width=float(width))

    @classmethod
    def yukawa3d(cls, weight: float, screening: float) -> "Potential":
        return cls("yukawa3d", weight=float(weight), screening=float(screening))

    @classmethod
    def custom_fourier(cls, ks, values) -> "Potential":
        return cls("custom_fourier", table_k=tuple(map(float, ks)), table_w=tuple(map(float, values)))

    @classmethod
    def from_function(cls, func: Callable, label: str = "function") -> "Potential":
        return cls("function", func=func, label=label)

    # evaluation -------------------------------------------------------------
    def w_hat(self, k):
        k = np.abs(np.asarray(k, dtype=float))
        if self.kind == "point_mass":
            out = np.full_like(k, self.weight)
        elif self.kind == "gaussian":
            out = self.weight * np.exp(-0.5 * (self.width * k) ** 2)
        elif self.kind == "yukawa3d":
            out = self.weight / (k * k + self.screening**2)
        elif self.kind == "custom_fourier":
            tk = np.asarray(self.table_k)
            interp = PchipInterpolator(tk, np.asarray(self.table_w), extrapolate=False)
            out = np.where(k > tk[-1], self.table_w[-1], interp(np.minimum(k, tk[-1])))
        else:
            out = np.asarray(self.func(k), dtype=float) * np.ones_like(k)
        if not np.all(np.isreal(out)):
            raise ValueError("ŵ must be real-valued")
        return out if out.ndim else float(out)

    @property
    def w_hat_zero(self) -> float:
        return float(self.w_hat(0.0))

    def coupling(self, k, d: int):
        """Coefficient multiplying m_f(τ, |ξ|) in the response symbol."""
        return (2 * math.pi) ** (d / 2) * self.w_hat(k)

    def sup_abs(self) -> float:
        if self.kind == "point_mass":
            return abs(self.weight)
        if self.kind in ("gaussian",):
            return abs(self.weight)
        if self.kind == "yukawa3d":
            return abs(self.weight) / self.screening**2
        vals = np.abs(self.w_hat(_PROBE))
        if self.kind == "custom_fourier":
            vals = np.concatenate([vals, np.abs(self.table_w)])
        return float(vals.max())

    def sup_ratio(self) -> float:
        """sup |ŵ(ξ)|/|ξ|; infinite when ŵ(0) != 0."""
        if abs(self.w_hat_zero) > 0:
            return math.inf
        if self.kind == "point_mass":
            return 0.0
        k = _PROBE[1:]
        return float(np.max(np.abs(self.w_hat(k)) / k))

    def to_dict(self) -> dict:
        if self.kind == "function":
            raise ValueError("function potentials are not serialisable")
        out: dict = {"kind": self.kind}
        if self.kind in ("point_mass", "gaussian", "yukawa3d"):
            out["weight"] = self.weight
        if self.kind == "gaussian":
            out["width"] = self.width
        if self.kind == "yukawa3d":
            out["screening"] = self.screening
        if self.kind == "custom_fourier":
            out["table_k"] = list(self.table_k)
            out["table_w"] = list(self.table_w)
        return out
