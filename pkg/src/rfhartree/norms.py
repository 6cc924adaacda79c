"""Discrete Sobolev, Lebesgue and mixed space-time norms on the periodic grid.

Spec strings: ``<time>:<space>`` or just ``<space>`` where

* time  is ``L<p>t`` with p a number or ``inf`` (``L2t``, ``Linft``);
* space is ``L<q>`` / ``Linf``, ``Hs(σ)`` / ``Hs(σ,q)`` for ⟨∇⟩^σ and
  ``dHs(σ)`` / ``dHs(σ,q)`` for |∇|^σ.

Homogeneous multipliers drop the zero frequency: |ξ|^σ at ξ = 0 is 0 for
σ > 0 and the mode is discarded for σ < 0 (input with a nonzero mean is
flagged by a warning since the norm ignores it).
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .fields import SpectralGrid


class NonzeroMeanWarning(UserWarning):
    """A negative homogeneous derivative was applied to a field with nonzero mean."""


@dataclass(frozen=True)
class NormSpec:
    space: str  # "L", "H" or "dH"
    sigma: float = 0.0
    q: float = 2.0
    time_p: float | None = None

    def __post_init__(self):
        if self.space not in ("L", "H", "dH"):
            raise ValueError(f"unknown space kind {self.space!r}")
        if not math.isfinite(self.sigma):
            raise ValueError("σ must be finite")
        for p in (self.q, self.time_p):
            if p is not None and not p >= 1:
                raise ValueError("Lebesgue exponents must lie in [1, ∞]")

    @property
    def spatial(self) -> "NormSpec":
        return NormSpec(self.space, self.sigma, self.q, None)

    def __str__(self) -> str:
        def num(p):
            return "inf" if math.isinf(p) else f"{p:g}"

        if self.space == "L":
            s = f"L{num(self.q)}"
        else:
            s = f"{'dHs' if self.space == 'dH' else 'Hs'}({self.sigma:g}"
            s += ")" if self.q == 2 else f",{num(self.q)})"
        return s if self.time_p is None else f"L{num(self.time_p)}t:{s}"


_NUM = r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|inf)"
_TIME = re.compile(rf"^L{_NUM}t$")
_LEB = re.compile(rf"^L{_NUM}$")
_SOB = re.compile(rf"^(dHs|Hs)\(\s*{_NUM}\s*(?:,\s*{_NUM}\s*)?\)$")


def _num(s: str) -> float:
    return math.inf if s == "inf" else float(s)


def parse_norm_spec(text: str) -> NormSpec:
    parts = [p.strip() for p in text.strip().split(":")]
    if len(parts) > 2 or not all(parts):
        raise ValueError(f"bad norm spec {text!r}")
    time_p = None
    if len(parts) == 2:
        m = _TIME.match(parts[0])
        if not m:
            raise ValueError(f"bad time part in {text!r}")
        time_p = _num(m.group(1))
    space = parts[-1]
    m = _LEB.match(space)
    if m:
        return NormSpec("L", 0.0, _num(m.group(1)), time_p)
    m = _SOB.match(space)
    if m:
        kind = "dH" if m.group(1) == "dHs" else "H"
        q = _num(m.group(3)) if m.group(3) else 2.0
        return NormSpec(kind, float(m.group(2)), q, time_p)
    raise ValueError(f"bad space part in {text!r}")


def _multiplier(grid: SpectralGrid, sigma: float, homogeneous: bool) -> np.ndarray:
    k2 = grid.k2()
    if not homogeneous:
        return (1.0 + k2) ** (sigma / 2)
    with np.errstate(divide="ignore"):
        out = np.where(k2 > 0, k2 ** (sigma / 2), 0.0)
    return out


def frac_deriv(u, sigma: float, homogeneous: bool, grid: SpectralGrid) -> np.ndarray:
    """|∇|^σ u (homogeneous) or ⟨∇⟩^σ u over the last d axes of ``u``."""
    u = np.asarray(u)
    if sigma == 0 and not homogeneous:
        return u.astype(complex)
    U = grid.fft(u)
    if homogeneous and sigma < 0:
        mean = np.abs(U[(...,) + (0,) * grid.d]) / grid.N**grid.d
        scale = np.max(np.abs(u)) if u.size else 0.0
        if np.any(mean > 1e-12 * max(scale, 1e-300)):
            warnings.warn("homogeneous negative-order derivative of a field with nonzero mean; "
                          "the mean is dropped", NonzeroMeanWarning, stacklevel=2)
    return grid.ifft(U * _multiplier(grid, sigma, homogeneous))


def spatial_norm(u, spec: NormSpec, grid: SpectralGrid) -> np.ndarray:
    """Norm over the last d axes; leading axes are kept."""
    u = np.asarray(u)
    if spec.q == 2:
        # Parseval: Σ_x |u|² dx^d = dx^d/N^d Σ_ξ |û|²
        U = grid.fft(u)
        if spec.space != "L":
            mult = _multiplier(grid, spec.sigma, spec.space == "dH")
            if spec.space == "dH" and spec.sigma < 0:
                frac_deriv(u, spec.sigma, True, grid)  # mean check only
            U = U * mult
        s = np.sum(np.abs(U) ** 2, axis=grid.axes)
        return np.sqrt(s * grid.cell_volume / grid.N**grid.d)
    v = u if spec.space == "L" else frac_deriv(u, spec.sigma, spec.space == "dH", grid)
    a = np.abs(v)
    if math.isinf(spec.q):
        return np.max(a, axis=grid.axes)
    return (np.sum(a**spec.q, axis=grid.axes) * grid.cell_volume) ** (1 / spec.q)


def l2_physical(u, grid: SpectralGrid) -> np.ndarray:
    """Σ_x |u|² dx^d, the physical-space counterpart of the Parseval form."""
    return np.sqrt(np.sum(np.abs(np.asarray(u)) ** 2, axis=grid.axes) * grid.cell_volume)


def time_norm(values: np.ndarray, times, p: float) -> float:
    values = np.asarray(values, float)
    if math.isinf(p):
        return float(np.max(values)) if values.size else 0.0
    times = np.asarray(times, float)
    if values.size == 1:
        return float(values[0])
    return float(integrate.trapezoid(values**p, times) ** (1 / p))


def mixed_norm(path, times, spec: NormSpec | str, grid: SpectralGrid) -> float:
    """L^p_t(X) of a sampled path u(t_i, ·): spatial norm per snapshot, then trapezoid in t."""
    if isinstance(spec, str):
        spec = parse_norm_spec(spec)
    path = np.asarray(path)
    times = np.asarray(times, float)
    if path.shape[0] != times.size:
        raise ValueError("one snapshot per time required")
    if times.size > 2 and not np.allclose(np.diff(times), times[1] - times[0], rtol=1e-9, atol=0):
        raise ValueError("mixed norms need a uniform time grid")
    inner = spatial_norm(path, spec.spatial, grid)
    return time_norm(inner, times, 2.0 if spec.time_p is None else spec.time_p)


def ensemble_norm(fields, spec: NormSpec | str, grid: SpectralGrid) -> float:
    """L²_ω norm of Σ_k u_k g_k for orthonormal Gaussians: (Σ_k ‖u_k‖²_X)^{1/2}."""
    if isinstance(spec, str):
        spec = parse_norm_spec(spec)
    per_mode = spatial_norm(fields, spec.spatial, grid)
    return float(np.sqrt(np.sum(np.asarray(per_mode) ** 2)))
