"""Momentum distributions |f(ξ)|² and their inverse Fourier transforms H_f.

Fourier convention: unitary, H_f(x) = (2π)^{-d/2} ∫ |f(ξ)|² e^{ix·ξ} dξ.
With |f|² the indicator of the unit ball in d = 3 this gives
H_f(x) = sqrt(2/π) r^{-2} (sin r / r - cos r), and in general dimension
H_f(x) = μ^{d/4} r^{-d/2} J_{d/2}(sqrt(μ) r) for the Fermi ball of radius sqrt(μ).
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline, PchipInterpolator

from .potentials import Potential
from .quadrature import QuadConfig
from .special import bessel_J, hankel_coefficients

log = logging.getLogger(__name__)

KINDS = ("fermi_zero", "fermi_dirac", "bose", "boltzmann", "custom_radial")

# exponents within this margin of a critical value are treated as divergent
DIVERGENCE_MARGIN = 0.05
MIN_TAIL_NODES = 8


class QuadratureError(RuntimeError):
    """A quadrature's error estimate exceeded the configured tolerance."""


def sphere_area(d: int) -> float:
    """|S^{d-1}| = 2 π^{d/2} / Γ(d/2)."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


@dataclass(frozen=True)
class MomentumDistribution:
    kind: str
    dim: int
    mu: float = 0.0
    T: float = 0.0
    radii: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    tail: str = "compact"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        if self.kind == "fermi_zero" and self.mu <= 0:
            raise ValueError("Fermi gas at zero temperature needs mu > 0")
        if self.kind in ("fermi_dirac", "bose", "boltzmann") and self.T <= 0:
            raise ValueError("thermal distributions need T > 0")
        if self.kind == "bose" and self.mu >= 0:
            raise ValueError("Bose distribution needs mu < 0 (pole at |ξ|² = mu)")
        if self.kind == "custom_radial":
            r = np.asarray(self.radii, float)
            v = np.asarray(self.values, float)
            if r.size < 2 or r.size != v.size:
                raise ValueError("custom table needs >= 2 matching (radius, value) rows")
            if r[0] != 0.0 or np.any(np.diff(r) <= 0):
                raise ValueError("custom radii must start at 0 and increase strictly")
            if np.any(v < 0) or not np.all(np.isfinite(v)):
                raise ValueError("|f|² samples must be finite and nonnegative")
            if self.tail not in ("compact", "exp"):
                raise ValueError("tail must be 'compact' or 'exp'")
            if self.tail == "exp" and not (v[-1] > 0 and v[-2] > v[-1]):
                raise ValueError("exponential tail needs strictly decaying positive last samples")

    # constructors ---------------------------------------------------------
    @classmethod
    def fermi_zero(cls, mu: float = 1.0, dim: int = 3):
        return cls("fermi_zero", dim, mu=float(mu))

    @classmethod
    def fermi_dirac(cls, T: float, mu: float, dim: int = 3):
        return cls("fermi_dirac", dim, mu=float(mu), T=float(T))

    @classmethod
    def bose(cls, T: float, mu: float, dim: int = 3):
        return cls("bose", dim, mu=float(mu), T=float(T))

    @classmethod
    def boltzmann(cls, T: float, mu: float = 0.0, dim: int = 3):
        return cls("boltzmann", dim, mu=float(mu), T=float(T))

    @classmethod
    def custom(cls, radii, values, dim: int = 3, tail: str = "compact"):
        return cls("custom_radial", dim, radii=tuple(map(float, radii)),
                   values=tuple(map(float, values)), tail=tail)

    @classmethod
    def zero(cls, dim: int = 3):
        return cls.custom([0.0, 1.0], [0.0, 0.0], dim=dim)

    @classmethod
    def from_csv(cls, path, dim: int = 3, tail: str = "compact"):
        """Read a two-column (radius, value) CSV with one header line."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        data = [(float(a), float(b)) for a, b in (row[:2] for row in rows[1:] if row)]
        radii, values = zip(*data)
        return cls.custom(radii, values, dim=dim, tail=tail)

    # evaluation -------------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return self.kind == "custom_radial" and not any(self.values)

    def f_squared(self, rho):
        rho = np.asarray(rho, dtype=float)
        if np.any(rho < 0):
            raise ValueError("radius must be nonnegative")
        e = rho * rho
        if self.kind == "fermi_zero":
            out = (e <= self.mu).astype(float)
        elif self.kind == "fermi_dirac":
            out = 0.5 * (1.0 - np.tanh(0.5 * (e - self.mu) / self.T))
        elif self.kind == "bose":
            with np.errstate(over="ignore"):
                out = 1.0 / np.expm1((e - self.mu) / self.T)
        elif self.kind == "boltzmann":
            with np.errstate(over="ignore"):
                out = np.exp(-(e - self.mu) / self.T)
        else:
            out = self._custom(rho)
        return out if out.ndim else float(out)

    def _custom(self, rho):
        r = np.asarray(self.radii)
        v = np.asarray(self.values)
        inside = PchipInterpolator(r, v, extrapolate=False)(np.minimum(rho, r[-1]))
        if self.tail == "compact":
            beyond = np.zeros_like(rho)
        else:
            lam = (r[-1] - r[-2]) / math.log(v[-2] / v[-1])
            beyond = v[-1] * np.exp(-(rho - r[-1]) / lam)
        return np.where(rho > r[-1], beyond, inside)

    def support_radius(self) -> float:
        """Radius beyond which |f|² is zero or below 1e-17 of its scale."""
        if self.kind == "fermi_zero":
            return math.sqrt(self.mu)
        if self.kind == "custom_radial":
            r = self.radii
            if self.tail == "compact":
                return r[-1]
            lam = (r[-1] - r[-2]) / math.log(self.values[-2] / self.values[-1])
            return r[-1] + 40.0 * lam
        return math.sqrt(max(self.mu, 0.0) + 40.0 * self.T)

    def breakpoints(self) -> list[float]:
        if self.kind == "fermi_zero":
            return []
        if self.kind == "custom_radial":
            return list(self.radii[1:])
        if self.kind == "fermi_dirac" and self.mu > 0:
            return [math.sqrt(self.mu)]
        return []

    def norm_squared(self, quad: QuadConfig | None = None) -> float:
        """∫ |f(ξ)|² dξ over ℝ^d."""
        d = self.dim
        if self.kind == "fermi_zero":
            return math.pi ** (d / 2) * self.mu ** (d / 2) / math.gamma(d / 2 + 1)
        if self.kind == "boltzmann":
            return math.exp(self.mu / self.T) * (math.pi * self.T) ** (d / 2)
        return sphere_area(d) * radial_moment(self, d - 1, quad)

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "dim": self.dim}
        if self.kind in ("fermi_zero", "fermi_dirac", "bose", "boltzmann"):
            out["mu"] = self.mu
        if self.kind in ("fermi_dirac", "bose", "boltzmann"):
            out["T"] = self.T
        if self.kind == "custom_radial":
            out["radii"] = list(self.radii)
            out["values"] = list(self.values)
            out["tail"] = self.tail
        return out


def eval_f_squared(dist: MomentumDistribution, rho):
    """|f(ξ)|² at |ξ| = rho."""
    return dist.f_squared(rho)


def _quad(func, a, b, quad: QuadConfig, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(func, a, b, epsabs=quad.epsabs, epsrel=quad.epsrel,
                                      limit=quad.limit, **kw)
        except integrate.IntegrationWarning as exc:
            # retry without raising to inspect the error estimate
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(func, a, b, epsabs=quad.epsabs, epsrel=quad.epsrel,
                                      limit=quad.limit, **kw)
            if err > 100 * max(quad.epsabs, quad.epsrel * abs(val)):
                raise QuadratureError(f"quadrature did not converge on [{a}, {b}]: "
                                      f"estimate {err:.3g} ({exc})") from None
    return val, err


def radial_moment(dist: MomentumDistribution, power: int, quad: QuadConfig | None = None) -> float:
    """∫_0^∞ ρ^power |f(ρ)|² dρ by adaptive Gauss-Kronrod."""
    quad = quad or QuadConfig()
    R = dist.support_radius()
    edges = [0.0] + [p for p in dist.breakpoints() if 0 < p < R] + [R]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += _quad(lambda s: s**power * dist.f_squared(s), a, b, quad)[0]
    return total


def _hf_fermi_zero(dist: MomentumDistribution, r: np.ndarray) -> np.ndarray:
    d, mu = dist.dim, dist.mu
    nu = d / 2
    x = math.sqrt(mu) * r
    out = np.empty_like(r)
    small = x < 1e-3
    # series J_ν(x)/x^ν = 2^{-ν}/Γ(ν+1) (1 - x²/(4(ν+1)) + ...)
    xs = x[small]
    out[small] = mu ** (d / 2) / (2**nu * math.gamma(nu + 1)) * (
        1 - xs**2 / (4 * (nu + 1)) + xs**4 / (32 * (nu + 1) * (nu + 2)))
    xl = x[~small]
    if d == 3:
        out[~small] = mu ** 1.5 * math.sqrt(2 / math.pi) / xl**2 * (np.sin(xl) / xl - np.cos(xl))
    else:
        out[~small] = mu ** (d / 2) * xl ** (-nu) * bessel_J(nu, xl)
    return out


def _hf_quadrature(dist: MomentumDistribution, r: float, quad: QuadConfig) -> tuple[float, float]:
    d = dist.dim
    R = dist.support_radius()
    edges = [0.0] + [p for p in dist.breakpoints() if 0 < p < R] + [R]
    if r == 0.0:
        c = 2.0 ** (1 - d / 2) / math.gamma(d / 2)
        tot, err = 0.0, 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            v, e = _quad(lambda s: s ** (d - 1) * dist.f_squared(s), a, b, quad)
            tot, err = tot + v, err + e
        return c * tot, c * err
    tot, err = 0.0, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if d == 3:
            # sin-weighted rule handles the oscillation for large r R
            v, e = _quad(lambda s: s * dist.f_squared(s), a, b, quad, weight="sin", wvar=r)
        elif d == 1:
            v, e = _quad(lambda s: dist.f_squared(s), a, b, quad, weight="cos", wvar=r)
        else:
            nu = d / 2 - 1
            v, e = _quad(lambda s: dist.f_squared(s) * special.jv(nu, r * s) * s ** (d / 2), a, b, quad)
        tot, err = tot + v, err + e
    if d == 3:
        return math.sqrt(2 / math.pi) / r * tot, math.sqrt(2 / math.pi) / r * err
    if d == 1:
        return math.sqrt(2 / math.pi) * tot, math.sqrt(2 / math.pi) * err
    return r ** (1 - d / 2) * tot, r ** (1 - d / 2) * err


def compute_Hf(dist: MomentumDistribution, r, quad: QuadConfig | None = None, method: str = "auto"):
    """H_f at |x| = r (scalar or array).

    ``method`` is "closed" (Fermi ball only), "quadrature" (radial Hankel
    transform by adaptive Gauss-Kronrod) or "auto" (closed form for the
    Fermi ball, quadrature otherwise).
    """
    quad = quad or QuadConfig()
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0):
        raise ValueError("radius must be nonnegative")
    flat = np.atleast_1d(arr).ravel()
    if dist.is_zero:
        out = np.zeros_like(flat)
    elif method == "closed" or (method == "auto" and dist.kind == "fermi_zero"):
        if dist.kind != "fermi_zero":
            raise ValueError("closed form available only for the Fermi ball")
        out = _hf_fermi_zero(dist, flat)
    elif method in ("auto", "quadrature"):
        out = np.array([_hf_quadrature(dist, float(x), quad)[0] for x in flat])
    else:
        raise ValueError(f"unknown method {method!r}")
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


# --- profiles used inside the response symbol ------------------------------

@dataclass(frozen=True)
class HfFunction:
    """Vectorised r ↦ h_f(r) plus the data needed for far-field integrals.

    ``tail_terms`` (when present) represents h_f(r) for r >= ``tail_start``
    exactly as Σ c_j r^{-p_j} e^{i s_j r sqrt(μ)} with integer p_j; beyond
    ``r_support`` the profile is negligible.
    """

    dist: MomentumDistribution
    nodes: tuple = ()
    spline: CubicSpline | None = None
    r_support: float = math.inf
    tail_terms: tuple = ()
    tail_start: float = math.inf

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        if self.dist.is_zero:
            return np.zeros_like(r)
        if self.dist.kind == "fermi_zero":
            flat = np.atleast_1d(r).ravel()
            return _hf_fermi_zero(self.dist, flat).reshape(r.shape)
        out = self.spline(np.minimum(r, self.r_support))
        return np.where(r >= self.r_support, 0.0, out)


def fermi_tail_terms(mu: float, d: int) -> tuple:
    """Exact far-field expansion of μ^{d/4} r^{-d/2} J_{d/2}(sqrt(μ) r) for odd d.

    Returns tuples (coefficient, power, sign) meaning c r^{-p} e^{i s sqrt(μ) r}.
    """
    if d % 2 == 0:
        return ()
    nu = d / 2
    a = hankel_coefficients(nu)
    nterms = int(np.nonzero(a)[0].max()) + 1
    k0 = math.sqrt(mu)
    pref = mu ** (d / 4) * math.sqrt(2 / (math.pi * k0)) * k0 ** (-nu)
    # J_ν(x) = sqrt(2/(πx)) [P cos χ - Q sin χ], χ = x - νπ/2 - π/4
    phase = -nu * math.pi / 2 - math.pi / 4
    terms = []
    for k in range(nterms):
        sign = -1.0 if (k // 2) % 2 else 1.0
        coef = sign * a[k] / k0**k
        power = nu + 0.5 + k
        if k % 2 == 0:
            # coef cos χ = coef/2 (e^{iχ} + e^{-iχ})
            c_plus = 0.5 * coef * complex(math.cos(phase), math.sin(phase))
            c_minus = 0.5 * coef * complex(math.cos(phase), -math.sin(phase))
        else:
            # -coef sin χ = -coef/(2i) (e^{iχ} - e^{-iχ})
            c_plus = -coef / 2j * complex(math.cos(phase), math.sin(phase))
            c_minus = coef / 2j * complex(math.cos(phase), -math.sin(phase))
        terms.append((pref * c_plus, int(round(power)), 1))
        terms.append((pref * c_minus, int(round(power)), -1))
    return tuple(terms)


@lru_cache(maxsize=32)
def hf_function(dist: MomentumDistribution, quad: QuadConfig | None = None) -> HfFunction:
    """Build an h_f evaluator suitable for the symbol integrals."""
    quad = quad or QuadConfig()
    if dist.is_zero:
        return HfFunction(dist, r_support=0.0)
    if dist.kind == "fermi_zero":
        terms = fermi_tail_terms(dist.mu, dist.dim)
        start = quad.tail_split / math.sqrt(dist.mu) if terms else math.inf
        return HfFunction(dist, tail_terms=terms, tail_start=start)
    # tabulate by quadrature until the profile has decayed
    R = dist.support_radius()
    h0 = abs(compute_Hf(dist, 0.0, quad))
    step = 0.05 * math.pi / R
    r_end = 8.0 / R
    while True:
        probe = np.linspace(0.8 * r_end, r_end, 6)
        vals = np.abs(compute_Hf(dist, probe, quad))
        if vals.max() < 1e-13 * h0 or r_end > 1e4:
            break
        r_end *= 1.5
    nodes = np.arange(0.0, r_end + step, step)
    vals = compute_Hf(dist, nodes, quad)
    spline = CubicSpline(nodes, vals, bc_type=((1, 0.0), "not-a-knot"))
    return HfFunction(dist, nodes=tuple(nodes), spline=spline, r_support=float(nodes[-1]))


# --- radial profiles and tail fits -------------------------------------------

@dataclass(frozen=True)
class RadialProfile:
    """Sampled even profile h(r), r = |x|, with a power-law model for |h| past the grid.

    The tail model describes the local mean of |h|: envelope × 2/π for
    oscillating profiles, the envelope itself otherwise.
    """

    grid: np.ndarray
    values: np.ndarray
    tail_exponent: float
    tail_constant: float
    oscillatory: bool = False

    def __post_init__(self):
        g = np.asarray(self.grid)
        if g[0] != 0.0 or np.any(np.diff(g) <= 0):
            raise ValueError("profile grid must start at 0 and increase strictly")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("profile has non-finite samples")
        if not self.tail_exponent >= 0:
            raise ValueError("tail exponent must be >= 0")

    @property
    def r_max(self) -> float:
        return float(self.grid[-1])

    @property
    def mean_factor(self) -> float:
        return 2.0 / math.pi if self.oscillatory else 1.0

    def _spline(self):
        return CubicSpline(self.grid, self.values, bc_type=((1, 0.0), "not-a-knot"))

    def value(self, r):
        """Signed h(r) on [-r_max, r_max]; h(-r) = h(r) by definition."""
        r = np.abs(np.asarray(r, dtype=float))
        if np.any(r > self.r_max * (1 + 1e-12)):
            raise ValueError("signed profile values exist only on the sampled range")
        return self._spline()(r)

    def tail_model(self, r):
        r = np.asarray(r, dtype=float)
        if self.tail_constant == 0.0:
            return np.zeros_like(r)
        return self.mean_factor * self.tail_constant * r ** (-self.tail_exponent)

    def abs_model(self, r):
        """|h| inside the grid, mean-|h| tail model beyond."""
        r = np.abs(np.asarray(r, dtype=float))
        inside = np.abs(self._spline()(np.minimum(r, self.r_max)))
        with np.errstate(divide="ignore"):
            tail = self.tail_model(np.maximum(r, self.r_max))
        return np.where(r > self.r_max, tail, inside)

    @classmethod
    def from_function(cls, func, r_max: float, n: int, noise_floor: float = 0.0) -> "RadialProfile":
        grid = np.linspace(0.0, r_max, n + 1)
        vals = np.asarray(func(grid), dtype=float)
        p, c, osc = fit_tail(grid, vals, noise_floor)
        return cls(grid, vals, p, c, osc)


def fit_tail(grid: np.ndarray, values: np.ndarray, noise_floor: float = 0.0):
    """Least-squares fit of log|h| against log r over the last decade.

    Returns (exponent, constant, oscillatory).  Oscillating profiles are fitted
    on their envelope (one peak per lobe); nodes within 1e-8 of the local
    amplitude or below ``noise_floor`` are skipped.
    """
    grid = np.asarray(grid, float)
    values = np.asarray(values, float)
    floor = max(noise_floor, 1e-300)
    if np.all(np.abs(values) <= floor):
        return math.inf, 0.0, False
    sel = grid >= grid[-1] / 10.0
    sel &= grid > 0
    r, h = grid[sel], values[sel]
    # samples at the noise floor carry no sign information
    signs = np.where(np.abs(h) > floor, np.sign(h), 0.0)
    live = signs != 0
    signs = signs[live]
    crossings = np.nonzero(signs[1:] * signs[:-1] < 0)[0]
    oscillatory = crossings.size >= 2
    if oscillatory:
        r, h = r[live], h[live]
        bounds = np.concatenate([[0], crossings + 1, [r.size]])
        rr, hh = [], []
        for a, b in zip(bounds[:-1], bounds[1:]):
            if b - a < 3:
                continue
            seg = np.abs(h[a:b])
            i = int(np.argmax(seg))
            # interior peaks only: lobes cut by the window ends are biased
            if a == 0 or b == r.size or i in (0, b - a - 1):
                continue
            if seg[i] > floor:
                rr.append(r[a + i])
                hh.append(seg[i])
        rr, hh = np.asarray(rr), np.asarray(hh)
    else:
        mag = np.abs(h)
        amp = np.maximum.accumulate(mag[::-1])[::-1]
        keep = (mag > floor) & (mag > 1e-8 * amp)
        rr, hh = r[keep], mag[keep]
    if rr.size < MIN_TAIL_NODES:
        raise ValueError(f"tail fit needs >= {MIN_TAIL_NODES} usable nodes, found {rr.size}")
    slope, intercept = np.polyfit(np.log(rr), np.log(hh), 1)
    return max(-slope, 0.0), math.exp(intercept), oscillatory


def compute_hf_profile(dist: MomentumDistribution, r_max: float, n: int,
                       quad: QuadConfig | None = None) -> RadialProfile:
    """Sample h_f on n+1 equispaced nodes of [0, r_max] and fit its tail."""
    if r_max <= 0 or n < 2:
        raise ValueError("need r_max > 0 and n >= 2")
    quad = quad or QuadConfig()
    grid = np.linspace(0.0, r_max, n + 1)
    vals = np.asarray(compute_Hf(dist, grid, quad), dtype=float)
    # quadrature noise: values below it carry no decay information
    floor = 0.0 if dist.kind == "fermi_zero" else 10.0 * quad.epsabs
    p, c, osc = fit_tail(grid, vals, floor)
    return RadialProfile(grid, vals, p, c, osc)


def _abs_integral(profile: RadialProfile, weight_power: int = 0) -> float:
    """∫_0^{r_max} |h(r)| r^weight_power dr on a refined grid."""
    fine = np.linspace(0.0, profile.r_max, 8 * (profile.grid.size - 1) + 1)
    vals = np.abs(profile._spline()(fine)) * fine**weight_power
    return float(integrate.trapezoid(vals, fine))


def tail_integral(profile: RadialProfile, weight_power: int = 0) -> float:
    """∫_{r_max}^∞ (tail model) r^weight_power dr; infinite when not integrable."""
    if profile.tail_constant == 0.0:
        return 0.0
    q = profile.tail_exponent - weight_power
    if q <= 1.0 + DIVERGENCE_MARGIN:
        return math.inf
    return profile.mean_factor * profile.tail_constant * profile.r_max ** (1 - q) / (q - 1)


def hf_L1_norm(profile: RadialProfile) -> float:
    """‖h‖_{L¹(ℝ)} = 2 ∫_0^∞ |h|; returns inf (with a warning) for tails decaying like r^{-1} or slower."""
    tail = tail_integral(profile)
    if math.isinf(tail):
        log.warning("h_f tail exponent %.3f: L1 norm diverges", profile.tail_exponent)
        return math.inf
    return 2.0 * (_abs_integral(profile) + tail)


@dataclass(frozen=True)
class SteadyStateParams:
    distribution: MomentumDistribution
    potential: Potential

    @property
    def m(self) -> float:
        """Mass shift ŵ(0)·‖f‖²."""
        return self.potential.w_hat_zero * self.distribution.norm_squared()


def write_profile_csv(profile: RadialProfile, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "h"])
        for r, h in zip(profile.grid, profile.values):
            w.writerow([repr(float(r)), repr(float(h))])
