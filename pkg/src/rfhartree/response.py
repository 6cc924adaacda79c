"""Linear-response symbol m_f(τ, k) and the invertibility criteria for 1 - L.

m_f(τ, k) = -2 ∫_0^∞ e^{-iτt} sin(k²t) h_f(2kt) dt.

Two evaluation routes are provided:

* ``quadrature``: exponential damping e^{-ηt} on [0, 40/η], vectorised
  Gauss-Kronrod over a batch of τ, Richardson extrapolation in η.  For the
  Fermi ball in odd d the far field of h_f is a finite sum of r^{-n} e^{±ir}
  terms and is integrated exactly with exponential integrals.
* ``lindhard``: closed forms obtained by integrating the time variable
  first (Fermi ball in d = 3, Boltzmann in any d).  These are exact up to
  rounding and are used where sampling close to the resonance rays
  τ = ±(2k sqrt(μ) ± k²) is required.

The response operator acts on the space-time transform with multiplier
``Potential.coupling(k, d) * m_f(τ, k)``.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, special

from .distributions import (
    DIVERGENCE_MARGIN,
    MomentumDistribution,
    RadialProfile,
    _abs_integral,
    hf_function,
    sphere_area,
    tail_integral,
)
from .potentials import Potential
from .quadrature import QuadConfig, gk15_oscillatory
from .special import expn_complex

LOG_PREFACTOR = 1.0 / (2.0 * math.sqrt(2.0 * math.pi))


class CoverageError(ValueError):
    """A symbol was queried outside the region it was built on."""


# --- damped quadrature --------------------------------------------------------

def _richardson(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Extrapolate F(η), F(η/2), F(η/4) (rows) to η = 0.

    Returns the second-order value and |R2 - R1'| as the error estimate.
    """
    if F.shape[0] == 1:
        return F[0], np.full(F.shape[1:], np.inf)
    if F.shape[0] == 2:
        r1 = 2 * F[1] - F[0]
        return r1, np.abs(r1 - F[1])
    r1 = 2 * F[1] - F[0]
    r1p = 2 * F[2] - F[1]
    r2 = (4 * r1p - r1) / 3
    return r2, np.abs(r2 - r1p)


def _tail_damped(terms, k: float, sqrt_mu: float, taus: np.ndarray, etas, t_s: float,
                 horizon: float) -> np.ndarray:
    """Exact ∫_{t_s}^{T(η)} of the far-field terms, shape (n_eta, n_tau)."""
    out = np.zeros((len(etas), taus.size), complex)
    for i, eta in enumerate(etas):
        T = horizon / eta
        if T <= t_s:
            continue
        for c, p, s in terms:
            # h(2kt) term: c (2kt)^{-p} e^{i s sqrt(μ) 2k t}
            base = c * (2 * k) ** (-p)
            for sgn in (1.0, -1.0):
                # -2 sin(k²t) = -2 (e^{ik²t} - e^{-ik²t}) / (2i) = i sgn e^{i sgn k² t}
                z = eta + 1j * taus - 1j * s * sqrt_mu * 2 * k - 1j * sgn * k * k
                val = t_s ** (1 - p) * expn_complex(p, z * t_s) - T ** (1 - p) * expn_complex(p, z * T)
                out[i] += 1j * sgn * base * val
    return out


def _column(dist: MomentumDistribution, taus: np.ndarray, k: float, quad: QuadConfig,
            chunk: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """m_f and error estimate on a batch of τ at fixed k > 0."""
    hf = hf_function(dist, quad)
    etas = tuple(quad.etas)
    T_max = quad.horizon_factor / min(etas)
    if dist.kind == "fermi_zero":
        sqrt_mu = math.sqrt(dist.mu)
        t_s = hf.tail_start / (2 * k) if hf.tail_terms else T_max
    else:
        sqrt_mu = 0.0
        t_s = min(hf.r_support / (2 * k), T_max)
    t_s = min(t_s, T_max)

    def g(t):
        return -2.0 * np.sin(k * k * t) * hf(2 * k * t)

    def damping(t):
        out = np.exp(-np.outer(etas, t))
        # each η integrates only up to its own horizon
        out[np.asarray(t)[None, :] > quad.horizon_factor / np.asarray(etas)[:, None]] = 0.0
        return out

    fmax = max(float(np.max(np.abs(taus))), k * k + 2 * k * sqrt_mu, 1.0 / t_s)
    n_init = int(min(max(8, math.ceil(t_s * fmax / math.pi)), 20000))
    tol = 1e-2 * quad.symbol_tol
    values = np.empty(taus.size, complex)
    errors = np.empty(taus.size)
    for lo in range(0, taus.size, chunk):
        tb = taus[lo:lo + chunk]
        res = gk15_oscillatory(g, 0.0, t_s, tb, tol, weights_fn=damping, initial_panels=n_init,
                               max_levels=quad.max_panel_levels)
        F = res.values
        if hf.tail_terms and t_s < T_max:
            F = F + _tail_damped(hf.tail_terms, k, sqrt_mu, tb, etas, t_s, quad.horizon_factor)
        val, rich = _richardson(F)
        quad_err = res.error.max(axis=0) * (1.0 if res.converged else np.inf)
        values[lo:lo + chunk] = val
        errors[lo:lo + chunk] = rich + quad_err
    return values, errors


def m_f_quadrature(dist: MomentumDistribution, d: int, tau, k: float,
                   quad: QuadConfig | None = None):
    """Damped-quadrature value of m_f(τ, k) with an error estimate.

    ``tau`` may be a scalar or an array; returns (value, error) of matching shape.
    """
    quad = quad or QuadConfig()
    if d != dist.dim:
        raise ValueError("dimension does not match the distribution")
    if not k > 0:
        raise ValueError("m_f needs k > 0")
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    if dist.is_zero:
        v, e = np.zeros(taus.size, complex), np.zeros(taus.size)
    else:
        v, e = _column(dist, taus, float(k), quad)
    if np.ndim(tau) == 0:
        return complex(v[0]), float(e[0])
    return v.reshape(np.shape(tau)), e.reshape(np.shape(tau))


# --- closed forms ---------------------------------------------------------

def _fermi3_kernel(u):
    """∫_{-1}^{1} (1 - v²)/(u - v - i0) dv."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.log(np.abs((u + 1) / (u - 1)))
    lg = np.where(np.isfinite(lg), lg, 0.0)
    re = np.atleast_1d(2 * u + (1 - u * u) * lg)
    # the closed form cancels for large |u|; use the series in 1/u there
    far = np.atleast_1d(np.abs(u) > 4)
    if np.any(far):
        x = 1 / np.atleast_1d(u)[far]
        n = np.arange(20)
        re[far] = np.sum(4 * x[..., None] ** (2 * n + 1) / ((2 * n + 1) * (2 * n + 3)), axis=-1)
    re = re.reshape(u.shape)
    im = np.where(np.abs(u) < 1, math.pi * (1 - u * u), 0.0)
    return re + 1j * im


def lindhard_available(dist: MomentumDistribution) -> bool:
    return dist.is_zero or dist.kind == "boltzmann" or (dist.kind == "fermi_zero" and dist.dim == 3)


def m_f_lindhard(dist: MomentumDistribution, tau, k):
    """Closed-form m_f for the Fermi ball (d = 3) and Boltzmann states (any d)."""
    tau = np.asarray(tau, dtype=float)
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise ValueError("m_f needs k > 0")
    if not lindhard_available(dist):
        raise ValueError(f"no closed form for {dist.kind} in d={dist.dim}")
    d = dist.dim
    if dist.is_zero:
        return np.zeros(np.broadcast(tau, k).shape, complex)

    def G(c):
        s0 = c / (2 * k)
        if dist.kind == "fermi_zero":
            sm = math.sqrt(dist.mu)
            return math.pi * dist.mu / (2 * k) * _fermi3_kernel(s0 / sm)
        A = math.exp(dist.mu / dist.T) * (math.pi * dist.T) ** ((d - 1) / 2)
        return A / (2 * k) * 1j * math.pi * np.conj(special.wofz(s0 / math.sqrt(dist.T) + 0j))

    out = (G(tau - k * k) - G(tau + k * k)) / (2 * math.pi) ** (d / 2)
    return out


def m_f(dist: MomentumDistribution, tau, k, quad: QuadConfig | None = None, method: str = "auto"):
    """m_f on broadcast (τ, k) arrays; returns (values, errors)."""
    if method == "auto":
        method = "lindhard" if lindhard_available(dist) else "quadrature"
    tau_b, k_b = np.broadcast_arrays(np.asarray(tau, float), np.asarray(k, float))
    if method == "lindhard":
        v = m_f_lindhard(dist, tau_b, k_b)
        return v, np.zeros(v.shape)
    if method != "quadrature":
        raise ValueError(f"unknown symbol method {method!r}")
    vals = np.empty(tau_b.shape, complex)
    errs = np.empty(tau_b.shape)
    flat_t, flat_k = tau_b.ravel(), k_b.ravel()
    vf, ef = vals.reshape(-1), errs.reshape(-1)
    for kk in np.unique(flat_k):
        sel = flat_k == kk
        vf[sel], ef[sel] = m_f_quadrature(dist, dist.dim, flat_t[sel], float(kk), quad)
    return vals, errs


# --- tables -----------------------------------------------------------------

@dataclass
class ResponseSymbol:
    """Sampled m_f on a tensor grid τ × k (τ ≥ 0 suffices; negative τ uses conjugate symmetry)."""

    tau_grid: np.ndarray
    k_grid: np.ndarray
    values: np.ndarray  # shape (n_tau, n_k)
    err: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tau_grid = np.asarray(self.tau_grid, float)
        self.k_grid = np.asarray(self.k_grid, float)
        self.values = np.asarray(self.values, complex)
        self.err = np.asarray(self.err, float)
        if np.any(np.diff(self.tau_grid) <= 0) or np.any(np.diff(self.k_grid) <= 0):
            raise ValueError("symbol grids must increase strictly")
        if self.values.shape != (self.tau_grid.size, self.k_grid.size):
            raise ValueError("symbol values do not match the grid")

    @property
    def tolerance(self) -> float:
        return float(self.meta.get("symbol_tol", QuadConfig().symbol_tol))

    @property
    def flagged(self) -> np.ndarray:
        return ~(self.err <= self.tolerance)

    @property
    def dim(self) -> int:
        return int(self.meta.get("dim", 3))

    def _locate(self, grid, x, what):
        idx = np.searchsorted(grid, x)
        exact = (idx < grid.size) & (grid[np.minimum(idx, grid.size - 1)] == x)
        tol = 1e-12 * max(1.0, float(np.abs(grid).max()))
        inside = (x >= grid[0] - tol) & (x <= grid[-1] + tol)
        if not np.all(inside):
            bad = x[~inside]
            raise CoverageError(f"{what} = {bad.min():.6g}..{bad.max():.6g} outside "
                                f"[{grid[0]:.6g}, {grid[-1]:.6g}]")
        x = np.clip(x, grid[0], grid[-1])
        i = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, max(grid.size - 2, 0))
        if grid.size == 1:
            return i, np.zeros_like(x)
        w = np.where(exact, np.where(idx == i, 0.0, 1.0), (x - grid[i]) / (grid[i + 1] - grid[i]))
        return i, w

    def __call__(self, tau, k):
        """m_f at arbitrary (τ, k) inside the table by bilinear interpolation."""
        tau_b, k_b = np.broadcast_arrays(np.asarray(tau, float), np.asarray(k, float))
        at = np.abs(tau_b).ravel()
        kk = k_b.ravel()
        it, wt = self._locate(self.tau_grid, at, "|tau|")
        ik, wk = self._locate(self.k_grid, kk, "k")
        V = self.values
        it1 = np.minimum(it + 1, self.tau_grid.size - 1)
        ik1 = np.minimum(ik + 1, self.k_grid.size - 1)
        out = ((1 - wt) * (1 - wk) * V[it, ik] + wt * (1 - wk) * V[it1, ik]
               + (1 - wt) * wk * V[it, ik1] + wt * wk * V[it1, ik1])
        out = np.where(tau_b.ravel() < 0, np.conj(out), out)
        return out.reshape(tau_b.shape)

    # persistence -----------------------------------------------------------
    def to_csv(self, path) -> Path:
        path = Path(path)
        T, K = np.meshgrid(self.tau_grid, self.k_grid, indexing="ij")
        flagged = self.flagged
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau", "k", "re", "im", "err", "flagged"])
            for t, k, v, e, f in zip(T.ravel(), K.ravel(), self.values.ravel(), self.err.ravel(),
                                     flagged.ravel()):
                w.writerow([f"{t:.17g}", f"{k:.17g}", f"{v.real:.17g}", f"{v.imag:.17g}",
                            f"{e:.17g}", int(f)])
        meta = dict(self.meta, n_tau=int(self.tau_grid.size), n_k=int(self.k_grid.size))
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        return path

    @classmethod
    def from_csv(cls, path) -> "ResponseSymbol":
        path = Path(path)
        data = np.genfromtxt(path, delimiter=",", skip_header=1, ndmin=2)
        meta = json.loads(path.with_suffix(".json").read_text())
        nt, nk = meta["n_tau"], meta["n_k"]
        taus = data[:, 0].reshape(nt, nk)[:, 0]
        ks = data[:, 1].reshape(nt, nk)[0]
        vals = (data[:, 2] + 1j * data[:, 3]).reshape(nt, nk)
        err = data[:, 4].reshape(nt, nk)
        meta = {k: v for k, v in meta.items() if k not in ("n_tau", "n_k")}
        return cls(taus, ks, vals, err, meta)


def build_symbol(dist: MomentumDistribution, tau_grid, k_grid, quad: QuadConfig | None = None,
                 method: str = "auto", workers: int = 1) -> ResponseSymbol:
    """Tabulate m_f on τ_grid × k_grid (k > 0)."""
    quad = quad or QuadConfig()
    taus = np.unique(np.abs(np.asarray(tau_grid, float)))
    ks = np.unique(np.asarray(k_grid, float))
    if np.any(ks <= 0):
        raise ValueError("symbol k-grid must be positive")
    if method == "auto":
        method = "lindhard" if lindhard_available(dist) else "quadrature"
    if method == "lindhard":
        T, K = np.meshgrid(taus, ks, indexing="ij")
        vals = m_f_lindhard(dist, T, K)
        errs = np.zeros(vals.shape)
    else:
        def col(k):
            if dist.is_zero:
                return np.zeros(taus.size, complex), np.zeros(taus.size)
            return _column(dist, taus, float(k), quad)

        if workers > 1:
            with ThreadPoolExecutor(workers) as ex:
                cols = list(ex.map(col, ks))
        else:
            cols = [col(k) for k in ks]
        vals = np.stack([c[0] for c in cols], axis=1)
        errs = np.stack([c[1] for c in cols], axis=1)
    meta = {"distribution": dist.to_dict(), "dim": dist.dim, "method": method,
            "quadrature": quad.to_dict(), "symbol_tol": quad.symbol_tol}
    return ResponseSymbol(taus, ks, vals, errs, meta)


# --- three-dimensional log decomposition ---------------------------------------

def log_term_3d(tau, k):
    """(1/(2 sqrt(2π))) min(log max(ε, k), 0) with ε = min|2 ∓ τ/k|."""
    tau = np.asarray(tau, dtype=float)
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise ValueError("log term needs k > 0")
    eps = np.minimum(np.abs(2 - tau / k), np.abs(2 + tau / k))
    out = LOG_PREFACTOR * np.minimum(np.log(np.maximum(eps, k)), 0.0)
    return float(out) if out.ndim == 0 else out


def bounded_remainder_3d(tau, k, m):
    """m_f + log_term_3d.

    The symbol grows like -log_term_3d near the resonance rays as k → 0
    (to +∞, not -∞), so this sum is the bounded part.
    """
    return np.asarray(m) + log_term_3d(tau, k)


def resonance_taus(k: float, tau_max: float, n_base: int, eps_min: float, n_cluster: int) -> np.ndarray:
    """Uniform τ-nodes on [0, tau_max] plus nodes τ = k(2 ± ε), ε geometric in [eps_min, 1/2]."""
    base = np.linspace(0.0, tau_max, n_base + 1)
    eps = np.geomspace(eps_min, 0.5, n_cluster)
    cluster = np.concatenate([k * (2 - eps), k * (2 + eps), [2 * k]])
    nodes = np.concatenate([base, cluster[(cluster >= 0) & (cluster <= tau_max)]])
    return np.unique(nodes)


@dataclass
class ResonanceScan:
    tau: np.ndarray
    k: np.ndarray
    m: np.ndarray
    err: np.ndarray

    @property
    def sup_abs(self) -> float:
        return float(np.max(np.abs(self.m)))

    @property
    def sup_re(self) -> float:
        return float(np.max(self.m.real))

    @property
    def sup_minus_log(self) -> float:
        """sup |m_f - log_term_3d| (the decomposition as displayed)."""
        return float(np.max(np.abs(self.m - log_term_3d(self.tau, self.k))))

    @property
    def sup_remainder(self) -> float:
        return float(np.max(np.abs(bounded_remainder_3d(self.tau, self.k, self.m))))


def resonance_scan(dist: MomentumDistribution, level: int, tau_max: float = 4.0,
                   k_min: float = 0.05, k_max: float = 2.0, eps_min: float | None = None,
                   quad: QuadConfig | None = None, method: str = "auto") -> ResonanceScan:
    """Sample m_f on a k-adaptive grid refined toward τ = 2k.

    Level ℓ uses 10·2^ℓ log-spaced k, 20·2^ℓ uniform τ-intervals and
    8·2^ℓ clustered nodes per side down to ε = 10^{-(ℓ+1)} (or ``eps_min``).
    """
    n_k = 10 * 2**level
    eps = eps_min if eps_min is not None else 10.0 ** (-(level + 1))
    ks = np.geomspace(k_min, k_max, n_k)
    T, K, M, E = [], [], [], []
    for k in ks:
        taus = resonance_taus(k, tau_max, 20 * 2**level, eps, 8 * 2**level)
        v, e = m_f(dist, taus, k, quad, method)
        T.append(taus), K.append(np.full(taus.size, k)), M.append(v), E.append(e)
    return ResonanceScan(np.concatenate(T), np.concatenate(K), np.concatenate(M), np.concatenate(E))


# --- criteria ---------------------------------------------------------------

@dataclass
class CriterionReport:
    name: str
    value: float
    satisfied: bool
    inputs: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["value"] = _json_float(self.value)
        out["details"] = {k: _json_float(v) for k, v in self.details.items()}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _json_float(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


def _profile_moment(profile: RadialProfile, power: int) -> float:
    tail = tail_integral(profile, power)
    if math.isinf(tail):
        return math.inf
    return _abs_integral(profile, power) + tail


def check_SC(profile: RadialProfile, d: int, w: Potential) -> CriterionReport:
    """‖ŵ_eff‖_∞/(2|S^{d-1}|) ∫ |H_f(x)| |x|^{2-d} dx = ‖ŵ_eff‖_∞/2 ∫_0^∞ |h_f(r)| r dr < 1."""
    sup_w = (2 * math.pi) ** (d / 2) * w.sup_abs()
    inputs = {"dim": d, "potential": _pot_dict(w), "r_max": profile.r_max,
              "tail_exponent": profile.tail_exponent}
    if sup_w == 0.0:
        return CriterionReport("SC", 0.0, True, inputs, {"sup_w": 0.0, "integral": _profile_moment(profile, 1)})
    integral = _profile_moment(profile, 1)
    value = sup_w / 2 * integral
    return CriterionReport("SC", value, bool(value < 1), inputs,
                           {"sup_w": sup_w, "integral": integral,
                            "surface": sphere_area(d), "divergent": math.isinf(integral)})


def check_CS(profile: RadialProfile, w: Potential, d: int = 3) -> CriterionReport:
    """sup |ŵ_eff(ξ)|/|ξ| · ∫_0^∞ |h_f(r)| dr < 1."""
    ratio = (2 * math.pi) ** (d / 2) * w.sup_ratio()
    inputs = {"dim": d, "potential": _pot_dict(w), "r_max": profile.r_max}
    integral = _profile_moment(profile, 0)
    if ratio == 0.0:
        value = 0.0
    elif math.isinf(ratio) or math.isinf(integral):
        value = math.inf
    else:
        value = ratio * integral
    return CriterionReport("CS", value, bool(value < 1), inputs, {"sup_ratio": ratio, "integral": integral})


def check_cor_3d(w: Potential, delta: float, delta0: float, d: int = 3) -> CriterionReport:
    """-δ ≤ ŵ_eff(ξ) ≤ δ₀/⟨log|ξ|⟩ on a log-spaced grid |ξ| ∈ [1e-6, 1e6].

    The value is the largest violation max(-δ - ŵ, ŵ - δ₀/⟨log|ξ|⟩); satisfied iff ≤ 0.
    """
    if delta <= 0 or delta0 <= 0:
        raise ValueError("δ and δ₀ must be positive")
    k = np.concatenate([np.geomspace(1e-6, 1e6, 12001), [math.e, 1.0]])
    wk = np.asarray(w.coupling(k, d), dtype=float)
    upper = delta0 / np.sqrt(1.0 + np.log(k) ** 2)
    viol = np.maximum(-delta - wk, wk - upper)
    i = int(np.argmax(viol))
    value = float(viol[i])
    return CriterionReport("COR3D", value, bool(value <= 0),
                           {"potential": _pot_dict(w), "delta": delta, "delta0": delta0},
                           {"worst_k": float(k[i]), "w_at_worst": float(wk[i])})


def symbol_gap(symbol: ResponseSymbol, w: Potential, margin: float = 0.1) -> CriterionReport:
    """inf over the table of |1 - ŵ_eff(k) m_f(τ, k)|; also reports 1/inf as the bound on ‖(1-L)^{-1}‖."""
    if np.any(symbol.flagged):
        raise ValueError(f"symbol has {int(symbol.flagged.sum())} flagged entries")
    cw = np.asarray(w.coupling(symbol.k_grid, symbol.dim), dtype=float)
    gap = np.abs(1.0 - cw[None, :] * symbol.values)
    i, j = np.unravel_index(int(np.argmin(gap)), gap.shape)
    value = float(gap[i, j])
    bound = math.inf if value == 0 else 1.0 / value
    return CriterionReport("GAP", value, bool(value > margin),
                           {"potential": _pot_dict(w), "margin": margin,
                            "n_tau": int(symbol.tau_grid.size), "n_k": int(symbol.k_grid.size)},
                           {"inverse_bound": bound, "worst_tau": float(symbol.tau_grid[i]),
                            "worst_k": float(symbol.k_grid[j])})


def _pot_dict(w: Potential) -> dict:
    try:
        return w.to_dict()
    except ValueError:
        return {"kind": w.kind, "label": w.label}


# --- A_θ -------------------------------------------------------------------

def _composite_nodes(a: float, b: float, panels: int, order: int, jacobi_theta: float | None = None):
    """Composite Gauss-Legendre nodes/weights on [a, b].

    With ``jacobi_theta`` the weights carry the factor (x - a)^θ, and the
    first panel switches to Gauss-Jacobi to integrate it exactly.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = mid[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :]
    if jacobi_theta is None:
        return nodes.ravel(), weights.ravel()
    th = jacobi_theta
    weights = weights * (nodes - a) ** th
    xj, wj = special.roots_jacobi(order, 0.0, th)
    nodes[0] = mid[0] + half[0] * xj
    weights[0] = wj * half[0] ** (1 + th)
    return nodes.ravel(), weights.ravel()


def a_theta(profile: RadialProfile, theta: float, panels: int | None = None, order: int = 8) -> float:
    """{∫_ℝ dv (∫_ℝ du |g(sqrt(u²+v²))| |u|^θ)²}^{1/2} for the radial profile g.

    Both integrands are even, so A² = 8 ∫_0^∞ I(v)² dv with
    I(v) = ∫_0^∞ |g| u^θ du.  Inside r_max both integrals use composite
    Gauss rules (Gauss-Jacobi on the first inner panel for the u^θ weight);
    beyond r_max the fitted tail model is integrated in closed form
    (incomplete beta).  Returns inf when 2p ≤ 2θ + 3.
    """
    if not 0 < theta < 1:
        raise ValueError("θ must lie in (0, 1)")
    p, C, R = profile.tail_exponent, profile.tail_constant, profile.r_max
    if np.all(profile.values == 0) and C == 0:
        return 0.0
    if C > 0 and 2 * p <= 2 * theta + 3 + DIVERGENCE_MARGIN:
        return math.inf
    if panels is None:
        panels = int(np.clip(math.ceil(2 * R), 64, 2000))
    spline = profile._spline()
    mean = profile.mean_factor * C
    a_par, b_par = (p - theta - 1) / 2, (theta + 1) / 2
    beta = special.beta(a_par, b_par) if C > 0 else 0.0

    v, wv = _composite_nodes(0.0, R, panels, order)
    x, wx = _composite_nodes(0.0, 1.0, panels, order, jacobi_theta=theta)
    inner = np.empty(v.size)
    for lo in range(0, v.size, 256):
        vb = v[lo:lo + 256]
        U = np.sqrt(R * R - vb * vb)
        u = U[:, None] * x[None, :]
        g = np.abs(spline(np.sqrt(u * u + vb[:, None] ** 2)))
        inner[lo:lo + 256] = U ** (1 + theta) * (g @ wx)
    if C > 0:
        xr = np.minimum(v * v / (R * R), 1.0)
        inner += mean * 0.5 * v ** (theta + 1 - p) * beta * special.betainc(a_par, b_par, xr)
    outer = float(wv @ inner**2)
    if C > 0:
        K = mean * 0.5 * beta
        outer += K * K * R ** (2 * theta + 3 - 2 * p) / (2 * p - 2 * theta - 3)
    return math.sqrt(8.0 * outer)
