"""Time evolution on the periodic grid.

Free flow S(t) = e^{-it(m - Δ)} is an exact Fourier multiplier.  The
potential flow S_V uses Strang splitting
e^{-i dt V_{n+1}/2} S(dt) e^{-i dt V_n/2}; the potential half-steps are
unimodular, so each mode keeps its L² norm up to rounding.

Duhamel maps use the composite trapezoid rule on the stepper's grid,
D_{n+1} = S(dt)[D_n - (i dt/2) ψ_n] - (i dt/2) ψ_{n+1},
with S_V in place of S for D_V.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from .distributions import MomentumDistribution
from .fields import ModeSet, RandomFieldState, SpectralGrid, compute_density, hartree_potential
from .norms import mixed_norm, parse_norm_spec
from .potentials import Potential
from .quadrature import QuadConfig
from .response import ResponseSymbol, build_symbol

log = logging.getLogger(__name__)


class NumericalGuardError(RuntimeError):
    """NaN/overflow, symbol gap or coverage violations."""

    def __init__(self, message: str, payload=None):
        super().__init__(message)
        self.payload = payload


class NonContractionError(RuntimeError):
    """The fixed-point iteration stopped contracting."""

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    t_end: float
    splitting_order: int = 2
    dealias: bool = False
    # "frozen": each half kick uses V from the density at that instant;
    # "picard": both half kicks use the midpoint average of V_n and an iterated V_{n+1}
    self_consistency: str = "frozen"
    picard_iters: int = 2
    duhamel: str = "trapezoid"
    sample_every: int = 1
    scatter_samples: int = 8
    sigma: float = 0.25
    taper: float = 0.1
    pad_factor: int = 4
    gap_margin: float = 0.1

    def __post_init__(self):
        if not self.dt > 0 or not self.t_end > 0:
            raise ValueError("dt and t_end must be positive")
        if self.splitting_order != 2:
            raise ValueError("only Strang splitting (order 2) is available")
        if self.self_consistency not in ("frozen", "picard"):
            raise ValueError("self_consistency must be 'frozen' or 'picard'")
        if self.duhamel not in ("trapezoid", "simpson"):
            raise ValueError("duhamel must be 'trapezoid' or 'simpson'")
        if self.pad_factor < 2:
            raise ValueError("pad_factor must be >= 2")
        if not 0 <= self.taper < 0.5:
            raise ValueError("taper fraction must lie in [0, 0.5)")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: dict) -> "EvolutionConfig":
        return cls(**data)


# --- propagators -----------------------------------------------------------

def _free_multiplier(grid: SpectralGrid, m: float, dt: float, dealias: bool = False) -> np.ndarray:
    mult = np.exp(-1j * dt * (m + grid.k2()))
    if dealias:
        mult = mult * grid.dealias_mask()
    return mult


def free_step(u, m: float, dt: float, grid: SpectralGrid) -> np.ndarray:
    """S(dt) u = e^{-i dt (m + |ξ|²)} û, exact."""
    if dt == 0:
        return np.array(u, dtype=complex)
    return grid.ifft(_free_multiplier(grid, m, dt) * grid.fft(u))


def _kick(u, V, dt):
    return u * np.exp(-0.5j * dt * V)


def sv_fields(u, V0, V1, dt: float, grid: SpectralGrid, m: float, free_mult=None) -> np.ndarray:
    """One Strang step e^{-i dt V1/2} S(dt) e^{-i dt V0/2} on a stack of fields."""
    if np.iscomplexobj(V0) or np.iscomplexobj(V1):
        raise ValueError("potential must be real")
    mult = _free_multiplier(grid, m, dt) if free_mult is None else free_mult
    u = _kick(u, V0, dt)
    u = grid.ifft(mult * grid.fft(u))
    return _kick(u, V1, dt)


def sv_step(state: RandomFieldState, V, dt: float, cfg: EvolutionConfig | None = None) -> RandomFieldState:
    """Advance every mode of X = Y + Z and every extra direction by S_V over one step.

    ``V`` is one real grid (frozen over the step) or a pair (V_start, V_end).
    """
    if isinstance(V, tuple):
        V0, V1 = (np.asarray(v) for v in V)
    else:
        V0 = V1 = np.asarray(V)
    for v in (V0, V1):
        if np.iscomplexobj(v) and np.any(np.imag(v) != 0):
            raise ValueError("potential must be real")
    V0, V1 = np.real(V0), np.real(V1)
    g = state.grid
    dealias = bool(cfg and cfg.dealias)
    mult = _free_multiplier(g, state.m, dt, dealias)
    x = state.y() + state.z
    x = sv_fields(x, V0, V1, dt, g, state.m, mult)
    extra = sv_fields(state.extra, V0, V1, dt, g, state.m, mult) if state.extra.shape[0] else state.extra
    new = RandomFieldState(state.t + dt, state.modes, np.zeros_like(x), extra, state.m)
    new.z = x - new.y()
    return new


# --- density paths and scattering --------------------------------------------

@dataclass
class DensityPath:
    times: np.ndarray
    rho: np.ndarray  # (n_t, *grid.shape)
    V: np.ndarray
    grid: SpectralGrid
    meta: dict = field(default_factory=dict)

    def norm(self, spec: str) -> float:
        return mixed_norm(self.rho, self.times, spec, self.grid)

    def snapshot_norms(self) -> dict:
        flat = self.rho.reshape(self.rho.shape[0], -1)
        l2 = np.sqrt(np.sum(flat**2, axis=1) * self.grid.cell_volume)
        return {"t": self.times, "L2": l2, "Linf": np.max(np.abs(flat), axis=1),
                "mean": flat.mean(axis=1)}

    def to_csv(self, path) -> Path:
        """Long format: one row per (time, grid point); metadata in a JSON sidecar."""
        path = Path(path)
        flat_r = self.rho.reshape(self.rho.shape[0], -1)
        flat_v = self.V.reshape(self.V.shape[0], -1)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i_t", "t", "j", "rho", "V"])
            for i, t in enumerate(self.times):
                for j in range(flat_r.shape[1]):
                    w.writerow([i, f"{t:.17g}", j, f"{flat_r[i, j]:.17g}", f"{flat_v[i, j]:.17g}"])
        meta = dict(self.meta, grid=self.grid.to_dict(), n_times=int(self.times.size))
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))
        return path


@dataclass
class ScatterDiagnostics:
    times: np.ndarray
    cauchy: np.ndarray
    sigma: float

    def tail(self, T: float) -> float:
        """max ‖W(t_i) - W(t_j)‖ over sample pairs with min(t_i, t_j) ≥ T."""
        sel = self.times >= T - 1e-12
        if sel.sum() < 2:
            return 0.0
        return float(np.max(self.cauchy[np.ix_(sel, sel)]))

    def tail_table(self, windows=None) -> list[tuple[float, float]]:
        windows = self.times[:-1] if windows is None else windows
        return [(float(T), self.tail(T)) for T in windows]

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_i", "t_j", "norm"])
            for i, ti in enumerate(self.times):
                for j, tj in enumerate(self.times):
                    w.writerow([f"{ti:.17g}", f"{tj:.17g}", f"{self.cauchy[i, j]:.17g}"])
        path.with_suffix(".json").write_text(json.dumps({"sigma": self.sigma, "norm": f"L2w:Hs({self.sigma:g})",
                                                         "n_times": int(self.times.size)}, indent=2))
        return path


def _backward_profile(state: RandomFieldState) -> np.ndarray:
    """Fourier coefficients of W = S(-t) Z per direction (modes then extras)."""
    g = state.grid
    fields = np.concatenate([state.z, state.extra]) if state.extra.shape[0] else state.z
    return np.exp(1j * state.t * (state.m + g.k2())) * g.fft(fields)


def scattering_diagnostic(states, sigma: float = 0.25) -> ScatterDiagnostics:
    """Cauchy table of W(t_i) = S(-t_i) Z(t_i) in L²_ω H^σ_x."""
    states = list(states)
    if len(states) < 3:
        raise ValueError("need at least three sample times")
    W = [_backward_profile(s) for s in states]
    return _cauchy_table(np.array([s.t for s in states]), W, states[0].grid, sigma)


def _cauchy_table(times, W, grid: SpectralGrid, sigma: float) -> ScatterDiagnostics:
    weight = (1.0 + grid.k2()) ** sigma * grid.cell_volume / grid.N**grid.d
    n = len(W)
    table = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            diff = W[i] - W[j]
            table[i, j] = table[j, i] = math.sqrt(float(np.sum(weight * (diff.real**2 + diff.imag**2))))
    return ScatterDiagnostics(np.asarray(times, float), table, sigma)


# --- the nonlinear problem ---------------------------------------------------

@dataclass
class IVPResult:
    path: DensityPath
    scatter: ScatterDiagnostics | None
    state: RandomFieldState
    mass_drift: np.ndarray  # per direction, relative, final vs initial
    guard_ok: bool = True


def _direction_masses(state: RandomFieldState) -> np.ndarray:
    g = state.grid
    x = state.y() + state.z
    fields = np.concatenate([x, state.extra]) if state.extra.shape[0] else x
    return np.sum(np.abs(fields) ** 2, axis=g.axes) * g.cell_volume


def run_ivp(state0: RandomFieldState, w: Potential, cfg: EvolutionConfig,
            scatter: bool = True) -> IVPResult:
    """Evolve X = Y + Z self-consistently, V = w * ρ with ρ = E|X|² - E|Y|².

    Z is recovered after every step as x_k - y_k(t) with y_k analytic.
    """
    g = state0.grid
    kmax2 = float(np.max(g.k2()))
    guard_ok = cfg.dt * kmax2 < 2 * math.pi
    if not guard_ok:
        log.warning("dt·max|ξ|² = %.3g exceeds 2π: phases per step are under-resolved", cfg.dt * kmax2)
    n = cfg.n_steps
    mult = _free_multiplier(g, state0.m, cfg.dt, cfg.dealias)
    scatter_at = set(np.unique(np.linspace(0, n, max(3, cfg.scatter_samples)).round().astype(int)))

    state = state0.copy()
    m0 = _direction_masses(state)
    rho = compute_density(state)
    V = hartree_potential(rho, w, g)
    times, rhos, Vs = [state.t], [rho], [V]
    W_times, W = [], []
    if scatter and 0 in scatter_at:
        W_times.append(state.t)
        W.append(_backward_profile(state))

    x = state.y() + state.z
    extra = state.extra
    for step in range(1, n + 1):
        t_new = state0.t + step * cfg.dt
        probe = RandomFieldState(t_new, state.modes, np.zeros_like(x), extra, state.m)
        if cfg.self_consistency == "frozen":
            x1 = grid_free(g, _kick(x, V, cfg.dt), mult)
            e1 = grid_free(g, _kick(extra, V, cfg.dt), mult) if extra.shape[0] else extra
            probe.extra = e1
            probe.z = x1 - probe.y()
            rho_new = compute_density(probe)
            V_new = hartree_potential(rho_new, w, g)
            x = _kick(x1, V_new, cfg.dt)
            extra = _kick(e1, V_new, cfg.dt) if extra.shape[0] else extra
        else:
            V_new = V
            for _ in range(cfg.picard_iters):
                Vm = 0.5 * (V + V_new)
                x1 = sv_fields(x, Vm, Vm, cfg.dt, g, state.m, mult)
                e1 = sv_fields(extra, Vm, Vm, cfg.dt, g, state.m, mult) if extra.shape[0] else extra
                probe.extra = e1
                probe.z = x1 - probe.y()
                rho_new = compute_density(probe)
                V_new = hartree_potential(rho_new, w, g)
            x, extra = x1, e1
        state = RandomFieldState(t_new, state.modes, np.zeros_like(x), extra, state.m)
        state.z = x - state.y()
        rho, V = rho_new, V_new
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(x))):
            partial = DensityPath(np.array(times), np.array(rhos), np.array(Vs), g, {"aborted_at": t_new})
            raise NumericalGuardError(f"non-finite values at t = {t_new:.6g}", partial)
        if step % cfg.sample_every == 0 or step == n:
            times.append(t_new)
            rhos.append(rho)
            Vs.append(V)
        if scatter and step in scatter_at:
            W_times.append(t_new)
            W.append(_backward_profile(state))

    drift = np.abs(_direction_masses(state) / np.where(m0 > 0, m0, 1.0) - 1.0)
    path = DensityPath(np.array(times), np.array(rhos), np.array(Vs), g,
                       {"config": cfg.to_dict(), "potential": _pot_meta(w), "m": state0.m})
    diag = _cauchy_table(W_times, W, g, cfg.sigma) if scatter and len(W) >= 3 else None
    return IVPResult(path, diag, state, drift, guard_ok)


def grid_free(grid: SpectralGrid, u, mult):
    return grid.ifft(mult * grid.fft(u))


def _pot_meta(w: Potential) -> dict:
    try:
        return w.to_dict()
    except ValueError:
        return {"kind": w.kind}


# --- response operator ---------------------------------------------------------

def raised_cosine_taper(n: int, fraction: float) -> np.ndarray:
    """Window equal to 1 except for raised-cosine ramps over ``fraction`` of the samples at each end."""
    win = np.ones(n)
    r = int(round(fraction * (n - 1)))
    if r > 0:
        ramp = 0.5 * (1 - np.cos(np.pi * np.arange(r) / r))
        win[:r] = ramp
        win[n - r:] = ramp[::-1]
    return win


def _duhamel_free(psi_fn, n_t: int, dt: float, grid: SpectralGrid, m: float, out_fn, rule: str = "trapezoid"):
    """Run D(ψ) along the time grid, calling out_fn(n, D_n) at every node."""
    if rule == "trapezoid":
        mult = _free_multiplier(grid, m, dt)
        psi = psi_fn(0)
        D = np.zeros_like(psi)
        out_fn(0, D)
        for n in range(n_t - 1):
            psi_next = psi_fn(n + 1)
            D = grid.ifft(mult * grid.fft(D - 0.5j * dt * psi)) - 0.5j * dt * psi_next
            psi = psi_next
            out_fn(n + 1, D)
        return
    # Simpson: D_n = -i S(t_n) Σ_j w_j S(-t_j) ψ_j
    k2 = grid.k2()
    A = []
    for n in range(n_t):
        t = n * dt
        A.append(np.exp(1j * t * (m + k2)) * grid.fft(psi_fn(n)))
        weights = _simpson_weights(n) * dt
        acc = sum(wj * aj for wj, aj in zip(weights, A)) if n else np.zeros_like(A[0])
        out_fn(n, -1j * grid.ifft(np.exp(-1j * t * (m + k2)) * acc))


def _simpson_weights(n: int) -> np.ndarray:
    """Composite Simpson weights over n intervals (3/8 rule closes odd n ≥ 3; trapezoid for n = 1)."""
    if n == 0:
        return np.zeros(1)
    if n == 1:
        return np.array([0.5, 0.5])
    w = np.zeros(n + 1)
    m = n if n % 2 == 0 else n - 3
    if m > 0:
        w[: m + 1] += np.r_[1.0, np.tile([4.0, 2.0], m // 2)[:-1], 1.0] / 3
    if n % 2:
        w[m: m + 4] += np.array([3.0, 9.0, 9.0, 3.0]) / 8
    return w


def apply_L_direct(u, modes: ModeSet, w: Potential, dt: float, m: float = 0.0,
                   rule: str = "trapezoid", chunk: int = 64) -> np.ndarray:
    """L[u](t_n) = 2 Re Σ_k conj(y_k(t_n)) D((w*u) y_k)(t_n) on the grid t_n = n dt."""
    g = modes.grid
    u = np.asarray(u, float)
    if u.shape[1:] != g.shape:
        raise ValueError("u must have shape (n_t, *grid.shape)")
    n_t = u.shape[0]
    out = np.zeros(u.shape)
    if np.all(u == 0) or w.sup_abs() == 0:
        return out
    Wu = np.array([hartree_potential(u[n], w, g) for n in range(n_t)])
    phase = np.exp(-1j * dt * (m + modes.xi2))
    for lo in range(0, len(modes), chunk):
        sel = slice(lo, min(lo + chunk, len(modes)))
        y0 = modes.mode_fields(0.0, m, sel)
        ph = phase[sel].reshape((-1,) + (1,) * g.d)

        def y_at(n):
            return y0 * ph**n

        def psi(n):
            return Wu[n] * y_at(n)

        def acc(n, D):
            y = y_at(n)
            out[n] += 2 * np.sum(y.real * D.real + y.imag * D.imag, axis=0)

        _duhamel_free(psi, n_t, dt, g, m, acc, rule)
    return out


def time_frequencies(n_t: int, dt: float, pad_factor: int) -> np.ndarray:
    """τ_j = 2π·fftfreq(pad_factor·n_t, dt), matching the e^{-iτt} transform."""
    return 2 * np.pi * sfft.fftfreq(pad_factor * n_t, dt)


def lattice_symbol(dist: MomentumDistribution, grid: SpectralGrid, n_t: int, dt: float,
                   pad_factor: int = 4, quad: QuadConfig | None = None, method: str = "auto") -> ResponseSymbol:
    """m_f on exactly the (|τ_j|, |η|) nodes a run's space-time transform uses."""
    taus = np.unique(np.abs(time_frequencies(n_t, dt, pad_factor)))
    ks = np.unique(grid.kabs())
    ks = ks[ks > 0]
    return build_symbol(dist, taus, ks, quad, method)


def _space_time_multiplier(symbol: ResponseSymbol, w: Potential, grid: SpectralGrid, taus: np.ndarray,
                           active: np.ndarray | None = None) -> np.ndarray:
    """coupling(|η|) m_f(τ, |η|) on the (τ, lattice) grid; 0 at η = 0 and on inactive η."""
    kabs = grid.kabs().ravel()
    uk, inv = np.unique(kabs, return_inverse=True)
    use = uk > 0
    if active is not None:
        act_k = np.zeros(uk.size, bool)
        np.logical_or.at(act_k, inv, active.ravel())
        use &= act_k
    table = np.zeros((taus.size, uk.size), complex)
    if np.any(use):
        c = np.asarray(w.coupling(uk[use], grid.d), float)
        table[:, use] = c[None, :] * symbol(taus[:, None], uk[use][None, :])
    return table[:, inv].reshape((taus.size,) + grid.shape)


def apply_L_multiplier(u, symbol: ResponseSymbol, w: Potential, grid: SpectralGrid, dt: float,
                       taper: float = 0.1, pad_factor: int = 4) -> np.ndarray:
    """Space-time multiplier coupling·m_f applied to a tapered, zero-padded u."""
    u = np.asarray(u, float)
    n_t = u.shape[0]
    if np.all(u == 0) or w.sup_abs() == 0:
        return np.zeros(u.shape)
    win = raised_cosine_taper(n_t, taper).reshape((-1,) + (1,) * grid.d)
    U = sfft.fftn(u * win, s=(pad_factor * n_t,) + grid.shape, axes=(0,) + tuple(range(1, grid.d + 1)))
    taus = time_frequencies(n_t, dt, pad_factor)
    energy = np.sum(np.abs(U) ** 2, axis=0)
    active = energy > 1e-28 * energy.max()
    mult = _space_time_multiplier(symbol, w, grid, taus, active)
    out = sfft.ifftn(U * mult, axes=(0,) + tuple(range(1, grid.d + 1)))[:n_t]
    scale = max(float(np.max(np.abs(out.real))), 1e-300)
    if float(np.max(np.abs(out.imag))) > 1e-8 * scale + 1e-300:
        raise NumericalGuardError("multiplier output is not real: symbol lacks conjugate symmetry")
    return out.real


def symbol_gap_on_lattice(symbol: ResponseSymbol, w: Potential, grid: SpectralGrid, taus) -> float:
    mult = _space_time_multiplier(symbol, w, grid, np.asarray(taus, float))
    return float(np.min(np.abs(1.0 - mult)))


def apply_resolvent(source, symbol: ResponseSymbol, w: Potential, grid: SpectralGrid, dt: float,
                    pad_factor: int = 4, margin: float = 0.1) -> np.ndarray:
    """(1 - L)^{-1} as the multiplier 1/(1 - coupling·m_f), without a taper (causal)."""
    source = np.asarray(source, float)
    n_t = source.shape[0]
    axes = (0,) + tuple(range(1, grid.d + 1))
    taus = time_frequencies(n_t, dt, pad_factor)
    mult = _space_time_multiplier(symbol, w, grid, taus)
    gap = float(np.min(np.abs(1.0 - mult)))
    if gap <= margin:
        raise NumericalGuardError(f"symbol gap {gap:.3g} ≤ margin {margin:.3g}: 1 - L not safely invertible")
    S = sfft.fftn(source, s=(pad_factor * n_t,) + grid.shape, axes=axes)
    out = sfft.ifftn(S / (1.0 - mult), axes=axes)[:n_t]
    return out.real


# --- fixed-point map ---------------------------------------------------------

@dataclass
class PhiResult:
    rho: np.ndarray
    terms: dict
    source: np.ndarray


def apply_Phi(rho, state0: RandomFieldState, w: Potential, cfg: EvolutionConfig, symbol: ResponseSymbol,
              chunk: int = 64, return_terms: bool = False):
    """ρ ↦ (1 - L)^{-1}(𝔸₁ + 𝔸₂ + 𝔸₃ + 𝔸₄ + 𝔸₅) with every term evaluated under the frozen V = w * ρ.

    𝔸₁ = E|S_V Z₀|², 𝔸₂ = 2Re E[S_V Z₀ · conj(D_V(VY))], 𝔸₃ = E|D_V(VY)|²,
    𝔸₄ = 2Re E[Ȳ S_V Z₀], 𝔸₅ = 2Re E[Ȳ (D_V - D)(VY)].
    """
    g = state0.grid
    rho = np.asarray(rho, float)
    n_t = cfg.n_steps + 1
    if rho.shape != (n_t,) + g.shape:
        raise ValueError(f"ρ must have shape {(n_t,) + g.shape}")
    if not np.all(np.isfinite(rho)):
        raise NumericalGuardError("non-finite density passed to Φ")
    dt, m = cfg.dt, state0.m
    modes = state0.modes
    V = np.array([hartree_potential(rho[n], w, g) for n in range(n_t)])
    mult = _free_multiplier(g, m, dt, cfg.dealias)
    terms = {name: np.zeros((n_t,) + g.shape) for name in ("A1", "A2", "A3", "A4", "A5")}
    correlated = bool(np.any(state0.z != 0))
    phase = np.exp(-1j * dt * (m + modes.xi2))

    def sq(a):
        return np.sum(a.real**2 + a.imag**2, axis=0)

    def re_dot(a, b):
        # Σ Re(conj(a) b)
        return np.sum(a.real * b.real + a.imag * b.imag, axis=0)

    for lo in range(0, len(modes), chunk):
        sel = slice(lo, min(lo + chunk, len(modes)))
        y = modes.mode_fields(state0.t, m, sel)
        ph = phase[sel].reshape((-1,) + (1,) * g.d)
        DV = np.zeros_like(y)
        D = np.zeros_like(y)
        s = state0.z[sel].copy() if correlated else None
        psi = V[0] * y
        if correlated:
            terms["A1"][0] += sq(s)
            terms["A4"][0] += 2 * re_dot(y, s)
        for n in range(n_t - 1):
            y_next = y * ph
            psi_next = V[n + 1] * y_next
            DV = sv_fields(DV - 0.5j * dt * psi, V[n], V[n + 1], dt, g, m, mult) - 0.5j * dt * psi_next
            D = g.ifft(mult * g.fft(D - 0.5j * dt * psi)) - 0.5j * dt * psi_next
            y, psi = y_next, psi_next
            terms["A3"][n + 1] += sq(DV)
            terms["A5"][n + 1] += 2 * re_dot(y, DV - D)
            if correlated:
                s = sv_fields(s, V[n], V[n + 1], dt, g, m, mult)
                terms["A1"][n + 1] += sq(s)
                terms["A2"][n + 1] += 2 * re_dot(DV, s)
                terms["A4"][n + 1] += 2 * re_dot(y, s)
    if state0.extra.shape[0]:
        e = state0.extra.copy()
        terms["A1"][0] += sq(e)
        for n in range(n_t - 1):
            e = sv_fields(e, V[n], V[n + 1], dt, g, m, mult)
            terms["A1"][n + 1] += sq(e)
    source = sum(terms.values())
    if not np.all(np.isfinite(source)):
        raise NumericalGuardError("non-finite values in the Φ source terms")
    out = apply_resolvent(source, symbol, w, g, dt, cfg.pad_factor, cfg.gap_margin)
    if return_terms:
        return PhiResult(out, terms, source)
    return out


def default_fixed_point_norm(d: int, s: float = 0.5) -> str:
    """L²_t H^{1/2}_x in three dimensions, L²_t Ḣ^{-s}_x otherwise."""
    return "L2t:Hs(0.5)" if d == 3 else f"L2t:dHs({-s:g})"


@dataclass
class FixedPointResult:
    rho: np.ndarray
    times: np.ndarray
    residuals: list
    ratios: list
    converged: bool
    iterations: int
    norm: str


def solve_fixed_point(state0: RandomFieldState, w: Potential, cfg: EvolutionConfig, symbol: ResponseSymbol,
                      tol: float = 1e-10, max_iter: int = 20, norm: str | None = None,
                      rtol: float = 0.0) -> FixedPointResult:
    """Picard iteration ρ^{n+1} = Φ[ρ^n] from ρ⁰ = 0.

    Stops when ‖ρ^{n+1} - ρ^n‖ ≤ tol + rtol·‖ρ^{n+1}‖; raises NonContractionError
    when the residual ratio is ≥ 1 three times in a row.
    """
    g = state0.grid
    norm = norm or default_fixed_point_norm(g.d)
    spec = parse_norm_spec(norm)
    times = cfg.times
    _check_gap(symbol, w, g, cfg)
    rho = np.zeros((times.size,) + g.shape)
    residuals, ratios = [], []
    bad = 0
    for it in range(1, max_iter + 1):
        new = apply_Phi(rho, state0, w, cfg, symbol)
        res = mixed_norm(new - rho, times, spec, g)
        size = mixed_norm(new, times, spec, g)
        residuals.append(res)
        if len(residuals) > 1:
            ratio = res / residuals[-2] if residuals[-2] > 0 else 0.0
            ratios.append(ratio)
            bad = bad + 1 if ratio >= 1 else 0
            if bad >= 3:
                raise NonContractionError("residual ratio ≥ 1 for three consecutive iterations",
                                          {"residuals": residuals, "ratios": ratios})
        rho = new
        if res <= tol + rtol * size:
            return FixedPointResult(rho, times, residuals, ratios, True, it, norm)
    return FixedPointResult(rho, times, residuals, ratios, False, max_iter, norm)


def _check_gap(symbol, w, grid, cfg):
    taus = time_frequencies(cfg.n_steps + 1, cfg.dt, cfg.pad_factor)
    gap = symbol_gap_on_lattice(symbol, w, grid, taus)
    if gap <= cfg.gap_margin:
        raise NumericalGuardError(f"symbol gap {gap:.3g} ≤ margin {cfg.gap_margin:.3g}")
    return gap


def contraction_ratio(rho1, rho2, state0, w, cfg, symbol, norm: str | None = None) -> float:
    """‖Φ[ρ₁] - Φ[ρ₂]‖ / ‖ρ₁ - ρ₂‖ in the fixed-point norm."""
    g = state0.grid
    norm = norm or default_fixed_point_norm(g.d)
    times = cfg.times
    num = mixed_norm(apply_Phi(rho1, state0, w, cfg, symbol) - apply_Phi(rho2, state0, w, cfg, symbol),
                     times, norm, g)
    den = mixed_norm(np.asarray(rho1) - np.asarray(rho2), times, norm, g)
    if den == 0:
        raise ValueError("ρ₁ and ρ₂ coincide")
    return num / den


# --- L-path cross-check --------------------------------------------------------

def harmonic_input(grid: SpectralGrid, n_t: int, dt: float, eta0, tau0: float) -> np.ndarray:
    """u(t, x) = cos(x·η₀) cos(τ₀ t) on the run grid."""
    X = grid.coords()
    phase = sum(q * x for q, x in zip(eta0, X))
    t = dt * np.arange(n_t)
    return np.cos(tau0 * t)[:, None] * np.cos(phase).ravel()[None, :]


def l_path_crosscheck(dist: MomentumDistribution, w: Potential, grid: SpectralGrid, cutoff: float,
                      t_end: float, levels=(16, 32, 64), eta0=None, tau0: float = 1.0, taper: float = 0.1,
                      pad_factor: int = 4, quad: QuadConfig | None = None, method: str = "auto",
                      rule: str = "trapezoid", modes: ModeSet | None = None) -> list[dict]:
    """Relative L²_{t,x} gap between the direct and multiplier L paths per time resolution."""
    from .fields import build_mode_set

    modes = modes or build_mode_set(dist, grid, cutoff)
    eta0 = np.asarray(eta0 if eta0 is not None else [grid.dk] + [0.0] * (grid.d - 1), float)
    rows = []
    for n_steps in levels:
        dt = t_end / n_steps
        n_t = n_steps + 1
        u = harmonic_input(grid, n_t, dt, eta0, tau0).reshape((n_t,) + grid.shape)
        win = raised_cosine_taper(n_t, taper).reshape((-1,) + (1,) * grid.d)
        direct = apply_L_direct(u * win, modes, w, dt, rule=rule)
        sym = lattice_symbol(dist, grid, n_t, dt, pad_factor, quad, method)
        mult = apply_L_multiplier(u, sym, w, grid, dt, taper, pad_factor)
        den = float(np.sqrt(np.sum(mult**2)))
        num = float(np.sqrt(np.sum((direct - mult) ** 2)))
        rows.append({"n_steps": n_steps, "dt": dt, "rel_error": num / den if den > 0 else 0.0,
                     "norm_direct": float(np.sqrt(np.sum(direct**2))), "norm_multiplier": den})
    return rows


def evolve_external(u0, V_of_t, dt: float, t_end: float, grid: SpectralGrid, m: float = 0.0) -> np.ndarray:
    """S_V(t_end, 0) u0 for a prescribed real potential V(t, ·) by Strang steps."""
    n = max(1, int(round(t_end / dt)))
    mult = _free_multiplier(grid, m, dt)
    u = np.asarray(u0, complex)
    V0 = np.asarray(V_of_t(0.0), float)
    for step in range(n):
        V1 = np.asarray(V_of_t((step + 1) * dt), float)
        u = sv_fields(u, V0, V1, dt, grid, m, mult)
        V0 = V1
    return u


def splitting_order_study(grid: SpectralGrid, V_of_t, u0, t_end: float, dts, m: float = 0.0,
                          ref_refine: int = 8) -> dict:
    """Global errors against a dt_min/ref_refine reference and the least-squares order."""
    dts = np.asarray(sorted(dts, reverse=True), float)
    ref = evolve_external(u0, V_of_t, dts[-1] / ref_refine, t_end, grid, m)
    errs = np.array([math.sqrt(float(np.sum(np.abs(evolve_external(u0, V_of_t, dt, t_end, grid, m) - ref) ** 2))
                               * grid.cell_volume) for dt in dts])
    order = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    return {"dt": dts, "error": errs, "order": order}
