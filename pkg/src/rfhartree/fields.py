"""Periodic spectral grid, Wiener-mode discretisation of Y_f and coefficient fields of Z.

The steady state is Y(t, x) = Σ_k y_k(t, x) g_k with independent standard
complex Gaussians g_k and analytic mode fields
y_k(t, x) = f_k e^{i x·ξ_k - i t (m + |ξ_k|²)}.
A perturbation is Z = Σ_k z_k g_k + Σ_j e_j h_j, where the h_j are further
Gaussians independent of the g_k.  Second moments are then exact finite
sums over modes, e.g. E|Z|² = Σ|z_k|² + Σ|e_j|².
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from .distributions import MomentumDistribution
from .potentials import Potential

_DEFAULT_WORKERS = 1


def set_workers(n: int) -> None:
    """Thread count used by the FFTs in this module."""
    global _DEFAULT_WORKERS
    if n < 1:
        raise ValueError("workers must be >= 1")
    _DEFAULT_WORKERS = int(n)


@dataclass(frozen=True)
class SpectralGrid:
    d: int
    L: float
    N: int
    dealias: bool = False

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError("grid dimension must be 1, 2 or 3")
        if self.N < 2 or self.N & (self.N - 1):
            raise ValueError("N must be a power of two")
        if not self.L > 0:
            raise ValueError("box length must be positive")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.d, 0))

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def dk(self) -> float:
        return 2 * math.pi / self.L

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    @property
    def volume(self) -> float:
        return self.L**self.d

    @property
    def nyquist(self) -> float:
        return math.pi * self.N / self.L

    def x1d(self) -> np.ndarray:
        return np.arange(self.N) * self.dx

    def coords(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.x1d()] * self.d), indexing="ij")

    def k1d(self) -> np.ndarray:
        return 2 * math.pi * sfft.fftfreq(self.N, self.dx)

    def kvec(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.k1d()] * self.d), indexing="ij")

    def k2(self) -> np.ndarray:
        return sum(k * k for k in self.kvec())

    def kabs(self) -> np.ndarray:
        return np.sqrt(self.k2())

    def dealias_mask(self) -> np.ndarray:
        """True where every component satisfies |ξ_i| < (2π/L)·N/3."""
        lim = self.dk * self.N / 3
        mask = np.ones(self.shape, bool)
        for k in self.kvec():
            mask &= np.abs(k) < lim
        return mask

    def fft(self, u, workers: int | None = None):
        return sfft.fftn(u, axes=self.axes, workers=workers or _DEFAULT_WORKERS)

    def ifft(self, u, workers: int | None = None):
        return sfft.ifftn(u, axes=self.axes, workers=workers or _DEFAULT_WORKERS)

    def plane_wave(self, xi) -> np.ndarray:
        xi = np.asarray(xi, float)
        out = np.ones(self.shape, complex)
        for axis, (x, q) in enumerate(zip(self.coords(), xi)):
            out = out * np.exp(1j * q * x)
        return out

    def to_dict(self) -> dict:
        return {"d": self.d, "L": self.L, "N": self.N, "dealias": self.dealias}


@dataclass(frozen=True)
class ModeSet:
    """Lattice frequencies ξ_k (as integer indices n_k, ξ_k = (2π/L) n_k) and amplitudes f_k."""

    grid: SpectralGrid
    index: np.ndarray  # (n_modes, d) integers
    amps: np.ndarray  # (n_modes,) real

    def __post_init__(self):
        if self.index.ndim != 2 or self.index.shape[1] != self.grid.d:
            raise ValueError("mode index array must have shape (n_modes, d)")
        if self.index.shape[0] == 0:
            raise ValueError("empty mode set")
        if self.amps.shape != (self.index.shape[0],):
            raise ValueError("one amplitude per mode")

    def __len__(self) -> int:
        return self.index.shape[0]

    @property
    def xi(self) -> np.ndarray:
        return self.grid.dk * self.index

    @property
    def xi2(self) -> np.ndarray:
        return np.sum(self.xi**2, axis=1)

    def subset(self, sel) -> "ModeSet":
        return ModeSet(self.grid, self.index[sel], self.amps[sel])

    def mode_fields(self, t: float, m: float, sel=slice(None)) -> np.ndarray:
        """y_k(t, ·) for the selected modes, shape (n_sel, *grid.shape)."""
        g = self.grid
        idx = self.index[sel]
        amps = self.amps[sel]
        phase = np.exp(-1j * t * (m + g.dk**2 * np.sum(idx**2, axis=1)))
        # separable plane waves e^{i x·ξ} = Π_a e^{2πi n_a j_a / N}
        j = np.arange(g.N)
        out = (amps * phase).astype(complex)
        out = out.reshape((-1,) + (1,) * g.d)
        for a in range(g.d):
            e = np.exp(2j * math.pi * np.outer(idx[:, a], j) / g.N)
            shape = [idx.shape[0]] + [1] * g.d
            shape[1 + a] = g.N
            out = out * e.reshape(shape)
        return out


def build_mode_set(dist: MomentumDistribution, grid: SpectralGrid, cutoff: float) -> ModeSet:
    """One mode per lattice frequency with |ξ| ≤ cutoff and f(ξ) ≠ 0; f_k = f(ξ_k)(2π/L)^{d/2}."""
    if dist.dim != grid.d:
        raise ValueError("distribution and grid dimensions differ")
    if cutoff > grid.nyquist:
        raise ValueError(f"cutoff {cutoff} exceeds the Nyquist radius {grid.nyquist:.6g}")
    nmax = int(math.floor(cutoff / grid.dk))
    rng = range(-min(nmax, grid.N // 2 - 1), min(nmax, grid.N // 2 - 1) + 1)
    idx = np.array(list(itertools.product(rng, repeat=grid.d)), dtype=np.int64).reshape(-1, grid.d)
    rho = grid.dk * np.sqrt(np.sum(idx**2, axis=1))
    keep = rho <= cutoff * (1 + 1e-12)
    idx, rho = idx[keep], rho[keep]
    f2 = np.asarray(dist.f_squared(rho), float)
    nz = f2 > 0
    if not np.any(nz):
        raise ValueError("empty mode set: f vanishes on every lattice point inside the cutoff")
    amps = np.sqrt(f2[nz]) * grid.dk ** (grid.d / 2)
    return ModeSet(grid, idx[nz], amps)


def steady_density(modes: ModeSet) -> float:
    """E|Y(t, x)|² = Σ f_k², independent of (t, x)."""
    if len(modes) == 0:
        raise ValueError("empty mode set")
    return float(np.sum(modes.amps**2))


@dataclass
class RandomFieldState:
    t: float
    modes: ModeSet
    z: np.ndarray  # (n_modes, *shape) complex
    extra: np.ndarray  # (n_extra, *shape) complex
    m: float = 0.0

    @property
    def grid(self) -> SpectralGrid:
        return self.modes.grid

    def __post_init__(self):
        shape = self.grid.shape
        self.z = np.asarray(self.z, complex)
        self.extra = np.asarray(self.extra, complex).reshape((-1,) + shape)
        if self.z.shape != (len(self.modes),) + shape:
            raise ValueError("z must hold one field per mode")

    @classmethod
    def steady(cls, modes: ModeSet, m: float = 0.0, extra=None, t: float = 0.0) -> "RandomFieldState":
        """Z = 0 along the g_k, with optional independent directions ``extra``."""
        shape = modes.grid.shape
        z = np.zeros((len(modes),) + shape, complex)
        ex = np.zeros((0,) + shape, complex) if extra is None else np.asarray(extra, complex)
        return cls(t, modes, z, ex, m)

    def copy(self) -> "RandomFieldState":
        return replace(self, z=self.z.copy(), extra=self.extra.copy())

    def y(self, sel=slice(None)) -> np.ndarray:
        return self.modes.mode_fields(self.t, self.m, sel)


def compute_density(state: RandomFieldState, chunk: int = 128) -> np.ndarray:
    """ρ = Σ_k (|y_k + z_k|² - |y_k|²) + Σ_j |e_j|².

    Evaluated as 2 Re(ȳ_k z_k) + |z_k|², which equals the subtracted form
    without forming the large background |y_k|².  Chunks are summed in a
    fixed order so results do not depend on threading.
    """
    rho = np.zeros(state.grid.shape)
    n = len(state.modes)
    for lo in range(0, n, chunk):
        sel = slice(lo, min(lo + chunk, n))
        y = state.y(sel)
        z = state.z[sel]
        rho += np.sum(2 * (y.real * z.real + y.imag * z.imag) + z.real**2 + z.imag**2, axis=0)
    if state.extra.shape[0]:
        rho += np.sum(state.extra.real**2 + state.extra.imag**2, axis=0)
    return rho


def hartree_potential(rho: np.ndarray, w: Potential, grid: SpectralGrid) -> np.ndarray:
    """V = w * ρ as the lattice multiplier ŵ(|ξ|) (a constant field is scaled by ŵ(0))."""
    rho = np.asarray(rho)
    if np.iscomplexobj(rho):
        raise ValueError("density must be real")
    if rho.shape[-grid.d:] != grid.shape:
        raise ValueError("density shape does not match the grid")
    mult = w.w_hat(grid.kabs())
    if grid.dealias:
        mult = mult * grid.dealias_mask()
    return grid.ifft(mult * grid.fft(rho)).real


# --- checkpoints ---------------------------------------------------------

_MAGIC = b"RFHSTAT1"
_HEADER = struct.Struct("<8sqdqqqdd")


def save_checkpoint(state: RandomFieldState, path) -> Path:
    """Binary container, little-endian float64, row-major.

    Header: magic, d, L, N, n_modes, n_extra, t, m.  Then per mode the
    frequency triple (unused components 0), the amplitude and the complex
    field as interleaved (re, im); then the extra fields.
    """
    g = state.grid
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, g.d, g.L, g.N, len(state.modes), state.extra.shape[0], state.t, state.m))
        xi = np.zeros((len(state.modes), 3))
        xi[:, : g.d] = state.modes.xi
        for k in range(len(state.modes)):
            fh.write(xi[k].astype("<f8").tobytes())
            fh.write(np.float64(state.modes.amps[k]).astype("<f8").tobytes())
            fh.write(np.ascontiguousarray(state.z[k]).astype("<c16").tobytes())
        for e in state.extra:
            fh.write(np.ascontiguousarray(e).astype("<c16").tobytes())
    return path


def load_checkpoint(path) -> RandomFieldState:
    data = Path(path).read_bytes()
    magic, d, L, N, n_modes, n_extra, t, m = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise ValueError("not a state checkpoint")
    grid = SpectralGrid(int(d), float(L), int(N))
    npts = N**d
    off = _HEADER.size
    idx = np.empty((n_modes, d), np.int64)
    amps = np.empty(n_modes)
    z = np.empty((n_modes,) + grid.shape, complex)
    for k in range(n_modes):
        xi = np.frombuffer(data, "<f8", 3, off)
        idx[k] = np.rint(xi[:d] / grid.dk).astype(np.int64)
        amps[k] = np.frombuffer(data, "<f8", 1, off + 24)[0]
        off += 32
        z[k] = np.frombuffer(data, "<c16", npts, off).reshape(grid.shape)
        off += 16 * npts
    extra = np.empty((n_extra,) + grid.shape, complex)
    for j in range(n_extra):
        extra[j] = np.frombuffer(data, "<c16", npts, off).reshape(grid.shape)
        off += 16 * npts
    return RandomFieldState(float(t), ModeSet(grid, idx, amps), z, extra, float(m))


def gaussian_packets(grid: SpectralGrid, amplitudes, width: float, seed: int = 0,
                     momentum_scale: float = 1.0) -> np.ndarray:
    """Smooth wave packets for independent initial data, one per amplitude.

    Centres and momenta are drawn from ``seed``; each packet is normalised
    so its L² norm equals the given amplitude.
    """
    rng = np.random.default_rng(seed)
    X = grid.coords()
    out = []
    for a in amplitudes:
        c = rng.uniform(0, grid.L, grid.d)
        p = rng.normal(0, momentum_scale, grid.d)
        r2 = np.zeros(grid.shape)
        phase = np.zeros(grid.shape)
        for x, ci, pi in zip(X, c, p):
            dxp = (x - ci + grid.L / 2) % grid.L - grid.L / 2
            r2 += dxp**2
            phase += pi * dxp
        psi = np.exp(-r2 / (2 * width**2) + 1j * phase)
        norm = math.sqrt(np.sum(np.abs(psi) ** 2) * grid.cell_volume)
        out.append(a * psi / norm)
    return np.asarray(out).reshape((-1,) + grid.shape)
