"""Command-line front end.

    rfhartree {steady,response,simulate,fixedpoint,crosscheck} --config cfg.json [--out DIR]
              [--threads N] [--seed U64]

Every command writes ``resolved_config.json`` (the fully defaulted
configuration) next to its outputs; rerunning on that file reproduces them.
Exit codes: 0 success, 2 configuration error, 3 numerical guard, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import fields as fields_mod
from .distributions import (
    MomentumDistribution,
    QuadratureError,
    SteadyStateParams,
    compute_Hf,
    compute_hf_profile,
    hf_L1_norm,
    write_profile_csv,
)
from .dynamics import (
    DensityPath,
    EvolutionConfig,
    NonContractionError,
    NumericalGuardError,
    free_step,
    l_path_crosscheck,
    lattice_symbol,
    run_ivp,
    solve_fixed_point,
)
from .fields import (
    RandomFieldState,
    SpectralGrid,
    build_mode_set,
    gaussian_packets,
    hartree_potential,
    steady_density,
)
from .norms import parse_norm_spec
from .potentials import Potential
from .quadrature import QuadConfig
from .response import (
    CoverageError,
    a_theta,
    build_symbol,
    bounded_remainder_3d,
    check_cor_3d,
    check_CS,
    check_SC,
    log_term_3d,
    resonance_taus,
    symbol_gap,
)

log = logging.getLogger("rfhartree")

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_NONCONV = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "distribution": {"kind": "fermi_zero", "mu": 1.0, "dim": 3},
    "potential": {"kind": "point_mass", "coupling": 0.0},
    "quadrature": QuadConfig().to_dict(),
    "grid": {"d": 3, "L": 8 * math.pi, "N": 16, "dealias": False, "cutoff": None},
    "evolution": {"dt": 0.05, "t_end": 2.0, "self_consistency": "frozen", "sample_every": 1,
                  "scatter_samples": 8, "sigma": 0.25, "taper": 0.1, "pad_factor": 4, "gap_margin": 0.1},
    "initial": {"mode": "independent", "amplitudes": [], "width": 2.0, "momentum_scale": 1.0},
    "norms": ["L2t:L2", "Linft:Linf"],
    "steady": {"r_max": 200.0, "n": 4000, "theta": 0.25},
    "response": {"tau_max": 4.0, "n_tau": 80, "k_min": 0.05, "k_max": 2.0, "n_k": 40, "eps_min": 1e-3,
                 "n_cluster": 12, "method": "auto", "delta": None, "delta0": None, "gap_margin": 0.1,
                 "profile_r_max": 200.0, "profile_n": 4000},
    "fixedpoint": {"tol": 1e-10, "rtol": 0.0, "max_iter": 20, "norm": None},
    "crosscheck": {"levels": [16, 32, 64], "t_end": 6.0, "eta0": None, "tau0": 1.0, "rule": "trapezoid",
                   "method": "auto"},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("distribution", "potential"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(raw: dict, seed: int | None = None, threads: int = 1) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(raw) - set(DEFAULTS) - {"seed", "threads", "output"}
    if unknown:
        raise ConfigError(f"unknown configuration sections: {sorted(unknown)}")
    cfg = _merge(DEFAULTS, raw)
    cfg["seed"] = int(seed if seed is not None else raw.get("seed", 0))
    cfg["threads"] = int(threads)
    return cfg


def make_distribution(spec: dict, base_dir: Path | None = None) -> MomentumDistribution:
    spec = dict(spec)
    kind = spec.pop("kind", None)
    dim = int(spec.pop("dim", 3))
    try:
        if kind == "fermi_zero":
            return MomentumDistribution.fermi_zero(spec["mu"], dim)
        if kind == "fermi_dirac":
            return MomentumDistribution.fermi_dirac(spec["T"], spec["mu"], dim)
        if kind == "bose":
            return MomentumDistribution.bose(spec["T"], spec["mu"], dim)
        if kind == "boltzmann":
            return MomentumDistribution.boltzmann(spec["T"], spec.get("mu", 0.0), dim)
        if kind == "custom_radial":
            tail = spec.get("tail", "compact")
            if "csv" in spec:
                path = Path(spec["csv"])
                if base_dir and not path.is_absolute():
                    path = base_dir / path
                return MomentumDistribution.from_csv(path, dim, tail)
            return MomentumDistribution.custom(spec["radii"], spec["values"], dim, tail)
        if kind == "zero":
            return MomentumDistribution.zero(dim)
    except KeyError as exc:
        raise ConfigError(f"distribution {kind!r} is missing parameter {exc}") from None
    raise ConfigError(f"unknown distribution kind {kind!r}")


def make_potential(spec: dict, d: int) -> Potential:
    spec = dict(spec)
    kind = spec.get("kind")
    if kind == "point_mass":
        if "coupling" in spec:
            return Potential.point_mass_coupling(float(spec["coupling"]), d)
        return Potential.point_mass(float(spec.get("weight", 0.0)))
    if kind == "gaussian":
        return Potential.gaussian(float(spec["weight"]), float(spec["width"]))
    if kind == "yukawa3d":
        return Potential.yukawa3d(float(spec["weight"]), float(spec["screening"]))
    if kind == "custom_fourier":
        return Potential.custom_fourier(spec["table_k"], spec["table_w"])
    raise ConfigError(f"unknown potential kind {kind!r}")


def _grid(cfg: dict) -> SpectralGrid:
    g = cfg["grid"]
    return SpectralGrid(int(g["d"]), float(g["L"]), int(g["N"]), bool(g.get("dealias", False)))


def _evolution(cfg: dict) -> EvolutionConfig:
    return EvolutionConfig.from_dict(dict(cfg["evolution"]))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _finite(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "nan")


def _write_rows(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in r])


def _state(cfg: dict, dist, w, grid) -> RandomFieldState:
    cutoff = cfg["grid"].get("cutoff") or min(dist.support_radius(), grid.nyquist * 0.99)
    modes = build_mode_set(dist, grid, cutoff)
    m = SteadyStateParams(dist, w).m
    ini = cfg["initial"]
    amps = list(ini.get("amplitudes", []))
    packets = gaussian_packets(grid, amps, float(ini["width"]), cfg["seed"], float(ini["momentum_scale"]))
    if ini["mode"] == "independent":
        return RandomFieldState.steady(modes, m, packets)
    if ini["mode"] == "correlated":
        st = RandomFieldState.steady(modes, m)
        # spread the packets over the first modes' directions
        for j, p in enumerate(packets):
            st.z[j % len(modes)] += p
        return st
    raise ConfigError("initial.mode must be 'independent' or 'correlated'")


# --- commands ------------------------------------------------------------------

def cmd_steady(cfg: dict, out: Path) -> int:
    dist = make_distribution(cfg["distribution"])
    if dist.is_zero:
        raise ConfigError("zero distribution has no steady state to report")
    quad = QuadConfig.from_dict(cfg["quadrature"])
    s = cfg["steady"]
    profile = compute_hf_profile(dist, float(s["r_max"]), int(s["n"]), quad)
    write_profile_csv(profile, out / "hf_profile.csv")
    w = make_potential(cfg["potential"], dist.dim)
    report = {
        "tail_exponent": profile.tail_exponent,
        "tail_constant": profile.tail_constant,
        "oscillatory_tail": profile.oscillatory,
        "decay_bound_exponent": (dist.dim + 1) / 2,
        "hf_L1_norm": _finite(hf_L1_norm(profile)),
        "Hf_at_0": compute_Hf(dist, 0.0, quad),
        "norm_f_squared": dist.norm_squared(quad),
        "mass_shift_m": SteadyStateParams(dist, w).m,
        f"A_theta({s['theta']})": _finite(a_theta(profile, float(s["theta"]))),
    }
    if cfg["grid"]["d"] == dist.dim and dist.dim <= 3:
        grid = _grid(cfg)
        cutoff = cfg["grid"].get("cutoff") or min(dist.support_radius(), grid.nyquist * 0.99)
        report["steady_density_lattice"] = steady_density(build_mode_set(dist, grid, cutoff))
    _write_json(out / "steady_report.json", report)
    return EXIT_OK


def cmd_response(cfg: dict, out: Path) -> int:
    dist = make_distribution(cfg["distribution"])
    d = dist.dim
    w = make_potential(cfg["potential"], d)
    quad = QuadConfig.from_dict(cfg["quadrature"])
    r = cfg["response"]
    ks = np.geomspace(float(r["k_min"]), float(r["k_max"]), int(r["n_k"]))
    taus = np.linspace(0.0, float(r["tau_max"]), int(r["n_tau"]) + 1)
    # resonance refinement: nodes k(2 ± ε) for every k in the table
    extra = np.concatenate([resonance_taus(k, float(r["tau_max"]), 1, float(r["eps_min"]), int(r["n_cluster"]))
                            for k in ks])
    taus = np.unique(np.concatenate([taus, extra]))
    sym = build_symbol(dist, taus, ks, quad, r["method"], workers=cfg["threads"])
    sym.to_csv(out / "symbol.csv")
    reports = {}
    profile = compute_hf_profile(dist, float(r["profile_r_max"]), int(r["profile_n"]), quad)
    reports["SC"] = check_SC(profile, d, w).to_dict()
    reports["CS"] = check_CS(profile, w, d).to_dict()
    scale = float(np.max(np.abs(sym.values)))
    if d == 3:
        delta = r["delta"] if r["delta"] is not None else 0.1 / scale
        delta0 = r["delta0"] if r["delta0"] is not None else 0.1 / scale
        reports["COR3D"] = check_cor_3d(w, float(delta), float(delta0)).to_dict()
    flagged = int(sym.flagged.sum())
    if flagged:
        reports["GAP"] = {"name": "GAP", "error": f"{flagged} flagged symbol entries", "satisfied": False}
    else:
        reports["GAP"] = symbol_gap(sym, w, float(r["gap_margin"])).to_dict()
    _write_json(out / "criteria.json", reports)
    if d == 3 and dist.kind == "fermi_zero":
        T, K = np.meshgrid(sym.tau_grid, sym.k_grid, indexing="ij")
        lt = log_term_3d(T, K)
        rows = zip(T.ravel(), K.ravel(), sym.values.real.ravel(), lt.ravel(),
                   np.abs(sym.values - lt).ravel(), np.abs(bounded_remainder_3d(T, K, sym.values)).ravel())
        _write_rows(out / "log_residual.csv", ["tau", "k", "re_m", "log_term", "abs_m_minus_log", "abs_m_plus_log"],
                    [tuple(float(v) for v in row) for row in rows])
    if flagged:
        log.error("%d symbol entries exceed the quadrature tolerance", flagged)
        return EXIT_GUARD
    return EXIT_OK


def cmd_simulate(cfg: dict, out: Path) -> int:
    dist = make_distribution(cfg["distribution"])
    grid = _grid(cfg)
    w = make_potential(cfg["potential"], dist.dim)
    ev = _evolution(cfg)
    state = _state(cfg, dist, w, grid)
    try:
        res = run_ivp(state, w, ev)
    except NumericalGuardError as exc:
        if exc.payload is not None:
            exc.payload.to_csv(out / "density_path_partial.csv")
        raise
    res.path.to_csv(out / "density_path.csv")
    sn = res.path.snapshot_norms()
    _write_rows(out / "norm_series.csv", ["t", "L2", "Linf", "mean"],
                [(float(t), float(a), float(b), float(c)) for t, a, b, c in zip(sn["t"], sn["L2"], sn["Linf"], sn["mean"])])
    if res.scatter is not None:
        res.scatter.to_csv(out / "scatter_cauchy.csv")
        _write_rows(out / "scatter_tail.csv", ["T", "tail"], res.scatter.tail_table())
    norms = {spec: res.path.norm(spec) for spec in cfg["norms"]}
    report = {"norms": norms, "max_mass_drift": float(res.mass_drift.max()),
              "n_modes": len(state.modes), "n_extra": int(state.extra.shape[0]), "dt_guard_ok": res.guard_ok}
    if w.sup_abs() == 0:
        # decoupled flow: Z(t) = S(t) Z₀ exactly
        t = res.state.t - state.t
        ref_z = free_step(state.z, state.m, t, grid)
        ref_e = free_step(state.extra, state.m, t, grid) if state.extra.shape[0] else state.extra
        report["free_reference_error"] = float(max(np.max(np.abs(res.state.z - ref_z), initial=0.0),
                                                   np.max(np.abs(res.state.extra - ref_e), initial=0.0)))
    _write_json(out / "simulate_report.json", report)
    fields_mod.save_checkpoint(res.state, out / "final_state.bin")
    return EXIT_OK


def _symbol_for(cfg, dist, grid, ev):
    quad = QuadConfig.from_dict(cfg["quadrature"])
    method = cfg["response"]["method"]
    return lattice_symbol(dist, grid, ev.n_steps + 1, ev.dt, ev.pad_factor, quad, method)


def cmd_fixedpoint(cfg: dict, out: Path) -> int:
    dist = make_distribution(cfg["distribution"])
    grid = _grid(cfg)
    w = make_potential(cfg["potential"], dist.dim)
    ev = _evolution(cfg)
    state = _state(cfg, dist, w, grid)
    sym = _symbol_for(cfg, dist, grid, ev)
    fp = cfg["fixedpoint"]
    try:
        res = solve_fixed_point(state, w, ev, sym, float(fp["tol"]), int(fp["max_iter"]), fp["norm"],
                                float(fp["rtol"]))
    except NonContractionError as exc:
        hist = exc.history or {}
        _write_rows(out / "residuals.csv", ["iteration", "residual"],
                    [(i + 1, float(r)) for i, r in enumerate(hist.get("residuals", []))])
        raise
    _write_rows(out / "residuals.csv", ["iteration", "residual", "ratio"],
                [(i + 1, float(r), float(res.ratios[i - 1]) if i > 0 else "") for i, r in enumerate(res.residuals)])
    V = np.array([hartree_potential(r, w, grid) for r in res.rho])
    DensityPath(res.times, res.rho, V, grid, {"norm": res.norm}).to_csv(out / "rho_star.csv")
    _write_json(out / "fixedpoint_report.json", {"converged": res.converged, "iterations": res.iterations,
                                                  "residuals": res.residuals, "ratios": res.ratios,
                                                  "norm": res.norm})
    return EXIT_OK if res.converged else EXIT_NONCONV


def cmd_crosscheck(cfg: dict, out: Path) -> int:
    dist = make_distribution(cfg["distribution"])
    grid = _grid(cfg)
    w = make_potential(cfg["potential"], dist.dim)
    c = cfg["crosscheck"]
    cutoff = cfg["grid"].get("cutoff") or min(dist.support_radius(), grid.nyquist * 0.99)
    rows = l_path_crosscheck(dist, w, grid, cutoff, float(c["t_end"]), tuple(int(n) for n in c["levels"]),
                             c["eta0"], float(c["tau0"]), float(cfg["evolution"]["taper"]),
                             int(cfg["evolution"]["pad_factor"]), QuadConfig.from_dict(cfg["quadrature"]),
                             c["method"], c["rule"])
    _write_rows(out / "crosscheck.csv", ["n_steps", "dt", "rel_error", "norm_direct", "norm_multiplier"],
                [(r["n_steps"], r["dt"], r["rel_error"], r["norm_direct"], r["norm_multiplier"]) for r in rows])
    return EXIT_OK


COMMANDS = {"steady": cmd_steady, "response": cmd_response, "simulate": cmd_simulate,
            "fixedpoint": cmd_fixedpoint, "crosscheck": cmd_crosscheck}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfhartree", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON configuration file")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="seed for random initial data (unsigned 64-bit)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read configuration: {exc}") from None
        cfg = resolve_config(raw, args.seed, args.threads)
        csv_path = cfg["distribution"].get("csv")
        if csv_path is not None:
            # the echoed config must not depend on the working directory
            cfg["distribution"]["csv"] = str((Path(args.config).parent / csv_path).resolve())
        fields_mod.set_workers(args.threads)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "resolved_config.json", cfg)
        # validate the shared sections before any heavy work
        make_distribution(cfg["distribution"])
        for spec in cfg["norms"]:
            parse_norm_spec(spec)
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, TypeError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonContractionError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except (NumericalGuardError, CoverageError, QuadratureError, FloatingPointError) as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
