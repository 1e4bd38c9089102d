"""Verification suites run by ``varext verify``.

Each suite returns check rows ``(suite, check, value, limit, passed)`` and a
JSON-ready report; tables are written next to the checks as CSV.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .approximator import approximant, build_families
from .corona import build_corona, stop_cubes, write_packing_csv, packing_profile
from .dyadic import DyadicLattice
from .extension import upsilon
from .functionals import carleson_sweep, cube_stats
from .geometry import BoundaryModel
from .mollifier import MollifierKernel, regularized_distance
from .varopoulos import (BandUnderflow, blend_split_check, iterate, lipschitz_extension, trace_samples,
                         boundary_trace, w12_truncate, weighted_energy)
from .whitney import WhitneyGrid, partition_check, sample_points


def _row(suite, name, value, limit, passed):
    return (suite, name, value, limit, bool(passed))


def suite_whitney(cfg, model, lattice, grid, f, out: Path):
    pc = partition_check(grid, 1000, cfg.seed)
    c = grid.constants
    rows = [_row("whitney", "partition_sum", pc["sum_error"], 1e-10, pc["sum_error"] <= 1e-10),
            _row("whitney", "gradient_fd", pc["fd_relative_error"], 1e-4, pc["fd_relative_error"] <= 1e-4),
            _row("whitney", "ten_P_inside", c["min_dist_10P"], 0.0, c["min_dist_10P"] > 0)]
    grid.to_csv(out / "whitney.csv")
    return rows, {"partition": pc, "constants": dict(c)}


def _brute_force_tops(lattice: DyadicLattice, f, eps: float) -> set:
    tops, front = set(), list(lattice.roots)
    while front:
        r = front.pop()
        tops.add(int(r))
        front.extend(int(q) for q in stop_cubes(lattice, r, f, eps))
    return tops


def suite_corona(cfg, model, lattice, grid, f, out: Path):
    rows, rep = [], {}
    for eps in cfg.eps:
        cor = build_corona(lattice, f, eps)
        exact = _brute_force_tops(lattice, f, eps) == set(int(t) for t in cor.tops)
        rows.append(_row("corona", f"tops_match_oracle[eps={eps}]", int(len(cor.tops)), 0, exact))
        write_packing_csv(out / f"packing_eps{eps}.csv", cor)
        rep[str(eps)] = {"tops": int(len(cor.tops)), "packing_profile": packing_profile(cor)}
    return rows, rep


def _bmo(lattice, f):
    return float(lattice.oscillations(f).max())


def suite_approximation(cfg, model, lattice, grid, f, out: Path):
    rows, rep = [], {}
    ups = upsilon(grid, f)
    norm = _bmo(lattice, f)
    for eps in cfg.eps:
        cor = build_corona(lattice, f, eps)
        u = approximant(grid, cor, build_families(grid, cor), f)
        diff = u - ups

        def fn(x):
            v, g = diff.evaluate(x)
            return np.abs(v) + model.delta(x) * np.linalg.norm(g, axis=1)

        sup, _ = cube_stats(grid, fn)
        c = float(sup.max() / (eps * norm)) if norm > 0 else 0.0
        rows.append(_row("approximation", f"C_eps[eps={eps}]", c, float("inf"), np.isfinite(c)))
        rep[str(eps)] = {"sup": float(sup.max()), "bmo": norm, "C": c}
    return rows, rep


def suite_trace(cfg, model, lattice, grid, f, out: Path):
    samples = trace_samples(grid)
    tr = boundary_trace(upsilon(grid, f), samples)
    err = np.abs(tr.value - f)
    rows = [_row("trace", "non_cauchy_flags", int(tr.non_cauchy.sum()), 0, not tr.any_non_cauchy)]
    from .cli import write_csv
    write_csv(out / "trace.csv", ["atom", "x", "y", "f", "trace", "error_bar"],
              [(i, *model.atoms[i], f[i], tr.value[i], tr.error[i]) for i in range(model.n_atoms)])
    return rows, {"max_abs_error": float(err.max()), "band_floor": grid.band_floor, "carrot": samples.carrot}


def suite_iteration(cfg, model, lattice, grid, f, out: Path):
    rows, rep = [], {}
    samples = trace_samples(grid)
    scale = max(1.0, float(np.abs(f).max()))
    from .cli import write_csv
    for eps in cfg.eps:
        run = iterate(grid, f, eps, samples=samples)
        rho = run.rho if run.ratios else 0.0
        rows.append(_row("iteration", f"rho[eps={eps}]", rho, 1.0, rho < 1))
        rows.append(_row("iteration", f"telescoping[eps={eps}]", run.telescoping_error, 1e-12 * scale,
                         run.telescoping_error <= 1e-12 * scale))
        write_csv(out / f"iteration_eps{eps}.csv", ["step", "norm", "ratio", "tops"],
                  [(k, run.norms[k + 1], run.ratios[k], run.tops[k]) for k in range(len(run.ratios))])
        rep[str(eps)] = {"status": run.status, "norms": run.norms, "ratios": run.ratios,
                         "non_cauchy": run.non_cauchy, "trace_error": run.trace_error}
    return rows, rep


def suite_blend(cfg, model, lattice, grid, f, out: Path):
    if cfg.data.kind != "lipschitz_bump":
        return [], {"skipped": "blend needs lipschitz_bump data"}
    rows, rep = [], {}
    eps = cfg.eps[0]
    F = lipschitz_extension(grid, f, eps)
    split = blend_split_check(grid, F)
    x = sample_points(grid, 2000, cfg.seed)
    ph = F.cutoff.value(x)
    z = ph == 0
    agree = bool(np.array_equal(F.value(x[z]), F.ups.value(x[z])))
    rows.append(_row("blend", "agreement_below_shell", int(z.sum()), 0, agree))
    rows.append(_row("blend", "gradient_split_excess", split, 1e-9, split <= 1e-9))
    _, mean = cube_stats(grid, lambda y: np.linalg.norm(F.gradient(y), axis=1))
    carl = carleson_sweep(grid, mean, model.atoms[:: max(1, model.n_atoms // 64)])
    T = w12_truncate(grid, F, f)
    energy = weighted_energy(grid, T.field)
    rows.append(_row("blend", "energy_finite", energy, float("inf"), np.isfinite(energy)))
    rep.update(width=F.width, carleson_max=float(np.max(carl)), energy=energy, M=T.m)
    return rows, rep


def suite_mollifier(cfg, model, lattice, grid, f, out: Path):
    beta = regularized_distance(grid, 500, cfg.seed)
    k = MollifierKernel(beta)
    x = sample_points(grid, 200, cfg.seed + 1)
    err = float(np.max(np.abs(k.mass(x) - 1.0)))
    return ([_row("mollifier", "kernel_mass", err, 1e-6, err <= 1e-6)],
            {"m1": beta.m1, "m2": beta.m2, "grad_bound": beta.grad_bound, "mass_error": err})


SUITE_FUNCS = {"whitney": suite_whitney, "corona": suite_corona, "approximation": suite_approximation,
               "trace": suite_trace, "iteration": suite_iteration, "blend": suite_blend,
               "mollifier": suite_mollifier}


def run_suites(cfg, model: BoundaryModel, lattice: DyadicLattice, grid: WhitneyGrid, f: np.ndarray, out: Path):
    checks, reports = [], {}
    for name in cfg.suites:
        try:
            rows, rep = SUITE_FUNCS[name](cfg, model, lattice, grid, f, out)
        except (BandUnderflow, ArithmeticError, RuntimeError) as exc:
            rows, rep = [_row(name, "aborted", 0, 0, False)], {"error": f"{type(exc).__name__}: {exc}"}
        checks.extend(rows)
        reports[name] = rep
    return checks, reports
