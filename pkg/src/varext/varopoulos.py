"""Boundary trace, the corrective iteration and the two blended extensions.

The trace of an interior field u at a boundary point xi is read along a
good curve gamma from xi: ``E(t)`` is the mean of u over the ball
``B(gamma(t), c delta(gamma(t)))``, sampled at ``t_k = T 2^-k`` while the
ball stays in the band.  Two finest samples give a Richardson value
``2 E(t) - E(2t)`` with error bar ``|E(t) - E(2t)|``.

The iteration subtracts traces of approximants:
``f_{k+1} = f_k - Tr(u_k)`` with ``u_k`` the approximant of ``upsilon_{f_k}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .approximator import approximant, build_families
from .corona import build_corona
from .dyadic import DyadicLattice
from .extension import _as_function, upsilon
from .functionals import (CubeField, InteriorField, _weights, ball_rule, cube_nodes,
                          hajlasz_gradient, lipschitz_constant)
from .geometry import BoundaryModel, GoodCurve, good_curve
from .mollifier import BandUnderflow
from .whitney import WhitneyGrid

TRACE_C = 1.0 / 64
TRACE_RULE = 16
COVERED_FRACTION = 0.5


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TraceSamples:
    """Sample points gamma(t_k) of every boundary point, finest last."""

    xis: np.ndarray
    t: list
    points: list
    radius: list
    carrot: float


@dataclass(frozen=True)
class TraceResult:
    value: np.ndarray
    error: np.ndarray
    non_cauchy: np.ndarray
    samples: list = field(repr=False)

    @property
    def any_non_cauchy(self) -> bool:
        return bool(self.non_cauchy.any())


def trace_radius(grid: WhitneyGrid) -> float:
    """Corkscrew radius whose target sits at half the deepest band distance."""
    return 0.5 * float(grid.cdelta.max()) / grid.model.meta["corkscrew_c"]


def trace_samples(grid: WhitneyGrid, xis=None, c: float = TRACE_C, r: float | None = None,
                  min_samples: int = 2, k: int = TRACE_RULE) -> TraceSamples:
    """Dyadic samples on good curves, kept while at least half of each ball is covered.

    Curves are cached on the grid per (xi, r).  The carrot constant is not
    imposed; the smallest measured one is reported as ``carrot``.
    """
    if not 0 < c <= 0.5:
        raise ValueError("c must lie in (0, 1/2]")
    model = grid.model
    xis = model.atoms if xis is None else np.atleast_2d(np.asarray(xis, dtype=float))
    r = trace_radius(grid) if r is None else float(r)
    cache = grid._cache.setdefault(("curves", r), {})
    u, w = ball_rule(k)
    ts, pts, rads, lams = [], [], [], []
    for xi in xis:
        key = (float(xi[0]), float(xi[1]))
        if key not in cache:
            cache[key] = good_curve(model, xi, r, lam=0.0)
        curve: GoodCurve = cache[key]
        lams.append(curve.measured_lambda)
        tk = curve.length * 0.5 ** np.arange(40)
        x = curve.point_at(tk)
        d = model.delta(x)
        keep = d * (1 - c) > grid.band_floor
        tk, x, d = tk[keep], x[keep], d[keep]
        if len(x) < min_samples:
            raise BandUnderflow(f"only {len(x)} trace samples at {xi.tolist()}; band too thin for the trace")
        ball = (x[:, None, :] + (c * d)[:, None, None] * u[None]).reshape(-1, 2)
        frac = (grid.locate(ball) >= 0).reshape(len(x), -1) @ w
        covered = frac >= COVERED_FRACTION
        # keep the leading run of covered samples
        stop = int(np.argmin(covered)) if not covered.all() else len(covered)
        if stop < min_samples:
            raise BandUnderflow(f"only {stop} trace samples at {xi.tolist()}; band too thin for the trace")
        ts.append(tk[:stop])
        pts.append(x[:stop])
        rads.append(c * d[:stop])
    return TraceSamples(xis=xis, t=ts, points=pts, radius=rads, carrot=float(min(lams)))


def trace_average(field: InteriorField, x, c: float = TRACE_C, k: int = TRACE_RULE) -> np.ndarray:
    """Mean of the field over the covered part of B(x, c delta(x)).

    Raises when less than half of a ball (by quadrature weight) is covered.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = field.grid.model.delta(x)
    return _ball_means(field, x, c * d, k)


def _ball_means(field: InteriorField, x: np.ndarray, r: np.ndarray, k: int = TRACE_RULE) -> np.ndarray:
    u, w = ball_rule(k)
    pts = x[:, None, :] + r[:, None, None] * u[None]
    v = field.value(pts.reshape(-1, 2)).reshape(len(x), -1)
    ok = ~np.isnan(v)
    wt = ok @ w
    if np.any(wt < COVERED_FRACTION):
        raise BandUnderflow("trace ball leaves the band")
    return np.where(ok, v, 0.0) @ w / wt


def boundary_trace(field: InteriorField, samples: TraceSamples, rtol: float = 1e-2,
                   atol: float = 1e-12) -> TraceResult:
    """Richardson-extrapolated trace at every sampled boundary point.

    The error bar is the last-two-sample oscillation; a point is flagged
    non-Cauchy when it exceeds ``atol + rtol * max(1, max_k |E(t_k)|)``.
    """
    counts = [len(p) for p in samples.points]
    e = _ball_means(field, np.concatenate(samples.points), np.concatenate(samples.radius))
    val = np.empty(len(counts))
    err = np.empty(len(counts))
    flag = np.zeros(len(counts), dtype=bool)
    out = []
    pos = 0
    for i, n in enumerate(counts):
        ek = e[pos:pos + n]
        pos += n
        out.append(ek)
        val[i] = 2 * ek[-1] - ek[-2]
        err[i] = abs(ek[-1] - ek[-2])
        flag[i] = err[i] > atol + rtol * max(1.0, float(np.abs(ek).max()))
    return TraceResult(value=val, error=err, non_cauchy=flag, samples=out)


def trace(field: InteriorField, xis=None, c: float = TRACE_C, r: float | None = None) -> TraceResult:
    return boundary_trace(field, trace_samples(field.grid, xis, c, r))


# ---------------------------------------------------------------------------
# iteration
# ---------------------------------------------------------------------------
@dataclass
class IterationRun:
    """Record of the corrective iteration.

    Attributes
    ----------
    norms : list of float
        ``||f_k||`` in the chosen mode, starting with ``||f||``.
    ratios : list of float
        ``||f_{k+1}|| / ||f_k||``.
    partial : CubeField
        S_K = sum of the approximants.
    residual : ndarray
        f_{K+1} at the atoms.
    telescoping_error : float
        max |f - Tr(S_K) - f_{K+1}| with Tr(S_K) computed directly.
    """

    eps: float
    mode: str
    norms: list
    ratios: list
    traces: list
    residual: np.ndarray
    partial: CubeField
    telescoping_error: float
    trace_error: float
    non_cauchy: int
    status: str
    tops: list

    @property
    def rho(self) -> float:
        return max(self.ratios) if self.ratios else float("nan")


def data_norm(lattice: DyadicLattice, f: np.ndarray, mode: str, p: float = 2.0) -> float:
    """Dyadic BMO norm (largest cube oscillation) or the L^p(sigma) norm."""
    f = np.asarray(f, dtype=float)
    if mode == "BMO":
        return float(lattice.oscillations(f).max())
    if mode == "Lp":
        w = lattice.model.weights
        return float((w @ np.abs(f) ** p) ** (1 / p))
    raise ValueError("mode must be 'BMO' or 'Lp'")


def iterate(grid: WhitneyGrid, f, eps: float, n_iter: int = 6, mode: str = "BMO", rtol: float = 1e-3,
            samples: TraceSamples | None = None) -> IterationRun:
    """Run f_{k+1} = f_k - Tr(u_k) up to ``n_iter`` steps.

    Stops early, after at least one step, when ``||f_k|| <= rtol ||f||``.  Aborts when the first ratio
    is not below one, or when two consecutive ratios are at least one.
    """
    lat = grid.lattice
    f0 = _as_function(f).values.astype(float)
    samples = trace_samples(grid) if samples is None else samples
    if len(samples.xis) != grid.model.n_atoms:
        raise ValueError("the iteration needs trace samples at every atom")
    norms = [data_norm(lat, f0, mode)]
    ratios, traces, tops = [], [], []
    coef = np.zeros(grid.n_cubes)
    fk = f0.copy()
    worst_err, flagged, status = 0.0, 0, "max_iter"
    for k in range(n_iter):
        if k > 0 and norms[-1] <= rtol * norms[0]:
            status = "converged"
            break
        corona = build_corona(lat, fk, eps, mode)
        fam = build_families(grid, corona)
        u = approximant(grid, corona, fam, fk)
        tr = boundary_trace(u, samples)
        worst_err = max(worst_err, float(tr.error.max()))
        flagged += int(tr.non_cauchy.sum())
        coef = coef + u.coeffs
        fk = fk - tr.value
        traces.append(tr.value)
        tops.append(int(len(corona.tops)))
        norms.append(data_norm(lat, fk, mode))
        ratios.append(norms[-1] / norms[-2] if norms[-2] > 0 else 0.0)
        if k == 0 and ratios[0] >= 1:
            status = "aborted: first ratio >= 1, eps too large"
            break
        if len(ratios) >= 2 and ratios[-1] >= 1 and ratios[-2] >= 1:
            status = "aborted: diverging"
            break
    else:
        if norms[-1] <= rtol * norms[0]:
            status = "converged"
    partial = CubeField(grid, coef, origin="iteration partial sum")
    ts = boundary_trace(partial, samples).value
    tele = float(np.abs(f0 - ts - fk).max())
    return IterationRun(eps=float(eps), mode=mode, norms=norms, ratios=ratios, traces=traces, residual=fk,
                        partial=partial, telescoping_error=tele, trace_error=worst_err, non_cauchy=flagged,
                        status=status, tops=tops)


# ---------------------------------------------------------------------------
# blended extensions
# ---------------------------------------------------------------------------
class BlendedField(InteriorField):
    """F = upsilon (1 - phi) + u phi with phi = sum of bumps of cubes with side >= width."""

    def __init__(self, ups: CubeField, approx: CubeField, width: float):
        grid = ups.grid
        if not (grid.side.min() <= width <= grid.side.max()):
            raise BandUnderflow(f"blend width {width:.4g} outside the band sides "
                                f"[{grid.side.min():.4g}, {grid.side.max():.4g}]")
        self.grid = grid
        self.ups = ups
        self.approx = approx
        self.width = float(width)
        self.cutoff = CubeField(grid, (grid.side >= width).astype(float), origin="blend cutoff")
        self.origin = "blend"

    def _components(self, x, strict=False):
        coef = np.stack([self.ups.coeffs, self.approx.coeffs, self.cutoff.coeffs], 1)
        v, g = self.grid.field(coef, x, strict=strict)
        return v[:, 0], g[:, 0], v[:, 1], g[:, 1], v[:, 2], g[:, 2]

    def _eval(self, x, strict):
        vu, gu, va, ga, ph, gp = self._components(x, strict)
        v = vu + ph * (va - vu)
        g = gu * (1 - ph)[:, None] + ga * ph[:, None] + (va - vu)[:, None] * gp
        return v, g

    def parts(self, x):
        """(|grad u|, |u - upsilon| |grad phi|, |grad upsilon| (1 - phi)) at x."""
        vu, gu, va, ga, ph, gp = self._components(x)
        return (np.linalg.norm(ga, axis=1), np.abs(va - vu) * np.linalg.norm(gp, axis=1),
                np.linalg.norm(gu, axis=1) * (1 - ph))


def blend_width(model: BoundaryModel, lattice: DyadicLattice, f, mode: str = "Linf", p: float = 2.0) -> float:
    """||f||_inf / Lip f, ||f||_BMO / Lip f, or ||f||_Lp / ||g||_Lp with g the Hajlasz gradient."""
    vals = _as_function(f).values
    if mode in ("Linf", "BMO") and lipschitz_constant(model, vals) == 0:
        raise ValueError("blend width undefined for constant data; pass it explicitly")
    if mode == "Linf":
        return float(np.abs(vals).max() / lipschitz_constant(model, vals))
    if mode == "BMO":
        return float(lattice.oscillations(vals).max() / lipschitz_constant(model, vals))
    if mode == "Lp":
        g = hajlasz_gradient(model, vals, lattice).values
        w = model.weights
        return float(((w @ np.abs(vals) ** p) / (w @ g ** p)) ** (1 / p))
    raise ValueError("mode must be 'Linf', 'BMO' or 'Lp'")


def lipschitz_extension(grid: WhitneyGrid, f, eps: float = 0.125, mode: str = "Linf", width: float | None = None,
                        p: float = 2.0) -> BlendedField:
    """Blend of upsilon_f near the boundary with its approximant far from it.

    The approximant uses the BMO corona in ``BMO`` mode and the maximal
    function corona otherwise.
    """
    f = _as_function(f)
    width = blend_width(grid.model, grid.lattice, f, mode, p) if width is None else float(width)
    corona = build_corona(grid.lattice, f, eps, "BMO" if mode == "BMO" else "Lp")
    u = approximant(grid, corona, build_families(grid, corona), f)
    return BlendedField(upsilon(grid, f), u, width)


def blend_split_check(grid: WhitneyGrid, field: BlendedField, k: int = 5) -> float:
    """Largest pointwise excess of |grad F| over the three-term bound at the cube nodes."""
    x, _ = cube_nodes(grid, k)
    x = x.reshape(-1, 2)
    worst = -np.inf
    for i in range(0, len(x), 200_000):
        vu, gu, va, ga, ph, gp = field._components(x[i:i + 200_000])
        g = gu * (1 - ph)[:, None] + ga * ph[:, None] + (va - vu)[:, None] * gp
        bound = (np.linalg.norm(ga, axis=1) + np.abs(va - vu) * np.linalg.norm(gp, axis=1)
                 + np.linalg.norm(gu, axis=1) * (1 - ph))
        worst = max(worst, float(np.max(np.linalg.norm(g, axis=1) - bound)))
    return worst


# ---------------------------------------------------------------------------
# compactly supported truncation
# ---------------------------------------------------------------------------
def _smooth_step(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """S(t) = 1 for t <= 0, 0 for t >= 1, smooth in between; returns (S, S')."""
    t = np.clip(t, 0.0, 1.0)

    def g(s):
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(s > 0, np.exp(-1 / np.where(s > 0, s, 1.0)), 0.0)

    def dg(s):
        with np.errstate(divide="ignore", over="ignore"):
            ss = np.where(s > 0, s, 1.0)
            return np.where(s > 0, np.exp(-1 / ss) / ss ** 2, 0.0)

    a, b = g(1 - t), g(t)
    da, db = -dg(1 - t), dg(t)
    den = a + b
    return a / den, (da * den - a * (da + db)) / den ** 2


@dataclass(frozen=True)
class Truncation:
    """F0 = F psi with psi = 1 on B(centre, R), 0 outside B(centre, 2R), R = M diam(supp f)."""

    field: InteriorField
    center: np.ndarray
    radius: float
    m: float
    small_family: int
    large_family: int


class _CutoffField(InteriorField):
    def __init__(self, inner: InteriorField, center: np.ndarray, radius: float):
        self.inner = inner
        self.grid = inner.grid
        self.center = center
        self.radius = radius
        self.origin = "truncated"

    def _eval(self, x, strict):
        v, g = self.inner.evaluate(x, strict)
        d = x - self.center
        rr = np.linalg.norm(d, axis=1)
        s, ds = _smooth_step(rr / self.radius - 1)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(rr[:, None] > 0, d / np.where(rr > 0, rr, 1.0)[:, None], 0.0)
        gpsi = (ds / self.radius)[:, None] * unit
        return v * s, g * s[:, None] + v[:, None] * gpsi


def w12_truncate(grid: WhitneyGrid, field: InteriorField, f, m: float = 2.0, retries: int = 6) -> Truncation:
    """Cut the extension off around supp f.

    Small cubes (side <= r0/M) whose 1.2 dilate meets the annulus must have
    b(P) disjoint from supp f; M doubles until that holds.
    """
    vals = _as_function(f).values
    supp = np.nonzero(vals != 0)[0]
    if supp.size == 0:
        raise ValueError("f vanishes identically")
    pts = grid.model.atoms[supp]
    r0 = float(np.max(np.linalg.norm(pts[:, None] - pts[None], axis=-1))) if supp.size > 1 else grid.model.meta["atom_spacing"]
    center = pts.mean(0)
    lat = grid.lattice
    in_supp = np.zeros(lat.n_cubes, dtype=bool)
    in_supp[np.unique(lat.atom_cube[:, supp])] = True
    half = 0.6 * grid.side
    for _ in range(retries):
        big = m * r0
        # distance range from the centre over the 1.2 dilate of every cube
        d = np.abs(grid.center - center)
        near = np.linalg.norm(np.maximum(d - half[:, None], 0), axis=1)
        far = np.linalg.norm(d + half[:, None], axis=1)
        meets = (far >= big) & (near <= 2 * big)
        small = meets & (grid.side <= r0 / m)
        if not in_supp[grid.bcube[small]].any():
            large = meets & ~small
            return Truncation(field=_CutoffField(field, center, big), center=center, radius=big, m=m,
                              small_family=int(small.sum()), large_family=int(large.sum()))
        m *= 2
    raise RuntimeError("no M separates the small annulus cubes from supp f")


def weighted_energy(grid: WhitneyGrid, field: InteriorField, s: float | None = None, k: int = 5) -> float:
    """Quadrature of int |grad F|^2 delta^(s - 1) over the band."""
    x, w = cube_nodes(grid, k)
    g = field.gradient(x.reshape(-1, 2))
    if np.isnan(g).any():
        raise BandUnderflow("cube node outside the band")
    mean = (np.sum(g ** 2, axis=1).reshape(grid.n_cubes, -1) * w[None]).sum(1) / w.sum()
    return float(mean @ _weights(grid, grid.model.s if s is None else s))
