"""Boundary norms and interior operators.

Boundary side: BMO / Campanato seminorms over ball or dyadic families,
Lipschitz constants and Hajlasz upper gradients of atom data.

Interior side: fields are objects with ``evaluate(x) -> (value, gradient)``.
Suprema over continuous ranges become suprema over fixed sample sets:

* cones are sampled on a polar grid around the vertex (geometric radii,
  equispaced angles) restricted to ``|x - xi| < (1 + alpha) delta(x)``;
* ball means use a 16 x 16 polar tensor rule (Gauss radial nodes times
  equispaced angles);
* Carleson and area integrals use midpoint quadrature over Whitney cubes,
  a cube counting when its centre lies in the ball or cone, with per-cube
  values taken from a closed k x k node grid (sup or trapezoid mean).

The ambient space is the plane, so the codimension exponent is ``n = 1``:
``omega_s = delta^(s - 1)`` and the area functional uses ``delta^-1``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .dyadic import BoundaryFunction, DyadicLattice
from .geometry import BoundaryModel
from .whitney import WhitneyGrid

AMBIENT_N = 1          # Omega lies in R^(n+1) with n = 1
BALL_RULE = 16         # points per direction of the ball tensor rule
_CHUNK = 200_000


def _values(f) -> np.ndarray:
    return np.asarray(f.values if isinstance(f, BoundaryFunction) else f, dtype=float)


# ---------------------------------------------------------------------------
# interior fields
# ---------------------------------------------------------------------------
class InteriorField:
    """A field on the covered band with value and gradient.

    Subclasses implement ``_eval(x)``; points outside the band give NaN
    unless ``strict`` is set, in which case the grid's uncovered-point error
    is raised.
    """

    origin = "field"
    grid: WhitneyGrid | None = None

    def _eval(self, x: np.ndarray, strict: bool):
        raise NotImplementedError

    def evaluate(self, x, strict: bool = False) -> tuple[np.ndarray, np.ndarray]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if len(x) <= _CHUNK:
            return self._eval(x, strict)
        vals, grads = zip(*(self._eval(x[i:i + _CHUNK], strict) for i in range(0, len(x), _CHUNK)))
        return np.concatenate(vals), np.concatenate(grads)

    def value(self, x, strict: bool = False) -> np.ndarray:
        return self.evaluate(x, strict)[0]

    def gradient(self, x, strict: bool = False) -> np.ndarray:
        return self.evaluate(x, strict)[1]

    def __add__(self, other: "InteriorField") -> "InteriorField":
        return LinearField([(1.0, self), (1.0, other)])

    def __sub__(self, other: "InteriorField") -> "InteriorField":
        return LinearField([(1.0, self), (-1.0, other)])

    def __rmul__(self, a: float) -> "InteriorField":
        return LinearField([(float(a), self)])


class CubeField(InteriorField):
    """sum_P coeffs[P] phi_P over the Whitney partition of unity."""

    def __init__(self, grid: WhitneyGrid, coeffs: np.ndarray, origin: str = "cubes"):
        self.grid = grid
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.coeffs.setflags(write=False)
        self.origin = origin

    def _eval(self, x, strict):
        return self.grid.field(self.coeffs, x, strict=strict)


class FunctionField(InteriorField):
    """Field from closures ``value(x)`` and ``grad(x)`` on point arrays."""

    def __init__(self, value: Callable, grad: Callable, grid: WhitneyGrid | None = None, origin: str = "closure"):
        self._v, self._g = value, grad
        self.grid = grid
        self.origin = origin

    def _eval(self, x, strict):
        v = np.asarray(self._v(x), dtype=float)
        g = np.asarray(self._g(x), dtype=float)
        if self.grid is not None:
            miss = self.grid.locate(x) < 0
            if strict and miss.any():
                from .whitney import UncoveredPoint
                raise UncoveredPoint("point outside the Whitney band")
            v = np.where(miss, np.nan, v)
            g = np.where(miss[:, None], np.nan, g)
        return v, g


class LinearField(InteriorField):
    """Finite linear combination of fields."""

    def __init__(self, terms):
        self.terms = [(float(a), f) for a, f in terms]
        self.grid = next((f.grid for _, f in self.terms if f.grid is not None), None)
        self.origin = "combination"

    def _eval(self, x, strict):
        v = np.zeros(len(x))
        g = np.zeros((len(x), 2))
        # cube fields on one grid collapse into a single coefficient vector
        cube = [(a, f) for a, f in self.terms if isinstance(f, CubeField) and f.grid is self.grid]
        rest = [(a, f) for a, f in self.terms if not (isinstance(f, CubeField) and f.grid is self.grid)]
        if cube:
            v, g = self.grid.field(sum(a * f.coeffs for a, f in cube), x, strict=strict)
        for a, f in rest:
            fv, fg = f.evaluate(x, strict)
            v = v + a * fv
            g = g + a * fg
        return v, g


def constant_field(c: float, grid: WhitneyGrid | None = None) -> FunctionField:
    return FunctionField(lambda x: np.full(len(x), float(c)), lambda x: np.zeros((len(x), 2)), grid, "constant")


def magnitude(field: InteriorField, of: str = "gradient") -> Callable:
    """Pointwise |value| or |gradient| of a field as a closure."""
    if of == "gradient":
        return lambda x: np.linalg.norm(field.gradient(x), axis=1)
    if of == "value":
        return lambda x: np.abs(field.value(x))
    raise ValueError("of must be 'gradient' or 'value'")


# ---------------------------------------------------------------------------
# boundary norms
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BallFamily:
    """Boundary balls B(c, r) for every centre and radius."""

    centers: np.ndarray
    radii: np.ndarray


def ball_family(model: BoundaryModel, r_grid, centers=None) -> BallFamily:
    r = np.asarray(r_grid, dtype=float).ravel()
    c = model.atoms if centers is None else np.atleast_2d(np.asarray(centers, dtype=float))
    if r.size == 0 or len(c) == 0:
        raise ValueError("empty family")
    return BallFamily(centers=c, radii=r)


def ball_oscillations(model: BoundaryModel, f, family: BallFamily) -> np.ndarray:
    """Mean oscillation (1/sigma(B)) int_B |f - m_B f| dsigma for each (radius, centre)."""
    f = _values(f)
    w = model.weights
    out = np.zeros((len(family.radii), len(family.centers)))
    tree = model.atom_tree
    for k, r in enumerate(family.radii):
        lists = tree.query_ball_point(family.centers, r)
        for i, idx in enumerate(lists):
            if not idx:
                continue
            idx = np.asarray(idx)
            ww = w[idx]
            fi = f[idx] - f[idx[0]]  # shift so constants give exactly zero
            m = np.dot(ww, fi) / ww.sum()
            out[k, i] = np.dot(ww, np.abs(fi - m)) / ww.sum()
    return out


def campanato_seminorm(model: BoundaryModel, f, family, beta: float = 0.0) -> float:
    """sup over the family of r^-beta times the mean oscillation.

    ``family`` is a ``BallFamily`` or a ``DyadicLattice`` (cubes, with r the
    cube side).  Only the listed scales are seen: this is the truncated
    seminorm.
    """
    if isinstance(family, DyadicLattice):
        osc = family.oscillations(_values(f))
        return float(np.max(osc * family.side ** (-beta)))
    if len(family.radii) == 0 or len(family.centers) == 0:
        raise ValueError("empty family")
    osc = ball_oscillations(model, f, family)
    return float(np.max(osc * family.radii[:, None] ** (-beta)))


def bmo_norm(model: BoundaryModel, f, family) -> float:
    return campanato_seminorm(model, f, family, 0.0)


def lipschitz_constant(model: BoundaryModel, f, beta: float = 1.0) -> float:
    """Exhaustive sup of |f(x) - f(y)| / |x - y|^beta over atom pairs."""
    f = _values(f)
    x = model.atoms
    best = 0.0
    for i in range(0, len(x), 512):
        d = np.linalg.norm(x[i:i + 512, None] - x[None], axis=-1)
        df = np.abs(f[i:i + 512, None] - f[None])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(d > 0, df / d ** beta, 0.0)
        best = max(best, float(q.max()))
    return best


def _blocks(model: BoundaryModel, lattice: DyadicLattice, size: int = 1024) -> list[np.ndarray]:
    for j in range(lattice.j_min, lattice.j_max + 1):
        lv = lattice.level(j)
        if np.all(lattice.stop[lv] - lattice.start[lv] <= size):
            return [np.arange(lattice.start[q], lattice.stop[q]) for q in lv]
    return [np.arange(model.n_atoms)]


def hajlasz_gradient(model: BoundaryModel, f, lattice: DyadicLattice) -> BoundaryFunction:
    """Pointwise Hajlasz upper gradient from local Lipschitz constants.

    Within each dyadic block (the coarsest generation whose cubes hold at
    most 2^10 atoms) ``g(x) = 1/2 max_y |f(x) - f(y)| / |x - y|``.  This is
    the smallest g of the form ``g = a * L`` with L the local constant, and
    the defining inequality ``|f(x) - f(y)| <= |x - y| (g(x) + g(y))`` is
    then verified on every pair of the block.
    """
    f = _values(f)
    g = np.zeros(model.n_atoms)
    for idx in _blocks(model, lattice):
        x = model.atoms[idx]
        d = np.linalg.norm(x[:, None] - x[None], axis=-1)
        df = np.abs(f[idx][:, None] - f[idx][None])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(d > 0, df / d, 0.0)
        gi = 0.5 * q.max(1)
        viol = df > d * (gi[:, None] + gi[None]) * (1 + 1e-12) + 1e-15
        if viol.any():
            raise ArithmeticError("Hajlasz inequality violated on a tested pair")
        g[idx] = gi
    return BoundaryFunction(g)


# ---------------------------------------------------------------------------
# cones and non-tangential maximal functions
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Cone:
    """Sample points of the truncated cone {|x - xi| < (1 + alpha) delta(x)}."""

    vertex: np.ndarray
    alpha: float
    rho_min: float
    rho_max: float
    points: np.ndarray
    height: np.ndarray
    layer: np.ndarray = dc_field(repr=False)


def make_cone(model: BoundaryModel, xi, alpha: float = 1.0, rho_min: float = 1e-3, rho_max: float = 1.0,
              density: int = 2) -> Cone:
    """Polar sample of the cone with heights delta(x) in [rho_min, rho_max].

    ``density`` multiplies the radii per octave (8) and the angles (64).
    Dyadic ``rho_max`` values already lie on the radius lattice.
    """
    if alpha <= 0 or not 0 < rho_min <= rho_max:
        raise ValueError("need alpha > 0 and 0 < rho_min <= rho_max")
    xi = np.asarray(xi, dtype=float)
    per = 8 * density
    # radii on the fixed lattice 2^(k/per), so a wider band samples a superset
    lo, hi = np.log2(rho_min), np.log2((1 + alpha) * rho_max)
    rad = 2.0 ** (np.arange(np.floor(lo * per), np.ceil(hi * per) + 1) / per)
    rad = np.union1d(rad, [rho_max])
    th = 2 * np.pi * np.arange(64 * density) / (64 * density) + np.pi / 2
    u = np.stack([np.cos(th), np.sin(th)], 1)
    pts = (xi[None, None] + rad[None, :, None] * u[:, None, :]).reshape(-1, 2)
    x0, y0, x1, y1 = model.window
    inw = (pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)
    pts = pts[inw]
    d = model.delta(pts)
    r = np.linalg.norm(pts - xi, axis=1)
    keep = (r < (1 + alpha) * d) & (d >= rho_min) & (d <= rho_max * (1 + 1e-12))
    if not keep.any():
        raise ValueError("cone empty after truncation")
    pts, d = pts[keep], d[keep]
    layer = np.maximum(np.floor(np.log2(rho_max / d)), 0).astype(int)
    return Cone(vertex=xi, alpha=float(alpha), rho_min=float(rho_min), rho_max=float(rho_max),
                points=pts, height=d, layer=layer)


def nt_maximal(field: InteriorField, cone: Cone) -> float:
    """sup |field| over the cone samples that lie in the band."""
    v = np.abs(field.value(cone.points))
    if np.all(np.isnan(v)):
        raise ValueError("cone misses the band")
    return float(np.nanmax(v))


def nt_gradient_maximal(field: InteriorField, cone: Cone) -> float:
    """sup of delta |grad field| over the cone samples in the band."""
    g = np.linalg.norm(field.gradient(cone.points), axis=1) * cone.height
    if np.all(np.isnan(g)):
        raise ValueError("cone misses the band")
    return float(np.nanmax(g))


def ball_rule(k: int = BALL_RULE) -> tuple[np.ndarray, np.ndarray]:
    """Unit-disk polar tensor rule: Gauss-Legendre radii times k equispaced angles."""
    t, w = np.polynomial.legendre.leggauss(k)
    rho = 0.5 * (t + 1)
    wr = 0.5 * w * rho
    th = 2 * np.pi * (np.arange(k) + 0.5) / k
    pts = (rho[:, None, None] * np.stack([np.cos(th), np.sin(th)], 1)[None]).reshape(-1, 2)
    wts = np.repeat(wr, k) / k
    return pts, wts / wts.sum()


def ball_values(field: InteriorField, x: np.ndarray, r: np.ndarray, k: int = BALL_RULE):
    """Field values on the ball rule around each x; shape (M, k*k) and weights."""
    u, w = ball_rule(k)
    pts = x[:, None, :] + np.asarray(r)[:, None, None] * u[None]
    v = field.value(pts.reshape(-1, 2)).reshape(len(x), -1)
    return v, w


def sharp_local(field: InteriorField, x: np.ndarray, delta: np.ndarray, c: float = 0.5) -> np.ndarray:
    """m_sharp,c at points: sup over the ball rule of |F - mean over c B^x| (NaN if the ball leaves the band)."""
    if not 0 < c <= 0.5:
        raise ValueError("c must lie in (0, 1/2]")
    v, w = ball_values(field, x, c * delta)
    v = v - v[:, :1]  # shift so constants give exactly zero
    m = v @ w
    return np.max(np.abs(v - m[:, None]), axis=1)


def sharp_nt_maximal(field: InteriorField, cone: Cone, c: float = 0.5, beta: float = 0.0) -> float:
    """sup over cone samples of delta^-beta m_sharp,c(field); samples whose ball leaves the band are skipped."""
    s = sharp_local(field, cone.points, cone.height, c) * cone.height ** (-beta)
    if np.all(np.isnan(s)):
        raise ValueError("cone misses the band")
    return float(np.nanmax(s))


# ---------------------------------------------------------------------------
# Whitney quadrature
# ---------------------------------------------------------------------------
def cube_nodes(grid: WhitneyGrid, k: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Closed k x k node grid of every cube (nudged inside by 1e-7 l) and trapezoid weights."""
    eta = 1e-7
    t = eta + (1 - 2 * eta) * np.linspace(0.0, 1.0, k)
    w1 = np.ones(k)
    w1[0] = w1[-1] = 0.5
    tx, ty = np.meshgrid(t, t, indexing="ij")
    u = np.stack([tx.ravel(), ty.ravel()], 1)
    wt = np.outer(w1, w1).ravel()
    pts = grid.corner[:, None, :] + grid.side[:, None, None] * u[None]
    return pts, wt / wt.sum()


def cube_stats(grid: WhitneyGrid, fn: Callable, k: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Per-cube (sup, mean) of a nonnegative pointwise function on the node grid."""
    pts, wt = cube_nodes(grid, k)
    flat = pts.reshape(-1, 2)
    vals = np.concatenate([np.asarray(fn(flat[i:i + _CHUNK]), dtype=float) for i in range(0, len(flat), _CHUNK)])
    vals = vals.reshape(grid.n_cubes, -1)
    if np.isnan(vals).any():
        raise ValueError("function undefined at cube nodes")
    return vals.max(1), vals @ wt


def hops(grid: WhitneyGrid, c: float) -> np.ndarray:
    """Adjacency steps approximating the ball B(x_P, c delta(x_P))."""
    return np.maximum(np.ceil(c * grid.cdelta / grid.side), 1).astype(int)


def m_infinity_cubes(grid: WhitneyGrid, cube_sup: np.ndarray, c: float = 0.125) -> np.ndarray:
    """m_inf,c at each cube centre: max of the per-cube sups over the hop neighbourhood.

    The ball of radius c delta is replaced by the cubes reached in
    ``ceil(c delta / l)`` touching steps.
    """
    if not 0 < c <= 0.5:
        raise ValueError("c must lie in (0, 1/2]")
    h = hops(grid, c)
    nb = grid.nbr
    cur = np.asarray(cube_sup, dtype=float).copy()
    out = np.where(h == 0, cur, 0.0)
    for t in range(1, int(h.max()) + 1):
        cur = np.where(nb >= 0, cur[np.maximum(nb, 0)], -np.inf).max(1)
        out = np.where(h == t, cur, out)
    return out


def q_mean_cubes(grid: WhitneyGrid, cube_mean_q: np.ndarray, c: float, q: float) -> np.ndarray:
    """(mean of |F|^q over the hop neighbourhood)^(1/q), area weighted; input is the per-cube mean of |F|^q."""
    h = hops(grid, c)
    nb = grid.nbr
    out = np.zeros(grid.n_cubes)
    # breadth-first union of neighbourhoods, cube by cube hop count
    area = grid.area
    for p in range(grid.n_cubes):
        seen = {p}
        front = [p]
        for _ in range(h[p]):
            nxt = []
            for a in front:
                for b in nb[a]:
                    if b >= 0 and b not in seen:
                        seen.add(b)
                        nxt.append(b)
            front = nxt
        idx = np.fromiter(seen, dtype=np.int64)
        out[p] = (np.dot(area[idx], cube_mean_q[idx]) / area[idx].sum()) ** (1.0 / q)
    return out


def dyadic_r_grid(r_min: float, r_max: float) -> np.ndarray:
    k = int(np.floor(np.log2(r_max / r_min) + 1e-9))
    return r_max * 0.5 ** np.arange(k, -1, -1)


def _weights(grid: WhitneyGrid, s: float) -> np.ndarray:
    return grid.area * grid.cdelta ** (s - AMBIENT_N)


def carleson_sweep(grid: WhitneyGrid, cube_values: np.ndarray, xis, s: float | None = None, beta: float = 0.0,
                   r_grid=None, mask: np.ndarray | None = None) -> np.ndarray:
    """sup_r r^(-s-beta) sum_{P: x_P in B(xi, r)} v_P omega_s(x_P) l(P)^2 for each xi.

    Parameters
    ----------
    cube_values : (M,) per-cube magnitudes (already passed through m_inf if wanted).
    r_grid : radii; defaults to dyadic radii from the band floor to a quarter of the window.
    mask : optional cube selector (e.g. u 1_B).
    """
    model = grid.model
    s = model.s if s is None else s
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    if r_grid is None:
        x0, y0, x1, y1 = grid.window
        r_grid = dyadic_r_grid(max(grid.band_floor, 2.0 ** -grid.j_hi), 0.25 * max(x1 - x0, y1 - y0))
    r = np.sort(np.asarray(r_grid, dtype=float))
    w = _weights(grid, s) * np.asarray(cube_values, dtype=float)
    if mask is not None:
        w = np.where(mask, w, 0.0)
    nz = np.nonzero(w)[0]
    out = np.zeros(len(xis))
    if nz.size == 0:
        return out
    c = grid.center[nz]
    w = w[nz]
    nr = len(r)
    rows = max(1, 4_000_000 // len(nz))
    for i in range(0, len(xis), rows):
        xb = xis[i:i + rows]
        d = np.sqrt(((xb[:, None, :] - c[None]) ** 2).sum(-1))
        b = np.searchsorted(r, d, side="right")  # first radius strictly above d
        flat = (np.arange(len(xb))[:, None] * (nr + 1) + b).ravel()
        sums = np.bincount(flat, np.broadcast_to(w, d.shape).ravel(), minlength=len(xb) * (nr + 1))
        sums = np.cumsum(sums.reshape(len(xb), nr + 1)[:, :nr], axis=1)
        out[i:i + rows] = np.max(sums * r[None] ** (-s - beta), axis=1)
    return out


def carleson(grid: WhitneyGrid, fn: Callable | np.ndarray, xi, s: float | None = None, beta: float = 0.0,
             c: float | None = None, r_grid=None, q: float | None = None, k: int = 5) -> np.ndarray:
    """Carleson functional of a pointwise magnitude at boundary points.

    ``c=None`` gives the plain functional with per-cube trapezoid means;
    a value of ``c`` applies m_inf,c first, and with ``q`` the L^q ball mean
    of the q-Carleson functional is used instead.
    ``fn`` may also be a precomputed per-cube value array.
    """
    if callable(fn):
        if q is not None:
            _, mean = cube_stats(grid, lambda x: np.abs(fn(x)) ** q, k)
            vals = q_mean_cubes(grid, mean, 0.5 if c is None else c, q)
        else:
            sup, mean = cube_stats(grid, fn, k)
            vals = mean if c is None else m_infinity_cubes(grid, sup, c)
    else:
        vals = np.asarray(fn, dtype=float)
    return carleson_sweep(grid, vals, xi, s, beta, r_grid)


def area_sweep(grid: WhitneyGrid, cube_values: np.ndarray, xis, alpha: float = 1.0,
               mask: np.ndarray | None = None) -> np.ndarray:
    """int_cone |G| delta^-n dx by Whitney midpoint quadrature at each xi."""
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    w = grid.area * grid.cdelta ** (-AMBIENT_N) * np.asarray(cube_values, dtype=float)
    if mask is not None:
        w = np.where(mask, w, 0.0)
    nz = np.nonzero(w)[0]
    out = np.zeros(len(xis))
    if nz.size == 0:
        return out
    c, w, dl = grid.center[nz], w[nz], (1 + alpha) * grid.cdelta[nz]
    rows = max(1, 4_000_000 // len(nz))
    for i in range(0, len(xis), rows):
        xb = xis[i:i + rows]
        d = np.sqrt(((xb[:, None, :] - c[None]) ** 2).sum(-1))
        out[i:i + rows] = (np.where(d < dl[None], w[None], 0.0)).sum(1)
    return out


def area_functional(grid: WhitneyGrid, fn: Callable | np.ndarray, xi, alpha: float = 1.0, k: int = 5) -> np.ndarray:
    """Area functional at boundary points; the band floor truncates the cone below."""
    vals = cube_stats(grid, fn, k)[1] if callable(fn) else np.asarray(fn, dtype=float)
    return area_sweep(grid, vals, xi, alpha)


def tent_norms(grid: WhitneyGrid, field: InteriorField, p: float, s: float | None = None, alpha: float = 1.0,
               xis=None, k: int = 5) -> float:
    """T^p_2 (L^p over atoms of A(F^2/delta)^(1/2)) or T^inf_2 (sup of C_s(F^2/delta)^(1/2))."""
    model = grid.model

    def fn(x):
        v = field.value(x)
        return v * v / model.delta(x)

    _, mean = cube_stats(grid, fn, k)
    xis = model.atoms if xis is None else np.atleast_2d(xis)
    if np.isinf(p):
        return float(np.sqrt(carleson_sweep(grid, mean, xis, s).max()))
    a = area_sweep(grid, mean, xis, alpha)
    w = model.weights if xis is model.atoms else np.full(len(xis), model.total_mass / len(xis))
    return float(np.dot(w, a ** (p / 2)) ** (1.0 / p))


def nsum_seminorm(field: InteriorField, model: BoundaryModel, rho_min: float, rho_max: float, xis=None,
                  alpha: float = 1.0, c: float = 0.5, density: int = 2) -> float:
    """sup_xi N_sharp(u) + sup_xi N(delta grad u) over cone samples at the given atoms."""
    xis = model.atoms[np.linspace(0, model.n_atoms - 1, min(64, model.n_atoms)).astype(int)] if xis is None else xis
    a = b = 0.0
    for xi in np.atleast_2d(xis):
        cone = make_cone(model, xi, alpha, rho_min, rho_max, density)
        a = max(a, sharp_nt_maximal(field, cone, c))
        b = max(b, nt_gradient_maximal(field, cone))
    return a + b


def write_sweep_csv(path, xis, values) -> None:
    """Norm sweep rows xi_x, xi_y, value."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["xi_x", "xi_y", "value"])
        for p, v in zip(np.atleast_2d(xis), np.asarray(values)):
            wr.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(v))])
