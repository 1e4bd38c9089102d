"""Whitney decomposition of the domain inside a window, boundary cubes b(P),
and the smooth partition of unity built from tensor bumps.

A dyadic square ``P`` of side ``l`` is accepted when it lies in the domain and
``sqrt(2) l < dist(P, boundary) / 20``; squares are refined top-down from
generation ``j_lo`` and whatever is still rejected at ``j_hi`` is left
uncovered (the band floor).

The bump of ``P`` is ``psi_P(x) = h(tx) h(ty)`` with
``t = (x - centre) / (0.55 l)`` and ``h(t) = exp(1 - 1/(1 - t^2))`` on
``|t| < 1``, so ``supp psi_P = 1.1 P``; ``phi_P = psi_P / sum psi``.  Only cubes
touching ``P`` can have a dilate ``1.1 P'`` meeting ``P``, which gives a
padded neighbour table used for vectorised evaluation.

Cubes finer than the lattice leaves keep the leaf as their boundary cube;
their ``b_gen`` still records their own generation so the side relation
``l(b(P)) = l(P)`` is tracked through a virtual continuation of the leaf.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .dyadic import DyadicLattice
from .geometry import BoundaryModel

WHITNEY_RATIO = 20.0    # diam(P) < dist(P, boundary) / WHITNEY_RATIO
BUMP_DILATION = 1.1     # supp phi_P inside 1.1 P
FAMILY_DILATION = 1.2   # dilation used by the approximant families
_HALF = 0.5 * BUMP_DILATION


class UncoveredPoint(ValueError):
    """Raised when a point lies outside every Whitney cube of the grid."""


def bump_profile(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """h(t) = exp(1 - 1/(1 - t^2)) on |t| < 1 (zero outside) and its derivative."""
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1.0
    q = np.where(inside, 1.0 - t * t, 1.0)
    h = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
    dh = np.where(inside, h * (-2.0 * t / (q * q)), 0.0)
    return h, dh


def window_level(window) -> int:
    """Coarsest dyadic generation whose grid is aligned with the window."""
    for j in range(-20, 30):
        v = np.asarray(window, dtype=float) * 2.0 ** j
        if np.allclose(v, np.round(v), atol=1e-12):
            return j
    raise ValueError("window corners must be dyadic rationals")


@dataclass(frozen=True)
class WhitneyGrid:
    """Frozen Whitney cover of the window's part of the domain.

    Attributes
    ----------
    ix, iy, level : ndarray
        Integer corner of each square on its own level's grid and the level.
    side, corner, center, dist : ndarray
        Geometry and distance to the boundary of each square.
    bcube, b_gen : ndarray
        Lattice id of b(P) and the (possibly virtual) generation it stands for.
    bad, oversize : ndarray
        ``bad``: larger than the lattice roots (the family B0).  ``oversize``:
        side at least the boundary diameter (compact boundaries only).
    nbr : ndarray
        ``(M, K)`` ids of cubes touching P, itself first, padded with -1.
    """

    model: BoundaryModel
    lattice: DyadicLattice
    window: tuple
    j_lo: int
    j_hi: int
    ix: np.ndarray
    iy: np.ndarray
    level: np.ndarray
    side: np.ndarray
    corner: np.ndarray
    center: np.ndarray
    dist: np.ndarray
    bcube: np.ndarray
    b_gen: np.ndarray
    bad: np.ndarray
    oversize: np.ndarray
    nbr: np.ndarray
    band_floor: float
    cdelta: np.ndarray = None
    constants: dict = field(default_factory=dict)
    _lookup: dict = field(default_factory=dict, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_cubes(self) -> int:
        return len(self.side)

    @property
    def center_tree(self) -> cKDTree:
        if "tree" not in self._cache:
            self._cache["tree"] = cKDTree(self.center)
        return self._cache["tree"]

    @property
    def area(self) -> np.ndarray:
        return self.side ** 2

    @property
    def virtual(self) -> np.ndarray:
        """Cubes finer than the lattice leaves."""
        return self.level > self.lattice.j_max

    # -- point location ---------------------------------------------------------
    def locate(self, x: np.ndarray) -> np.ndarray:
        """Id of the cube containing each point, or -1 when uncovered."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(len(x), -1, dtype=np.int64)
        for j, (x0, y0, ny, keys, ids) in self._lookup.items():
            s = 2.0 ** j
            gx = np.floor(x[:, 0] * s).astype(np.int64) - x0
            gy = np.floor(x[:, 1] * s).astype(np.int64) - y0
            k = gx * ny + gy
            pos = np.clip(np.searchsorted(keys, k), 0, len(keys) - 1)
            hit = (keys[pos] == k) & (gx >= 0) & (gy >= 0) & (gy < ny) & (out < 0)
            out[hit] = ids[pos[hit]]
        return out

    # -- bumps ----------------------------------------------------------------
    def _psi(self, cand: np.ndarray, x: np.ndarray):
        valid = cand >= 0
        c = np.where(valid, cand, 0)
        sc = _HALF * self.side[c]
        tx = (x[:, None, 0] - self.center[c, 0]) / sc
        ty = (x[:, None, 1] - self.center[c, 1]) / sc
        hx, dhx = bump_profile(tx)
        hy, dhy = bump_profile(ty)
        psi = np.where(valid, hx * hy, 0.0)
        gpsi = np.stack([dhx * hy / sc, hx * dhy / sc], -1) * valid[..., None]
        return psi, gpsi

    def bumps(self, x: np.ndarray, strict: bool = True):
        """Partition-of-unity values at points.

        Returns
        -------
        cand : (M, K) int
            Candidate cube ids (-1 padding).
        phi : (M, K)
            phi_P(x) for the candidates.
        grad : (M, K, 2)
            Analytic gradients by the quotient rule.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        home = self.locate(x)
        if strict and np.any(home < 0):
            bad = x[home < 0][0]
            raise UncoveredPoint(f"point {bad.tolist()} is outside the Whitney band")
        cand = np.where(home[:, None] >= 0, self.nbr[np.maximum(home, 0)], -1)
        psi, gpsi = self._psi(cand, x)
        tot = psi.sum(1)
        gtot = gpsi.sum(1)
        ok = tot > 0
        tot_safe = np.where(ok, tot, 1.0)
        phi = psi / tot_safe[:, None]
        grad = (gpsi - phi[..., None] * gtot[:, None, :]) / tot_safe[:, None, None]
        phi[~ok] = np.nan
        grad[~ok] = np.nan
        return cand, phi, grad

    def field(self, coeffs: np.ndarray, x: np.ndarray, strict: bool = True):
        """Value and gradient of sum_P coeffs[P] phi_P at points (NaN where uncovered).

        ``coeffs`` of shape (n_cubes, m) evaluates m fields from one bump pass,
        giving values (M, m) and gradients (M, m, 2).
        """
        cand, phi, grad = self.bumps(x, strict=strict)
        coeffs = np.asarray(coeffs, dtype=float)
        valid = cand >= 0
        if coeffs.ndim == 2:
            c = np.where(valid[..., None], coeffs[np.maximum(cand, 0)], 0.0)
            return np.einsum("mk,mkj->mj", phi, c), np.einsum("mkd,mkj->mjd", grad, c)
        c = np.where(valid, coeffs[np.maximum(cand, 0)], 0.0)
        val = (c * phi).sum(1)
        g = (c[..., None] * grad).sum(1)
        return val, g

    def to_csv(self, path) -> None:
        """Dump corner_x, corner_y, side, level, b(P) generation and key."""
        lat = self.lattice
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["corner_x", "corner_y", "side", "level", "b_gen", "b_key"])
            for p in range(self.n_cubes):
                q = self.bcube[p]
                wr.writerow([repr(float(self.corner[p, 0])), repr(float(self.corner[p, 1])),
                             repr(float(self.side[p])), int(self.level[p]), int(lat.gen[q]), int(lat.key[q])])

    def outlines(self) -> np.ndarray:
        """Rectangles (x0, y0, x1, y1) of all cubes, for renderers."""
        return np.concatenate([self.corner, self.corner + self.side[:, None]], 1)


def _domain_ok(model: BoundaryModel, lo: np.ndarray, hi: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Squares at positive distance from the boundary that lie in the domain."""
    c = 0.5 * (lo + hi)
    return (d > 0) & model.inside(c)


def build_whitney(model: BoundaryModel, lattice: DyadicLattice, j_lo: int | None = None,
                  j_hi: int | None = None, window=None) -> WhitneyGrid:
    """Maximal dyadic squares of the window satisfying the Whitney condition.

    Parameters
    ----------
    j_lo, j_hi : int
        Coarsest and finest square generation.  ``j_lo`` defaults to the
        window alignment level; ``j_hi`` defaults to the lattice leaf
        generation.
    """
    window = tuple(model.window if window is None else window)
    jw = window_level(window)
    j_lo = jw if j_lo is None else j_lo
    if j_lo < jw:
        raise ValueError(f"window is not aligned with generation {j_lo} (needs >= {jw})")
    j_hi = lattice.j_max if j_hi is None else j_hi
    if j_hi < j_lo:
        raise ValueError("empty scale band")
    x0, y0, x1, y1 = window
    s = 2.0 ** j_lo
    gx = np.arange(int(round(x0 * s)), int(round(x1 * s)))
    gy = np.arange(int(round(y0 * s)), int(round(y1 * s)))
    cx, cy = np.meshgrid(gx, gy, indexing="ij")
    cx, cy = cx.ravel(), cy.ravel()
    acc_ix, acc_iy, acc_lv, acc_d = [], [], [], []
    for j in range(j_lo, j_hi + 1):
        if cx.size == 0:
            break
        l = 2.0 ** -j
        lo = np.stack([cx * l, cy * l], 1)
        hi = lo + l
        d = model.rect_distance(lo, hi)
        ok = _domain_ok(model, lo, hi, d)
        accept = ok & (np.sqrt(2.0) * l < d / WHITNEY_RATIO)
        # squares at positive distance on the far side of the boundary are dropped
        drop = (d > 0) & ~ok
        acc_ix.append(cx[accept])
        acc_iy.append(cy[accept])
        acc_lv.append(np.full(accept.sum(), j))
        acc_d.append(d[accept])
        split = ~accept & ~drop
        sx, sy = cx[split], cy[split]
        cx = np.concatenate([2 * sx, 2 * sx + 1, 2 * sx, 2 * sx + 1])
        cy = np.concatenate([2 * sy, 2 * sy, 2 * sy + 1, 2 * sy + 1])
    ix = np.concatenate(acc_ix)
    iy = np.concatenate(acc_iy)
    level = np.concatenate(acc_lv)
    dist = np.concatenate(acc_d)
    if ix.size == 0:
        raise ValueError("the scale band misses the window: no Whitney cube accepted")
    order = np.lexsort((iy, ix, level))
    ix, iy, level, dist = ix[order], iy[order], level[order], dist[order]
    side = 2.0 ** (-level.astype(float))
    corner = np.stack([ix * side, iy * side], 1)
    center = corner + 0.5 * side[:, None]

    lookup = {}
    for j in np.unique(level):
        sel = np.nonzero(level == j)[0]
        s = 2.0 ** j
        ox = int(np.floor(x0 * s + 1e-9))
        oy = int(np.floor(y0 * s + 1e-9))
        ny = int(np.ceil((y1 - y0) * s)) + 2
        k = (ix[sel] - ox) * ny + (iy[sel] - oy)
        o = np.argsort(k)
        lookup[int(j)] = (ox, oy, ny, k[o], sel[o])

    bcube, b_gen, bad, oversize = _boundary_cubes(model, lattice, center, level, side)
    grid = WhitneyGrid(model=model, lattice=lattice, window=window, j_lo=j_lo, j_hi=j_hi, ix=ix, iy=iy,
                       level=level, side=side, corner=corner, center=center, dist=dist, bcube=bcube,
                       b_gen=b_gen, bad=bad, oversize=oversize, nbr=np.zeros((len(ix), 1), dtype=np.int64),
                       band_floor=float((WHITNEY_RATIO + 1) * np.sqrt(2.0) * 2.0 ** -j_hi),
                       _lookup=lookup)
    object.__setattr__(grid, "nbr", _touching(grid))
    object.__setattr__(grid, "cdelta", model.delta(center))
    object.__setattr__(grid, "constants", _measure(grid))
    for a in ("ix", "iy", "level", "side", "corner", "center", "dist", "bcube", "b_gen", "bad", "oversize", "nbr", "cdelta"):
        getattr(grid, a).setflags(write=False)
    return grid


def _boundary_cubes(model, lattice, center, level, side):
    """b(P): ancestor, at P's generation, of the leaf whose box is nearest P's centre."""
    _, atom = model.box_index.rect_distance(center, center)
    leaf = lattice.leaf_of_atom(atom)
    bcube = lattice.ancestor(leaf, level)
    bad = level < lattice.j_min
    oversize = np.zeros(len(level), dtype=bool)
    if model.compact:
        oversize = side >= model.meta["boundary_diam"]
    return bcube.astype(np.int64), level.astype(np.int64), bad, oversize


_PROBES = np.array([
    [-1, .25], [-1, .75], [2, .25], [2, .75], [.25, -1], [.75, -1], [.25, 2], [.75, 2],
    [-1, -1], [2, -1], [-1, 2], [2, 2]], dtype=float)


def _touching(grid: WhitneyGrid) -> np.ndarray:
    """Padded table of cubes touching each cube (the cube itself first)."""
    m = grid.n_cubes
    eps = 2.0 ** -12
    u = np.where(_PROBES < 0, -eps, np.where(_PROBES > 1, 1 + eps, _PROBES))
    pts = grid.corner[:, None, :] + grid.side[:, None, None] * u[None, :, :]
    hit = grid.locate(pts.reshape(-1, 2)).reshape(m, len(_PROBES))
    hit = np.concatenate([np.arange(m)[:, None], hit], 1)
    hit = np.sort(np.where(hit < 0, np.iinfo(np.int64).max, hit), axis=1)
    # de-duplicate along rows, keeping the cube itself first
    dup = np.zeros_like(hit, dtype=bool)
    dup[:, 1:] = hit[:, 1:] == hit[:, :-1]
    hit = np.where(dup | (hit == np.iinfo(np.int64).max), -1, hit)
    own = np.arange(m)
    hit = np.where(hit == own[:, None], -1, hit)
    k = (hit >= 0).sum(1)
    width = int(k.max()) + 1
    out = np.full((m, width), -1, dtype=np.int64)
    out[:, 0] = own
    order = np.argsort(hit < 0, axis=1, kind="stable")
    srt = np.take_along_axis(hit, order, 1)[:, : width - 1]
    out[:, 1:] = srt
    return out


def dilation_neighbours(grid: WhitneyGrid, factor: float) -> list[np.ndarray]:
    """For each cube, the cubes P' with factor*P meeting factor*P' (closed dilates).

    Candidates are the cubes at most two touching steps away, which contains
    every meeting pair for factors up to 1.5 since touching sides differ by at
    most a factor two.
    """
    p, q = dilation_pairs(grid, factor)
    cuts = np.searchsorted(p, np.arange(grid.n_cubes + 1))
    return [q[cuts[i]:cuts[i + 1]] for i in range(grid.n_cubes)]


def dilation_pairs(grid: WhitneyGrid, factor: float) -> tuple[np.ndarray, np.ndarray]:
    """All ordered pairs (P, P') with factor*P meeting factor*P' as two index arrays (cached per factor)."""
    key = ("pairs", float(factor))
    if key in grid._cache:
        return grid._cache[key]
    m = grid.n_cubes
    nb = grid.nbr
    two = nb[np.maximum(nb, 0)].reshape(m, -1)
    two = np.where(np.repeat(nb, nb.shape[1], axis=1) >= 0, two, -1)
    cand = np.concatenate([nb, two], 1)
    c = np.maximum(cand, 0)
    h = 0.5 * factor
    lo_p = grid.center - h * grid.side[:, None]
    hi_p = grid.center + h * grid.side[:, None]
    lo_q = grid.center[c] - h * grid.side[c][..., None]
    hi_q = grid.center[c] + h * grid.side[c][..., None]
    meet = np.all((lo_q <= hi_p[:, None, :]) & (lo_p[:, None, :] <= hi_q), axis=-1) & (cand >= 0)
    p, k = np.nonzero(meet)
    keys = np.unique(p * m + cand[p, k])
    out = (keys // m, keys % m)
    grid._cache[key] = out
    return out


def bump_eval(grid: WhitneyGrid, p: int, x) -> tuple[np.ndarray, np.ndarray]:
    """phi_P and its gradient at points x (shape (M,) and (M, 2))."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    cand, phi, grad = grid.bumps(x)
    sel = cand == p
    val = np.where(sel, phi, 0.0).sum(1)
    g = np.where(sel[..., None], grad, 0.0).sum(1)
    return val, g


def whitney_region(grid: WhitneyGrid, q: int) -> np.ndarray:
    """Ids of the Whitney cubes whose boundary cube is q (possibly empty)."""
    return np.nonzero(grid.bcube == q)[0]


def _measure(grid: WhitneyGrid) -> dict:
    lat = grid.lattice
    model = grid.model
    nb = grid.nbr
    k = (nb >= 0).sum(1)
    real = ~grid.virtual
    own = np.repeat(np.arange(grid.n_cubes)[:, None], nb.shape[1], 1)
    valid = nb >= 0
    ratio = np.where(valid, grid.side[np.maximum(nb, 0)] / grid.side[own], 1.0)
    # Lambda: P dilated by Lambda about its centre reaches the boundary
    lam = float(np.max(2.0 * grid.cdelta / grid.side))
    # 10P inside the domain
    d10 = model.rect_distance(grid.center - 5 * grid.side[:, None], grid.center + 5 * grid.side[:, None])
    # dist(P, b(P)) / l(P)
    bb = lat.bbox[grid.bcube]
    dx = np.maximum(np.maximum(bb[:, 0] - (grid.corner[:, 0] + grid.side), grid.corner[:, 0] - bb[:, 2]), 0)
    dy = np.maximum(np.maximum(bb[:, 1] - (grid.corner[:, 1] + grid.side), grid.corner[:, 1] - bb[:, 3]), 0)
    dist_b = np.hypot(dx, dy) / grid.side
    # C_w: b(P') inside B(x_b(P), C_w l(P)) for touching P'
    xb = lat.center[grid.bcube]
    c = np.maximum(nb, 0)
    bbn = lat.bbox[grid.bcube[c]]
    far_x = np.maximum(np.abs(bbn[..., 0] - xb[:, None, 0]), np.abs(bbn[..., 2] - xb[:, None, 0]))
    far_y = np.maximum(np.abs(bbn[..., 1] - xb[:, None, 1]), np.abs(bbn[..., 3] - xb[:, None, 1]))
    cw = np.where(valid, np.hypot(far_x, far_y), 0.0).max(1) / grid.side
    counts = np.bincount(grid.bcube[real], minlength=lat.n_cubes) if real.any() else np.zeros(1, int)
    # C_phi: sup of l(P) |grad phi_P| over a dense deterministic sample
    x = sample_points(grid, 100_000, 0)
    cand, _, grad = grid.bumps(x)
    cphi = float((np.linalg.norm(grad, axis=-1) * grid.side[np.maximum(cand, 0)])[cand >= 0].max())
    return {
        "n_cubes": int(grid.n_cubes),
        "Lambda": lam,
        "min_dist_10P": float(d10.min()),
        "max_touching": int(k.max()),
        "side_ratio": (float(ratio.min()), float(ratio.max())),
        "b_dist_over_side": float(dist_b.max()),
        "C_w": float(cw[real].max()) if real.any() else float("nan"),
        "C_w_all": float(cw.max()),
        "N_w": int(counts.max()),
        "C_phi": cphi,
        "band_floor": float(grid.band_floor),
        "levels": (int(grid.level.min()), int(grid.level.max())),
        "n_virtual": int(grid.virtual.sum()),
        "n_bad": int(grid.bad.sum()),
    }


def overlap_count(grid: WhitneyGrid, x: np.ndarray) -> np.ndarray:
    """Number of cubes whose 1.1 dilate contains each point."""
    cand, phi, _ = grid.bumps(x)
    c = np.maximum(cand, 0)
    h = _HALF * grid.side[c]
    inside = (np.abs(x[:, None, 0] - grid.center[c, 0]) < h) & (np.abs(x[:, None, 1] - grid.center[c, 1]) < h)
    return (inside & (cand >= 0)).sum(1)


def sample_points(grid: WhitneyGrid, n: int, seed: int = 0) -> np.ndarray:
    """Uniform random points of the covered band (cube chosen by area)."""
    rng = np.random.default_rng(seed)
    w = grid.side ** 2
    p = rng.choice(grid.n_cubes, size=n, p=w / w.sum())
    return grid.corner[p] + grid.side[p, None] * rng.random((n, 2))


def cube_nodes(grid: WhitneyGrid, k: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Closed k x k node grid on every cube and the trapezoid weights (summing to one)."""
    t = np.linspace(0.0, 1.0, k)
    w1 = np.full(k, 1.0)
    w1[0] = w1[-1] = 0.5
    w1 /= w1.sum()
    tx, ty = np.meshgrid(t, t, indexing="ij")
    wt = np.outer(w1, w1).ravel()
    u = np.stack([tx.ravel(), ty.ravel()], 1)
    pts = grid.corner[:, None, :] + grid.side[:, None, None] * u[None, :, :]
    return pts, wt


def partition_check(grid: WhitneyGrid, n: int = 1000, seed: int = 0, step: float = 1e-6) -> dict:
    """Partition-of-unity identity and finite-difference gradient check at random band points.

    Every bump alive at a point is differentiated by central differences
    with step ``step * l(P)``; the error is taken relative to
    ``max(|grad phi_P|, 1 / l(P))`` so that flat regions are measured on
    the bump's natural gradient scale.
    """
    x = sample_points(grid, n, seed)
    cand, phi, grad = grid.bumps(x)
    sum_err = float(np.max(np.abs(phi.sum(1) - 1.0)))
    valid = cand >= 0
    h = step * grid.side[np.maximum(cand, 0)]
    fd = np.zeros_like(grad)
    for axis in range(2):
        for sign in (1.0, -1.0):
            # shift per candidate: evaluate each (point, bump) pair separately
            e = np.zeros(2)
            e[axis] = 1.0
            xs = x[:, None, :] + sign * h[..., None] * e
            flat = xs.reshape(-1, 2)
            pid = cand.reshape(-1)
            c2, p2, _ = grid.bumps(flat, strict=False)
            val = np.where(c2 == pid[:, None], p2, 0.0).sum(1).reshape(cand.shape)
            fd[..., axis] += sign * val / (2 * h)
    gnorm = np.abs(grad).max(-1)
    scale = np.maximum(gnorm, 1.0 / grid.side[np.maximum(cand, 0)])
    rel = np.where(valid, np.abs(fd - grad).max(-1) / scale, 0.0)
    return {"n_points": int(n), "sum_error": sum_err, "fd_relative_error": float(rel.max())}
