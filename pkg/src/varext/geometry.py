"""Boundary scenarios, surface measures, distance oracles and good curves.

Every scenario lives in the plane (ambient dimension ``n + 1 = 2``).  The
boundary measure is a finite list of weighted atoms, and each atom owns a
*leaf box*: the piece of the boundary it stands for (an interval of the line,
a generation-G square of the Cantor set, a piece of graph).  Distances for the
Cantor scenarios are measured against the union of leaf boxes, which
over-estimates the true distance to the limit set by at most the box diagonal.

Binary cache format written by :func:`save_model`::

    offset 0   5 bytes   magic b"CEXT1"
    offset 5   4 bytes   little-endian uint32, length H of the JSON header
    offset 9   H bytes   UTF-8 JSON header: kind, s, n, window, generation,
                         params, meta, n_atoms, digit_shape
    then                 float64 little-endian arrays in this order:
                         atoms (N, 2), weights (N,), boxes (N, 4)
    then (optional)      int8 digits, shape digit_shape
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping

import numpy as np
from scipy.spatial import cKDTree

MAGIC = b"CEXT1"
MAX_GENERATION = 8

_FOUR_CORNER_OFFSETS = np.array([[0.0, 0.0], [0.75, 0.0], [0.0, 0.75], [0.75, 0.75]])
_LINE_OFFSETS = np.array([[0.0, 0.0], [0.75, 0.0]])


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _point_box_distance(p: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Distances between points (M, 2) and boxes (..., 4), broadcast to (M, ...)."""
    dx = np.maximum(np.maximum(boxes[..., 0] - p[:, None, 0], p[:, None, 0] - boxes[..., 2]), 0.0)
    dy = np.maximum(np.maximum(boxes[..., 1] - p[:, None, 1], p[:, None, 1] - boxes[..., 3]), 0.0)
    return np.hypot(dx, dy)


def _rect_box_distance(lo: np.ndarray, hi: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    dx = np.maximum(np.maximum(boxes[..., 0] - hi[:, None, 0], lo[:, None, 0] - boxes[..., 2]), 0.0)
    dy = np.maximum(np.maximum(boxes[..., 1] - hi[:, None, 1], lo[:, None, 1] - boxes[..., 3]), 0.0)
    return np.hypot(dx, dy)


def _point_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Distance and nearest point from points (M,2) to segments a->b (K,2)."""
    ab = b - a
    denom = np.maximum(np.einsum("kd,kd->k", ab, ab), 1e-300)
    t = np.einsum("mkd,kd->mk", p[:, None, :] - a[None], ab) / denom
    t = np.clip(t, 0.0, 1.0)
    q = a[None] + t[..., None] * ab[None]
    d = np.linalg.norm(p[:, None, :] - q, axis=-1)
    return d, q


class _BoxIndex:
    """Nearest-box queries over equally sized leaf boxes."""

    def __init__(self, boxes: np.ndarray):
        self.boxes = boxes
        self.centers = 0.5 * (boxes[:, :2] + boxes[:, 2:])
        half = 0.5 * (boxes[:, 2:] - boxes[:, :2])
        self.halfdiag = float(np.max(np.hypot(half[:, 0], half[:, 1])))
        self.tree = cKDTree(self.centers)
        self.k = int(min(8, len(boxes)))

    def rect_distance(self, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Distance from each rectangle to the union of boxes and the index of a nearest box.

        Candidates are the k nearest box centres; rows whose answer cannot be
        certified (a farther centre might still hold a closer box) are retried
        with a larger k, and finally by an exhaustive scan.
        """
        lo = np.atleast_2d(lo)
        hi = np.atleast_2d(hi)
        c = 0.5 * (lo + hi)
        hd = 0.5 * np.hypot(hi[:, 0] - lo[:, 0], hi[:, 1] - lo[:, 1])
        best = np.empty(len(c))
        arg = np.empty(len(c), dtype=np.int64)
        todo = np.arange(len(c))
        nb = len(self.boxes)
        for k in (8, 32, 128, 512, nb):
            k = min(k, nb)
            if todo.size == 0:
                break
            dc, idx = self.tree.query(c[todo], k=k)
            dc = dc.reshape(len(todo), -1)
            idx = idx.reshape(len(todo), -1)
            d = _rect_box_distance(lo[todo], hi[todo], self.boxes[idx])
            # prefer the lowest box index among exact ties
            j = np.lexsort((idx, d), axis=-1)[:, 0]
            rows = np.arange(len(todo))
            best[todo] = d[rows, j]
            arg[todo] = idx[rows, j]
            if k == nb:
                break
            sure = dc[:, -1] - hd[todo] - self.halfdiag > best[todo]
            todo = todo[~sure]
        return best, arg


@dataclass(frozen=True)
class BoundaryModel:
    """A frozen boundary scenario with its atomic surface measure.

    Attributes
    ----------
    kind : str
        One of ``half_plane``, ``four_corner_cantor``, ``lower_dim_cantor``,
        ``lipschitz_graph``.
    s : float
        Ahlfors dimension of the boundary measure.
    atoms, weights : ndarray
        Atom positions ``(N, 2)`` and masses ``(N,)``, in lattice order.
    boxes : ndarray
        Leaf box ``(x0, y0, x1, y1)`` of every atom.
    window : tuple
        ``(x0, y0, x1, y1)`` limiting all computations.
    digits : ndarray or None
        Self-similar addresses of the atoms (Cantor scenarios only).
    meta : mapping
        Measured constants: ``C0``, ``corkscrew_c``, ``carrot_lambda``,
        ``atom_spacing``, ``boundary_diam``, ``compact``.
    """

    kind: str
    s: float
    atoms: np.ndarray
    weights: np.ndarray
    boxes: np.ndarray
    window: tuple
    generation: int | None = None
    params: Mapping[str, Any] = field(default_factory=dict)
    digits: np.ndarray | None = None
    meta: Mapping[str, Any] = field(default_factory=dict)
    n: int = 1

    # -- cached helpers (computed lazily; pure functions of the frozen data)
    def _cache(self) -> dict:
        c = self.__dict__.get("_c")
        if c is None:
            c = {}
            object.__setattr__(self, "_c", c)
        return c

    @property
    def atom_tree(self) -> cKDTree:
        c = self._cache()
        if "atoms" not in c:
            c["atoms"] = cKDTree(self.atoms)
        return c["atoms"]

    @property
    def box_index(self) -> _BoxIndex:
        c = self._cache()
        if "boxes" not in c:
            c["boxes"] = _BoxIndex(self.boxes)
        return c["boxes"]

    @property
    def n_atoms(self) -> int:
        return len(self.weights)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def compact(self) -> bool:
        return self.kind in ("four_corner_cantor", "lower_dim_cantor")

    def _graph_segments(self) -> tuple[np.ndarray, np.ndarray]:
        kx = np.asarray(self.params["knots_x"])
        ky = np.asarray(self.params["knots_y"])
        a = np.stack([kx[:-1], ky[:-1]], axis=1)
        b = np.stack([kx[1:], ky[1:]], axis=1)
        return a, b

    def graph_height(self, x: np.ndarray) -> np.ndarray:
        return np.interp(x, self.params["knots_x"], self.params["knots_y"])

    # -- distance oracle
    def nearest(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Distance to the boundary set and a nearest boundary point, for points (M, 2)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "half_plane":
            q = np.stack([x[:, 0], np.zeros(len(x))], axis=1)
            return np.abs(x[:, 1]), q
        if self.kind == "lipschitz_graph":
            a, b = self._graph_segments()
            d, q = _point_segment(x, a, b)
            k = np.argmin(d, axis=1)
            rows = np.arange(len(x))
            return d[rows, k], q[rows, k]
        bi = self.box_index
        d, arg = bi.rect_distance(x, x)
        box = self.boxes[arg]
        q = np.stack([np.clip(x[:, 0], box[:, 0], box[:, 2]), np.clip(x[:, 1], box[:, 1], box[:, 3])], axis=1)
        return d, q

    def inside(self, x: np.ndarray) -> np.ndarray:
        """True where x lies in the open domain."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "half_plane":
            return x[:, 1] > 0
        if self.kind == "lipschitz_graph":
            return x[:, 1] > self.graph_height(x[:, 0])
        d, _ = self.nearest(x)
        return d > 0

    def delta(self, x: np.ndarray) -> np.ndarray:
        """Distance to the complement of the domain (zero outside or on the boundary)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d, _ = self.nearest(x)
        return np.where(self.inside(x), d, 0.0)

    def rect_distance(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Distance from axis-aligned rectangles to the boundary set."""
        lo = np.atleast_2d(lo)
        hi = np.atleast_2d(hi)
        if self.kind == "half_plane":
            return np.where(lo[:, 1] > 0, lo[:, 1], np.where(hi[:, 1] < 0, -hi[:, 1], 0.0))
        if self.kind == "lipschitz_graph":
            a, b = self._graph_segments()
            dx = np.maximum(np.maximum(lo[:, None, 0] - a[None, :, 0], a[None, :, 0] - hi[:, None, 0]), 0.0)
            dy = np.maximum(np.maximum(lo[:, None, 1] - a[None, :, 1], a[None, :, 1] - hi[:, None, 1]), 0.0)
            d = np.hypot(dx, dy)
            corners = (lo, hi, np.stack([lo[:, 0], hi[:, 1]], 1), np.stack([hi[:, 0], lo[:, 1]], 1))
            for c in corners:
                d = np.minimum(d, _point_segment(c, a, b)[0])
            d = d.min(axis=1)
            return np.where(self._graph_crosses(lo, hi), 0.0, d)
        return self.box_index.rect_distance(lo, hi)[0]

    def _graph_crosses(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        xs = np.concatenate([lo[:, :1], hi[:, :1], np.clip(np.asarray(self.params["knots_x"])[None, :], lo[:, :1], hi[:, :1])], 1)
        ys = self.graph_height(xs)
        return (ys.min(1) < hi[:, 1]) & (ys.max(1) > lo[:, 1])

    # -- measure
    def ball_mass(self, xi: np.ndarray, r: float) -> float:
        idx = self.atom_tree.query_ball_point(np.asarray(xi, dtype=float), r)
        return float(self.weights[np.asarray(idx, dtype=int)].sum()) if len(idx) else 0.0

    def ball_masses(self, xi: np.ndarray, r: np.ndarray) -> np.ndarray:
        xi = np.atleast_2d(xi)
        r = np.broadcast_to(np.asarray(r, dtype=float), (len(xi),))
        out = np.empty(len(xi))
        for i, (p, rr) in enumerate(zip(xi, r)):
            out[i] = self.ball_mass(p, rr)
        return out


# -- scenario builders ---------------------------------------------------------


def _half_plane(window, n_atoms) -> dict:
    x0, y0, x1, y1 = window
    if y0 > 0 or y1 <= 0:
        raise ValueError("half_plane window must meet the boundary line y=0")
    h = (x1 - x0) / n_atoms
    xs = x0 + h * (np.arange(n_atoms) + 0.5)
    atoms = np.stack([xs, np.zeros(n_atoms)], 1)
    boxes = np.stack([xs - h / 2, np.zeros(n_atoms), xs + h / 2, np.zeros(n_atoms)], 1)
    return dict(s=1.0, atoms=atoms, weights=np.full(n_atoms, h), boxes=boxes, spacing=h, diam=np.inf)


def _cantor(generation: int, offsets: np.ndarray, s: float) -> dict:
    m = len(offsets)
    digits = np.array(np.unravel_index(np.arange(m ** generation), (m,) * generation)).T.astype(np.int8)
    if generation == 0:
        digits = np.zeros((1, 0), dtype=np.int8)
    corner = np.zeros((len(digits), 2))
    for k in range(generation):
        corner += offsets[digits[:, k]] * 4.0 ** (-k)
    lam = 4.0 ** (-generation)
    if m == 4:
        boxes = np.concatenate([corner, corner + lam], 1)
        last = digits[:, -1] if generation else np.zeros(len(digits), int)
        # the atom is the corner of the leaf square facing away from its parent
        atoms = corner + lam * np.stack([last % 2, last // 2], 1)
        diam = np.sqrt(2.0)
    else:
        boxes = np.stack([corner[:, 0], corner[:, 1], corner[:, 0] + lam, corner[:, 1]], 1)
        last = digits[:, -1] if generation else np.zeros(len(digits), int)
        atoms = corner + lam * np.stack([last, np.zeros(len(last))], 1)
        diam = 1.0
    w = np.full(len(digits), float(m) ** (-generation))
    return dict(s=s, atoms=atoms, weights=w, boxes=boxes, digits=digits, spacing=lam, diam=diam)


_PROFILES = {
    # profile id -> knot abscissae on one unit period and unit-slope heights
    "tent": (np.array([0.0, 0.25, 0.5, 0.75, 1.0]), np.array([0.0, 0.0, 0.25, 0.0, 0.0])),
    "zigzag": (np.arange(9) / 8.0, np.array([0, 1, 0, 1, 0, 1, 0, 1, 0]) / 8.0),
}


def _graph(window, n_atoms, profile, lip) -> dict:
    if profile not in _PROFILES:
        raise ValueError(f"unknown graph profile {profile!r}")
    x0, y0, x1, y1 = window
    px, py = _PROFILES[profile]
    lo, hi = int(np.floor(x0)) - 1, int(np.ceil(x1)) + 1
    kx = np.unique(np.concatenate([px + k for k in range(lo, hi)]))
    ky = lip * np.interp(kx - np.floor(kx), px, py)
    h = (x1 - x0) / n_atoms
    xa = x0 + h * (np.arange(n_atoms) + 0.5)
    xl, xr = xa - h / 2, xa + h / 2
    yl, yr = np.interp(xl, kx, ky), np.interp(xr, kx, ky)
    atoms = np.stack([xa, np.interp(xa, kx, ky)], 1)
    # arclength of each graph piece, exact when knots fall on piece ends
    grid = np.unique(np.concatenate([kx[(kx > x0) & (kx < x1)], xl, xr[-1:]]))
    gy = np.interp(grid, kx, ky)
    seg = np.hypot(np.diff(grid), np.diff(gy))
    owner = np.minimum(((grid[:-1] - x0) / h + 1e-9).astype(int), n_atoms - 1)
    w = np.bincount(owner, weights=seg, minlength=n_atoms)
    boxes = np.stack([xl, np.minimum(yl, yr), xr, np.maximum(yl, yr)], 1)
    if y0 > ky.min() or y1 <= ky.max():
        raise ValueError("lipschitz_graph window must contain the graph")
    return dict(s=1.0, atoms=atoms, weights=w, boxes=boxes, spacing=h, diam=np.inf,
                params=dict(knots_x=kx.tolist(), knots_y=ky.tolist(), profile=profile, lipschitz=lip))


DEFAULT_WINDOWS = {
    "half_plane": (0.0, 0.0, 1.0, 1.0),
    "four_corner_cantor": (-0.125, -0.125, 1.125, 1.125),
    "lower_dim_cantor": (-0.25, -0.5, 1.25, 0.5),
    "lipschitz_graph": (0.0, -0.25, 1.0, 1.0),
}


def build_scenario(kind: str, generation: int | None = None, window=None, n_atoms: int = 1024,
                   profile: str = "zigzag", lipschitz: float = 1.0, s: float | None = None,
                   seed: int = 0, measure: bool = True) -> BoundaryModel:
    """Build a frozen boundary scenario.

    Parameters
    ----------
    kind : str
        Scenario name.
    generation : int, optional
        Cantor generation G (at most 8).
    window : tuple, optional
        ``(x0, y0, x1, y1)``; defaults per scenario.
    n_atoms : int
        Atom count for the line and graph scenarios.
    s : float, optional
        Requested dimension; must agree with the scenario when given.
    measure : bool
        Measure Ahlfors, corkscrew and carrot constants (a few hundred queries).

    Returns
    -------
    BoundaryModel
    """
    window = tuple(float(v) for v in (window or DEFAULT_WINDOWS.get(kind, (0, 0, 1, 1))))
    if kind == "half_plane":
        d = _half_plane(window, n_atoms)
        params = {"n_atoms": n_atoms}
    elif kind in ("four_corner_cantor", "lower_dim_cantor"):
        if generation is None:
            generation = 6 if kind == "four_corner_cantor" else 8
        if not 0 <= generation <= MAX_GENERATION:
            raise ValueError(f"generation must lie in [0, {MAX_GENERATION}]")
        if kind == "four_corner_cantor":
            d = _cantor(generation, _FOUR_CORNER_OFFSETS, 1.0)
        else:
            d = _cantor(generation, _LINE_OFFSETS, 0.5)
        params = {"branching": 4 if kind == "four_corner_cantor" else 2, "ratio": 0.25}
    elif kind == "lipschitz_graph":
        d = _graph(window, n_atoms, profile, lipschitz)
        params = d.pop("params")
        params["n_atoms"] = n_atoms
    else:
        raise ValueError(f"unknown scenario {kind!r}")
    if s is not None and not np.isclose(s, d["s"]):
        raise ValueError(f"scenario {kind} has s={d['s']}, not {s}")
    if not 0 < d["s"] <= 1:
        raise ValueError("s must lie in (0, n]")
    x0, y0, x1, y1 = window
    bx = d["boxes"]
    if not np.any((bx[:, 2] >= x0) & (bx[:, 0] <= x1) & (bx[:, 3] >= y0) & (bx[:, 1] <= y1)):
        raise ValueError("window does not meet the boundary")
    meta = {"atom_spacing": float(d["spacing"]), "boundary_diam": float(d["diam"])}
    model = BoundaryModel(kind=kind, s=d["s"], atoms=_readonly(d["atoms"]), weights=_readonly(d["weights"]),
                          boxes=_readonly(d["boxes"]), window=window, generation=generation,
                          params=MappingProxyType(dict(params)),
                          digits=None if d.get("digits") is None else _readonly(d["digits"]),
                          meta=meta)
    if measure:
        meta.update(_measure_constants(model, seed))
    else:
        meta.update(_default_constants(model))
    object.__setattr__(model, "meta", MappingProxyType(meta))
    return model


def _default_constants(model: BoundaryModel) -> dict:
    if model.kind == "half_plane":
        return {"C0": 2.0, "corkscrew_c": 0.5, "carrot_lambda": 1.0}
    return {"C0": float("nan"), "corkscrew_c": 0.1, "carrot_lambda": 0.1}


def _radius_range(model: BoundaryModel) -> tuple[float, float]:
    x0, y0, x1, y1 = model.window
    diam = np.hypot(x1 - x0, y1 - y0)
    rmax = diam / 4
    if model.compact:
        rmax = model.meta["boundary_diam"]
    return 4 * model.meta["atom_spacing"], rmax


def _ahlfors_extremes(model: BoundaryModel, rmin: float, rmax: float) -> tuple[float, float]:
    """Exact min and max of sigma(B(xi, r)) / r^s over atom centres and r in [rmin, rmax].

    For a fixed centre the mass is a step function of r jumping at the atom
    distances, so the extremes sit at those distances (closed ball, just
    before the jump) and at the ends of the range.  For unbounded scenarios
    r is further capped so the ball stays inside the window horizontally.
    """
    a, w, s = model.atoms, model.weights, model.s
    x0, _, x1, _ = model.window
    lo, hi = np.inf, 0.0
    for st in range(0, model.n_atoms, 256):
        c = a[st:st + 256]
        top = np.full(len(c), rmax)
        if not model.compact:
            top = np.minimum(top, np.minimum(c[:, 0] - x0, x1 - c[:, 0]))
        d = np.linalg.norm(c[:, None, :] - a[None, :, :], axis=2)
        order = np.argsort(d, axis=1, kind="stable")
        ds = np.take_along_axis(d, order, 1)
        cum = np.cumsum(w[order], axis=1)
        ok = top >= rmin
        if not ok.any():
            continue
        ds, cum, top = ds[ok], cum[ok], top[ok]
        rows = np.arange(len(ds))[:, None]
        # closed-ball mass at radius r: all atoms with distance <= r
        def mass_at(r):
            k = np.array([np.searchsorted(ds[i], r[i], side="right") for i in range(len(ds))])
            return np.where(k > 0, cum[rows[:, 0], np.maximum(k - 1, 0)], 0.0)
        inr = (ds >= rmin) & (ds <= top[:, None])
        # closed masses at the jumps (ties resolved by the last equal distance)
        last = np.concatenate([ds[:, 1:] != ds[:, :-1], np.ones((len(ds), 1), bool)], 1)
        up = np.where(inr & last, cum / np.maximum(ds, 1e-300) ** s, 0.0).max(1)
        first = np.concatenate([np.ones((len(ds), 1), bool), ds[:, 1:] != ds[:, :-1]], 1)
        below = np.concatenate([np.zeros((len(ds), 1)), cum[:, :-1]], 1)
        strict = inr & first & (ds > rmin)
        down = np.where(strict, below / np.maximum(ds, 1e-300) ** s, np.inf).min(1)
        m_lo, m_hi = mass_at(np.full(len(ds), rmin)), mass_at(top)
        up = np.maximum(up, np.maximum(m_lo / rmin ** s, m_hi / top ** s))
        down = np.minimum(down, np.minimum(m_lo / rmin ** s, m_hi / top ** s))
        lo, hi = min(lo, float(down.min())), max(hi, float(up.max()))
    return lo, hi


def _measure_constants(model: BoundaryModel, seed: int) -> dict:
    rmin, rmax = _radius_range(model)
    lo, hi = _ahlfors_extremes(model, rmin, rmax)
    c0 = float(max(hi, 1.0 / lo))
    out = {"C0": c0}
    if model.kind == "half_plane":
        out.update(corkscrew_c=0.5, carrot_lambda=1.0)
        return out
    # corkscrew constant: worst case of the best polar-grid point
    idx = np.linspace(0, model.n_atoms - 1, min(8, model.n_atoms)).astype(int)
    radii = rmax * 0.5 ** np.arange(0, 12, 2)
    radii = radii[radii >= rmin]
    best = []
    for i in idx:
        for r in radii:
            pts = _polar_grid(model.atoms[i], r)
            pts = pts[_in_window(model, pts)]
            best.append(model.delta(pts).max() / r)
    c = float(np.floor(min(best) * 100) / 100)
    out["corkscrew_c"] = c
    tmp = dict(model.meta)
    tmp.update(out, carrot_lambda=0.0)
    object.__setattr__(model, "meta", tmp)
    lams = []
    for i in idx:
        for r in radii:
            try:
                lams.append(good_curve(model, model.atoms[i], r).measured_lambda)
            except RuntimeError:
                continue  # stalled at this radius; callers see the same error
    out["carrot_lambda"] = float(np.floor(min(lams) * 100) / 100)
    return out


def _in_window(model: BoundaryModel, pts: np.ndarray) -> np.ndarray:
    x0, y0, x1, y1 = model.window
    return (pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)


_N_ANGLES = 72
_N_RADII = 64


def _angle_order(n: int = _N_ANGLES) -> np.ndarray:
    """Angles starting straight up, then alternating to either side."""
    step = 2 * np.pi / n
    ks = [0]
    for m in range(1, n // 2 + 1):
        ks.append(m)
        if m != n - m and len(ks) < n:
            ks.append(-m)
    return np.pi / 2 + step * np.array(ks[:n])


def _unit(theta: np.ndarray) -> np.ndarray:
    v = np.stack([np.cos(theta), np.sin(theta)], -1)
    v[np.abs(v) < 1e-15] = 0.0
    return v


def _polar_grid(xi: np.ndarray, r: float) -> np.ndarray:
    """Search points of B(xi, r): rays in preference order, radii ascending on each."""
    rho = r * np.arange(1, _N_RADII) / _N_RADII
    u = _unit(_angle_order())
    return (xi[None, None, :] + rho[None, :, None] * u[:, None, :]).reshape(-1, 2)


def corkscrew_point(model: BoundaryModel, xi, r: float, c: float | None = None) -> np.ndarray:
    """First polar-grid point of B(xi, r) with delta >= c r.

    Rays are visited starting straight up and alternating left/right in
    5 degree steps; along each ray the radii r k/64 are tried in increasing
    order.
    """
    xi = np.asarray(xi, dtype=float)
    c = model.meta["corkscrew_c"] if c is None else c
    x0, y0, x1, y1 = model.window
    if not 0 < r < np.hypot(x1 - x0, y1 - y0):
        raise ValueError("radius out of range")
    pts = _polar_grid(xi, r)
    ok = _in_window(model, pts)
    d = np.where(ok, model.delta(pts), -1.0)
    hit = np.nonzero(d >= c * r)[0]
    if hit.size == 0:
        raise RuntimeError(f"no corkscrew point with constant {c} in B({xi.tolist()}, {r}); resolution too coarse")
    return pts[hit[0]]


@dataclass(frozen=True)
class GoodCurve:
    """Polyline from a boundary point to a corkscrew point."""

    vertices: np.ndarray
    arclength: np.ndarray
    lam: float
    measured_lambda: float

    def point_at(self, t) -> np.ndarray:
        """Points at arclength t (clamped to the curve)."""
        t = np.clip(np.atleast_1d(np.asarray(t, dtype=float)), 0.0, self.arclength[-1])
        x = np.interp(t, self.arclength, self.vertices[:, 0])
        y = np.interp(t, self.arclength, self.vertices[:, 1])
        return np.stack([x, y], 1)

    @property
    def length(self) -> float:
        return float(self.arclength[-1])


def _initial_direction(model: BoundaryModel, xi: np.ndarray, r: float, h0: float) -> np.ndarray:
    u = _unit(_angle_order())
    scales = r * 0.5 ** np.arange(1, 12)
    scales = scales[scales >= h0]
    if scales.size == 0:
        scales = np.array([h0])
    pts = xi[None, None, :] + scales[None, :, None] * u[:, None, :]
    flat = pts.reshape(-1, 2)
    d = np.where(_in_window(model, flat), model.delta(flat), 0.0).reshape(len(u), len(scales))
    score = (d / scales[None, :]).sum(1)
    k = int(np.argmax(score >= score.max() - 1e-12))
    return u[k]


def good_curve(model: BoundaryModel, xi, r: float, lam: float | None = None, h0: float | None = None,
               eta: float = 0.5, max_steps: int = 500) -> GoodCurve:
    """Greedy ascent of delta from xi until delta reaches the corkscrew level c r.

    The first step leaves xi along the polar direction that best clears the
    boundary over dyadic scales.  Each later step tries 36 directions at
    step ``eta * delta`` and moves to the candidate with the largest delta,
    provided delta increases and the segment keeps delta above half its
    starting value.  When no candidate qualifies the step length is doubled
    (backtracking out of local maxima of delta, up to 16 delta); if that also
    fails the construction raises.
    """
    xi = np.asarray(xi, dtype=float)
    spacing = model.meta["atom_spacing"]
    if r <= 2 * spacing:
        raise ValueError("radius below the atom spacing")
    lam = model.meta["carrot_lambda"] if lam is None else lam
    target = model.meta["corkscrew_c"] * r
    h0 = min(spacing / 4, target / 4) if h0 is None else h0
    v = _initial_direction(model, xi, r, h0)
    verts = [xi.copy()]
    x = xi + h0 * v
    d = float(model.delta(x)[0])
    if d <= 0:
        raise RuntimeError("good curve cannot leave the boundary point")
    verts.append(x.copy())
    u = _unit(_angle_order(36))
    frac = np.linspace(0.0, 1.0, 9)[1:]
    for _ in range(max_steps):
        if d >= target:
            break
        moved = False
        for mult in (eta, 1.0, 2.0, 4.0, 8.0, 16.0):
            h = mult * d
            seg = x[None, None, :] + (h * frac)[None, :, None] * u[:, None, :]
            flat = seg.reshape(-1, 2)
            ds = np.where(_in_window(model, flat), model.delta(flat), 0.0).reshape(len(u), len(frac))
            end = ds[:, -1]
            ok = (ds.min(axis=1) >= 0.5 * d) & (end > d * (1 + 1e-9))
            if ok.any():
                k = int(np.argmax(np.where(ok, end, -np.inf)))
                y, dy = seg[k, -1], float(end[k])
                if dy >= target:
                    lo_s, hi_s = 0.0, h
                    for _ in range(60):
                        mid = 0.5 * (lo_s + hi_s)
                        if model.delta(x + mid * u[k])[0] >= target:
                            hi_s = mid
                        else:
                            lo_s = mid
                    y = x + hi_s * u[k]
                    dy = float(model.delta(y)[0])
                x, d = y, dy
                verts.append(x.copy())
                moved = True
                break
        if not moved:
            raise RuntimeError("good curve stalled; resolution too coarse")
    else:
        raise RuntimeError("good curve did not reach the corkscrew level")
    verts = np.array(verts)
    t = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(verts, axis=0), axis=1))])
    dv = model.delta(verts[1:])
    measured = float(np.min(dv / t[1:]))
    if measured < lam * (1 - 1e-12):
        raise RuntimeError(f"carrot condition fails: measured {measured:.4f} < {lam}")
    return GoodCurve(vertices=verts, arclength=t, lam=lam, measured_lambda=measured)


def surface_ball_mass(model: BoundaryModel, xi, r: float) -> float:
    """Exact mass of the atomic measure in B(xi, r)."""
    return model.ball_mass(np.asarray(xi, dtype=float), r)


def delta(model: BoundaryModel, x) -> np.ndarray:
    return model.delta(x)


# -- cache ---------------------------------------------------------------------


def save_model(model: BoundaryModel, path) -> None:
    header = {
        "kind": model.kind, "s": model.s, "n": model.n, "window": list(model.window),
        "generation": model.generation, "params": dict(model.params), "meta": dict(model.meta),
        "n_atoms": model.n_atoms,
        "digit_shape": None if model.digits is None else list(model.digits.shape),
    }
    raw = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        for a in (model.atoms, model.weights, model.boxes):
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
        if model.digits is not None:
            fh.write(np.ascontiguousarray(model.digits, dtype=np.int8).tobytes())


def load_model(path) -> BoundaryModel:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:5] != MAGIC:
        raise ValueError("not a CEXT1 model cache")
    (h,) = struct.unpack("<I", buf[5:9])
    header = json.loads(buf[9:9 + h].decode())
    pos = 9 + h
    n = header["n_atoms"]

    def take(count, dtype, shape):
        nonlocal pos
        nbytes = count * np.dtype(dtype).itemsize
        a = np.frombuffer(buf[pos:pos + nbytes], dtype=dtype).reshape(shape).copy()
        pos += nbytes
        return _readonly(a)

    atoms = take(2 * n, "<f8", (n, 2))
    weights = take(n, "<f8", (n,))
    boxes = take(4 * n, "<f8", (n, 4))
    digits = None
    if header["digit_shape"] is not None:
        shape = tuple(header["digit_shape"])
        digits = take(int(np.prod(shape)), np.int8, shape)
    return BoundaryModel(kind=header["kind"], s=header["s"], atoms=atoms, weights=weights, boxes=boxes,
                         window=tuple(header["window"]), generation=header["generation"],
                         params=MappingProxyType(header["params"]), digits=digits,
                         meta=MappingProxyType(header["meta"]), n=header["n"])
