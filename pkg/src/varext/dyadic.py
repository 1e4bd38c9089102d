"""Dyadic boundary lattices, cube averages and dyadic maximal functions.

Generations are binary: a cube of generation ``j`` has nominal side
``2**-j``.  For the line-like scenarios (half plane, Lipschitz graph) cubes
are the atoms lying over a dyadic interval of the x axis.  For the Cantor
scenarios generation ``2k`` is the self-similar level ``k`` cell; the odd
generation in between splits a four-corner cell into its bottom and top
pair of children (the one-dimensional Cantor set has a single child there).

Atoms are stored in lattice order, so every cube is a contiguous atom range
``[start, stop)`` and all averages come from cumulative sums.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import BoundaryModel


def _generation_keys(model: BoundaryModel, j: int) -> np.ndarray:
    """Integer label of the generation-j cube holding each atom (non-decreasing in atom order)."""
    if model.kind in ("half_plane", "lipschitz_graph"):
        # left edge of the leaf interval, nudged so atoms on a dyadic point go right
        left = model.boxes[:, 0]
        return np.floor(left * 2.0 ** j + 1e-9).astype(np.int64)
    digits = model.digits.astype(np.int64)
    m = 4 if model.kind == "four_corner_cantor" else 2
    k = j // 2
    key = np.zeros(len(digits), dtype=np.int64)
    for i in range(k):
        key = key * m + digits[:, i]
    if j % 2 == 1:
        extra = digits[:, k] // 2 if m == 4 else np.zeros(len(digits), dtype=np.int64)
        key = key * 2 + extra
    return key


def max_generation(model: BoundaryModel) -> int:
    """Finest generation whose cubes all hold at least one atom."""
    if model.kind in ("four_corner_cantor", "lower_dim_cantor"):
        return 2 * int(model.generation)
    h = model.meta["atom_spacing"]
    return int(np.floor(-np.log2(h) + 1e-9))


@dataclass(frozen=True)
class DyadicLattice:
    """Frozen cube hierarchy over the atoms of a boundary model.

    Cube ids are positions in the flat arrays; cubes are sorted by generation
    and, inside a generation, by atom range.
    """

    model: BoundaryModel
    j_min: int
    j_max: int
    gen: np.ndarray
    key: np.ndarray
    start: np.ndarray
    stop: np.ndarray
    parent: np.ndarray
    first_child: np.ndarray
    n_children: np.ndarray
    side: np.ndarray
    mass: np.ndarray
    center: np.ndarray
    bbox: np.ndarray
    diam: np.ndarray
    gen_offset: np.ndarray
    atom_cube: np.ndarray
    constants: dict = field(default_factory=dict)

    @property
    def n_cubes(self) -> int:
        return len(self.gen)

    @property
    def roots(self) -> np.ndarray:
        return np.arange(self.gen_offset[0], self.gen_offset[1])

    @property
    def leaves(self) -> np.ndarray:
        return np.arange(self.gen_offset[-2], self.gen_offset[-1])

    def level(self, j: int) -> np.ndarray:
        """Ids of the generation-j cubes."""
        i = j - self.j_min
        return np.arange(self.gen_offset[i], self.gen_offset[i + 1])

    def cube_id(self, j: int, key: int) -> int:
        ids = self.level(j)
        pos = int(np.searchsorted(self.key[ids], key))
        if pos >= len(ids) or self.key[ids[pos]] != key:
            raise KeyError(f"no cube with key {key} in generation {j}")
        return int(ids[pos])

    def children(self, q: int) -> np.ndarray:
        return np.arange(self.first_child[q], self.first_child[q] + self.n_children[q])

    def ancestor(self, q, j) -> np.ndarray:
        """Generation-j ancestor of each cube in q (q itself when j >= its generation)."""
        q = np.asarray(q)
        j = np.broadcast_to(np.asarray(j), q.shape)
        jj = np.clip(np.minimum(j, self.gen[q]), self.j_min, self.j_max) - self.j_min
        return self.atom_cube[jj, self.start[q]]

    def leaf_of_atom(self, i) -> np.ndarray:
        return self.atom_cube[-1, np.asarray(i)]

    def contains(self, outer: int, inner: int) -> bool:
        return bool(self.start[outer] <= self.start[inner] and self.stop[inner] <= self.stop[outer])

    def atoms_of(self, q: int) -> np.ndarray:
        return np.arange(self.start[q], self.stop[q])

    # -- averages -------------------------------------------------------------
    def integrals(self, f: np.ndarray) -> np.ndarray:
        """Integral of f against the boundary measure over every cube."""
        f = np.asarray(f, dtype=float)
        cs = np.concatenate([[0.0], np.cumsum(self.model.weights * f)])
        return cs[self.stop] - cs[self.start]

    def averages(self, f: np.ndarray) -> np.ndarray:
        """Average of f over every cube."""
        return self.integrals(f) / self.mass

    def oscillations(self, f: np.ndarray) -> np.ndarray:
        """Mean oscillation (1/sigma(Q)) int_Q |f - m_Q f| of every cube."""
        f = np.asarray(f, dtype=float)
        w = self.model.weights
        out = np.empty(self.n_cubes)
        for j in range(self.j_min, self.j_max + 1):
            ids = self.level(j)
            owner = self.atom_cube[j - self.j_min]
            # shift each cube by its first atom so constants give exactly zero
            g = f - f[self.start[owner]]
            cs = np.concatenate([[0.0], np.cumsum(w * g)])
            avg = np.zeros(self.n_cubes)
            avg[ids] = (cs[self.stop[ids]] - cs[self.start[ids]]) / self.mass[ids]
            dev = w * np.abs(g - avg[owner])
            cs = np.concatenate([[0.0], np.cumsum(dev)])
            out[ids] = (cs[self.stop[ids]] - cs[self.start[ids]]) / self.mass[ids]
        return out

    def global_mean(self, f: np.ndarray) -> float:
        w = self.model.weights
        return float(np.dot(w, f) / w.sum())

    def to_csv(self, path) -> None:
        """Dump gen, index, parent, center_x, center_y, side, mass."""
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["gen", "index", "parent", "center_x", "center_y", "side", "mass"])
            for q in range(self.n_cubes):
                wr.writerow([int(self.gen[q]), int(self.key[q]), int(self.parent[q]),
                             repr(float(self.center[q, 0])), repr(float(self.center[q, 1])),
                             repr(float(self.side[q])), repr(float(self.mass[q]))])


def build_lattice(model: BoundaryModel, j_min: int = 0, j_max: int | None = None) -> DyadicLattice:
    """Build the cube hierarchy for generations j_min..j_max.

    Raises
    ------
    ValueError
        If ``j_max`` is finer than the atomic resolution (a cube of side
        ``2**-j_max`` must hold at least one atom) or the range is empty.
    """
    jcap = max_generation(model)
    j_max = jcap if j_max is None else j_max
    if j_max > jcap:
        raise ValueError(f"j_max={j_max} is finer than the atomic resolution (max {jcap})")
    if j_min < 0 or j_min > j_max:
        raise ValueError("need 0 <= j_min <= j_max")
    n = model.n_atoms
    gens, keys, starts, stops = [], [], [], []
    atom_cube = np.empty((j_max - j_min + 1, n), dtype=np.int64)
    offset = [0]
    for j in range(j_min, j_max + 1):
        k = _generation_keys(model, j)
        if np.any(np.diff(k) < 0):
            raise RuntimeError("atoms are not in lattice order")
        cut = np.concatenate([[0], np.nonzero(np.diff(k))[0] + 1])
        st = cut
        sp = np.concatenate([cut[1:], [n]])
        gens.append(np.full(len(st), j))
        keys.append(k[st])
        starts.append(st)
        stops.append(sp)
        run = np.repeat(np.arange(len(st)), sp - st)
        atom_cube[j - j_min] = offset[-1] + run
        offset.append(offset[-1] + len(st))
    gen = np.concatenate(gens)
    key = np.concatenate(keys)
    start = np.concatenate(starts)
    stop = np.concatenate(stops)
    nc = len(gen)
    parent = np.full(nc, -1, dtype=np.int64)
    first_child = np.full(nc, -1, dtype=np.int64)
    n_children = np.zeros(nc, dtype=np.int64)
    for i in range(1, len(offset) - 1):
        ids = np.arange(offset[i], offset[i + 1])
        parent[ids] = atom_cube[i - 1, start[ids]]
        cnt = np.bincount(parent[ids] - offset[i - 1], minlength=offset[i] - offset[i - 1])
        n_children[offset[i - 1]:offset[i]] = cnt
        first = np.full(offset[i] - offset[i - 1], -1, dtype=np.int64)
        # children are contiguous and sorted, so the first one is the first occurrence
        uniq, pos = np.unique(parent[ids] - offset[i - 1], return_index=True)
        first[uniq] = ids[pos]
        first_child[offset[i - 1]:offset[i]] = first
    w = model.weights
    cs = np.concatenate([[0.0], np.cumsum(w)])
    mass = cs[stop] - cs[start]
    side = 2.0 ** (-gen.astype(float))
    b = model.boxes
    bbox = np.empty((nc, 4))
    for i in range(len(offset) - 1):
        ids = np.arange(offset[i], offset[i + 1])
        st = start[ids]
        bbox[ids] = np.stack([np.minimum.reduceat(b[:, 0], st), np.minimum.reduceat(b[:, 1], st),
                              np.maximum.reduceat(b[:, 2], st), np.maximum.reduceat(b[:, 3], st)], 1)
    diam = np.hypot(bbox[:, 2] - bbox[:, 0], bbox[:, 3] - bbox[:, 1])
    # centre: the atom closest to the mass centroid (lowest index on ties)
    a = model.atoms
    cx = np.concatenate([[0.0], np.cumsum(w * a[:, 0])])
    cy = np.concatenate([[0.0], np.cumsum(w * a[:, 1])])
    cen = np.stack([(cx[stop] - cx[start]) / mass, (cy[stop] - cy[start]) / mass], 1)
    center = np.empty_like(cen)
    for i in range(len(offset) - 1):
        ids = np.arange(offset[i], offset[i + 1])
        owner = atom_cube[i] - offset[i]
        d = np.hypot(a[:, 0] - cen[ids][owner, 0], a[:, 1] - cen[ids][owner, 1])
        order = np.lexsort((np.arange(n), d, owner))
        firsts = order[np.concatenate([[0], np.nonzero(np.diff(owner[order]))[0] + 1])]
        center[ids] = a[firsts]
    s = model.s
    ratio_mass = mass / side ** s
    ratio_diam = diam / side
    consts = {
        "mass_over_side_s": (float(ratio_mass.min()), float(ratio_mass.max())),
        "diam_over_side": (float(ratio_diam.min()), float(ratio_diam.max())),
    }
    ro = _ro
    return DyadicLattice(model=model, j_min=j_min, j_max=j_max, gen=ro(gen), key=ro(key), start=ro(start),
                         stop=ro(stop), parent=ro(parent), first_child=ro(first_child),
                         n_children=ro(n_children), side=ro(side), mass=ro(mass), center=ro(center),
                         bbox=ro(bbox), diam=ro(diam), gen_offset=ro(np.array(offset)),
                         atom_cube=ro(atom_cube), constants=consts)


def _ro(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


# -- averages and maximal functions ---------------------------------------------


def cube_average(lattice: DyadicLattice, q: int, f: np.ndarray) -> float:
    """Average of f over cube q."""
    m = lattice.mass[q]
    if m <= 0:
        raise ValueError("zero-mass cube")
    sl = slice(lattice.start[q], lattice.stop[q])
    w = lattice.model.weights[sl]
    return float(np.dot(w, np.asarray(f, dtype=float)[sl]) / m)


def truncated_maximal(lattice: DyadicLattice, f: np.ndarray) -> np.ndarray:
    """Largest average of |f| over the cube and its ancestors, for every cube."""
    avg = lattice.averages(np.abs(f))
    out = avg.copy()
    for j in range(lattice.j_min + 1, lattice.j_max + 1):
        ids = lattice.level(j)
        out[ids] = np.maximum(avg[ids], out[lattice.parent[ids]])
    return out


def _atom_at(model: BoundaryModel, xi, tol: float = 1e-12) -> int:
    d, i = model.atom_tree.query(xi)
    if d <= tol:
        return int(i)
    # otherwise any point of a leaf box on the boundary set
    if model.nearest(np.atleast_2d(xi))[0][0] <= tol:
        b = model.boxes
        hit = np.nonzero((b[:, 0] - tol <= xi[0]) & (xi[0] <= b[:, 2] + tol)
                         & (b[:, 1] - tol <= xi[1]) & (xi[1] <= b[:, 3] + tol))[0]
        if hit.size:
            return int(hit[0])
    raise ValueError("point is not on the support of the boundary measure")


def dyadic_maximal(lattice: DyadicLattice, f: np.ndarray, xi) -> float:
    """Dyadic Hardy-Littlewood maximal function of f at a boundary point."""
    i = _atom_at(lattice.model, np.asarray(xi, dtype=float))
    return float(truncated_maximal(lattice, f)[lattice.leaf_of_atom(i)])


def dyadic_maximal_atoms(lattice: DyadicLattice, f: np.ndarray) -> np.ndarray:
    """Dyadic maximal function at every atom."""
    return truncated_maximal(lattice, f)[lattice.atom_cube[-1]]


def ball_average(model: BoundaryModel, f: np.ndarray, xi, r: float) -> float:
    idx = model.atom_tree.query_ball_point(np.asarray(xi, dtype=float), r)
    if not len(idx):
        return 0.0
    idx = np.asarray(idx)
    w = model.weights[idx]
    return float(np.dot(w, np.abs(f[idx])) / w.sum())


def _check_grid(r_grid) -> np.ndarray:
    r = np.asarray(r_grid, dtype=float).ravel()
    if r.size == 0:
        raise ValueError("empty radius grid")
    return r


def dyadic_radii(r_min: float, r_max: float) -> np.ndarray:
    """Dyadic radii 2**k inside [r_min, r_max]."""
    k0 = int(np.ceil(np.log2(r_min) - 1e-12))
    k1 = int(np.floor(np.log2(r_max) + 1e-12))
    return 2.0 ** np.arange(k0, k1 + 1)


def hl_maximal(model: BoundaryModel, f: np.ndarray, xi, r_grid) -> float:
    """Centred maximal function: max over the radius grid of ball averages of |f|."""
    r = _check_grid(r_grid)
    f = np.asarray(f, dtype=float)
    return max(ball_average(model, f, xi, rr) for rr in r)


# Non-centred family: for each radius r, balls of radius r centred at xi and at
# xi + (r/2) u for the eight compass directions u; every such ball contains xi.
_NONCENTRED_DIRS = np.array([[1, 0], [1, 1], [0, 1], [-1, 1], [-1, 0], [-1, -1], [0, -1], [1, -1]], float)
_NONCENTRED_DIRS /= np.linalg.norm(_NONCENTRED_DIRS, axis=1)[:, None]


def noncentered_maximal(model: BoundaryModel, f: np.ndarray, xi, r_grid) -> float:
    """Non-centred maximal function over a finite family of balls containing xi."""
    r = _check_grid(r_grid)
    f = np.asarray(f, dtype=float)
    xi = np.asarray(xi, dtype=float)
    best = 0.0
    for rr in r:
        centres = np.vstack([xi[None, :], xi[None, :] + 0.5 * rr * _NONCENTRED_DIRS])
        for c in centres:
            best = max(best, ball_average(model, f, c, rr))
    return best


def hl_maximal_atoms(model: BoundaryModel, f: np.ndarray, r_grid, centered: bool = True,
                     points: np.ndarray | None = None) -> np.ndarray:
    """Maximal function at many boundary points (defaults to all atoms).

    Uses sparse neighbour counts so a whole sweep costs one tree query per
    radius and centre offset.
    """
    r = _check_grid(r_grid)
    f = np.abs(np.asarray(f, dtype=float))
    pts = model.atoms if points is None else np.atleast_2d(points)
    tree = model.atom_tree
    w = model.weights
    offsets = [np.zeros(2)] if centered else [np.zeros(2)] + list(_NONCENTRED_DIRS * 0.5)
    best = np.zeros(len(pts))
    for rr in r:
        for off in offsets:
            centres = pts + rr * off
            lists = tree.query_ball_point(centres, rr)
            for i, idx in enumerate(lists):
                if idx:
                    ww = w[idx]
                    v = np.dot(ww, f[idx]) / ww.sum()
                    if v > best[i]:
                        best[i] = v
    return best


def martingale_energy(lattice: DyadicLattice, f: np.ndarray) -> np.ndarray:
    """Squared L2 norm of the martingale difference of f at every cube."""
    avg = lattice.averages(f)
    out = np.zeros(lattice.n_cubes)
    for j in range(lattice.j_min + 1, lattice.j_max + 1):
        ids = lattice.level(j)
        contrib = lattice.mass[ids] * (avg[ids] - avg[lattice.parent[ids]]) ** 2
        np.add.at(out, lattice.parent[ids], contrib)
    return out


class BoundaryFunction:
    """Per-atom values with an optional analytic closure and cached cube averages."""

    def __init__(self, values: Sequence[float], closure=None):
        v = np.array(values, dtype=float)
        v.setflags(write=False)
        self.values = v
        self.closure = closure
        self._avg: dict[int, np.ndarray] = {}

    def averages(self, lattice: DyadicLattice) -> np.ndarray:
        key = id(lattice)
        if key not in self._avg:
            a = lattice.averages(self.values)
            a.setflags(write=False)
            self._avg[key] = a
        return self._avg[key]

    @classmethod
    def from_closure(cls, model: BoundaryModel, closure) -> "BoundaryFunction":
        return cls(closure(model.atoms), closure)
