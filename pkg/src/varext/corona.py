"""Stopping-time (corona) decomposition of the dyadic lattice.

A cube Q strictly below the current top R stops when
``|m_R f - m_Q f| >= eps * threshold(Q)`` with a nonzero jump, and no cube
strictly between them stopped (the nonzero jump keeps data with zero
threshold, such as constants, from stopping everywhere); stopping cubes become the next tops.  ``threshold`` is
``||f||_BMO`` in BMO mode and the truncated dyadic maximal function of the
cube in Lp mode.  The descent runs generation by generation: each cube
inherits its parent's top unless it satisfies the threshold against it, in
which case it starts its own tree.  That is the breadth-first maximal rule.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dyadic import BoundaryFunction, DyadicLattice, truncated_maximal


def _vals(f) -> np.ndarray:
    return np.asarray(f.values if isinstance(f, BoundaryFunction) else f, dtype=float)


def _thresholds(lattice: DyadicLattice, f: np.ndarray, mode: str, bmo: float | None) -> np.ndarray:
    if mode == "BMO":
        if bmo is None:
            bmo = float(lattice.oscillations(f).max())
        return np.full(lattice.n_cubes, bmo)
    if mode == "Lp":
        return truncated_maximal(lattice, f)
    raise ValueError("mode must be 'BMO' or 'Lp'")


@dataclass(frozen=True)
class CoronaDecomposition:
    """Trees of the lattice.

    Attributes
    ----------
    top : ndarray
        Top cube of the tree holding each cube.
    is_top, is_stop : ndarray
        Masks: tops (roots included) and stopping cubes (tops that are not roots).
    tops : ndarray
        Top ids ordered by generation then id.
    bad : ndarray
        Cubes of the bad family (empty here: lattice roots are bounded).
    """

    lattice: DyadicLattice
    eps: float
    mode: str
    threshold: np.ndarray
    top: np.ndarray
    is_top: np.ndarray
    is_stop: np.ndarray
    tops: np.ndarray
    bad: np.ndarray
    counts: dict

    def tree(self, r: int) -> np.ndarray:
        return np.nonzero(self.top == r)[0]

    def stop(self, r: int) -> np.ndarray:
        """Stop(R): stopping cubes whose parent lies in Tree(R)."""
        lat = self.lattice
        cand = np.nonzero(self.is_stop)[0]
        return cand[self.top[lat.parent[cand]] == r]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["cube", "tree_top", "is_stop", "is_top"])
            for q in range(self.lattice.n_cubes):
                wr.writerow([q, int(self.top[q]), int(self.is_stop[q]), int(self.is_top[q])])


def stop_cubes(lattice: DyadicLattice, r: int, f, eps: float, mode: str = "BMO", bmo: float | None = None) -> np.ndarray:
    """Maximal cubes S strictly inside R meeting the stopping threshold against R."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    f = _vals(f)
    thr = _thresholds(lattice, f, mode, bmo)
    avg = lattice.averages(f)
    mr = avg[r]
    out = []
    front = lattice.children(r)
    while front.size:
        jump = np.abs(mr - avg[front])
        hit = (jump >= eps * thr[front]) & (jump > 0)
        out.append(front[hit])
        live = front[~hit]
        front = np.concatenate([lattice.children(q) for q in live]) if live.size else live
    return np.sort(np.concatenate(out)) if out else np.zeros(0, dtype=np.int64)


def build_corona(lattice: DyadicLattice, f, eps: float, mode: str = "BMO", bmo: float | None = None) -> CoronaDecomposition:
    """Corona decomposition of every lattice root."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    f = _vals(f)
    thr = _thresholds(lattice, f, mode, bmo)
    avg = lattice.averages(f)
    top = np.full(lattice.n_cubes, -1, dtype=np.int64)
    roots = lattice.roots
    top[roots] = roots
    counts = {int(lattice.j_min): int(len(roots))}
    for j in range(lattice.j_min + 1, lattice.j_max + 1):
        ids = lattice.level(j)
        inherit = top[lattice.parent[ids]]
        jump = np.abs(avg[inherit] - avg[ids])
        hit = (jump >= eps * thr[ids]) & (jump > 0)
        top[ids] = np.where(hit, ids, inherit)
        counts[j] = int(hit.sum())
    is_top = top == np.arange(lattice.n_cubes)
    is_stop = is_top.copy()
    is_stop[roots] = False
    tops = np.nonzero(is_top)[0]
    tops = tops[np.lexsort((tops, lattice.gen[tops]))]
    for a in (top, is_top, is_stop, tops, thr):
        a.setflags(write=False)
    return CoronaDecomposition(lattice=lattice, eps=float(eps), mode=mode, threshold=thr, top=top, is_top=is_top,
                               is_stop=is_stop, tops=tops, bad=np.zeros(0, dtype=np.int64), counts=counts)


def packing_sums(lattice: DyadicLattice, family) -> np.ndarray:
    """sum_{R in family, R inside S} sigma(R) / sigma(S) for every cube S."""
    mask = np.zeros(lattice.n_cubes, dtype=bool)
    mask[np.asarray(family, dtype=np.int64)] = True
    acc = np.where(mask, lattice.mass, 0.0)
    for j in range(lattice.j_max, lattice.j_min, -1):
        ids = lattice.level(j)
        np.add.at(acc, lattice.parent[ids], acc[ids])
    return acc / lattice.mass


def packing_constant(lattice: DyadicLattice, family, s: int) -> float:
    return float(packing_sums(lattice, family)[s])


def packing_profile(lattice_or_corona, family=None) -> float:
    """max over S of the packing sum; the family defaults to the tops of a decomposition."""
    if isinstance(lattice_or_corona, CoronaDecomposition):
        lat = lattice_or_corona.lattice
        family = lattice_or_corona.tops if family is None else family
    else:
        lat = lattice_or_corona
    return float(packing_sums(lat, family).max())


def packing_table(corona: CoronaDecomposition) -> list[tuple[int, int, float]]:
    """Per generation: number of tops and the largest packing sum over cubes of that generation."""
    lat = corona.lattice
    ps = packing_sums(lat, corona.tops)
    rows = []
    for j in range(lat.j_min, lat.j_max + 1):
        ids = lat.level(j)
        rows.append((j, int(corona.is_top[ids].sum()), float(ps[ids].max())))
    return rows


def write_packing_csv(path, corona: CoronaDecomposition) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["gen", "n_tops", "max_packing"])
        for j, n, p in packing_table(corona):
            wr.writerow([j, n, repr(p)])


def stopping_parent(lattice: DyadicLattice, family) -> np.ndarray:
    """Q* for every cube: smallest family cube strictly containing Q, else Q itself."""
    mask = np.zeros(lattice.n_cubes, dtype=bool)
    mask[np.asarray(family, dtype=np.int64)] = True
    # nearest family ancestor-or-self, then shift by one generation
    near = np.full(lattice.n_cubes, -1, dtype=np.int64)
    for j in range(lattice.j_min, lattice.j_max + 1):
        ids = lattice.level(j)
        up = near[lattice.parent[ids]] if j > lattice.j_min else np.full(len(ids), -1)
        near[ids] = np.where(mask[ids], ids, up)
    out = np.arange(lattice.n_cubes)
    for j in range(lattice.j_min + 1, lattice.j_max + 1):
        ids = lattice.level(j)
        above = near[lattice.parent[ids]]
        out[ids] = np.where(above >= 0, above, ids)
    return out


def stopped_square_function(lattice: DyadicLattice, family, f, xi=None) -> np.ndarray | float:
    """(sum_{Q in family, Q contains xi} |m_Q f - m_Q* f|^2)^(1/2) at every atom, or at the atom xi."""
    f = _vals(f)
    avg = lattice.averages(f)
    qs = stopping_parent(lattice, family)
    mask = np.zeros(lattice.n_cubes, dtype=bool)
    mask[np.asarray(family, dtype=np.int64)] = True
    term = np.where(mask, (avg - avg[qs]) ** 2, 0.0)
    tot = term[lattice.atom_cube].sum(0)
    out = np.sqrt(tot)
    if xi is None:
        return out
    from .dyadic import _atom_at
    return float(out[_atom_at(lattice.model, np.asarray(xi, dtype=float))])
