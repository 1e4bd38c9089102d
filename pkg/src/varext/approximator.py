"""epsilon-approximant of the regularized extension.

Whitney cubes whose 1.2 dilates meet a 1.2 dilate whose boundary cube lies in
another tree form the crossing family P0; those meeting a P0 cube through
1.2 dilates form N(P0).  The approximant keeps the local average m_{b(P)} f
on P0 and on the bad family B0, uses the top average m_R f of the tree of
b(P) elsewhere, and the global mean on cubes at least as large as a compact
boundary.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .corona import CoronaDecomposition, packing_profile
from .dyadic import DyadicLattice
from .extension import _as_function
from .functionals import CubeField
from .whitney import FAMILY_DILATION, WhitneyGrid, dilation_pairs


def _bbox_dist(b1: np.ndarray, b2: np.ndarray) -> np.ndarray:
    dx = np.maximum(np.maximum(b1[..., 0] - b2[..., 2], b2[..., 0] - b1[..., 2]), 0)
    dy = np.maximum(np.maximum(b1[..., 1] - b2[..., 3], b2[..., 1] - b1[..., 3]), 0)
    return np.hypot(dx, dy)


def closeness(lattice: DyadicLattice, q1, q2) -> np.ndarray:
    """Smallest A for which Q1 and Q2 are A-close."""
    q1, q2 = np.asarray(q1), np.asarray(q2)
    d1, d2 = lattice.diam[q1], lattice.diam[q2]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(np.minimum(d1, d2) > 0, np.maximum(d1, d2) / np.minimum(d1, d2),
                         np.where(d1 == d2, 1.0, np.inf))
        sep = np.where(d1 + d2 > 0, _bbox_dist(lattice.bbox[q1], lattice.bbox[q2]) / (d1 + d2), 0.0)
    return np.maximum(np.maximum(ratio, sep), 1.0)


def a_close(lattice: DyadicLattice, q1: int, q2: int, a: float) -> bool:
    """diam ratio in [1/A, A] and dist(Q1, Q2) <= A (diam Q1 + diam Q2)."""
    d1, d2 = lattice.diam[q1], lattice.diam[q2]
    if not (d1 <= a * d2 and d2 <= a * d1):
        return False
    return bool(_bbox_dist(lattice.bbox[q1], lattice.bbox[q2]) <= a * (d1 + d2))


@dataclass(frozen=True)
class ApproximantFamilies:
    """Masks over Whitney cubes and lattice cubes.

    Attributes
    ----------
    p0, n_p0, b0 : ndarray
        Whitney-cube masks of P0, N(P0) and B0.
    boundary, boundary_star : ndarray
        Lattice-cube masks of the union of dTree(R) and of J (union of dTree*(R)).
    tree_of : ndarray
        Tree top of b(P) for every Whitney cube.
    a : float
        Measured closeness constant (see ``build_families``).
    """

    p0: np.ndarray
    n_p0: np.ndarray
    b0: np.ndarray
    boundary: np.ndarray
    boundary_star: np.ndarray
    tree_of: np.ndarray
    a: float
    a_star: float
    packing_boundary: float
    packing_j: float

    def boundary_tree(self, corona: CoronaDecomposition, r: int, star: bool = False) -> np.ndarray:
        m = self.boundary_star if star else self.boundary
        return np.nonzero(m & (corona.top == r))[0]

    def to_csv(self, path, grid: WhitneyGrid) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["cube", "b_cube", "tree_top", "in_P0", "in_N_P0", "in_B0"])
            for p in range(grid.n_cubes):
                wr.writerow([p, int(grid.bcube[p]), int(self.tree_of[p]), int(self.p0[p]), int(self.n_p0[p]),
                             int(self.b0[p])])


def build_families(grid: WhitneyGrid, corona: CoronaDecomposition, a: float | None = None) -> ApproximantFamilies:
    """P0, N(P0), dTree, dTree*, B0 by neighbour scans over 1.2 dilates.

    ``a`` is measured, not assumed: the smallest A such that every cube of
    the union of dTree(R) is A-close to a boundary cube of another tree
    through a crossing pair, and ``a_star`` the smallest A with J inside the
    A-neighbourhood of that union.  A supplied ``a`` is checked against the
    measured value.
    """
    lat = grid.lattice
    if corona.lattice is not lat:
        raise ValueError("corona and grid use different lattices")
    tree_of = corona.top[grid.bcube]
    p, q = dilation_pairs(grid, FAMILY_DILATION)
    cross = tree_of[p] != tree_of[q]
    p0 = np.zeros(grid.n_cubes, dtype=bool)
    p0[p[cross]] = True
    n_p0 = np.zeros(grid.n_cubes, dtype=bool)
    n_p0[p[p0[q]]] = True
    b0 = grid.bad.copy()
    boundary = np.zeros(lat.n_cubes, dtype=bool)
    boundary[grid.bcube[p0]] = True
    star = np.zeros(lat.n_cubes, dtype=bool)
    star[grid.bcube[n_p0]] = True

    # closeness of dTree cubes to other trees, through the crossing pairs
    need = np.full(lat.n_cubes, np.inf)
    if cross.any():
        np.minimum.at(need, grid.bcube[p[cross]], closeness(lat, grid.bcube[p[cross]], grid.bcube[q[cross]]))
    a_meas = float(need[boundary].max()) if boundary.any() else 1.0
    need_s = np.full(lat.n_cubes, np.inf)
    sel = p0[q]
    if sel.any():
        np.minimum.at(need_s, grid.bcube[p[sel]], closeness(lat, grid.bcube[p[sel]], grid.bcube[q[sel]]))
    a_star = float(need_s[star].max()) if star.any() else 1.0
    if a is not None and a < a_meas:
        raise ValueError(f"A={a} is below the measured closeness constant {a_meas:.3f}")
    fam = ApproximantFamilies(p0=p0, n_p0=n_p0, b0=b0, boundary=boundary, boundary_star=star, tree_of=tree_of,
                              a=a_meas if a is None else float(a), a_star=a_star,
                              packing_boundary=packing_profile(lat, np.nonzero(boundary)[0]) if boundary.any() else 0.0,
                              packing_j=packing_profile(lat, np.nonzero(star)[0]) if star.any() else 0.0)
    for m in (p0, n_p0, b0, boundary, star, tree_of):
        m.setflags(write=False)
    return fam


def approximant_coefficients(grid: WhitneyGrid, corona: CoronaDecomposition, families: ApproximantFamilies,
                             f) -> np.ndarray:
    f = _as_function(f)
    avg = f.averages(grid.lattice)
    local = families.p0 | families.b0
    coef = np.where(local, avg[grid.bcube], avg[families.tree_of])
    if grid.oversize.any():
        coef = np.where(grid.oversize, grid.lattice.global_mean(f.values), coef)
    return coef


class ApproximantField(CubeField):
    """u(x) = sum_P c_P phi_P(x) with the approximant coefficients."""

    def __init__(self, grid, corona, families, f):
        self.corona = corona
        self.families = families
        self.f = _as_function(f)
        super().__init__(grid, approximant_coefficients(grid, corona, families, self.f), origin="approximant")


def approximant(grid: WhitneyGrid, corona: CoronaDecomposition, families: ApproximantFamilies, f) -> ApproximantField:
    return ApproximantField(grid, corona, families, f)
