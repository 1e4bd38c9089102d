"""Regularized dyadic extension: boundary averages over b(P) glued by the
Whitney partition of unity."""
from __future__ import annotations

import numpy as np

from .dyadic import BoundaryFunction
from .functionals import CubeField
from .whitney import WhitneyGrid


def _as_function(f) -> BoundaryFunction:
    return f if isinstance(f, BoundaryFunction) else BoundaryFunction(f)


def cube_means(grid: WhitneyGrid, f) -> np.ndarray:
    """m_{b(P)} f for every Whitney cube; global mean on oversize cubes of compact boundaries."""
    f = _as_function(f)
    means = f.averages(grid.lattice)[grid.bcube].copy()
    if grid.oversize.any():
        means[grid.oversize] = grid.lattice.global_mean(f.values)
    return means


class UpsilonField(CubeField):
    """upsilon_f(x) = sum_P m_{b(P)} f phi_P(x), gradient through the bumps."""

    def __init__(self, grid: WhitneyGrid, f):
        self.f = _as_function(f)
        super().__init__(grid, cube_means(grid, self.f), origin="upsilon")

    @property
    def cube_means(self) -> np.ndarray:
        return self.coeffs


def upsilon(grid: WhitneyGrid, f) -> UpsilonField:
    """Regularized dyadic extension of atom data f on the Whitney band."""
    if len(_as_function(f).values) != grid.model.n_atoms:
        raise ValueError("f must give one value per atom")
    return UpsilonField(grid, f)
