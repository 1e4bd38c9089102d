"""Regularized distance and the variable-width mollifier.

``beta(x) = sum_P 40 l(P) phi_P(x)`` is smooth on the band and comparable
to delta (a Whitney cube has ``28 l < dist < 58 l`` roughly).  The kernel is

    Lambda(x, y) = beta(x)^-2 zeta(2 (x - y) / beta(x)),

with ``zeta`` a radial exponential bump supported in ``B(0, c / (4 m2))``.
In the plane the change of variables gives ``int Lambda(x, .) = int zeta / 4``,
so zeta is scaled to mass 4; quadrature masses are renormalized to one.

Quadrature is a 24 x 24 polar tensor rule on the support disk (Gauss radii
times equispaced angles), which integrates the radial kernel to ~1e-7.
Since the nodes are ``y_k = x + R(x) u_k`` with ``R = rho beta / 2``, the
kernel values at the nodes do not depend on x and the quadrature
``F~(x) = sum_k c_k F(y_k(x)) / sum_k c_k`` differentiates exactly:
``grad F~ = sum_k c_k (I + grad R (x) u_k) grad F(y_k) / sum_k c_k``.
The kernel-derivative form ``int grad_x Lambda F`` is available as
``gradient_mode="kernel"``; it agrees only to quadrature accuracy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .functionals import CubeField, InteriorField
from .whitney import WhitneyGrid, bump_profile, sample_points

BETA_SCALE = 40.0
KERNEL_RULE = 24
_H_MOMENT = 2 * np.pi * quad(lambda t: bump_profile(np.array(t))[0] * t, 0.0, 1.0, epsabs=1e-14)[0]


class BandUnderflow(ValueError):
    """A kernel, trace or blend scale falls outside the Whitney band."""


@dataclass(frozen=True)
class RegularizedDistance:
    """beta with measured sandwich constants m1 delta <= beta <= m2 delta."""

    field: CubeField
    m1: float
    m2: float
    grad_bound: float

    def evaluate(self, x):
        return self.field.evaluate(x)


def regularized_distance(grid: WhitneyGrid, n_samples: int = 2000, seed: int = 0) -> RegularizedDistance:
    """Synthesize beta from the Whitney grid and measure m1, m2 and sup |grad beta|."""
    if grid.level.max() - grid.level.min() < 1:
        raise ValueError("band too thin: need at least two Whitney generations")
    f = CubeField(grid, BETA_SCALE * grid.side, origin="regularized distance")
    x = sample_points(grid, n_samples, seed)
    b, g = f.evaluate(x)
    r = b / grid.model.delta(x)
    return RegularizedDistance(field=f, m1=float(r.min()), m2=float(r.max()),
                               grad_bound=float(np.linalg.norm(g, axis=1).max()))


class MollifierKernel:
    """Lambda(x, y) with zeta of radius ``rho = c / (4 m2)`` and mass 4."""

    def __init__(self, beta: RegularizedDistance, c: float = 0.5):
        if not 0 < c <= 0.5:
            raise ValueError("c must lie in (0, 1/2]")
        self.beta = beta
        self.c = float(c)
        self.rho = self.c / (4 * beta.m2)
        self.amp = 4.0 / (self.rho ** 2 * _H_MOMENT)

    def zeta(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """zeta(z) and its gradient for z of shape (..., 2)."""
        r2 = (z ** 2).sum(-1) / self.rho ** 2
        inside = r2 < 1
        q = np.where(inside, 1 - r2, 1.0)
        val = np.where(inside, self.amp * np.exp(1 - 1 / q), 0.0)
        gz = (val * (-2.0 / (self.rho ** 2 * q * q)))[..., None] * z
        return val, gz

    def support_radius(self, b: np.ndarray) -> np.ndarray:
        return 0.5 * self.rho * b

    def __call__(self, x, y) -> np.ndarray:
        """Lambda(x, y) for x of shape (M, 2) and y of shape (M, K, 2)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        b = self.beta.field.value(x)
        z = 2 * (x[:, None, :] - y) / b[:, None, None]
        return self.zeta(z)[0] / b[:, None] ** 2

    def rule(self, order: int = KERNEL_RULE) -> tuple[np.ndarray, np.ndarray]:
        """Unit-disk polar tensor rule (nodes u_k, weights summing to pi)."""
        t, w = np.polynomial.legendre.leggauss(order)
        r = 0.5 * (t + 1)
        wr = 0.5 * w * r
        th = 2 * np.pi * (np.arange(order) + 0.5) / order
        u = (r[:, None, None] * np.stack([np.cos(th), np.sin(th)], 1)[None]).reshape(-1, 2)
        return u, np.repeat(wr, order) * (2 * np.pi / order)

    def nodes(self, x: np.ndarray, order: int = KERNEL_RULE):
        """Polar nodes on the support disk with Lambda, grad_x Lambda, weights and grad R."""
        b, gb = self.beta.field.evaluate(x)
        if np.isnan(b).any():
            raise BandUnderflow("kernel centre outside the band")
        u, wt = self.rule(order)
        rad = self.support_radius(b)
        y = x[:, None, :] + rad[:, None, None] * u[None]
        wq = wt[None, :] * rad[:, None] ** 2
        z = 2 * (x[:, None, :] - y) / b[:, None, None]
        zv, zg = self.zeta(z)
        lam = zv / b[:, None] ** 2
        # d z / d x = (2 / beta) I - z (x) grad beta / beta
        gbb = gb[:, None, :]
        dot = (zg * z).sum(-1, keepdims=True)
        grad = (-2.0 * zv[..., None] * gbb / b[:, None, None] ** 3
                + (2.0 / b[:, None, None] * zg - dot * gbb / b[:, None, None]) / b[:, None, None] ** 2)
        return y, lam, grad, wq, 0.5 * self.rho * gb, u

    def mass(self, x, order: int = KERNEL_RULE) -> np.ndarray:
        """Quadrature value of int Lambda(x, y) dy (before renormalization)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        _, lam, _, wq, _, _ = self.nodes(x, order)
        return (lam * wq).sum(1)


class MollifiedField(InteriorField):
    """F~(x) = int Lambda(x, y) F(y) dy with renormalized quadrature mass."""

    def __init__(self, field: InteriorField, kernel: MollifierKernel, order: int = KERNEL_RULE,
                 gradient_mode: str = "pushforward"):
        if gradient_mode not in ("pushforward", "kernel"):
            raise ValueError("gradient_mode must be 'pushforward' or 'kernel'")
        self.inner = field
        self.kernel = kernel
        self.order = order
        self.gradient_mode = gradient_mode
        self.grid = field.grid
        self.origin = "mollified"

    def _eval(self, x, strict):
        out_v = np.full(len(x), np.nan)
        out_g = np.full((len(x), 2), np.nan)
        ok = self.grid.locate(x) >= 0 if self.grid is not None else np.ones(len(x), bool)
        if strict and not ok.all():
            raise BandUnderflow("point outside the band")
        step = max(1, 100_000 // self.order ** 2)
        idx = np.nonzero(ok)[0]
        for start in range(0, len(idx), step):
            sl = idx[start:start + step]
            xs = x[sl]
            y, lam, glam, wq, grad_r, u = self.kernel.nodes(xs, self.order)
            fv, fg = self.inner.evaluate(y.reshape(-1, 2))
            fv = fv.reshape(len(xs), -1)
            fg = fg.reshape(len(xs), -1, 2)
            bad = np.isnan(fv).any(1)
            if strict and bad.any():
                raise BandUnderflow("kernel support leaves the band")
            fv = np.where(np.isnan(fv), 0.0, fv)
            fg = np.where(np.isnan(fg), 0.0, fg)
            wl = lam * wq
            d = wl.sum(1)
            v = (wl * fv).sum(1) / d
            if self.gradient_mode == "kernel":
                dg = (glam * wq[..., None]).sum(1)
                ng = (glam * (wq * fv)[..., None]).sum(1)
                g = (ng - v[:, None] * dg) / d[:, None]
            else:
                # (I + grad R (x) u_k)^T grad F(y_k): component j gets grad_j R (u_k . grad F)
                ug = (u[None] * fg).sum(-1)
                g = ((wl[..., None] * fg).sum(1) + grad_r * (wl * ug).sum(1)[:, None]) / d[:, None]
            v[bad] = np.nan
            g[bad] = np.nan
            out_v[sl] = v
            out_g[sl] = g
        return out_v, out_g


def smooth_modify(field: InteriorField, beta: RegularizedDistance, c: float = 0.5,
                  order: int = KERNEL_RULE, gradient_mode: str = "pushforward") -> MollifiedField:
    return MollifiedField(field, MollifierKernel(beta, c), order, gradient_mode)
