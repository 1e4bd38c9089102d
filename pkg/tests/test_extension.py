import numpy as np
import pytest

from varext.dyadic import ball_average, build_lattice
from varext.extension import cube_means, upsilon
from varext.functionals import cube_nodes, make_cone
from varext.geometry import build_scenario
from varext.whitney import BUMP_DILATION, WHITNEY_RATIO, UncoveredPoint, build_whitney, sample_points

# half-plane cubes touching x satisfy bottom >= 20 sqrt2 l and x within 0.55 l of the centre column,
# and b(P) is the interval right below P, so |m_b(P) - x| <= 0.55 l <= C_LINE y
C_LINE = 0.5 * BUMP_DILATION / (WHITNEY_RATIO * np.sqrt(2) - 0.5 * (BUMP_DILATION - 1))


def test_constant_extends_to_constant(any_setup):
    g = any_setup.grid
    x = sample_points(g, 2000, 4)
    u = upsilon(g, np.full(any_setup.model.n_atoms, -2.75))
    v, grad = u.evaluate(x)
    np.testing.assert_allclose(v, -2.75, rtol=1e-13)
    assert np.abs(grad).max() <= 1e-9 * 2.75 / g.side.min()


def test_identity_data_stays_close(hp):
    g, m = hp.grid, hp.model
    # b(P) sits right below P with the mean at P's centre column
    np.testing.assert_allclose(cube_means(g, m.atoms[:, 0]), g.center[:, 0], rtol=0, atol=1e-14)
    x = sample_points(g, 100, 8)
    u = upsilon(g, m.atoms[:, 0])
    assert np.all(np.abs(u.value(x) - x[:, 0]) <= C_LINE * x[:, 1] + 1e-14)


def test_nontangential_convergence_identity(hp):
    """|u(x) - xi| <= |u(x) - x_1| + |x_1 - xi| <= (C_LINE + 1 + alpha) delta(x) on the cone."""
    g, m = hp.grid, hp.model
    u = upsilon(g, m.atoms[:, 0])
    lo = g.band_floor
    for i in np.linspace(40, m.n_atoms - 40, 50).astype(int):
        cone = make_cone(m, m.atoms[i], 1.0, lo, 0.2)
        v = u.value(cone.points)
        ok = ~np.isnan(v)
        assert ok.any()
        err = np.abs(v[ok] - m.atoms[i, 0])
        assert np.all(err <= (C_LINE + 2.0) * cone.height[ok] + 1e-14)


def test_convex_combination(any_setup, rng):
    g = any_setup.grid
    f = rng.normal(size=any_setup.model.n_atoms)
    u = upsilon(g, f)
    x = sample_points(g, 1000, 6)
    cand, phi, _ = g.bumps(x)
    c = u.coeffs[np.maximum(cand, 0)]
    live = (cand >= 0) & (phi > 0)
    lo = np.where(live, c, np.inf).min(1)
    hi = np.where(live, c, -np.inf).max(1)
    v = u.value(x)
    assert np.all(v >= lo - 1e-12) and np.all(v <= hi + 1e-12)


def test_gradient_matches_finite_differences(graph, rng):
    g, m = graph.grid, graph.model
    u = upsilon(g, rng.normal(size=m.n_atoms))
    x0, y0, x1, y1 = m.window
    x = rng.uniform([x0, y0], [x1, y1], size=(4000, 2))
    x = x[g.locate(x) >= 0][:300]
    grad = u.gradient(x)
    h = 1e-6 * g.side[g.locate(x)]
    fd = np.stack([(u.value(x + h[:, None] * e) - u.value(x - h[:, None] * e)) / (2 * h)
                   for e in np.eye(2)], 1)
    ok = ~np.isnan(fd).any(1)
    assert ok.sum() > 200
    gn = np.linalg.norm(grad[ok], axis=1)
    assert gn.max() > 0
    # relative 1e-4 plus the rounding floor of a central difference
    noise = 1e-14 * np.abs(u.value(x[ok])).max() / h[ok]
    assert np.all(np.linalg.norm(fd[ok] - grad[ok], axis=1) <= 1e-4 * gn + noise)


def test_gradient_bound_per_cube(hp, rng):
    """l(P) sup_P |grad u| <= C m_{B_P}|f| with B_P = B(x_b(P), C_w l(P)).

    The bumps sum to one, so grad u = sum (m_b(P') - m_b(P)) grad phi_P'.
    At most 12 bumps meet, |grad phi_P'| <= 2 C_phi / l(P), and each b(P')
    lies in B_P with mass >= l(P) / 2 while sigma(B_P) <= C0 C_w l(P).
    Hence C <= 12 * 2 C_phi * 2 * 2 C0 C_w.
    """
    g, m, lat = hp.grid, hp.model, hp.lattice
    c = g.constants
    bound = 12 * 2 * c["C_phi"] * 2 * 2 * m.meta["C0"] * c["C_w"]
    pts, _ = cube_nodes(g, 5)
    worst = 0.0
    for _ in range(5):
        f = rng.normal(size=m.n_atoms)
        u = upsilon(g, f)
        gr = np.linalg.norm(u.gradient(pts.reshape(-1, 2)), axis=1).reshape(g.n_cubes, -1).max(1)
        sub = np.arange(0, g.n_cubes, 7)
        avg = np.array([ball_average(m, np.abs(f), lat.center[g.bcube[p]], c["C_w"] * g.side[p]) for p in sub])
        worst = max(worst, float((g.side[sub] * gr[sub] / avg).max()))
    assert worst <= bound


def test_oversize_cubes_use_global_mean():
    m = build_scenario("four_corner_cantor", generation=2, window=(-64, -64, 64, 64), measure=False)
    lat = build_lattice(m)
    g = build_whitney(m, lat, j_hi=5)
    assert g.oversize.any()
    f = np.arange(16.0)
    means = cube_means(g, f)
    assert np.all(means[g.oversize] == 7.5)
    assert np.all(g.side[g.oversize] >= m.meta["boundary_diam"])


def test_errors(hp):
    with pytest.raises(ValueError):
        upsilon(hp.grid, np.ones(3))
    u = upsilon(hp.grid, np.ones(hp.model.n_atoms))
    with pytest.raises(UncoveredPoint):
        u.value(np.array([[0.5, 1e-5]]), strict=True)
    assert np.isnan(u.value(np.array([[0.5, 1e-5]])))[0]
