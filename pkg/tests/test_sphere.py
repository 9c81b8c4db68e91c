"""Spectral sphere layer: transform oracles, norms, Poisson, Hessians."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import solve_ivp

from motsdn import sphere
from motsdn.sphere import (
    NormSpec,
    SphereField,
    SphereGrid,
    covariant_hessian,
    laplacian,
    lm_index,
    num_coeffs,
    rotation_apply,
    sobolev_norm,
    solve_poisson,
)

L = 15


@pytest.fixture(scope="module")
def grid():
    return SphereGrid(L)


def real_sph_harm(l, m, theta, phi):
    """Independent real harmonic evaluation via scipy (transform oracle)."""
    try:
        from scipy.special import sph_harm_y
        y = sph_harm_y(l, abs(m), theta, phi)
    except ImportError:
        from scipy.special import sph_harm
        y = sph_harm(abs(m), l, phi, theta)
    if m > 0:
        return math.sqrt(2.0) * (-1.0) ** m * y.real
    if m < 0:
        return math.sqrt(2.0) * (-1.0) ** m * y.imag
    return y.real


def random_field(grid, rng, lmax=None, scale=1.0):
    lmax = grid.band_limit if lmax is None else lmax
    c = np.zeros(num_coeffs(grid.band_limit))
    c[:num_coeffs(lmax)] = scale * rng.standard_normal(num_coeffs(lmax))
    return SphereField(grid, coeffs=c)


# ---------------------------------------------------------------- transforms

def test_basis_matches_scipy(grid):
    th = grid.theta[:, None] * np.ones((1, grid.nlon))
    ph = np.ones((grid.nlat, 1)) * grid.phi[None, :]
    for (l, m) in [(0, 0), (1, 0), (1, 1), (2, -1), (5, 3), (9, -7), (15, 15)]:
        mine = SphereField.harmonic(grid, l, m).values
        assert_allclose(mine, real_sph_harm(l, m, th, ph), atol=1e-12)


def test_round_trip(grid):
    rng = np.random.default_rng(7)
    f = random_field(grid, rng)
    assert_allclose(grid.analyze(grid.synthesize(f.coeffs)), f.coeffs, atol=1e-12)
    g = SphereField(grid, values=f.values)
    assert_allclose(g.coeffs, f.coeffs, atol=1e-12)


def test_quadrature_weights(grid):
    assert abs(grid.quad(np.ones(grid.shape)) - 4.0 * math.pi) < 1e-12
    # harmonics integrate to zero through degree 2L
    big = SphereGrid(2 * L)
    for (l, m) in [(1, 0), (7, 4), (2 * L, 0), (2 * L, -5)]:
        vals = SphereField.harmonic(big, l, m).values
        sub = big  # quadrature on the same grid that resolves them
        assert abs(sub.quad(vals)) < 1e-12


def test_orthonormality(grid):
    pairs = [(3, 2), (3, -2), (8, 0), (15, 11)]
    for (l, m) in pairs:
        y = SphereField.harmonic(grid, l, m).values
        assert abs(grid.quad(y * y) - 1.0) < 1e-12
    y1 = SphereField.harmonic(grid, 3, 2).values
    y2 = SphereField.harmonic(grid, 5, 2).values
    assert abs(grid.quad(y1 * y2)) < 1e-12


def test_mean(grid):
    f = SphereField.constant(grid, 2.5)
    assert abs(f.mean() - 2.5) < 1e-13
    rng = np.random.default_rng(0)
    g = random_field(grid, rng)
    assert abs(g.mean() - grid.quad(g.values) / (4.0 * math.pi)) < 1e-12


def test_synth_at_matches_grid(grid):
    rng = np.random.default_rng(3)
    f = random_field(grid, rng)
    i, j = 4, 9
    val = grid.synth_at(f.coeffs, grid.theta[i], grid.phi[j])
    assert abs(val[0] - f.values[i, j]) < 1e-11


def test_theta_derivatives_against_difference(grid):
    # spectral d^3/dtheta^3 against a centered stencil of synth_at
    rng = np.random.default_rng(11)
    f = random_field(grid, rng, lmax=6)
    i, j = 7, 5
    th, ph = grid.theta[i], grid.phi[j]
    d3 = grid.synthesize(f.coeffs, dtheta=3)[i, j]
    sten = np.array([-0.5, 1.0, 0.0, -1.0, 0.5])

    def stencil(h):
        pts = th + h * np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
        return float(sten @ grid.synth_at(f.coeffs, pts, np.full(5, ph))) / h ** 3

    a1, a2 = stencil(1e-2), stencil(5e-3)
    rate = math.log2(abs(a1 - d3) / abs(a2 - d3))
    assert 1.8 < rate < 2.2
    assert abs((4.0 * a2 - a1) / 3.0 - d3) < 1e-5


def test_mixed_partial(grid):
    # d_theta d_phi of Y_22 = N sin^2(theta) cos(2 phi), N = sqrt(15/16pi)/...
    f = SphereField.harmonic(grid, 2, 2)
    n22 = 0.25 * math.sqrt(15.0 / math.pi)
    th = grid.theta[:, None]
    ph = grid.phi[None, :]
    expect = n22 * 2.0 * np.sin(th) * np.cos(th) * (-2.0) * np.sin(2.0 * ph)
    assert_allclose(f.partial(dtheta=1, dphi=1), expect, atol=1e-12)


# ---------------------------------------------------------------- rotations

def test_rotation_kills_constants(grid):
    c = SphereField.constant(grid, 3.0)
    for a in (1, 2, 3):
        assert np.max(np.abs(rotation_apply(c, a).values)) < 1e-12


def test_rotation_z_kills_zonal(grid):
    f = SphereField.harmonic(grid, 1, 0)  # proportional to cos(theta)
    assert np.max(np.abs(rotation_apply(f, 3).values)) < 1e-12


def test_rotation_gradient_identity_y21(grid):
    f = SphereField.harmonic(grid, 2, 1)
    s = np.zeros(grid.shape)
    for a in (1, 2, 3):
        s += rotation_apply(f, a).values ** 2
    assert_allclose(s, sphere.gradient_squared(f), atol=1e-10)


def test_rotation_gradient_identity_random(grid):
    rng = np.random.default_rng(21)
    f = random_field(grid, rng)
    s = np.zeros(grid.shape)
    for a in (1, 2, 3):
        s += rotation_apply(f, a).values ** 2
    assert_allclose(s, sphere.gradient_squared(f), atol=1e-10 * np.max(s))


def test_rotation_preserves_band(grid):
    f = SphereField.harmonic(grid, grid.band_limit, 4)
    g = rotation_apply(f, 1)
    back = grid.analyze(g.values)
    assert_allclose(back, g.coeffs, atol=1e-11)


def test_second_rotation_sum_is_hessian_identity(grid):
    # sum_ab (R_b R_a f)^2 = |hess f|^2 + |grad f|^2 pointwise
    rng = np.random.default_rng(5)
    f = random_field(grid, rng, lmax=10)
    s2 = np.zeros(grid.shape)
    for a in (1, 2, 3):
        ra = rotation_apply(f, a)
        for b in (1, 2, 3):
            s2 += rotation_apply(ra, b).values ** 2
    stack = sphere._stack_norms_squared(f, 2)
    assert_allclose(s2, stack[2] + stack[1], atol=1e-9 * np.max(s2))


# ---------------------------------------------------------------- norms

def test_norm_zero(grid):
    z = SphereField.constant(grid, 0.0)
    assert sobolev_norm(z, NormSpec(3, 4)) == 0.0
    assert sobolev_norm(z, NormSpec(2, math.inf)) == 0.0


def test_norm_l2_parseval(grid):
    rng = np.random.default_rng(13)
    f = random_field(grid, rng)
    assert abs(sobolev_norm(f, NormSpec(0, 2)) - math.sqrt(np.sum(f.coeffs ** 2))) < 1e-10


def test_norm_y10(grid):
    f = SphereField.harmonic(grid, 1, 0)
    assert abs(sobolev_norm(f, NormSpec(0, 2)) - 1.0) < 1e-12


def test_norm_y20_quadrature_oracle(grid):
    # independent oracle: quadrature of the analytic |grad Y_20|^2
    n20 = 0.25 * math.sqrt(5.0 / math.pi)
    th = grid.theta[:, None]
    y = n20 * (3.0 * np.cos(th) ** 2 - 1.0) * np.ones((1, grid.nlon))
    dy = n20 * (-6.0) * np.cos(th) * np.sin(th) * np.ones((1, grid.nlon))
    oracle = (grid.quad(y ** 2) + grid.quad(dy ** 2)) ** 0.5
    assert abs(oracle - math.sqrt(7.0)) < 1e-12
    f = SphereField.harmonic(grid, 2, 0)
    assert abs(sobolev_norm(f, NormSpec(1, 2)) - oracle) < 1e-12
    assert abs(sobolev_norm(f, NormSpec(1, 2)) - math.sqrt(7.0)) < 1e-12


def test_norm_h1_eigenvalue_rule(grid):
    # ||Y_lm||^{1,2}^2 = 1 + l(l+1) for every harmonic
    for (l, m) in [(1, 1), (4, -3), (9, 9)]:
        f = SphereField.harmonic(grid, l, m)
        assert abs(sobolev_norm(f, NormSpec(1, 2)) ** 2 - (1.0 + l * (l + 1.0))) < 1e-10


def test_norm_rotation_route_agrees(grid):
    # sqrt(||f||^2 + sum_a ||R_a f||^2) reproduces the stack H^1 norm
    rng = np.random.default_rng(17)
    f = random_field(grid, rng)
    rot = sum(grid.quad(rotation_apply(f, a).values ** 2) for a in (1, 2, 3))
    direct = math.sqrt(grid.quad(f.values ** 2) + rot)
    assert abs(direct - sobolev_norm(f, NormSpec(1, 2))) < 1e-10 * direct


def test_norm_monotone_in_n(grid):
    rng = np.random.default_rng(19)
    f = random_field(grid, rng)
    spec_p = 4
    vals = [sobolev_norm(f, NormSpec(n, spec_p)) for n in range(4)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_norm_inf_constant(grid):
    f = SphereField.constant(grid, -2.0)
    assert abs(sobolev_norm(f, NormSpec(3, math.inf)) - 2.0) < 1e-13


def test_normspec_validation():
    with pytest.raises(ValueError):
        NormSpec(-1, 2)
    with pytest.raises(ValueError):
        NormSpec(2, 1.0)
    NormSpec(0, math.inf)


# ---------------------------------------------------------------- Laplacian / Poisson

def test_laplacian_eigenvalues(grid):
    for (l, m) in [(1, 0), (3, -2), (12, 7)]:
        f = SphereField.harmonic(grid, l, m)
        assert_allclose(laplacian(f).coeffs, -l * (l + 1.0) * f.coeffs, atol=1e-13)


def test_laplacian_zero_mean(grid):
    rng = np.random.default_rng(23)
    f = random_field(grid, rng)
    assert abs(laplacian(f).mean()) < 1e-12


def test_poisson_single_mode(grid):
    for (l, m) in [(1, 0), (5, -4)]:
        rhs = SphereField.harmonic(grid, l, m, amplitude=-l * (l + 1.0))
        u = solve_poisson(rhs)
        expect = SphereField.harmonic(grid, l, m)
        assert_allclose(u.coeffs, expect.coeffs, atol=1e-12)


def test_poisson_linearity(grid):
    # -2 Y_10 - 6 Y_20 -> Y_10 + Y_20 by linearity of the mode solves
    c = np.zeros(num_coeffs(L))
    c[lm_index(1, 0)] = -2.0
    c[lm_index(2, 0)] = -6.0
    u = solve_poisson(SphereField(grid, coeffs=c))
    expect = np.zeros(num_coeffs(L))
    expect[lm_index(1, 0)] = 1.0
    expect[lm_index(2, 0)] = 1.0
    assert_allclose(u.coeffs, expect, atol=1e-12)


def test_poisson_residual_and_mean(grid):
    rng = np.random.default_rng(29)
    f = random_field(grid, rng)
    rhs = SphereField(grid, coeffs=f.coeffs - np.concatenate(([f.coeffs[0]], np.zeros(num_coeffs(L) - 1))))
    u = solve_poisson(rhs)
    assert abs(u.mean()) < 1e-14
    res = laplacian(u).coeffs - rhs.coeffs
    assert np.max(np.abs(res)) < 1e-10 * np.max(np.abs(rhs.coeffs))


def test_poisson_inverts_laplacian(grid):
    rng = np.random.default_rng(31)
    f = random_field(grid, rng)
    u = solve_poisson(laplacian(f))
    assert_allclose(u.coeffs[1:], f.coeffs[1:], atol=1e-10 * np.max(np.abs(f.coeffs)))
    assert abs(u.coeffs[0]) < 1e-12


def test_poisson_mean_guard(grid):
    with pytest.raises(ValueError):
        solve_poisson(SphereField.constant(grid, 1.0))
    # exactly zero right side passes and returns zero
    z = solve_poisson(SphereField.constant(grid, 0.0))
    assert np.max(np.abs(z.values)) == 0.0


# ---------------------------------------------------------------- Hessians

def _round_metric(grid, factor):
    g = np.zeros((2, 2) + grid.shape)
    g[0, 0] = factor
    g[1, 1] = factor * grid.sin_theta[:, None] ** 2
    return g


def test_hessian_round_metric_reduces(grid):
    rng = np.random.default_rng(37)
    f = random_field(grid, rng, lmax=10)
    g = _round_metric(grid, 4.0)  # r^2 circg has vanishing round derivative
    h = covariant_hessian(f, g)
    assert_allclose(h, sphere.round_hessian(f), atol=1e-10 * np.max(np.abs(h)))


def test_hessian_constant_field(grid):
    c = SphereField.constant(grid, 5.0)
    w = 1.0 + 0.1 * grid.x[:, None] * np.ones((1, grid.nlon))
    h = covariant_hessian(c, _round_metric(grid, w))
    assert np.max(np.abs(h)) < 1e-12


def test_hessian_trace_is_laplacian(grid):
    rng = np.random.default_rng(41)
    f = random_field(grid, rng, lmax=10)
    h = sphere.round_hessian(f)
    csc2 = grid.csc[:, None] ** 2
    tr = h[0, 0] + csc2 * h[1, 1]
    assert_allclose(tr, laplacian(f).values, atol=1e-9 * np.max(np.abs(tr)))


def _geodesic_second_difference(grid, f, w_amp, theta0, phi0, v, h):
    """Second difference of f along a geodesic of (1 + w_amp cos theta) circg."""

    def rhs(_, y):
        th, ph, vt, vp = y
        s, c = math.sin(th), math.cos(th)
        w = 1.0 + w_amp * c
        wt = -w_amp * s / w  # d log W / d theta
        gtt = 0.5 * wt
        gpp_t = -s * c - 0.5 * s * s * wt
        gtp = c / s + 0.5 * wt
        return [vt, vp, -gtt * vt * vt - gpp_t * vp * vp, -2.0 * gtp * vt * vp]

    vals = []
    for sgn in (1.0, -1.0):
        sol = solve_ivp(rhs, (0.0, sgn * h), [theta0, phi0, v[0], v[1]],
                        rtol=1e-12, atol=1e-12, dense_output=True)
        th, ph = sol.y[0, -1], sol.y[1, -1]
        vals.append(float(grid.synth_at(f.coeffs, th, ph)[0]))
    f0 = float(grid.synth_at(f.coeffs, theta0, phi0)[0])
    return (vals[0] - 2.0 * f0 + vals[1]) / h ** 2


def test_hessian_geodesic_oracle(grid):
    # conformally round metric, f = Y_10: geodesic second differences
    # converge at O(h^2) to H(v, v)
    w_amp = 0.1
    f = SphereField.harmonic(grid, 1, 0)
    w = 1.0 + w_amp * grid.x[:, None] * np.ones((1, grid.nlon))
    gs = _round_metric(grid, w)
    s = grid.sin_theta[:, None]
    c = grid.x[:, None]
    dg = np.zeros((2, 2, 2) + grid.shape)
    # D_k (W circg)_ij = (d_k W) circg_ij since circg is parallel
    wt = -w_amp * s * np.ones((1, grid.nlon))
    dg[0, 0, 0] = wt
    dg[0, 1, 1] = wt * s * s
    h2 = covariant_hessian(f, gs, dg)
    i, j = 6, 3
    th0, ph0 = grid.theta[i], grid.phi[j]
    v = np.array([0.6, 0.8 / grid.sin_theta[i]])
    target = (h2[0, 0, i, j] * v[0] ** 2 + 2.0 * h2[0, 1, i, j] * v[0] * v[1]
              + h2[1, 1, i, j] * v[1] ** 2)
    errs = []
    for h in (2e-2, 1e-2):
        approx = _geodesic_second_difference(grid, f, w_amp, th0, ph0, v, h)
        errs.append(abs(approx - target))
    rate = math.log2(errs[0] / errs[1])
    assert 1.7 < rate < 2.3
    richardson = None
    a1 = _geodesic_second_difference(grid, f, w_amp, th0, ph0, v, 1e-2)
    a2 = _geodesic_second_difference(grid, f, w_amp, th0, ph0, v, 5e-3)
    richardson = (4.0 * a2 - a1) / 3.0
    assert abs(richardson - target) < 1e-7


def test_hessian_fallback_metric_derivative(grid):
    # omitting dgslash must agree with closed-form samples for a
    # band-limited conformal factor
    rng = np.random.default_rng(43)
    f = random_field(grid, rng, lmax=8)
    w = 1.0 + 0.05 * grid.x[:, None] * np.ones((1, grid.nlon))
    gs = _round_metric(grid, w)
    s = grid.sin_theta[:, None]
    dg = np.zeros((2, 2, 2) + grid.shape)
    wt = -0.05 * s * np.ones((1, grid.nlon))
    dg[0, 0, 0] = wt
    dg[0, 1, 1] = wt * s * s
    ha = covariant_hessian(f, gs, dg)
    hb = covariant_hessian(f, gs)
    assert_allclose(ha, hb, atol=1e-9 * np.max(np.abs(ha)))


# ---------------------------------------------------------------- IO and resampling

def test_save_load_round_trip(tmp_path, grid):
    rng = np.random.default_rng(47)
    f = random_field(grid, rng)
    path = str(tmp_path / "field.json")
    sphere.save_field(f, path)
    g = sphere.load_field(path)
    assert g.grid.band_limit == L
    assert_allclose(g.coeffs, f.coeffs, atol=1e-12)


def test_resample(grid):
    rng = np.random.default_rng(53)
    f = random_field(grid, rng, lmax=7)
    big = SphereGrid(sphere.default_pad_limit(L))
    up = sphere.resample(f, big)
    back = sphere.resample(up, grid)
    assert_allclose(back.coeffs, f.coeffs, atol=1e-12)
    # values agree pointwise where the grids coincide in content
    assert abs(big.quad(up.values ** 2) - grid.quad(f.values ** 2)) < 1e-10


def test_pad_limit():
    assert sphere.default_pad_limit(15) == 23
