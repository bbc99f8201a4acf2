import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from teichkit import (
    BeltramiCoefficient,
    DomainError,
    DomainTag,
    HolomorphicFunction,
    ainf_norm,
    analytic_besov_norm,
    ap_norm,
    cayley,
    hyperbolic_density,
    mp_norm,
)
from teichkit.domains import ComplexGrid, cayley_inverse, cayley_map


def closed_form_phi(k, r):
    """Bers image of k chi_{rD}: -6 k r^2 / (z^2 - k r^2)^2 on the exterior."""
    a = k * r * r

    def phi(z):
        return -6.0 * a / (z * z - a) ** 2

    return phi


def exterior_series(fn, rho=2.0, orders=range(-24, 1)):
    return HolomorphicFunction.from_callable_on_circle(
        fn, 0.0, rho, orders, r_inner=1.0, r_outer=math.inf,
        domain=DomainTag.EXTERIOR_DISK)


# ---------------------------------------------------------------------------
# hyperbolic density


def test_density_values():
    assert hyperbolic_density(DomainTag.UNIT_DISK, 0j) == pytest.approx(2.0)
    assert hyperbolic_density(DomainTag.UPPER_HALF_PLANE, 1j) == pytest.approx(1.0)
    assert hyperbolic_density(DomainTag.UNIT_DISK, 0.9) == pytest.approx(2 / 0.19)
    assert hyperbolic_density(DomainTag.EXTERIOR_DISK, 2.0) == pytest.approx(2 / 3)


def test_density_rejects_bad_points():
    with pytest.raises(DomainError):
        hyperbolic_density(DomainTag.UNIT_DISK, 1.0 + 0j)
    with pytest.raises(DomainError):
        hyperbolic_density(DomainTag.UPPER_HALF_PLANE, -1j)
    with pytest.raises(DomainError):
        hyperbolic_density(DomainTag.PLANE, 0j)


def test_density_cayley_compatibility():
    # rho_U(H(z)) |H'(z)| = rho_D(z)
    z = 0.3 + 0.4j
    lhs = hyperbolic_density(DomainTag.UPPER_HALF_PLANE, cayley_map(z)) * \
        abs(2j / (z - 1) ** 2)
    assert lhs == pytest.approx(hyperbolic_density(DomainTag.UNIT_DISK, z))


# ---------------------------------------------------------------------------
# mp_norm


def test_mp_norm_zero():
    rep = mp_norm(BeltramiCoefficient.zero(), 2)
    assert rep.value == 0.0
    assert not rep.divergent


def test_mp_norm_closed_form():
    # |k| (pi r^2/(1-r^2))^{1/p}, cross-checked against direct quadrature
    mu = BeltramiCoefficient.constant_disk(0.3, 0.5)
    rep = mp_norm(mu, 2)
    exact = 0.3 * math.sqrt(math.pi * 0.25 / 0.75)
    assert exact == pytest.approx(0.30700, abs=5e-6)
    assert rep.value == pytest.approx(exact, abs=1e-3)
    oracle, _ = integrate.quad(
        lambda s: 0.3 ** 2 * 2 * math.pi * s / (1 - s * s) ** 2, 0.0, 0.5)
    assert rep.value == pytest.approx(oracle ** 0.5, abs=1e-3)


@pytest.mark.parametrize("k,r,p", [(0.3, 0.3, 1.0), (0.2, 0.7, 2.0),
                                   (0.1, 0.45, 3.0)])
def test_mp_norm_family(k, r, p):
    rep = mp_norm(BeltramiCoefficient.constant_disk(k, r), p)
    exact = k * (math.pi * r * r / (1 - r * r)) ** (1 / p)
    assert rep.value == pytest.approx(exact, abs=1e-3)
    assert rep.error_estimate >= abs(rep.refinements[-1][1] - rep.refinements[-2][1])


def test_mp_norm_constant_divergent():
    mu = BeltramiCoefficient(DomainTag.UNIT_DISK,
                             lambda z: np.full_like(z, 0.3), math.inf, 0.3)
    rep = mp_norm(mu, 2)
    assert rep.divergent
    assert len(rep.refinements) <= 3
    vals = [v for _, v in rep.refinements]
    assert vals[1] > 1.1 * vals[0] and vals[2] > 1.1 * vals[1]


def test_mp_norm_rejects():
    with pytest.raises(ValueError):
        mp_norm(BeltramiCoefficient.zero(), 0.5)
    with pytest.raises(DomainError):
        mp_norm(BeltramiCoefficient.zero(DomainTag.PLANE), 2)


def test_mp_norm_halfplane_matches_disk_transport():
    mu = BeltramiCoefficient.constant_disk(0.25, 0.5)
    mu_u = cayley(mu, "DiskToHalfPlane")
    a = mp_norm(mu, 2).value
    b = mp_norm(mu_u, 2).value
    assert b == pytest.approx(a, rel=1e-6)


@settings(max_examples=20, deadline=None)
@given(c=st.floats(min_value=0.05, max_value=0.95))
def test_mp_norm_scaling(c):
    mu = BeltramiCoefficient.constant_disk(0.4, 0.5)
    base = mp_norm(mu, 2).value
    assert mp_norm(mu.scaled(c), 2).value == pytest.approx(c * base, rel=1e-9)


# ---------------------------------------------------------------------------
# A_inf / A_p on the exterior disk


def test_ainf_zero_and_constant():
    zero = HolomorphicFunction.zero(DomainTag.EXTERIOR_DISK)
    assert ainf_norm(zero).value == 0.0
    const = HolomorphicFunction([0], [1.0], domain=DomainTag.EXTERIOR_DISK)
    assert ainf_norm(const).divergent


def test_ainf_rejects_growth():
    lin = HolomorphicFunction([1], [1.0], domain=DomainTag.EXTERIOR_DISK)
    with pytest.raises(ValueError):
        ainf_norm(lin)


def test_ainf_closed_form_family():
    phi = exterior_series(closed_form_phi(0.3, 0.5))
    rep = ainf_norm(phi)
    # dense two-resolution sampling oracle
    fn = closed_form_phi(0.3, 0.5)
    best = 0.0
    for s in np.concatenate([1 + np.geomspace(1e-6, 9, 2000),
                             np.geomspace(10, 3000, 400)]):
        th = np.linspace(0, np.pi / 2, 361)
        z = s * np.exp(1j * th)
        best = max(best, ((s * s - 1) ** 2 * np.abs(fn(z))).max())
    assert not rep.divergent
    assert rep.value == pytest.approx(best, rel=1e-2)


def test_ap_norm_against_quadrature_oracle():
    fn = closed_form_phi(0.3, 0.5)
    phi = exterior_series(fn)

    def oracle(p):
        def ring(s):
            th = np.linspace(0, 2 * np.pi, 2049)[:-1]
            z = s * np.exp(1j * th)
            vals = np.abs(fn(z)) ** p * (s * s - 1) ** (2 * p - 2) * s
            return vals.mean() * 2 * np.pi

        val, _ = integrate.quad(ring, 1.0, 400.0, limit=400)
        return val ** (1 / p)

    for p in (1.0, 2.0):
        rep = ap_norm(phi, p)
        assert not rep.divergent
        assert rep.value == pytest.approx(oracle(p), rel=1e-3)


def test_ap_zero_and_range():
    zero = HolomorphicFunction.zero(DomainTag.EXTERIOR_DISK)
    assert ap_norm(zero, 2).value == 0.0
    with pytest.raises(ValueError):
        ap_norm(zero, 0.9)


def test_ainf_ap_embedding_ratio_bounded():
    # sup-norm/A_p ratio stays bounded over the (k, r) family
    ratios = []
    for k in (0.1, 0.2, 0.3):
        for r in (0.3, 0.5, 0.7):
            phi = exterior_series(closed_form_phi(k, r))
            ai = ainf_norm(phi)
            a2 = ap_norm(phi, 2)
            assert not ai.divergent and not a2.divergent
            ratios.append(ai.value / a2.value)
    assert max(ratios) < 50.0


# ---------------------------------------------------------------------------
# analytic Besov


def test_besov_linear_and_quadratic():
    phi1 = HolomorphicFunction([1], [1.0])
    phi2 = HolomorphicFunction([2], [1.0])
    assert analytic_besov_norm(phi1, 2).value == pytest.approx(
        math.sqrt(math.pi), abs=5e-4)
    assert analytic_besov_norm(phi2, 2).value == pytest.approx(
        math.sqrt(2 * math.pi), abs=1e-3)


def test_besov_constant_and_range():
    const = HolomorphicFunction([0], [5.0])
    assert analytic_besov_norm(const, 2).value == 0.0
    with pytest.raises(ValueError):
        analytic_besov_norm(const, 1.0)


def test_besov_p_variants_against_quadrature():
    phi = HolomorphicFunction([1], [1.0])
    for p in (1.5, 3.0):
        val, _ = integrate.quad(
            lambda s: 2 * math.pi * s * (1 - s * s) ** (p - 2), 0.0, 1.0)
        assert analytic_besov_norm(phi, p).value == pytest.approx(
            val ** (1 / p), rel=2e-3)


def test_besov_cayley_invariance():
    phi = HolomorphicFunction([1], [1.0])
    phi_u = cayley(phi, "DiskToHalfPlane")
    a = analytic_besov_norm(phi, 2).value
    b = analytic_besov_norm(phi_u, 2).value
    assert b == pytest.approx(a, rel=1e-2)


# ---------------------------------------------------------------------------
# Cayley transform


def test_cayley_points():
    assert cayley(0j, "DiskToHalfPlane") == pytest.approx(1j)
    assert cayley(complex(-1), "DiskToHalfPlane") == pytest.approx(0j)
    assert cayley(-1j, "DiskToHalfPlane") == pytest.approx(1.0 + 0j)
    with pytest.raises(DomainError):
        cayley(1.0 + 0j, "DiskToHalfPlane")


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-0.7, 0.7), y=st.floats(-0.7, 0.7))
def test_cayley_involution(x, y):
    z = complex(x, y)
    if abs(z) >= 0.999:
        return
    assert abs(cayley_inverse(cayley_map(z)) - z) < 1e-12


def test_cayley_beltrami_preserves_modulus():
    mu = BeltramiCoefficient.constant_disk(0.3, 0.5)
    mu_u = cayley(mu, "DiskToHalfPlane")
    w = cayley_map(np.array([0.1 + 0.2j, 0.4j, -0.3 + 0.1j]))
    assert np.abs(np.abs(mu_u.eval(w)) - 0.3).max() < 1e-12
    back = cayley(mu_u, "HalfPlaneToDisk")
    z = np.array([0.2 + 0.1j, 0.3j])
    assert np.abs(back.eval(z) - mu.eval(z)).max() < 1e-12


# ---------------------------------------------------------------------------
# HolomorphicFunction basics


def test_series_derivative_matches_finite_difference():
    phi = HolomorphicFunction([-3, -1, 0, 2], [0.2j, 1.0, 0.5, 0.1],
                              r_inner=0.5, r_outer=10.0)
    z = np.array([1.0 + 0.5j, 2.0 - 1.0j])
    h = 1e-5
    fd = (phi.eval(z + h) - phi.eval(z - h)) / (2 * h)
    assert np.abs(phi.eval(z, der=1) - fd).max() / np.abs(fd).max() < 1e-6


def test_series_identity_roundtrip():
    f = HolomorphicFunction.from_callable_on_circle(
        lambda z: z + 0.075 / z, 0.0, 2.0, range(-8, 3))
    assert f.coefficient(1) == pytest.approx(1.0, abs=1e-10)
    assert f.coefficient(-1) == pytest.approx(0.075, abs=1e-10)
    assert abs(f.coefficient(0)) < 1e-12


def test_grid_serialization_roundtrip():
    vals = (np.arange(16, dtype=float).reshape(4, 4)
            + 1j * np.arange(16, dtype=float).reshape(4, 4) ** 2)
    g = ComplexGrid(0.5 + 0.25j, 2.0, vals)
    d = g.to_json_dict()
    g2 = ComplexGrid.from_json_dict(d)
    assert g2.center == g.center and g2.half_width == g.half_width
    assert np.array_equal(g2.values, g.values)


def test_grid_validation():
    with pytest.raises(ValueError):
        ComplexGrid(0.0, 1.0, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        ComplexGrid(0.0, 1.0, np.full((4, 4), np.nan))
