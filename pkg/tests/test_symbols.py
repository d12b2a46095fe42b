import numpy as np
import pytest
from numpy.testing import assert_allclose

from hypar.errors import (
    DegenerateFrequencyError,
    InvalidInputError,
    SingularViscosityError,
)
from hypar.symbols import (
    Frequency,
    PolarFrequency,
    assemble_full_symbol,
    assemble_h0,
    from_polar,
    to_polar,
    unit_direction,
)
from hypar.systems import ParamBox, SystemDefinition, get_example


def test_frequency_components_and_norm():
    z = Frequency(3.0, (4.0,), 12.0)
    assert z.as_tuple() == (3.0, 4.0, 12.0)
    assert z.norm == pytest.approx(13.0)
    assert z.scaled(2.0).as_tuple() == (6.0, 8.0, 24.0)
    assert Frequency.zero(3).as_tuple() == (0.0, 0.0, 0.0)


def test_from_components_validates_length():
    with pytest.raises(InvalidInputError):
        Frequency.from_components((1.0, 0.0, 0.0), 1)
    z = Frequency.from_components((1.0, 0.5, 0.25), 2)
    assert z.eta == (0.5,)


def test_polar_round_trip_machine_precision():
    z = Frequency(0.3, (-0.4,), 1.2)
    pf = to_polar(z)
    assert pf.radius == pytest.approx(z.norm, rel=0, abs=0)
    back = from_polar(pf)
    assert_allclose(back.as_tuple(), z.as_tuple(), rtol=0, atol=1e-16)
    assert pf.direction.norm == pytest.approx(1.0, abs=1e-15)


def test_polar_rejects_zero_and_negative():
    with pytest.raises(DegenerateFrequencyError):
        to_polar(Frequency(0.0, (), 0.0))
    with pytest.raises(InvalidInputError):
        PolarFrequency(direction=Frequency(1.0, (), 0.0), radius=-1.0)


def test_unit_direction_normalizes():
    z = unit_direction((2.0, 0.0, 0.0), 2)
    assert z.norm == pytest.approx(1.0)
    with pytest.raises(DegenerateFrequencyError):
        unit_direction((0.0, 0.0), 1)


def test_full_symbol_block_layout():
    entry = get_example("advdiff1d")
    sym = assemble_full_symbol(entry.system, entry.default_params, Frequency(1.0, (), 0.5))
    g = sym.matrix
    n = entry.system.n_state
    assert g.shape == (2 * n, 2 * n)
    assert_allclose(g[:n, :n], 0, atol=0)
    assert_allclose(g[:n, n:], np.eye(n), atol=0)
    assert_allclose(g[n:, :n], sym.zero_order, atol=0)
    assert_allclose(g[n:, n:], sym.first_order, atol=0)


def test_full_symbol_eigenvalues_solve_the_dispersion_quadratic():
    # For the scalar model the companion eigenvalues solve
    #   nu*mu^2 - a*mu - (i*tau + gamma) = 0
    # which has an explicit quadratic-formula solution.
    a, nu = 1.0, 1.0
    tau, gamma = 0.7, 0.3
    entry = get_example("advdiff1d")
    g = assemble_full_symbol(entry.system, (a, nu), Frequency(tau, (), gamma)).matrix
    mu = np.linalg.eigvals(g)
    disc = np.sqrt(a * a + 4.0 * nu * (1j * tau + gamma))
    expected = sorted([(a + disc) / (2 * nu), (a - disc) / (2 * nu)], key=lambda z: z.real)
    got = sorted(mu, key=lambda z: z.real)
    assert_allclose(got, expected, rtol=1e-14)


def test_full_symbol_checks_tangential_arity():
    entry = get_example("advdiff2d")
    with pytest.raises(InvalidInputError):
        assemble_full_symbol(entry.system, entry.default_params, Frequency(1.0, (), 0.0))


def test_zero_frequency_symbol_has_rank_n():
    # At frequency zero the companion matrix keeps rank N and the kernel has
    # the full complementary dimension (the zero eigenvalue is semi-simple).
    for name in ("advdiff1d", "advdiff2d", "wave2x2"):
        entry = get_example(name)
        n = entry.system.n_state
        g0 = assemble_full_symbol(
            entry.system, entry.default_params, Frequency.zero(entry.system.n_space)
        ).matrix
        assert np.linalg.matrix_rank(g0, tol=1e-10) == n
        eigs = np.linalg.eigvals(g0)
        near_zero = np.sum(np.abs(eigs) <= 1e-10)
        assert near_zero == n


def test_h0_limit_matrix_matches_scaling():
    entry = get_example("advdiff1d")
    p = entry.default_params
    z = Frequency(1.0, (), 0.2)
    h = assemble_h0(entry.system, p, z)
    assert_allclose(assemble_h0(entry.system, p, z.scaled(3.0)), 3.0 * h, rtol=1e-14)
    # scalar check: -A^{-1}(i tau + gamma) with a = 1
    assert_allclose(h, [[-(1j * 1.0 + 0.2)]], rtol=1e-15)


def test_singular_normal_viscosity_raises():
    sys_ = SystemDefinition(
        n_state=1,
        n_space=1,
        n_params=0,
        conv=lambda p, j: np.array([[1.0]]),
        visc=lambda p, j, k: np.array([[0.0]]),
        param_domain=ParamBox((), ()),
        name="degenerate",
    )
    with pytest.raises(SingularViscosityError):
        assemble_full_symbol(sys_, (), Frequency(1.0, (), 0.0))
