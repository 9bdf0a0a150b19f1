import numpy as np
import pytest

from phasegeo import core, objective as obj
from phasegeo.errors import CapacityError, DimensionError

from helpers import crandn, oracle_f, richardson_first, richardson_second


def hand_instance():
    rows = np.array([[1, 0], [0, 1], [1 / np.sqrt(2), 1 / np.sqrt(2)]], dtype=complex)
    x = np.array([1.0, 0.0], dtype=complex)
    return core.MeasurementEnsemble(core.GAUSSIAN, rows, np.abs(rows @ x), 0), x


def test_hand_instance_value():
    ens, _ = hand_instance()
    z = np.array([0.0, 1.0], dtype=complex)
    # (1/6) (1 + 1 + 0)
    assert obj.eval_f(ens, z) == pytest.approx(1 / 3, abs=1e-15)


def test_f_matches_loop_oracle(small_instance, rng):
    x, ens = small_instance
    for _ in range(5):
        z = crandn(rng, ens.n)
        assert obj.eval_f(ens, z) == pytest.approx(oracle_f(ens.rows, ens.magnitudes, z), rel=1e-12)


def test_zero_at_global_minimizers(small_instance):
    x, ens = small_instance
    assert obj.eval_f(ens, x) <= 1e-28
    assert obj.eval_f(ens, x * np.exp(1.234j)) <= 1e-28
    g = obj.wirtinger_grad(ens, x * np.exp(0.5j)).grad_z
    assert np.linalg.norm(g) <= 1e-12 * np.linalg.norm(x) ** 3


def test_gradient_zero_at_origin(small_instance):
    _, ens = small_instance
    assert np.all(obj.wirtinger_grad(ens, np.zeros(ens.n)).grad_z == 0)


def test_gradient_matches_finite_differences(small_instance, rng):
    x, ens = small_instance
    for _ in range(10):
        z, d = crandn(rng, ens.n), crandn(rng, ens.n)
        h = 1e-5 * max(1.0, np.linalg.norm(z))
        fd, drift = richardson_first(lambda t: obj.eval_f(ens, z + t * d), h)
        g = obj.wirtinger_grad(ens, z).grad_z
        exact = 2 * np.vdot(d, g).real
        assert drift <= 1e-6 * abs(exact)
        assert fd == pytest.approx(exact, rel=1e-6)


def test_hessian_form_matches_finite_differences(small_instance, rng):
    x, ens = small_instance
    for _ in range(10):
        z, d = crandn(rng, ens.n), crandn(rng, ens.n)
        h = 1e-3 * max(1.0, np.linalg.norm(z))
        # f is a quartic polynomial in t, so Richardson on the second difference is exact up to rounding
        fd, _ = richardson_second(lambda t: obj.eval_f(ens, z + t * d), h)
        assert fd == pytest.approx(obj.hessian_quadratic_form(ens, z, d), rel=1e-5)


def test_hessian_form_at_target():
    x = core.random_signal(6, 2)
    ens = core.gen_gaussian_ensemble(6, 80, x, 2)
    expected = 2 / ens.m * np.sum(2 * np.abs(ens.rows @ x) ** 4)
    assert obj.hessian_quadratic_form(ens, x, x) == pytest.approx(expected, rel=1e-12)


def test_hessian_form_homogeneous(small_instance, rng):
    _, ens = small_instance
    z, d = crandn(rng, ens.n), crandn(rng, ens.n)
    base = obj.hessian_quadratic_form(ens, z, d)
    for c in (-3.0, 0.5, 7.0):
        assert obj.hessian_quadratic_form(ens, z, c * d) == pytest.approx(c * c * base, rel=1e-12)


def test_flat_direction_on_target_circle(small_instance):
    x, ens = small_instance
    z = x * np.exp(0.3j)
    scale = obj.hessian_quadratic_form(ens, z, z)
    assert abs(obj.hessian_quadratic_form(ens, z, 1j * z)) <= 1e-12 * scale


def test_dense_blocks_structure_and_form(small_instance, rng):
    _, ens = small_instance
    z = crandn(rng, ens.n)
    w = obj.hessian_dense(ens, z)
    B, C = w.hess_B, w.hess_C
    assert np.linalg.norm(B - B.conj().T) <= 1e-14 * np.linalg.norm(B)
    assert np.linalg.norm(C - C.T) <= 1e-12 * np.linalg.norm(C)
    np.testing.assert_allclose(w.grad_z, obj.wirtinger_grad(ens, z).grad_z, rtol=1e-12, atol=1e-14)
    for _ in range(100):
        zz, d = crandn(rng, ens.n), crandn(rng, ens.n)
        wd = obj.hessian_dense(ens, zz)
        assert wd.quadratic_form(d) == pytest.approx(obj.hessian_quadratic_form(ens, zz, d), rel=1e-10)
        full = wd.full_hessian()
        v = np.concatenate([d, d.conj()])
        assert np.vdot(v, full @ v).real == pytest.approx(wd.quadratic_form(d), rel=1e-10)


def test_dense_at_origin(small_instance):
    _, ens = small_instance
    w = obj.hessian_dense(ens, np.zeros(ens.n))
    a = ens.rows.conj()
    expected = -(a.T * (ens.magnitudes_sq / ens.m)) @ ens.rows
    np.testing.assert_allclose(w.hess_B, expected, atol=1e-14)
    assert np.all(w.hess_C == 0)


def test_dense_cap():
    ens = core.gen_gaussian_ensemble(5, 10, np.ones(5), 0)
    with pytest.raises(CapacityError):
        obj.hessian_dense(ens, np.ones(5), cap=4)


def test_dimension_mismatch(small_instance):
    _, ens = small_instance
    with pytest.raises(DimensionError):
        obj.eval_f(ens, np.ones(ens.n + 1))
    with pytest.raises(DimensionError):
        obj.hessian_quadratic_form(ens, np.ones(ens.n), np.ones(2))


def test_phase_invariance(small_instance, rng):
    _, ens = small_instance
    for _ in range(1000):
        z = crandn(rng, ens.n)
        phi = rng.uniform(0, 2 * np.pi)
        f0 = obj.eval_f(ens, z)
        assert obj.eval_f(ens, z * np.exp(1j * phi)) == pytest.approx(f0, rel=1e-12)


def test_nonnegative(small_instance, rng):
    _, ens = small_instance
    assert all(obj.eval_f(ens, 3 * crandn(rng, ens.n)) >= 0 for _ in range(100))


def test_stacked_norm():
    assert obj.stacked_norm(np.array([3.0, 4.0j])) == pytest.approx(5 * np.sqrt(2))


# --- population objective ------------------------------------------------------


def test_population_at_origin():
    x = core.random_signal(5, 1, norm=1.7)
    assert obj.population_f(x, np.zeros(5)) == pytest.approx(1.7**4, rel=1e-14)
    np.testing.assert_array_equal(obj.population_grad(x, np.zeros(5)), 0)


def test_population_curvature_along_target():
    x = core.random_signal(5, 3, norm=1.3)
    nx4 = 1.3**4
    # at the origin the full second directional derivative along x is -4||x||^4
    assert obj.population_hessian_form(x, np.zeros(5), x) == pytest.approx(-4 * nx4, rel=1e-12)
    # on the saddle set S it is -2||x||^4
    g = np.random.default_rng(2)
    w = crandn(g, 5)
    w -= x * np.vdot(x, w) / np.vdot(x, x)
    z = w / np.linalg.norm(w) * 1.3 / np.sqrt(2)
    d = x * np.exp(1j * core.align_phase(z, x).phi)
    assert obj.population_hessian_form(x, z, d) == pytest.approx(-2 * nx4, rel=1e-12)


def test_population_gradient_vanishes_on_critical_set():
    x = core.random_signal(4, 5)
    assert np.linalg.norm(obj.population_grad(x, x * np.exp(2j))) <= 1e-14
    w = np.array([0, 1, 0, 0], dtype=complex)
    w -= x * np.vdot(x, w)
    z = w / np.linalg.norm(w) / np.sqrt(2)
    assert np.linalg.norm(obj.population_grad(x, z)) <= 1e-14


def test_population_derivatives_match_finite_differences(rng):
    x = crandn(rng, 4)
    for _ in range(10):
        z, d = crandn(rng, 4), crandn(rng, 4)
        fd1, _ = richardson_first(lambda t: obj.population_f(x, z + t * d), 1e-4)
        assert fd1 == pytest.approx(2 * np.vdot(d, obj.population_grad(x, z)).real, rel=1e-7)
        fd2, _ = richardson_second(lambda t: obj.population_f(x, z + t * d), 1e-3)
        assert fd2 == pytest.approx(obj.population_hessian_form(x, z, d), rel=1e-6)


def test_population_depends_on_norm_and_overlap(rng):
    x, z = crandn(rng, 5), crandn(rng, 5)
    q, _ = np.linalg.qr(crandn(rng, 5, 5))
    assert obj.population_f(q @ x, q @ z) == pytest.approx(obj.population_f(x, z), rel=1e-12)


def test_population_matches_large_sample():
    x = core.random_signal(4, 9)
    ens = core.gen_gaussian_ensemble(4, 1_000_000, x, seed=9)
    g = np.random.default_rng(3)
    for _ in range(3):
        z = crandn(g, 4)
        assert obj.eval_f(ens, z) == pytest.approx(obj.population_f(x, z), rel=0.02)


def test_real_gaussian_population_against_monte_carlo():
    g = np.random.default_rng(17)
    x = g.standard_normal(3)
    z = g.standard_normal(3)
    a = g.standard_normal((1_000_000, 3))
    emp = 0.5 * np.mean(((a @ x) ** 2 - (a @ z) ** 2) ** 2)
    assert emp == pytest.approx(obj.population_real_gaussian_f(x, z), rel=0.01)


def test_real_gaussian_saddles():
    # critical points of the real expectation off the axis of x sit at ||z|| = ||x|| / sqrt(3)
    x = np.array([1.0, 0.0])
    s = 1 / np.sqrt(3)
    h = 1e-6
    for z in (np.array([0.0, s]), np.array([0.0, -s])):
        for e in np.eye(2):
            d = (obj.population_real_gaussian_f(x, z + h * e) - obj.population_real_gaussian_f(x, z - h * e)) / (2 * h)
            assert abs(d) <= 1e-9
