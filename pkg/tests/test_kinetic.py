import math
from fractions import Fraction

import numpy as np
import pytest

from wavekin.kinetic import (
    KineticConfig,
    SpectrumFn,
    SpectrumInstabilityError,
    collision_factor,
    collision_integral,
    default_phi_const,
    evolve_spectrum,
    kernel_T,
    kinetic_rhs,
    kz_exponents,
    manifold_samples,
    stationarity_scan,
    unit_ball_volume,
    x_of_sigma,
    zakharov_bracket,
)

CFG = KineticConfig(k_min=0.5, k_max=2.0, m=0.0, damping_eps=1.0, eps4=1.0,
                    n_k3=2048, n_theta=64, seed=3)


class TestKernel:
    def test_m0_constant(self):
        want = 1.0 / (CFG.phi_const * 4.0)
        assert np.isclose(kernel_T(1.0, 0.3, 2.2, 5.0, CFG), want)
        assert np.isclose(kernel_T(9.0, 0.1, 0.1, 0.1, CFG), want)

    def test_homogeneity_degree_minus_m(self):
        cfg = KineticConfig(k_min=0.5, k_max=2.0, m=2.0, damping_eps=0.7,
                            eps4=1.0, seed=0)
        args = (0.9, 1.7, 0.4, 2.5)
        lam = 3.7
        scaled = kernel_T(*(lam * a for a in args), cfg)
        assert np.isclose(scaled, lam ** (-2.0) * kernel_T(*args, cfg), rtol=1e-12)

    def test_symmetries(self):
        cfg = KineticConfig(k_min=0.5, k_max=2.0, m=1.5, eps4=1.0, seed=0)
        a = kernel_T(0.9, 1.7, 0.4, 2.5, cfg)
        assert a == kernel_T(0.9, 0.4, 1.7, 2.5, cfg)        # k1 <-> k2
        assert a == kernel_T(1.7, 0.9, 2.5, 0.4, cfg)        # (k,k3) <-> (k1,k2)

    def test_zero_denominator(self):
        cfg = KineticConfig(k_min=0.5, k_max=2.0, m=2.0, eps4=1.0, seed=0)
        with pytest.raises(ZeroDivisionError):
            kernel_T(0.0, 0.0, 0.0, 0.0, cfg)

    def test_phi_const_default_is_unit_ball(self):
        assert np.isclose(default_phi_const(2), 4.0 * math.pi / 3.0)
        assert np.isclose(unit_ball_volume(1), 2.0)


class TestCollisionFactor:
    def test_flat_zero(self):
        assert collision_factor(0.7, 0.7, 0.7, 0.7) == 0.0

    def test_arithmetic_example(self):
        assert collision_factor(1.0, 2.0, 3.0, 4.0) == 10.0

    def test_rj_inverse_lambda_on_shell(self):
        # rectangle k=(1,0), k3=(2,1), k1=(1,1), k2=(2,0): lam = (1,5;2,4)
        c = 1.7
        assert abs(collision_factor(c / 1, c / 2, c / 4, c / 5)) < 1e-15

    def test_pair_exchange_antisymmetry(self):
        rng = np.random.default_rng(0)
        nk, n1, n2, n3 = rng.uniform(0.5, 2.0, 4)
        assert np.isclose(collision_factor(n1, nk, n3, n2),
                          -collision_factor(nk, n1, n2, n3))


class TestBracketAndExponents:
    def test_x_zero_always_vanishes(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            k, k1, k2, k3 = rng.uniform(0.1, 5.0, 4)
            assert abs(zakharov_bracket(0.0, k, k1, k2, k3)) <= 1e-12

    def test_x_two_on_shell(self):
        assert abs(zakharov_bracket(2.0, 1.0, 2.0, 1.0, 2.0)) <= 1e-12
        # lattice rectangle moduli (1, sqrt5; sqrt2, 2)
        assert abs(zakharov_bracket(2.0, 1.0, math.sqrt(2), 2.0,
                                    math.sqrt(5))) <= 1e-12

    def test_x_of_sigma(self):
        assert x_of_sigma(-4.0 / 3.0, 0, 2) == pytest.approx(0.0)
        assert x_of_sigma(-2.0, 0, 2) == pytest.approx(2.0)
        assert x_of_sigma(0.0, 0, 0) == pytest.approx(2.0)

    def test_kz_exponents_exact(self):
        e = kz_exponents(2, 0)
        assert (e.kz1, e.kz2) == (Fraction(-4, 3), Fraction(-2))
        e = kz_exponents(2, 2)
        assert (e.kz1, e.kz2) == (Fraction(-2), Fraction(-8, 3))
        e = kz_exponents(3, 0)
        assert (e.kz1, e.kz2) == (Fraction(-7, 3), Fraction(-3))
        assert e.rj == (Fraction(0), Fraction(-2))


class TestSpectrumFn:
    def test_power_law_global(self):
        n = SpectrumFn.power_law(2.0, -1.5)
        vals, valid = n.evaluate(np.array([0.01, 1.0, 100.0]))
        assert valid.all()
        assert np.allclose(vals, 2.0 * np.array([0.01, 1.0, 100.0]) ** -1.5)

    def test_grid_loglog_interp_exact_on_power_law(self):
        nodes = np.geomspace(0.1, 10, 40)
        n = SpectrumFn.from_grid(nodes, 3.0 * nodes ** -2.0)
        probe = np.geomspace(0.11, 9.5, 17)
        vals, valid = n.evaluate(probe)
        assert valid.all()
        assert np.allclose(vals, 3.0 * probe ** -2.0, rtol=1e-12)

    def test_grid_rejects_outside(self):
        nodes = np.geomspace(0.5, 2.0, 8)
        n = SpectrumFn.from_grid(nodes, np.ones(8))
        _, valid = n.evaluate(np.array([0.1, 1.0, 3.0]))
        assert list(valid) == [False, True, False]

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            SpectrumFn.from_grid(np.array([0.0, 1.0]), np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            SpectrumFn.from_grid(np.array([1.0, 2.0]), np.array([1.0, -1.0]))
        with pytest.raises(ValueError):
            SpectrumFn.power_law(0.0, -2.0)


class TestManifold:
    def test_rectangle_parametrization_consistency(self):
        samples = manifold_samples(1.3, CFG)
        kvec = np.array([1.3, 0.0])
        c = 0.5 * (kvec[None, :] + samples.k3)
        r = 0.5 * np.linalg.norm(samples.k3 - kvec[None, :], axis=1)
        d1 = np.linalg.norm(samples.k1 - c[:, None, :], axis=2)
        d2 = np.linalg.norm(samples.k2 - c[:, None, :], axis=2)
        assert np.allclose(d1, r[:, None], rtol=1e-10)
        assert np.allclose(d2, r[:, None], rtol=1e-10)
        lhs = 1.3 ** 2 + np.linalg.norm(samples.k3, axis=1) ** 2
        rhs = (np.linalg.norm(samples.k1, axis=2) ** 2
               + np.linalg.norm(samples.k2, axis=2) ** 2)
        assert np.allclose(rhs, lhs[:, None], rtol=1e-10)

    def test_momentum_exact(self):
        samples = manifold_samples(0.8, CFG)
        kvec = np.array([0.8, 0.0])
        total = samples.k1 + samples.k2
        want = kvec[None, None, :] + samples.k3[:, None, :]
        assert np.allclose(total, want, rtol=1e-12)

    def test_d3_unsupported(self):
        cfg = KineticConfig(k_min=0.5, k_max=2.0, d=3, eps4=1.0, seed=0)
        with pytest.raises(NotImplementedError):
            manifold_samples(1.0, cfg)


class TestCollisionIntegral:
    def test_rj_flat_exactly_zero(self):
        est = collision_integral(1.0, SpectrumFn.power_law(2.5, 0.0), CFG)
        assert est.value == 0.0

    def test_rj_inverse_square_zero_to_roundoff(self):
        est = collision_integral(1.0, SpectrumFn.power_law(1.0, -2.0), CFG)
        assert abs(est.value) < 1e-12

    def test_eps4_zero_short_circuit(self):
        cfg = KineticConfig(k_min=0.5, k_max=2.0, eps4=0.0, seed=0)
        est = collision_integral(1.0, SpectrumFn.power_law(1.0, -1.0), cfg)
        assert est.value == 0.0 and est.stderr == 0.0

    def test_grid_rejection_reported(self):
        nodes = np.geomspace(0.5, 2.0, 32)
        n = SpectrumFn.from_grid(nodes, nodes ** -1.0)
        est = collision_integral(1.0, n, CFG)
        assert 0.0 < est.rejected_fraction < 1.0

    def test_deterministic_given_seed(self):
        n = SpectrumFn.power_law(1.0, -1.2)
        a = collision_integral(1.0, n, CFG)
        b = collision_integral(1.0, n, CFG)
        assert a.value == b.value and a.stderr == b.stderr


class TestScan:
    def test_dip_at_kz_exponent(self):
        cfg = KineticConfig(k_min=0.5, k_max=2.0, m=0.0, damping_eps=1.0,
                            eps4=1.0, n_k3=8192, n_theta=256, seed=7,
                            k3_radius=1000.0, r_lo_factor=1e-5)
        kz1 = -4.0 / 3.0
        scan = stationarity_scan([kz1 - 0.25, kz1, kz1 + 0.25], 1.0, cfg)
        assert abs(scan.residuals[1]) < abs(scan.residuals[0])
        assert abs(scan.residuals[1]) < abs(scan.residuals[2])
        assert scan.dip_sigma == pytest.approx(kz1)

    def test_rj_residuals_zero(self):
        scan = stationarity_scan([0.0, -2.0], 1.0, CFG)
        assert abs(scan.residuals[0]) == 0.0
        assert abs(scan.residuals[1]) < 1e-12

    def test_separation_uses_common_random_numbers(self):
        scan = stationarity_scan([-1.5, -4.0 / 3.0], 1.0, CFG)
        sep, err = scan.separation(0, 1)
        naive = math.hypot(scan.stderrs[0], scan.stderrs[1])
        assert err <= naive  # pairing cannot increase the error


class TestKineticRhs:
    def test_linear_balance_when_eps4_zero(self):
        cfg = KineticConfig(k_min=0.5, k_max=2.0, eps4=0.0, seed=0)
        n = SpectrumFn.power_law(0.3, 0.0)   # n = 0.3 everywhere
        gam = lambda k: 2.0
        bsq = lambda k: 2.0 * 2.0 * 0.3      # balance: b^2 = 2 gamma n
        rate, err = kinetic_rhs(1.0, n, gam, bsq, cfg)
        assert rate == pytest.approx(0.0)

    def test_flat_spectrum_collision_drops(self):
        n = SpectrumFn.power_law(0.5, 0.0)
        rate, _ = kinetic_rhs(1.0, n, lambda k: 1.0, lambda k: 0.0, CFG)
        assert rate == pytest.approx(-2.0 * 0.5)


class TestEvolve:
    def test_relaxation_to_linear_balance(self):
        cfg = KineticConfig(k_min=0.5, k_max=2.0, eps4=0.0, seed=0)
        nodes = np.geomspace(0.5, 2.0, 48)
        n0 = SpectrumFn.from_grid(nodes, 0.05 * np.ones(48))
        gam = lambda k: 1.0
        bsq = lambda k: 0.4
        out = evolve_spectrum(n0, gam, bsq, cfg, dt=0.05, steps=200)
        want = 0.4 / 2.0
        assert np.allclose(out.history[-1], want, rtol=1e-3)
        # exponential approach at rate 2 gamma
        mid = out.history[40]
        analytic = want + (0.05 - want) * np.exp(-2.0 * 40 * 0.05)
        assert np.allclose(mid, analytic, rtol=1e-2)

    def test_rj_initial_data_stays_fixed(self):
        cfg = KineticConfig(k_min=0.5, k_max=2.0, eps4=1.0, n_k3=512,
                            n_theta=32, seed=5)
        nodes = np.geomspace(0.5, 2.0, 40)
        n0 = SpectrumFn.from_grid(nodes, nodes ** -2.0)
        out = evolve_spectrum(n0, lambda k: 0.0, lambda k: 0.0, cfg,
                              dt=0.05, steps=5)
        drift = np.abs(out.history[-1] / out.history[0] - 1.0).max()
        assert drift < 1e-8

    def test_instability_detected(self):
        cfg = KineticConfig(k_min=0.5, k_max=2.0, eps4=0.0, seed=0)
        nodes = np.geomspace(0.5, 2.0, 32)
        n0 = SpectrumFn.from_grid(nodes, np.ones(32))
        with pytest.raises(SpectrumInstabilityError):
            evolve_spectrum(n0, lambda k: 0.0, lambda k: 1e6, cfg,
                            dt=10.0, steps=10, bound=1e8)

    def test_clamp_counted(self):
        cfg = KineticConfig(k_min=0.5, k_max=2.0, eps4=0.0, seed=0)
        nodes = np.geomspace(0.5, 2.0, 32)
        n0 = SpectrumFn.from_grid(nodes, 1e-10 * np.ones(32))
        out = evolve_spectrum(n0, lambda k: 50.0, lambda k: 0.0, cfg,
                              dt=0.1, steps=5, floor=1e-12)
        assert out.clamp_count > 0

    def test_needs_enough_nodes(self):
        cfg = KineticConfig(k_min=0.5, k_max=2.0, eps4=0.0, seed=0)
        nodes = np.geomspace(0.5, 2.0, 8)
        n0 = SpectrumFn.from_grid(nodes, np.ones(8))
        with pytest.raises(ValueError):
            evolve_spectrum(n0, lambda k: 1.0, lambda k: 1.0, cfg, 0.1, 2)
