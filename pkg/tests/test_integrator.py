import math

import numpy as np
import pytest

from adhmc.errors import NonFiniteState
from adhmc.integrator import (ExactFlow, LeapfrogConfig, PhasePoint, dQdq_norm,
                              exact_quadratic_flow, flow_jacobian, flow_map, hamiltonian, leapfrog)
from adhmc.linalg import block_flow_matrix
from adhmc.models import DensityModel, GaussianDensity, GaussianMixtureDensity
from oracles import leapfrog_ref, random_spd

STD1 = GaussianDensity.isotropic(1)


class Flat(DensityModel):
    def __init__(self, d):
        self.dim = d

    def log_density(self, x):
        return np.zeros(np.shape(x)[:-1])

    def grad_potential(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


class Runaway(DensityModel):
    """``U = -q^4`` pushes every trajectory to infinity."""

    dim = 1

    def log_density(self, x):
        return np.sum(np.asarray(x) ** 4, axis=-1)

    def grad_potential(self, x):
        return -4 * np.asarray(x, dtype=float) ** 3


def _mixture(rng, d=2, n=3):
    return GaussianMixtureDensity(
        [GaussianDensity(2 * rng.standard_normal(d), random_spd(rng, d, 4)) for _ in range(n)],
        rng.random(n) + 0.2)


def _asym_aux():
    return GaussianMixtureDensity([GaussianDensity([-1.0], 0.25), GaussianDensity([0.8], 0.49)],
                                  [0.35, 0.65])


def test_flat_target_drifts_in_a_straight_line():
    aux = GaussianDensity([0.5, -1.0], np.diag([2.0, 0.5]))
    p0 = np.array([0.3, 0.2])
    traj = leapfrog(Flat(2), aux, PhasePoint([1.0, 1.0], p0), LeapfrogConfig(0.1, 20))
    end = traj.points[-1]
    np.testing.assert_allclose(end.q, [1.0, 1.0] + 2.0 * aux.grad_potential(p0), atol=1e-12)
    np.testing.assert_array_equal(end.p, p0)


def test_harmonic_quarter_turn():
    traj = leapfrog(STD1, STD1, PhasePoint([1.0], [0.0]), LeapfrogConfig(0.001, 1571))
    np.testing.assert_allclose(traj.points[-1].q, [0.0], atol=1e-3)
    # T = 1.571 overshoots pi/2 by 2e-4, compare against the exact rotation instead
    T = 1.571
    np.testing.assert_allclose(traj.points[-1].q, [math.cos(T)], atol=1e-5)
    np.testing.assert_allclose(traj.points[-1].p, [-math.sin(T)], atol=1e-5)
    assert len(traj.points) == 1572 and len(traj.energies) == 1572


def test_leapfrog_matches_scalar_reference(rng):
    target = _mixture(rng)
    aux = GaussianDensity(np.zeros(2), random_spd(rng, 2))
    q0, p0 = rng.standard_normal(2), rng.standard_normal(2)
    end = leapfrog(target, aux, PhasePoint(q0, p0), LeapfrogConfig(0.05, 30)).points[-1]
    q_ref, p_ref = leapfrog_ref(target.grad_potential, aux.grad_potential, q0, p0, 0.05, 30)
    np.testing.assert_allclose(end.q, q_ref, atol=1e-13)
    np.testing.assert_allclose(end.p, p_ref, atol=1e-13)
    Q, P, div = flow_map(target, aux, LeapfrogConfig(0.05, 30), q0[None], p0[None])
    np.testing.assert_allclose(Q[0], q_ref, atol=1e-13)
    assert not div.any()


def test_round_trip_with_asymmetric_aux(rng):
    target = GaussianMixtureDensity([GaussianDensity([-1.5], 0.36), GaussianDensity([1.5], 0.36)],
                                    [0.5, 0.5])
    aux = _asym_aux()
    cfg = LeapfrogConfig(0.025, 100)
    q0, p0 = rng.standard_normal((50, 1)), aux.sample(rng, 50)
    Q, P, _ = flow_map(target, aux, cfg, q0, p0)
    Qb, Pb, _ = flow_map(target, aux, cfg.reversed(), Q, P)
    np.testing.assert_allclose(Qb, q0, atol=1e-10)
    np.testing.assert_allclose(Pb, p0, atol=1e-10)


def test_momentum_flip_is_not_a_reversal_for_asymmetric_aux(rng):
    # the property that holds for symmetric V and fails here
    target, aux = STD1, _asym_aux()
    cfg = LeapfrogConfig(0.05, 20)
    q0, p0 = np.array([[0.4]]), np.array([[0.9]])
    Q, P, _ = flow_map(target, aux, cfg, q0, p0)
    Qf, _, _ = flow_map(target, aux, cfg, Q, -P)
    assert abs(Qf[0, 0] - q0[0, 0]) > 1e-3


def test_divergence_reports_step():
    with pytest.raises(NonFiniteState) as info:
        leapfrog(Runaway(), STD1, PhasePoint([2.0], [0.0]), LeapfrogConfig(0.5, 50))
    assert 1 <= info.value.step <= 50
    Q, P, div = flow_map(Runaway(), STD1, LeapfrogConfig(0.5, 50),
                         np.array([[2.0], [0.0]]), np.zeros((2, 1)))
    np.testing.assert_array_equal(div, [True, False])
    assert np.all(np.isfinite(Q)) and Q[1, 0] == 0.0


def test_exact_flow_examples(rng):
    start = PhasePoint([1.0], [0.0])
    end = exact_quadratic_flow(STD1, STD1, 0.0, start)
    np.testing.assert_array_equal(end.q, start.q)
    end = exact_quadratic_flow(STD1, STD1, math.pi / 2, start)
    np.testing.assert_allclose(end.q, [0.0], atol=1e-12)
    np.testing.assert_allclose(end.p, [-1.0], atol=1e-12)


def test_exact_flow_conserves_energy(rng):
    target = GaussianDensity(rng.standard_normal(2), random_spd(rng, 2))
    aux = GaussianDensity(rng.standard_normal(2), random_spd(rng, 2))
    q, p = 2 * rng.standard_normal((100, 2)), 2 * rng.standard_normal((100, 2))
    end = exact_quadratic_flow(target, aux, 1.7, PhasePoint(q, p))
    np.testing.assert_allclose(hamiltonian(target, aux, end.q, end.p),
                               hamiltonian(target, aux, q, p), atol=1e-10)


def test_leapfrog_endpoint_second_order():
    target = GaussianDensity([0.5, -0.5], [[1.0, 0.3], [0.3, 0.5]])
    aux = GaussianDensity([0.0, 0.0], [[2.0, -0.2], [-0.2, 1.0]])
    q0, p0 = np.array([[1.0, 0.5]]), np.array([[-0.3, 0.8]])
    exact = exact_quadratic_flow(target, aux, 1.0, PhasePoint(q0, p0))
    errs = []
    for n in (20, 40):
        Q, P, _ = flow_map(target, aux, LeapfrogConfig(1.0 / n, n), q0, p0)
        errs.append(np.linalg.norm(np.hstack([Q - exact.q, P - exact.p])))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_leapfrog_energy_drift_second_order(rng):
    target = _mixture(rng)
    aux = GaussianDensity.isotropic(2)
    start = PhasePoint([0.3, -0.2], [1.0, 0.5])
    drifts = []
    for n in (100, 200):
        energies = leapfrog(target, aux, start, LeapfrogConfig(1.0 / n, n)).energies
        drifts.append(np.max(np.abs(np.array(energies) - energies[0])))
    assert 3.5 <= drifts[0] / drifts[1] <= 4.5


def test_step_size_refinement_reduces_error(rng):
    target = GaussianDensity([0.0, 0.0], random_spd(rng, 2, 5))
    aux = GaussianDensity([0.0, 0.0], random_spd(rng, 2, 5))
    q, p = rng.standard_normal((25, 2)), rng.standard_normal((25, 2))
    exact = exact_quadratic_flow(target, aux, 1.0, PhasePoint(q, p))
    sups = []
    for n in (10, 20, 40):
        Q, P, _ = flow_map(target, aux, LeapfrogConfig(1.0 / n, n), q, p)
        sups.append(np.max(np.linalg.norm(Q - exact.q, axis=1) + np.linalg.norm(P - exact.p, axis=1)))
    assert sups[0] > sups[1] > sups[2]


def test_flow_map_exact_and_reversed():
    q, p = np.array([[1.0]]), np.array([[0.0]])
    Q, P, div = flow_map(STD1, STD1, ExactFlow(math.pi / 2), q, p)
    np.testing.assert_allclose(np.hstack([Q, P]), [[0.0, -1.0]], atol=1e-12)
    Qb, Pb, _ = flow_map(STD1, STD1, ExactFlow(math.pi / 2, -1), Q, P)
    np.testing.assert_allclose(np.hstack([Qb, Pb]), [[1.0, 0.0]], atol=1e-12)


def test_jacobian_zero_time_is_identity():
    J = flow_jacobian(STD1, STD1, PhasePoint([0.3], [0.1]), LeapfrogConfig(0.01, 0))
    np.testing.assert_array_equal(J, np.eye(2))


def test_jacobian_quadratic_matches_block_flow(rng):
    target = GaussianDensity(np.zeros(2), random_spd(rng, 2))
    aux = GaussianDensity(np.zeros(2), random_spd(rng, 2))
    J = flow_jacobian(target, aux, PhasePoint([0.2, 0.1], [0.0, 0.3]), LeapfrogConfig(0.01, 100))
    Phi = block_flow_matrix(1.0, aux.precision, target.precision)
    assert np.abs(J - Phi).max() <= 0.01


def test_jacobian_variational_matches_finite_difference(rng):
    target = _mixture(rng)
    aux = GaussianDensity.isotropic(2)
    start = PhasePoint(rng.standard_normal(2), rng.standard_normal(2))
    cfg = LeapfrogConfig(0.02, 25)
    Jv = flow_jacobian(target, aux, start, cfg)
    Jf = flow_jacobian(target, aux, start, cfg, method="finite_difference")
    np.testing.assert_allclose(Jv, Jf, atol=1e-5)


@pytest.mark.parametrize("direction", [1, -1])
def test_jacobian_volume_preservation(rng, direction):
    target = _mixture(rng)
    aux = GaussianDensity.isotropic(2)
    cfg = LeapfrogConfig(0.01, 100, direction)
    for _ in range(5):
        start = PhasePoint(rng.standard_normal(2), rng.standard_normal(2))
        J = flow_jacobian(target, aux, start, cfg, method="finite_difference")
        assert abs(abs(np.linalg.det(J)) - 1.0) <= 1e-6


def test_dQdq_norm_examples():
    assert dQdq_norm(STD1, STD1, 0.0) == (pytest.approx(1.0), True)
    beta, below = dQdq_norm(STD1, STD1, math.pi / 3)
    assert beta == pytest.approx(0.5, abs=1e-12) and below
    # A = sqrt(M Lambda) = diag(1, 2) from target precision diag(1, 4)
    target = GaussianDensity(np.zeros(2), np.diag([1.0, 0.25]))
    beta, below = dQdq_norm(target, GaussianDensity.isotropic(2), math.pi / 4)
    assert beta == pytest.approx(math.sqrt(2) / 2, abs=1e-10)
    assert below
    assert not dQdq_norm(target, GaussianDensity.isotropic(2), 0.6 * math.pi)[1]


def test_config_validation():
    with pytest.raises(ValueError):
        LeapfrogConfig(0.0, 10)
    with pytest.raises(ValueError):
        LeapfrogConfig(0.1, 10, direction=0)
    cfg = LeapfrogConfig(0.025, 100)
    assert cfg.T == pytest.approx(2.5)
    assert cfg.reversed().signed_step == -0.025
