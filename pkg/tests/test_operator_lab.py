import csv
import math

import numpy as np
import pytest

from adhmc.errors import GridTooCoarse
from adhmc.harness.registry import registry
from adhmc.integrator import ExactFlow, LeapfrogConfig
from adhmc.models import GaussianDensity
from adhmc.operator_lab import (GridDensity, TransferOperator, apply_T, density_on_grid,
                                inner_product, iterate_Ta, l2_report, log_linear_fit, run_lab,
                                trapezoid_weights, uniform_grid, write_sequence_csv)
from oracles import normal_pdf

STD1 = GaussianDensity.isotropic(1)
Q_NODES = uniform_grid(-6.0, 6.0, 301)
P_NODES = uniform_grid(-5.0, 6.5, 301)


def bump(x, c, s):
    return np.exp(-0.5 * ((x - c) / s) ** 2)


@pytest.fixture(scope="module")
def asym_op():
    return TransferOperator(registry("bimodal_1d"), registry("asym_aux_1d"),
                            LeapfrogConfig(0.025, 40), Q_NODES, P_NODES)


@pytest.fixture(scope="module")
def gauss_op():
    nodes = uniform_grid(-7.0, 7.0, 281)
    return TransferOperator(STD1, STD1, ExactFlow(1.0), nodes, nodes)


def smooth_random(rng, nodes, n=4):
    c = rng.uniform(-2.5, 2.5, n)
    s = rng.uniform(0.4, 1.0, n)
    w = rng.uniform(0.2, 1.0, n)
    return GridDensity(nodes, sum(wi * bump(nodes, ci, si) for wi, ci, si in zip(w, c, s)))


def _rel_norm(x, ref, target):
    return l2_report(GridDensity(x.nodes, x.values - ref.values), target).norm / l2_report(ref, target).norm


def test_trapezoid_and_interpolation():
    nodes = uniform_grid(0.0, 1.0, 5)
    np.testing.assert_allclose(trapezoid_weights(nodes), [0.125, 0.25, 0.25, 0.25, 0.125])
    h = GridDensity(nodes, nodes**2)
    np.testing.assert_allclose(h([0.5, 0.6, -1.0, 2.0]), [0.25, 0.375, 0.0, 0.0])
    with pytest.raises(ValueError):
        GridDensity(nodes[::-1], nodes)


def test_fixed_point_of_both_operators(asym_op):
    f = asym_op.f
    assert _rel_norm(asym_op.apply_T(f), f, asym_op.target) <= 1e-3
    assert _rel_norm(asym_op.apply_T_adjoint(f), f, asym_op.target) <= 1e-3


def test_zero_maps_to_zero(asym_op):
    zero = GridDensity(Q_NODES, np.zeros_like(Q_NODES))
    np.testing.assert_array_equal(asym_op.apply_T(zero).values, 0.0)
    np.testing.assert_array_equal(asym_op.apply_T_adjoint(zero).values, 0.0)


def test_quarter_turn_against_dense_quadrature():
    nodes = uniform_grid(-7.0, 7.0, 351)
    h = GridDensity(nodes, bump(nodes, -1.5, 0.5) + 0.5 * bump(nodes, 1.0, 0.7))
    Th = apply_T(h, STD1, STD1, ExactFlow(math.pi / 2), nodes)
    # independent route: Q = p, P = -q in closed form, analytic h, fine Riemann sum over p
    p = np.linspace(-10.0, 10.0, 20001)
    dp = p[1] - p[0]
    h_fn = lambda x: bump(x, -1.5, 0.5) + 0.5 * bump(x, 1.0, 0.7)
    oracle = np.array([np.sum(h_fn(p) * normal_pdf(-q, 0.0, 1.0)) * dp for q in nodes])
    assert np.max(np.abs(Th.values - oracle)) <= 1e-3 * np.max(oracle)


def test_symmetric_aux_is_self_adjoint(gauss_op, rng):
    for _ in range(5):
        a = smooth_random(rng, gauss_op.q_nodes)
        b = smooth_random(rng, gauss_op.q_nodes)
        scale = l2_report(a, STD1).norm * l2_report(b, STD1).norm
        lhs = inner_product(gauss_op.apply_T(a), b, STD1)
        assert abs(lhs - inner_product(a, gauss_op.apply_T(b), STD1)) <= 1e-3 * scale


def test_adjoint_identity(asym_op, rng):
    target = asym_op.target
    for _ in range(5):
        a = smooth_random(rng, Q_NODES)
        b = smooth_random(rng, Q_NODES)
        scale = l2_report(a, target).norm * l2_report(b, target).norm
        lhs = inner_product(asym_op.apply_T(a), b, target)
        assert abs(lhs - inner_product(a, asym_op.apply_T_adjoint(b), target)) <= 1e-3 * scale


def test_asymmetric_aux_is_not_self_adjoint(asym_op):
    target = asym_op.target
    a = GridDensity(Q_NODES, bump(Q_NODES, -1.0, 0.4))
    b = GridDensity(Q_NODES, bump(Q_NODES, 0.7, 0.4))
    scale = l2_report(a, target).norm * l2_report(b, target).norm
    lhs = inner_product(asym_op.apply_T(a), b, target)
    assert abs(lhs - inner_product(a, asym_op.apply_T(b), target)) >= 1e-2 * scale
    assert abs(lhs - inner_product(a, asym_op.apply_T_adjoint(b), target)) <= 1e-3 * scale


def test_l2_report_examples(asym_op):
    f = asym_op.f
    rep = l2_report(f, asym_op.target, {"f": f})
    assert rep.norm_sq == pytest.approx(f.integral, rel=1e-12)
    assert rep.inner["f"] == pytest.approx(rep.norm_sq, rel=1e-12)
    rep2 = l2_report(f.scaled(2.0), asym_op.target)
    assert rep2.norm_sq == pytest.approx(4 * rep.norm_sq, rel=1e-12)
    assert rep2.integral == pytest.approx(2 * f.integral, rel=1e-12)


def test_l2_report_grid_refinement():
    target = registry("bimodal_1d")
    fn = lambda x: bump(x, 0.5, 0.6) + 0.3 * bump(x, -1.8, 0.5)
    coarse = GridDensity.from_function(uniform_grid(-6, 6, 601), fn)
    fine = GridDensity.from_function(uniform_grid(-6, 6, 2401), fn)
    a, b = l2_report(coarse, target), l2_report(fine, target)
    assert abs(a.norm_sq - b.norm_sq) <= 1e-4 * b.norm_sq
    assert abs(a.integral - b.integral) <= 1e-4 * b.integral


def test_norm_decreases_and_integral_is_conserved(asym_op):
    target = asym_op.target
    h = GridDensity(Q_NODES, bump(Q_NODES, 1.2, 0.5))
    for M in (asym_op.apply_T, asym_op.apply_T_adjoint):
        out = M(h)
        before, after = l2_report(h, target), l2_report(out, target)
        assert after.norm <= before.norm * (1 - 1e-2)
        assert abs(after.integral - before.integral) <= 1e-3 * before.integral
    f = asym_op.f
    assert l2_report(asym_op.apply_T(f), target).norm <= l2_report(f, target).norm * (1 + 1e-3)


def test_iteration_from_the_fixed_point_stays_put(asym_op):
    records = asym_op.iterate_Ta(asym_op.f.scaled(0.5), 5)
    dists = [d for _, _, d in records]
    norm = l2_report(asym_op.f.scaled(0.5), asym_op.target).norm
    assert max(dists) <= 2e-3 * norm


def test_iteration_converges_geometrically(asym_op):
    h0 = GridDensity(Q_NODES, bump(Q_NODES, 1.2, 0.5) + 0.3 * bump(Q_NODES, -2.0, 0.4))
    records = asym_op.iterate_Ta(h0, 30)
    assert [k for k, _, _ in records] == list(range(31))
    dists = np.array([d for _, _, d in records[1:]])
    assert np.all(np.diff(dists) < 0)
    assert log_linear_fit(np.arange(1, 31), dists)[2] >= 0.95
    integrals = np.array([rep.integral for _, rep, _ in records])
    np.testing.assert_allclose(integrals, h0.integral, rtol=1e-3)


def test_functional_iterate_matches_operator():
    target = STD1
    aux = registry("asym_aux_1d")
    nodes = uniform_grid(-6, 6, 121)
    h0 = GridDensity(nodes, bump(nodes, 1.0, 0.5))
    a = iterate_Ta(h0, 2, target, aux, LeapfrogConfig(0.05, 20), P_NODES)
    b = TransferOperator(target, aux, LeapfrogConfig(0.05, 20), nodes, P_NODES).iterate_Ta(h0, 2)
    assert [r[2] for r in a] == [r[2] for r in b]


def test_coarse_grid_warns():
    nodes = uniform_grid(-1.0, 1.0, 11)
    with pytest.warns(GridTooCoarse):
        TransferOperator(STD1, STD1, LeapfrogConfig(0.1, 10), nodes, nodes)


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        TransferOperator(GaussianDensity.isotropic(2), STD1, LeapfrogConfig(0.1, 10), Q_NODES, P_NODES)
    with pytest.raises(ValueError):
        TransferOperator(STD1, STD1, LeapfrogConfig(0.1, 10, -1), Q_NODES, P_NODES)
    with pytest.raises(ValueError):
        uniform_grid(1.0, 0.0, 10)


def test_density_on_grid_is_normalised():
    f = density_on_grid(registry("bimodal_1d"), Q_NODES)
    assert f.integral == pytest.approx(1.0, abs=1e-8)


def test_log_linear_fit_recovers_rate():
    ks = np.arange(1, 11)
    slope, intercept, r2 = log_linear_fit(ks, 3.0 * 0.8**ks)
    assert slope == pytest.approx(math.log(0.8)) and intercept == pytest.approx(math.log(3.0))
    assert r2 == pytest.approx(1.0)


def test_run_lab_and_csv(tmp_path):
    op, records = run_lab(STD1, registry("asym_aux_1d"), 3, nodes=121)
    path = tmp_path / "seq.csv"
    write_sequence_csv(path, records)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["k", "norm", "distance_to_fixed_point"]
    assert [int(r[0]) for r in rows[1:]] == [0, 1, 2, 3]
    assert float(rows[2][2]) == records[1][2]
