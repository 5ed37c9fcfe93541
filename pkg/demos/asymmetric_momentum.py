"""Why an asymmetric momentum distribution needs the alternating-direction kernel.

With a symmetric kinetic energy, flipping the momentum at the end of a
trajectory and integrating again returns to the start, so one forward motion
is a reversible move. With an asymmetric auxiliary that trick fails, and the
one-directional transfer operator stops being self-adjoint. Following each
forward motion with a backward one restores the adjoint structure and the
alternating operator contracts towards the target density.

Run: ``python demos/asymmetric_momentum.py``
"""

import numpy as np

from adhmc.harness.registry import registry
from adhmc.integrator import LeapfrogConfig, flow_map
from adhmc.models import GaussianDensity
from adhmc.operator_lab import GridDensity, TransferOperator, inner_product, l2_report, log_linear_fit, uniform_grid


def main():
    target = registry("bimodal_1d")
    aux = registry("asym_aux_1d")
    sym = GaussianDensity.isotropic(1)
    cfg = LeapfrogConfig(0.025, 40)
    q0, p0 = np.array([[0.4]]), np.array([[0.9]])

    print("momentum flip after one motion, then the same motion again:")
    for name, v in (("symmetric N(0,1)", sym), ("asymmetric mixture", aux)):
        Q, P, _ = flow_map(target, v, cfg, q0, p0)
        Qf, _, _ = flow_map(target, v, cfg, Q, -P)
        Qb, _, _ = flow_map(target, v, cfg.reversed(), Q, P)
        print(f"  {name:20s} flip returns to {Qf[0, 0]:+.6f}, reversed motion to {Qb[0, 0]:+.6f}"
              f" (start {q0[0, 0]:+.1f})")

    q_nodes, p_nodes = uniform_grid(-6, 6, 301), uniform_grid(-5, 6.5, 301)
    op = TransferOperator(target, aux, cfg, q_nodes, p_nodes)
    a = GridDensity(q_nodes, np.exp(-0.5 * ((q_nodes + 1) / 0.4) ** 2))
    b = GridDensity(q_nodes, np.exp(-0.5 * ((q_nodes - 0.7) / 0.4) ** 2))
    lhs = inner_product(op.apply_T(a), b, target)
    print("\ninner products in L2(1/f):")
    print(f"  <T a, b>      = {lhs:.6f}")
    print(f"  <a, T b>      = {inner_product(a, op.apply_T(b), target):.6f}   (not self-adjoint)")
    print(f"  <a, T^dag b>  = {inner_product(a, op.apply_T_adjoint(b), target):.6f}   (adjoint)")

    h0 = GridDensity(q_nodes, np.exp(-0.5 * ((q_nodes - 1.2) / 0.5) ** 2))
    records = op.iterate_Ta(h0, 20)
    print("\nalternating operator T^dag T applied k times, distance to alpha f:")
    for k, rep, dist in records[::4]:
        print(f"  k={k:2d}  norm {rep.norm:.5f}  distance {dist:.3e}  integral {rep.integral:.6f}")
    slope, _, r2 = log_linear_fit(np.arange(1, 21), [d for _, _, d in records[1:]])
    print(f"  geometric rate {np.exp(slope):.4f} per step, log-linear R^2 {r2:.4f}")
    print(f"  norm of the fixed point: {l2_report(op.f.scaled(h0.integral), target).norm:.5f}")


if __name__ == "__main__":
    main()
