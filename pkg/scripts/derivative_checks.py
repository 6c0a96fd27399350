"""Finite-difference and dense-QP oracles for Example 2 on coarse cubes.

Usage: python scripts/derivative_checks.py [n]
"""

import argparse

import numpy as np

from sparsessn.mesh import build_box_mesh
from sparsessn.pde import PdeContext
from sparsessn.problem import example2
from sparsessn.ssn import classify, solve_qp, ssn_solve
from sparsessn.verify import (check_gradient, check_hessian, dense_qp_oracle,
                              dense_reduced_hessian, symmetry_defect)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("n", nargs="?", type=int, default=8, help="cells per cube edge")
    ap.add_argument("--mass", choices=["consistent", "lumped"], default="consistent")
    args = ap.parse_args()
    data, _ = example2()
    mesh = build_box_mesh(3, args.n)
    ctx = PdeContext.build(mesh, data, mass=args.mass)
    u = data.y_d(mesh.nodes)
    for name, rep in (("gradient", check_gradient(ctx, u)), ("hessian", check_hessian(ctx, u))):
        errs = ", ".join(f"h={h:g}: {e:.2e}" for h, e in rep.errors.items())
        print(f"{name}: {errs}; order {rep.order:.2f}")
    small = PdeContext.build(build_box_mesh(3, 4), data, mass=args.mass)
    res = ssn_solve(small, data.y_d(small.mesh.nodes))
    part = classify(res.phi_density, small.params)
    A, idx = dense_reduced_hessian(small, res.y, res.phi, part)
    b = np.where(part.inactive, np.random.default_rng(0).standard_normal(small.ops.num_nodes), 0.0)
    v_cg, iters = solve_qp(small, res.y, res.phi, part, b)
    v_dense = dense_qp_oracle(small, res.y, res.phi, part, b)
    print(f"qp: {len(idx)} inactive dofs, {iters} CG steps, symmetry {symmetry_defect(small, A, idx):.1e}, "
          f"max gap {np.max(np.abs(v_cg - v_dense)):.1e}")


if __name__ == "__main__":
    main()
