#!/usr/bin/env python3
"""
newtonspec Usage Examples

This script demonstrates the library API: pointwise Newton tensors, a full
verification run, a convergence study and error handling.
"""

import numpy as np

from newtonspec_assembly import assemble_mass, assemble_stiffness
from newtonspec_eigensolve import smallest_eigenpairs
from newtonspec_errors import NewtonSpecError
from newtonspec_immersion import SurfaceSpec, parse_surface, sample_geometry
from newtonspec_mesh import generate
from newtonspec_newton import newton_tensor
from newtonspec_verify import RunConfig, check_theorem, converge, emit_report


def pointwise_example():
    """Newton tensor at a single ellipsoid point"""
    print("=== Pointwise Newton Tensor ===")

    spec = SurfaceSpec.ellipsoid([1.0, 1.0, 1.0, 1.3])
    sample = sample_geometry(spec, params=[0.4, 1.2, 2.0])
    nd = newton_tensor(sample, 2)
    print(f"T^2 =\n{np.array2string(nd.T_r, precision=6)}")
    print(f"S_2 = {nd.S_r:.10f}, H_2 = {nd.H_r:.10f}, |H_3|^2 = {nd.H_next_norm2:.10f}")
    print(f"ellipticity margin = {nd.ellipticity_margin:.6f}")


def verification_example():
    """Both inequalities on the round sphere (equality case)"""
    print("\n=== Verification Run ===")

    report = check_theorem(SurfaceSpec.sphere(), 0, RunConfig(level=3))
    print(f"lambda_1 = {report.eigenvalues[0]:.10f} (analytic {report.analytic_lambda1})")
    for name in ("thm1", "thm2", "cor1", "cor2"):
        check = getattr(report, name)
        print(f"{name}: slack {check.slack_ratio:.6f} {'ok' if check.passed else 'VIOLATED'}")
    print(f"lemma: {report.lemma.violations} violations over {report.lemma.trials} trials")

    emit_report(report, "sphere_report.json")
    print("Report written to sphere_report.json")


def solver_example():
    """Assemble and solve directly"""
    print("\n=== Direct Assembly ===")

    mesh = generate(parse_surface("cliffordtorus", c=1), 2)
    K = assemble_stiffness(mesh, 0)
    M = assemble_mass(mesh)
    result = smallest_eigenpairs(K, M, k=4)
    print(f"{mesh.vertex_count} vertices, solver {result.solver_name}")
    print("eigenvalues: " + " ".join(f"{v:.8f}" for v in result.eigenvalues))
    print(f"clusters: {result.clusters}")


def convergence_example():
    """Observed order of lambda_1 on refinement"""
    print("\n=== Convergence Study ===")

    table = converge(SurfaceSpec.sphere(), 0, [1, 2, 3])
    for row in table.rows:
        print(f"level {row.level}: lambda_1 = {row.eigenvalues[0]:.10f}, error {row.lambda1_error:.3e}")
    print("orders: " + " ".join(f"{v:.3f}" for v in table.lambda1_orders))


def error_handling_example():
    """Error handling example"""
    print("\n=== Error Handling ===")

    try:
        parse_surface("cliffordtorus:0.6,0.6", c=1)
    except NewtonSpecError as e:
        print(f"Expected error: {e}")

    try:
        check_theorem(SurfaceSpec.sphere(), 1, RunConfig(level=1))
    except ValueError as e:
        print(f"Expected error: {e}")

    try:
        generate(SurfaceSpec.hyperplane_patch(2), 1)
    except NewtonSpecError as e:
        print(f"Expected error: {e}")


if __name__ == "__main__":
    print("newtonspec Usage Examples")
    print("=" * 50)

    pointwise_example()
    verification_example()
    solver_example()
    convergence_example()
    error_handling_example()

    print("\nAll examples completed.")
