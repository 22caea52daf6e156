"""
newtonspec Command Line

    newtonspec verify     --surface sphere:1 --r 0 --level 3 --out report.json
    newtonspec converge   --surface sphere:1 --levels 1..4
    newtonspec spectrum   --surface cliffordtorus --c 1 --eigs 6
    newtonspec identities --surface ellipsoid:1,1,1,1.3 --r 2 --samples 200 [--random 1000]

Exit codes: 0 pass, 1 invalid input, 2 inequality or identity check failed,
3 L_r not elliptic, 4 eigensolver not converged, 5 I/O error.
"""

import argparse
import logging
import sys
from typing import List, Optional, Sequence

from newtonspec_assembly import assemble_mass, assemble_stiffness, export_matrix
from newtonspec_constants import Defaults, ErrorMessages, ExitCodes, ReportFormat, SurfaceNames
from newtonspec_errors import (InvalidInputError, NewtonSpecError, NotConvergedError,
                               NotEllipticError, ReportWriteError)
from newtonspec_immersion import SurfaceSpec, parse_surface
from newtonspec_mesh import generate, write_mesh
from newtonspec_verify import (ConvergenceTable, IdentityReport, RunConfig, SpectrumReport,
                               VerificationReport, check_identities, check_theorem, converge,
                               emit_report, random_identity_suite, spectrum)

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors as InvalidInputError (exit code 1)"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise InvalidInputError(message)


def parse_levels(text: str) -> List[int]:
    """'2..5' or '2,3,4' -> ascending list of levels"""
    try:
        if ".." in text:
            low, high = (int(v) for v in text.split("..", 1))
            levels = list(range(low, high + 1))
        else:
            levels = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InvalidInputError(ErrorMessages.INVALID_LEVELS.format(levels=text))
    if not levels or levels[0] < 0 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise InvalidInputError(ErrorMessages.INVALID_LEVELS.format(levels=text))
    return levels


def _add_common(parser: argparse.ArgumentParser, fem: bool = True) -> None:
    parser.add_argument("--surface", required=True,
                        help=f"surface packing, one of {', '.join(SurfaceNames.ALL)} with ':p1,p2,...'")
    parser.add_argument("--dim", type=int, default=Defaults.SPHERE_DIM, help="sphere / hyperplane dimension n")
    parser.add_argument("--c", type=int, default=None, choices=(0, 1), help="ambient curvature")
    parser.add_argument("--r", type=int, default=0, help="even order r of L_r")
    parser.add_argument("--seed", type=int, default=Defaults.SEED)
    parser.add_argument("--out", default=None, help="report path")
    parser.add_argument("--format", default="json", choices=ReportFormat.FORMATS)
    parser.add_argument("--timings", action="store_true", help="include phase timings in the report")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    if not fem:
        return
    parser.add_argument("--level", type=int, default=Defaults.LEVEL)
    parser.add_argument("--eigs", type=int, default=Defaults.EIGS)
    parser.add_argument("--tol", type=float, default=Defaults.TOL)
    parser.add_argument("--max-iter", type=int, default=Defaults.MAX_ITER)
    parser.add_argument("--quad", type=int, default=None, choices=(1, 2))
    parser.add_argument("--mass", default=None, choices=("lumped", "consistent"),
                        help="default: lumped, consistent for converge")
    parser.add_argument("--threads", type=int, default=Defaults.THREADS)
    parser.add_argument("--tol-discr", type=float, default=Defaults.TOL_DISCR)
    parser.add_argument("--lemma-trials", type=int, default=Defaults.LEMMA_TRIALS)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="newtonspec", description="Eigenvalue inequalities for L_r on closed submanifolds")
    commands = parser.add_subparsers(dest="command", required=True)

    verify = commands.add_parser("verify", help="check the inequalities on one mesh level")
    _add_common(verify)
    verify.add_argument("--export-mesh", default=None, help="write the mesh in newtonspec-mesh format")
    verify.add_argument("--export-matrices", default=None,
                        help="prefix for MatrixMarket files <prefix>_K.mtx and <prefix>_M.mtx")

    study = commands.add_parser("converge", help="convergence study over refinement levels")
    _add_common(study)
    study.add_argument("--levels", required=True, type=parse_levels, help="'a..b' or 'a,b,c'")

    eigs = commands.add_parser("spectrum", help="smallest eigenvalues of -L_r")
    _add_common(eigs)

    identities = commands.add_parser("identities", help="pointwise identity residuals (no FEM)")
    _add_common(identities, fem=False)
    identities.add_argument("--samples", type=int, default=Defaults.IDENTITY_SAMPLES)
    identities.add_argument("--random", type=int, default=0, metavar="TRIALS",
                            help="also run the random second fundamental form suite")
    return parser


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s: %(message)s")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        level=args.level,
        eigs=args.eigs,
        tol=args.tol,
        max_iter=args.max_iter,
        quad_order=args.quad,
        lumped=None if args.mass is None else args.mass == "lumped",
        seed=args.seed,
        threads=args.threads,
        tol_discr=args.tol_discr,
        lemma_trials=args.lemma_trials,
        include_timings=args.timings,
    )


def _print_verification(report: VerificationReport) -> None:
    print(f"{report.surface}  n={report.n} N={report.N} c={report.c} r={report.r}  "
          f"level {report.level} ({report.vertices} vertices, {report.elements} elements)")
    print("eigenvalues: " + " ".join(f"{v:.10g}" for v in report.eigenvalues)
          + ("" if report.analytic_lambda1 is None else f"   (analytic lambda_1 = {report.analytic_lambda1:.10g})"))
    for name in ("thm1", "thm2", "cor1", "cor2"):
        check = getattr(report, name)
        print(f"{name}: lhs {check.lhs:.10g}  rhs {check.rhs:.10g}  slack {check.slack_ratio:.6f}  "
              f"allowance {check.allowance:g}  {'ok' if check.passed else 'VIOLATED'}")
    residuals = report.identity_residuals
    print(f"identities: trace {residuals.trace_max_abs:.3e}  contraction {residuals.contraction_max_abs:.3e}  "
          f"weak L_r(x) {residuals.weak_lr_x:.3e}  energy {report.energy_identity_rel:.3e}")
    print(f"lemma: {'pass' if report.lemma_check_pass else 'FAIL'} ({report.lemma.violations} violations)  "
          f"ellipticity min {report.ellipticity_min:.6g}")
    print(f"equality case: {'yes' if report.equality_case else 'no'}  "
          f"umbilicity {report.umbilicity_defect:.3e}  r-minimal {report.r_minimal_defect:.3e}")
    print("PASS" if report.passed else "FAIL")


def _print_convergence(table: ConvergenceTable) -> None:
    print(f"{table.surface} r={table.r}  truth {table.truth:.12g} ({table.truth_source}), {table.mass} mass")
    print(f"{'level':>5} {'vertices':>9} {'h':>10} {'lambda_1':>16} {'error':>10} {'thm1':>9} {'weak':>10}")
    for row in table.rows:
        error = "-" if row.lambda1_error is None else f"{row.lambda1_error:.3e}"
        print(f"{row.level:>5} {row.vertices:>9} {row.mesh_size:>10.4g} {row.eigenvalues[0]:>16.12g} "
              f"{error:>10} {row.thm1_slack:>9.6f} {row.weak_lr_x:>10.3e}")
    print("lambda_1 orders: " + " ".join(f"{v:.3f}" for v in table.lambda1_orders))
    print("weak L_r(x) orders: " + " ".join(f"{v:.3f}" for v in table.weak_lr_x_orders))
    print(f"lambda_1 non-increasing: {'yes' if table.lambda1_nonincreasing else 'no'}")


def _print_spectrum(report: SpectrumReport) -> None:
    print(f"{report.surface} r={report.r} level {report.level} ({report.vertices} vertices, {report.solver})")
    for i, (value, residual) in enumerate(zip(report.eigenvalues, report.residuals), 1):
        print(f"lambda_{i} = {value:.12g}   residual {residual:.2e}")
    print("clusters: " + " ".join(f"{start + 1}x{size}" for start, size in report.clusters))


def _print_identities(report: IdentityReport) -> None:
    print(f"{report.surface} r={report.r} over {report.samples} samples")
    print(f"trace {report.trace_max_abs:.3e}  contraction {report.contraction_max_abs:.3e}  "
          f"oracle {'-' if report.oracle_max_abs is None else format(report.oracle_max_abs, '.3e')}  "
          f"frames {report.frame_defect:.3e}  pushforward {report.pushforward_normal_max_abs:.3e}  "
          f"ellipticity min {report.ellipticity_min:.6g}")
    print("PASS" if report.passed else "FAIL")


def _export(spec: SurfaceSpec, r: int, config: RunConfig, mesh_path: Optional[str],
            matrix_prefix: Optional[str]) -> None:
    mesh = generate(spec, config.level)
    if mesh_path:
        write_mesh(mesh, mesh_path)
    if matrix_prefix:
        K = assemble_stiffness(mesh, r, config.quad_order, threads=config.threads)
        export_matrix(K, f"{matrix_prefix}_K.mtx", comment=f"stiffness of -L_{r} on {spec.descriptor}")
        export_matrix(assemble_mass(mesh, config.mass_lumped(Defaults.LUMPED)), f"{matrix_prefix}_M.mtx",
                      comment=f"mass on {spec.descriptor}")


def run(args: argparse.Namespace) -> int:
    spec = parse_surface(args.surface, dim=args.dim, c=args.c)

    if args.command == "identities":
        report = check_identities(spec, args.r, args.samples, args.seed)
        _print_identities(report)
        passed = report.passed
        if args.random:
            suite = random_identity_suite(args.random, args.seed)
            print(f"random suite ({suite['trials']} trials): trace {suite['trace_max_rel']:.3e}  "
                  f"contraction {suite['contraction_max_abs']:.3e}  oracle {suite['oracle_max_rel']:.3e}")
            passed = passed and suite["passed"]
        if args.out:
            emit_report(report, args.out, args.format)
        return ExitCodes.OK if passed else ExitCodes.INEQUALITY_VIOLATED

    config = config_from_args(args)
    if args.command == "verify":
        report = check_theorem(spec, args.r, config)
        _print_verification(report)
        if args.export_mesh or args.export_matrices:
            _export(spec, args.r, config, args.export_mesh, args.export_matrices)
        result, passed = report, report.passed
    elif args.command == "converge":
        result = converge(spec, args.r, args.levels, config)
        _print_convergence(result)
        passed = True
    else:
        result = spectrum(spec, args.r, config)
        _print_spectrum(result)
        passed = True

    if args.out:
        emit_report(result, args.out, args.format, include_timings=config.include_timings)
    return ExitCodes.OK if passed else ExitCodes.INEQUALITY_VIOLATED


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code"""
    try:
        args = build_parser().parse_args(argv)
    except InvalidInputError as e:
        print(f"Error: {e}", file=sys.stderr)
        return ExitCodes.INVALID_INPUT
    configure_logging(args.verbose)

    try:
        return run(args)
    except NotEllipticError as e:
        print(f"Error: {e}", file=sys.stderr)
        return ExitCodes.NOT_ELLIPTIC
    except NotConvergedError as e:
        print(f"Error: {e}", file=sys.stderr)
        return ExitCodes.NOT_CONVERGED
    except (ReportWriteError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return ExitCodes.IO_ERROR
    except NewtonSpecError as e:
        print(f"Error: {e}", file=sys.stderr)
        return ExitCodes.INVALID_INPUT
