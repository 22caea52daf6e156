"""
newtonspec Verification Harness

Integral quantities, the eigenvalue inequalities for L_r and their
corollaries, the discrete trial-function lemma, pointwise identity suites,
convergence studies and report I/O.

For a closed submanifold of R^N(c) with L_r elliptic:

    thm1:  lambda_1 int H_r                <= c(r) int (|H_(r+1)|^2 + c H_r^2),  c(r) = (n-r) C(n,r)
    thm2:  sum_(i<=n) sqrt(lambda_i)       <= (n/vol) sqrt((n-r) int S_r * int (|H|^2 + c))
    cor1:  lambda_1                        <= (n-r)/vol^2 * int S_r * int (|H|^2 + c)
    cor2:  lambda_n                        <  n^2 (n-r)/vol^2 * int S_r * int (|H|^2 + c)
"""

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.stats import ortho_group, special_ortho_group

from newtonspec_assembly import (CoefficientField, assemble_mass, assemble_stiffness,
                                 evaluate_coefficients, mass_inverse_apply, require_elliptic,
                                 weak_residual_Lr_x)
from newtonspec_constants import Defaults, ErrorMessages, ReportFormat, Tolerances
from newtonspec_eigensolve import SpectralResult, smallest_eigenpairs
from newtonspec_errors import InvalidInputError, ReportWriteError
from newtonspec_immersion import (GeometryBatch, SurfaceKind, SurfaceSpec, TORUS_KINDS, frame_defect,
                                  random_surface_points, rotate_normal_frame, rotate_tangent_frame,
                                  sample_geometry_batch)
from newtonspec_mesh import SimplicialMesh, generate
from newtonspec_newton import (ambient_pushforward, ambient_pushforward_batch, hypersurface_oracle,
                               newton_tensor, newton_tensor_batch)

logger = logging.getLogger(__name__)

Progress = Callable[[str, float], None]


@dataclass(frozen=True)
class RunConfig:
    """Options of one verification run"""

    level: int = Defaults.LEVEL
    eigs: int = Defaults.EIGS
    tol: float = Defaults.TOL
    max_iter: int = Defaults.MAX_ITER
    quad_order: Optional[int] = Defaults.QUAD_ORDER
    lumped: Optional[bool] = None         # None = per-command default
    seed: int = Defaults.SEED
    threads: int = Defaults.THREADS
    tol_discr: float = Defaults.TOL_DISCR
    lemma_trials: int = Defaults.LEMMA_TRIALS
    include_timings: bool = False

    def __post_init__(self):
        if self.level < 0:
            raise InvalidInputError(ErrorMessages.INVALID_LEVELS.format(levels=[self.level]))
        if self.eigs < 1:
            raise InvalidInputError(ErrorMessages.INVALID_EIGS.format(k=self.eigs, dim="?"))
        if self.lumped not in (None, True, False):
            raise InvalidInputError(ErrorMessages.UNKNOWN_CONFIG.format(keys={"lumped": self.lumped}))
        if self.quad_order not in (None, 1, 2):
            raise InvalidInputError(ErrorMessages.INVALID_QUADRATURE.format(order=self.quad_order))
        if self.threads < 1 or self.tol <= 0 or self.max_iter < 1 or self.lemma_trials < 0:
            raise InvalidInputError(ErrorMessages.UNKNOWN_CONFIG.format(keys=asdict(self)))

    @classmethod
    def from_mapping(cls, mapping: Optional[Mapping[str, Any]]) -> "RunConfig":
        """Build a config from JSON-like parameters, rejecting unknown keys"""
        mapping = dict(mapping or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise InvalidInputError(ErrorMessages.UNKNOWN_CONFIG.format(keys=unknown))
        return cls(**mapping)

    def mass_lumped(self, default: bool) -> bool:
        return default if self.lumped is None else bool(self.lumped)


@dataclass(frozen=True)
class IntegralBundle:
    """Integrals entering the inequalities"""

    vol: float
    int_H_r: float
    int_Hnext2_plus_cHr2: float
    int_S_r: float
    int_H2_plus_c: float
    c_r: float


@dataclass(frozen=True)
class InequalityCheck:
    """
    One inequality instance lhs <= rhs (lhs < rhs when strict)

    The discretisation allowance tol_discr is granted only to non-strict
    checks on a detected equality case; elsewhere the ratio must not exceed 1.
    """

    lhs: float
    rhs: float
    slack_ratio: float
    strict: bool
    allowance: float
    passed: bool

    @classmethod
    def evaluate(cls, lhs: float, rhs: float, tol_discr: float, strict: bool = False,
                 equality_case: bool = False) -> "InequalityCheck":
        ratio = lhs / rhs if rhs != 0.0 else math.inf
        allowance = tol_discr if equality_case and not strict else 0.0
        passed = ratio < 1.0 if strict else ratio <= 1.0 + allowance
        return cls(lhs=float(lhs), rhs=float(rhs), slack_ratio=float(ratio), strict=strict,
                   allowance=float(allowance), passed=bool(passed))


@dataclass(frozen=True)
class IdentityResiduals:
    trace_max_abs: float
    contraction_max_abs: float
    weak_lr_x: Optional[float] = None


@dataclass(frozen=True)
class LemmaResult:
    """Discrete trial-function lemma check"""

    trials: int
    violations: int
    worst_margin_first: float
    worst_margin_second: float
    delta_star_minimal: bool
    coordinate_first_lhs: float
    coordinate_first_rhs: float
    coordinate_second_lhs: float
    coordinate_second_rhs: float
    coordinate_delta_star: float
    analytic_delta: float
    delta_centre: float
    delta_log2_offset: float
    passed: bool


@dataclass(frozen=True)
class VerificationReport:
    """All quantities of one verification run"""

    surface: str
    kind: str
    n: int
    N: int
    c: int
    r: int
    level: int
    vertices: int
    elements: int
    solver: str
    eigenvalues: Tuple[float, ...]
    clusters: Tuple[Tuple[int, int], ...]
    analytic_lambda1: Optional[float]
    integrals: IntegralBundle
    thm1: InequalityCheck
    thm2: InequalityCheck
    cor1: InequalityCheck
    cor2: InequalityCheck
    chain_holds: bool
    identity_residuals: IdentityResiduals
    ellipticity_min: float
    lemma_check_pass: bool
    lemma: LemmaResult
    energy_identity_rel: float
    classical_hypersurface_case: bool
    r_minimal_defect: float
    umbilicity_defect: float
    equality_case: bool
    tol_discr: float
    passed: bool
    timings: Dict[str, float] = field(default_factory=dict, compare=False)

    @property
    def inequalities_hold(self) -> bool:
        return all(check.passed for check in (self.thm1, self.thm2, self.cor1, self.cor2)) and self.chain_holds

    def to_dict(self, include_timings: bool = False) -> Dict[str, Any]:
        return report_to_dict(self, include_timings)


@dataclass(frozen=True)
class ConvergenceRow:
    level: int
    vertices: int
    elements: int
    mesh_size: float
    eigenvalues: Tuple[float, ...]
    lambda1_error: Optional[float]
    thm1_slack: float
    thm2_slack: float
    trace_max_abs: float
    contraction_max_abs: float
    weak_lr_x: float


@dataclass(frozen=True)
class ConvergenceTable:
    """Per-level results and observed orders (log2 of successive error ratios)"""

    surface: str
    r: int
    truth: float
    truth_source: str
    rows: Tuple[ConvergenceRow, ...]
    lambda1_orders: Tuple[float, ...]
    weak_lr_x_orders: Tuple[float, ...]
    mass: str
    lambda1_nonincreasing: bool
    timings: Dict[str, float] = field(default_factory=dict, compare=False)

    def to_dict(self, include_timings: bool = False) -> Dict[str, Any]:
        body = {"schema": ReportFormat.SCHEMA, "report": "convergence"}
        body.update({k: v for k, v in asdict(self).items() if k != "timings"})
        body["rows"] = [asdict(row) for row in self.rows]
        body["timings"] = dict(sorted(self.timings.items())) if include_timings else {}
        return body


@dataclass(frozen=True)
class SpectrumReport:
    surface: str
    r: int
    level: int
    vertices: int
    solver: str
    eigenvalues: Tuple[float, ...]
    residuals: Tuple[float, ...]
    clusters: Tuple[Tuple[int, int], ...]
    analytic_lambda1: Optional[float]
    timings: Dict[str, float] = field(default_factory=dict, compare=False)

    def to_dict(self, include_timings: bool = False) -> Dict[str, Any]:
        body = {"schema": ReportFormat.SCHEMA, "report": "spectrum"}
        body.update({k: v for k, v in asdict(self).items() if k != "timings"})
        body["timings"] = dict(sorted(self.timings.items())) if include_timings else {}
        return body


@dataclass(frozen=True)
class IdentityReport:
    """Pointwise identity residuals over random samples (no FEM)"""

    surface: str
    r: int
    samples: int
    trace_max_abs: float
    trace_max_rel: float
    contraction_max_abs: float
    oracle_max_abs: Optional[float]
    frame_defect: float
    symmetry_max_abs: float
    pushforward_normal_max_abs: float
    frame_invariance_max_rel: float
    ellipticity_min: float
    passed: bool

    def to_dict(self, include_timings: bool = False) -> Dict[str, Any]:
        body = {"schema": ReportFormat.SCHEMA, "report": "identities"}
        body.update(asdict(self))
        return body


def _notify(progress: Optional[Progress], phase: str, started: float, timings: Dict[str, float]) -> float:
    elapsed = time.perf_counter() - started
    timings[phase] = elapsed
    logger.info("phase %s done in %.3fs", phase, elapsed)
    if progress is not None:
        progress(phase, elapsed)
    return time.perf_counter()


# Integrals and analytic values

def integrate(mesh: SimplicialMesh, r: int, order: Optional[int] = None,
              field: Optional[CoefficientField] = None) -> IntegralBundle:
    """
    Integrals of the inequalities by per-element quadrature

    Raises:
        NotEllipticError: If L_r is not elliptic on the surface
    """
    if field is None:
        field = evaluate_coefficients(mesh, r, order)
    require_elliptic(field)
    n, c = mesh.dim_n, mesh.spec.curvature_c
    nd = field.newton
    return IntegralBundle(
        vol=float(field.measures.sum()),
        int_H_r=field.integrate(nd.H_r),
        int_Hnext2_plus_cHr2=field.integrate(nd.H_next_norm2 + c * nd.H_r ** 2),
        int_S_r=field.integrate(nd.S_r),
        int_H2_plus_c=field.integrate(field.mean_curvature2 + c),
        c_r=float((n - r) * math.comb(n, r)),
    )


def analytic_first_eigenvalue(spec: SurfaceSpec, r: int) -> Optional[float]:
    """lambda_1 of L_r where a closed form is known, else None"""
    n = spec.dim_n
    if spec.kind == SurfaceKind.SPHERE:
        radius = spec.shape_params[0]
        return math.comb(n - 1, r) * n / radius ** (r + 2)
    if spec.kind in TORUS_KINDS and r == 0:
        return 1.0 / max(spec.shape_params) ** 2
    return None


def equality_case(spec: SurfaceSpec, field: CoefficientField) -> bool:
    """
    True where the inequalities are expected to be equalities: umbilic
    surfaces for c=0, the flat torus with equal radii, and r-minimal
    surfaces (S_(r+1) = 0) for c=1
    """
    if spec.curvature_c == 1:
        return bool(np.abs(field.newton.S_next).max() <= Tolerances.EQUALITY_DEFECT)
    if spec.kind == SurfaceKind.FLAT_TORUS:
        return math.isclose(*spec.shape_params, rel_tol=Tolerances.EQUALITY_DEFECT)
    return bool(field.umbilicity.max() <= Tolerances.EQUALITY_DEFECT)


def _inequalities(integrals: IntegralBundle, eigenvalues: np.ndarray, n: int, r: int, tol_discr: float,
                  equality: bool):
    b = integrals
    product = (n - r) * b.int_S_r * b.int_H2_plus_c
    lam = np.asarray(eigenvalues[:n], dtype=float)
    thm1 = InequalityCheck.evaluate(lam[0] * b.int_H_r, b.c_r * b.int_Hnext2_plus_cHr2, tol_discr,
                                    equality_case=equality)
    thm2 = InequalityCheck.evaluate(float(np.sqrt(lam).sum()), n / b.vol * math.sqrt(product), tol_discr,
                                    equality_case=equality)
    cor1 = InequalityCheck.evaluate(lam[0], product / b.vol ** 2, tol_discr, equality_case=equality)
    cor2 = InequalityCheck.evaluate(lam[-1], n * n * product / b.vol ** 2, tol_discr, strict=True)
    chain = bool(np.sqrt(lam).sum() >= n * math.sqrt(lam[0]) * (1.0 - 1e-15))
    return thm1, thm2, cor1, cor2, chain


# Lemma

def _lemma_margins(lam1: float, a: np.ndarray, b_r: np.ndarray, k0: np.ndarray, b_0: np.ndarray,
                   centre: float):
    """
    Relative margins (rhs - lhs)/|rhs| of both inequalities

    first:  lam1 a <= b_r
    second: sqrt(lam1) k0 <= delta a + b_0 / (4 delta) for delta = centre 2^k, k in DELTA_GRID,
            and at the minimiser delta* = sqrt(b_0/a)/2 (last column)
    Returns (first (T,), second (T, G+1), rhs (T, G+1), delta_star (T,))
    """
    tiny = np.finfo(float).tiny
    first = (b_r - lam1 * a) / np.maximum(np.abs(b_r), tiny)
    delta_star = 0.5 * np.sqrt(b_0 / np.maximum(a, tiny))
    steps = 2.0 ** np.asarray(Defaults.DELTA_GRID, dtype=float)
    grid = np.concatenate([np.broadcast_to(centre * steps, (a.size, steps.size)), delta_star[:, None]], axis=1)
    rhs = grid * a[:, None] + b_0[:, None] / (4.0 * grid)
    lhs = math.sqrt(lam1) * k0
    second = (rhs - lhs[:, None]) / np.maximum(np.abs(rhs), tiny)
    return first, second, rhs, delta_star


def analytic_delta(integrals: IntegralBundle, n: int, r: int) -> float:
    """delta = (n/2) sqrt(int (|H|^2 + c) / ((n-r) int S_r))"""
    return 0.5 * n * math.sqrt(integrals.int_H2_plus_c / ((n - r) * integrals.int_S_r))


def check_lemma(mesh: SimplicialMesh, r: int, lam1: float, K_r: sparse.spmatrix, K_0: sparse.spmatrix,
                M: sparse.spmatrix, trials: int = Defaults.LEMMA_TRIALS, seed: int = Defaults.SEED,
                integrals: Optional[IntegralBundle] = None, trial_vectors: Optional[np.ndarray] = None,
                delta_centre: Optional[float] = None) -> LemmaResult:
    """
    Discrete versions of the trial-function lemma

    For trial vectors h, M-orthogonal to the constants, checks

        lambda_1 h^T K_r h <= (K_r h)^T M^-1 (K_r h)
        sqrt(lambda_1) h^T K_0 h <= delta h^T K_r h + (K_0 h)^T M^-1 (K_0 h) / (4 delta)

    for delta = 2^k delta_centre, k in DELTA_GRID, and at each vector's own
    minimiser. delta_centre defaults to the analytic delta of the surface.
    The coordinate functions x_A are checked summed over A; the grid centre
    is minimal when no other grid point gives a smaller coordinate rhs.

    Raises:
        NotEllipticError: If integrals are not given and L_r is not elliptic
    """
    start = time.perf_counter()
    n = mesh.dim_n
    if integrals is None:
        integrals = integrate(mesh, r)
    analytic = analytic_delta(integrals, n, r)
    centre = analytic if delta_centre is None else float(delta_centre)
    if not centre > 0.0:
        raise InvalidInputError(ErrorMessages.INVALID_DELTA.format(delta=centre))

    solve = mass_inverse_apply(M)
    ones = np.ones(M.shape[0])
    Mones = M @ ones

    def deflate(H: np.ndarray) -> np.ndarray:
        return H - np.outer(ones, Mones @ H) / float(ones @ Mones)

    if trial_vectors is None:
        rng = np.random.default_rng(seed)
        trial_vectors = rng.standard_normal((M.shape[0], trials))
    H = deflate(np.asarray(trial_vectors, dtype=float).reshape(M.shape[0], -1))

    def quadratic_forms(H: np.ndarray):
        KrH, K0H = K_r @ H, K_0 @ H
        a = np.einsum("vt,vt->t", H, KrH)
        b_r = np.einsum("vt,vt->t", KrH, solve(KrH))
        k0 = np.einsum("vt,vt->t", H, K0H)
        b_0 = np.einsum("vt,vt->t", K0H, solve(K0H))
        return a, b_r, k0, b_0

    a, b_r, k0, b_0 = quadratic_forms(H)
    first, second, _, _ = _lemma_margins(lam1, a, b_r, k0, b_0, centre)
    violations = int(np.sum(first < -Tolerances.LEMMA_RELATIVE) + np.sum(second < -Tolerances.LEMMA_RELATIVE))

    # coordinate functions, summed over A
    X = deflate(mesh.vertices)
    ca, cb_r, ck0, cb_0 = (v.sum(keepdims=True) for v in quadratic_forms(X))
    c_first, c_second, c_rhs, c_delta = _lemma_margins(lam1, ca, cb_r, ck0, cb_0, centre)
    violations += int(c_first[0] < -Tolerances.LEMMA_RELATIVE) + int(np.sum(c_second < -Tolerances.LEMMA_RELATIVE))
    delta = float(c_delta[0])
    grid_rhs = c_rhs[0, :-1]
    index = Defaults.DELTA_GRID.index(0)
    minimal = bool(grid_rhs[index] <= grid_rhs.min() * (1.0 + Tolerances.LEMMA_RELATIVE))

    result = LemmaResult(
        trials=int(H.shape[1]),
        violations=violations,
        worst_margin_first=float(min(first.min(initial=math.inf), c_first[0])),
        worst_margin_second=float(min(second.min(initial=math.inf), c_second.min())),
        delta_star_minimal=minimal,
        coordinate_first_lhs=float(lam1 * ca[0]),
        coordinate_first_rhs=float(cb_r[0]),
        coordinate_second_lhs=float(math.sqrt(lam1) * ck0[0]),
        coordinate_second_rhs=float(grid_rhs[index]),
        coordinate_delta_star=delta,
        analytic_delta=float(analytic),
        delta_centre=centre,
        delta_log2_offset=float(math.log2(centre / delta)),
        passed=violations == 0 and minimal,
    )
    logger.info("lemma: %d trials, %d violations, worst margins %.3e / %.3e, delta centre %.6g "
                "(minimiser %.6g) in %.3fs", result.trials, violations, result.worst_margin_first,
                result.worst_margin_second, centre, delta, time.perf_counter() - start)
    return result


# Verification runs

@dataclass
class _LevelRun:
    mesh: SimplicialMesh
    field: CoefficientField
    K: sparse.csr_matrix
    M: sparse.csr_matrix
    spectrum: SpectralResult
    integrals: IntegralBundle
    weak: float


def _run_level(spec: SurfaceSpec, r: int, level: int, config: RunConfig, k: int, lumped: bool,
               timings: Dict[str, float], progress: Optional[Progress]) -> _LevelRun:
    clock = time.perf_counter()
    mesh = generate(spec, level)
    clock = _notify(progress, "mesh", clock, timings)
    field = evaluate_coefficients(mesh, r, config.quad_order)
    K = assemble_stiffness(mesh, r, field=field, threads=config.threads)
    M = assemble_mass(mesh, lumped)
    clock = _notify(progress, "assemble", clock, timings)
    spectrum = smallest_eigenpairs(K, M, k=min(k, mesh.vertex_count - 1), tol=config.tol,
                                   max_iter=config.max_iter, seed=config.seed)
    clock = _notify(progress, "solve", clock, timings)
    integrals = integrate(mesh, r, field=field)
    weak = weak_residual_Lr_x(mesh, r, K=K, M=M).total
    _notify(progress, "integrate", clock, timings)
    return _LevelRun(mesh, field, K, M, spectrum, integrals, weak)


def check_theorem(spec: SurfaceSpec, r: int, config: Optional[RunConfig] = None,
                  progress: Optional[Progress] = None) -> VerificationReport:
    """
    Assemble, solve and evaluate both inequalities, both corollaries, the
    identity residuals and the lemma on one mesh level

    Args:
        spec: Catalog surface with a closed mesh
        r: Even order, 0 <= r <= n-1
        config: Run options (level, eigs, tolerances, ...)
        progress: Called with (phase, elapsed seconds) after every phase

    Raises:
        InvalidOrderError, NotEllipticError, NotConvergedError, UnsupportedError
    """
    config = config or RunConfig()
    timings: Dict[str, float] = {}
    n = spec.dim_n
    run = _run_level(spec, r, config.level, config, max(config.eigs, n), config.mass_lumped(Defaults.LUMPED),
                     timings, progress)
    mesh, field, spectrum, integrals = run.mesh, run.field, run.spectrum, run.integrals

    clock = time.perf_counter()
    K_0 = run.K if r == 0 else assemble_stiffness(mesh, 0, config.quad_order, threads=config.threads)
    lemma = check_lemma(mesh, r, spectrum.first, run.K, K_0, run.M, config.lemma_trials, config.seed, integrals)
    X = mesh.vertices
    energy = float(np.einsum("va,va->", X, run.K @ X))
    expected = (n - r) * integrals.int_S_r
    energy_rel = abs(energy - expected) / abs(expected)
    clock = _notify(progress, "lemma", clock, timings)

    equality = equality_case(spec, field)
    thm1, thm2, cor1, cor2, chain = _inequalities(integrals, spectrum.eigenvalues, n, r, config.tol_discr, equality)
    residuals = IdentityResiduals(
        trace_max_abs=float(field.newton.trace_residual.max()),
        contraction_max_abs=float(field.newton.contraction_residual.max()),
        weak_lr_x=run.weak,
    )
    report = VerificationReport(
        surface=spec.descriptor,
        kind=spec.kind.value,
        n=n,
        N=spec.ambient.ambient_dim_N,
        c=spec.curvature_c,
        r=r,
        level=config.level,
        vertices=mesh.vertex_count,
        elements=mesh.element_count,
        solver=spectrum.solver_name,
        eigenvalues=tuple(float(v) for v in spectrum.eigenvalues),
        clusters=tuple((int(s), int(m)) for s, m in spectrum.clusters),
        analytic_lambda1=analytic_first_eigenvalue(spec, r),
        integrals=integrals,
        thm1=thm1,
        thm2=thm2,
        cor1=cor1,
        cor2=cor2,
        chain_holds=chain,
        identity_residuals=residuals,
        ellipticity_min=field.ellipticity_min,
        lemma_check_pass=lemma.passed,
        lemma=lemma,
        energy_identity_rel=float(energy_rel),
        classical_hypersurface_case=bool(r == 0 and spec.curvature_c == 0 and spec.codimension == 1),
        r_minimal_defect=float(np.abs(field.newton.S_next).max()),
        umbilicity_defect=float(field.umbilicity.max()),
        equality_case=equality,
        tol_discr=config.tol_discr,
        passed=bool(thm1.passed and thm2.passed and cor1.passed and cor2.passed and chain and lemma.passed),
        timings=timings,
    )
    _notify(progress, "report", clock, timings)
    logger.info("%s r=%d level %d: lambda_1=%.10g thm1 %.6f thm2 %.6f cor1 %.6f cor2 %.6f -> %s",
                report.surface, r, config.level, spectrum.first, thm1.slack_ratio, thm2.slack_ratio,
                cor1.slack_ratio, cor2.slack_ratio, "pass" if report.passed else "FAIL")
    return report


def _mesh_size(mesh: SimplicialMesh) -> float:
    X = mesh.vertices[mesh.elements]
    k = mesh.dim_n + 1
    return float(max(np.linalg.norm(X[:, i] - X[:, j], axis=1).max()
                     for i in range(k) for j in range(i + 1, k)))


def _orders(errors: Sequence[Optional[float]]) -> Tuple[float, ...]:
    orders = []
    for coarse, fine in zip(errors[:-1], errors[1:]):
        if coarse is None or fine is None or coarse <= 0.0 or fine <= 0.0:
            orders.append(math.nan)
        else:
            orders.append(math.log2(coarse / fine))
    return tuple(orders)


def converge(spec: SurfaceSpec, r: int, levels: Sequence[int], config: Optional[RunConfig] = None,
             progress: Optional[Progress] = None) -> ConvergenceTable:
    """
    Convergence study over ascending refinement levels

    Errors of lambda_1 are taken against the analytic value when known,
    otherwise against the finest level.
    Without an explicit mass choice the consistent mass is used, for which
    lambda_1 approaches its limit from above.
    """
    levels = [int(level) for level in levels]
    if not levels or any(level < 0 for level in levels) or any(b <= a for a, b in zip(levels, levels[1:])):
        raise InvalidInputError(ErrorMessages.INVALID_LEVELS.format(levels=levels))
    config = config or RunConfig()
    lumped = config.mass_lumped(Defaults.CONVERGE_LUMPED)
    logger.info("convergence of %s r=%d over levels %s with %s mass", spec.descriptor, r, levels,
                "lumped" if lumped else "consistent")
    timings: Dict[str, float] = {}
    n = spec.dim_n

    runs = []
    for level in levels:
        level_timings: Dict[str, float] = {}
        runs.append(_run_level(spec, r, level, config, max(config.eigs, n), lumped, level_timings, progress))
        timings.update({f"{phase}_{level}": t for phase, t in level_timings.items()})

    truth = analytic_first_eigenvalue(spec, r)
    source = "analytic"
    if truth is None:
        truth, source = runs[-1].spectrum.first, "finest"

    rows = []
    for level, run in zip(levels, runs):
        thm1, thm2, _, _, _ = _inequalities(run.integrals, run.spectrum.eigenvalues, n, r, config.tol_discr,
                                            equality_case(spec, run.field))
        error = None if source == "finest" and run is runs[-1] else abs(run.spectrum.first - truth)
        rows.append(ConvergenceRow(
            level=level,
            vertices=run.mesh.vertex_count,
            elements=run.mesh.element_count,
            mesh_size=_mesh_size(run.mesh),
            eigenvalues=tuple(float(v) for v in run.spectrum.eigenvalues),
            lambda1_error=error,
            thm1_slack=thm1.slack_ratio,
            thm2_slack=thm2.slack_ratio,
            trace_max_abs=float(run.field.newton.trace_residual.max()),
            contraction_max_abs=float(run.field.newton.contraction_residual.max()),
            weak_lr_x=run.weak,
        ))
        logger.info("level %d: lambda_1=%.10g error %s weak residual %.3e", level, run.spectrum.first,
                    "n/a" if error is None else f"{error:.3e}", run.weak)

    return ConvergenceTable(
        surface=spec.descriptor,
        r=r,
        truth=float(truth),
        truth_source=source,
        rows=tuple(rows),
        lambda1_orders=_orders([row.lambda1_error for row in rows]),
        weak_lr_x_orders=_orders([row.weak_lr_x for row in rows]),
        mass="lumped" if lumped else "consistent",
        lambda1_nonincreasing=bool(np.all(np.diff([row.eigenvalues[0] for row in rows]) <= 0.0)),
        timings=timings,
    )


def spectrum(spec: SurfaceSpec, r: int, config: Optional[RunConfig] = None,
             progress: Optional[Progress] = None) -> SpectrumReport:
    """Eigenvalues only"""
    config = config or RunConfig()
    timings: Dict[str, float] = {}
    clock = time.perf_counter()
    mesh = generate(spec, config.level)
    clock = _notify(progress, "mesh", clock, timings)
    K = assemble_stiffness(mesh, r, config.quad_order, threads=config.threads)
    M = assemble_mass(mesh, config.mass_lumped(Defaults.LUMPED))
    clock = _notify(progress, "assemble", clock, timings)
    result = smallest_eigenpairs(K, M, k=min(config.eigs, mesh.vertex_count - 1), tol=config.tol,
                                 max_iter=config.max_iter, seed=config.seed)
    _notify(progress, "solve", clock, timings)
    return SpectrumReport(
        surface=spec.descriptor,
        r=r,
        level=config.level,
        vertices=mesh.vertex_count,
        solver=result.solver_name,
        eigenvalues=tuple(float(v) for v in result.eigenvalues),
        residuals=tuple(float(v) for v in result.residuals),
        clusters=tuple((int(s), int(m)) for s, m in result.clusters),
        analytic_lambda1=analytic_first_eigenvalue(spec, r),
        timings=timings,
    )


# Pointwise identities

def _oracle_residual(h: np.ndarray, T: np.ndarray, r: int) -> np.ndarray:
    """max |T^r - P_r| for hypersurface samples, P_r from the classical recursion"""
    kappa, Q = np.linalg.eigh(h[:, 0])
    oracle = np.stack([Q[p] @ hypersurface_oracle(kappa[p], r) @ Q[p].T for p in range(h.shape[0])])
    return np.abs(T - oracle).reshape(h.shape[0], -1).max(axis=1)


def _random_orthogonal(rng: np.random.Generator, size: int, special: bool) -> np.ndarray:
    if size == 1:
        return np.array([[1.0 if special else float(rng.choice([-1.0, 1.0]))]])
    group = special_ortho_group if special else ortho_group
    return np.asarray(group.rvs(size, random_state=rng), dtype=float).reshape(size, size)


def frame_invariance(batch: GeometryBatch, r: int, rng: np.random.Generator,
                     count: int = Defaults.FRAME_CHANGES) -> float:
    """
    Largest relative change of the ambient Newton tensor, S_r and |H_(r+1)|^2
    under a random SO(n) tangent rotation and O(m) normal change, over the
    first count samples of the batch
    """
    worst = 0.0
    for index in range(min(count, len(batch))):
        sample = batch.sample(index)
        moved = rotate_normal_frame(rotate_tangent_frame(sample, _random_orthogonal(rng, sample.dim_n, True)),
                                    _random_orthogonal(rng, sample.codimension, False))
        before, after = newton_tensor(sample, r), newton_tensor(moved, r)
        P, P_moved = ambient_pushforward(sample, before), ambient_pushforward(moved, after)
        worst = max(worst,
                    float(np.abs(P_moved - P).max()) / (1.0 + float(np.abs(P).max())),
                    abs(after.S_r - before.S_r) / (1.0 + abs(before.S_r)),
                    abs(after.H_next_norm2 - before.H_next_norm2) / (1.0 + before.H_next_norm2))
    return worst


def check_identities(spec: SurfaceSpec, r: int, samples: int = Defaults.IDENTITY_SAMPLES,
                     seed: int = Defaults.SEED) -> IdentityReport:
    """Trace, contraction and oracle identities at random points of a catalog surface"""
    rng = np.random.default_rng(seed)
    how, values = random_surface_points(spec, samples, rng)
    batch = sample_geometry_batch(spec, **{"points" if how == "point" else "params": values})
    nd = newton_tensor_batch(batch.second_fundamental, r)
    h = batch.second_fundamental
    oracle = float(_oracle_residual(h, nd.T_r, r).max()) if spec.codimension == 1 else None
    defect = frame_defect(batch, spec.curvature_c)
    # the ambient tensor sum T_ij e_i (x) e_j annihilates the normal space
    pushed = ambient_pushforward_batch(batch.tangent_frame, nd.T_r)
    pushforward = float(np.abs(np.einsum("pde,pae->pad", pushed, batch.normal_frame)).max())
    scale = 1.0 + np.abs(nd.T_r).max()
    invariance = frame_invariance(batch, r, rng)
    trace_rel = float((nd.trace_residual / (1.0 + np.abs(nd.S_r))).max())
    report = IdentityReport(
        surface=spec.descriptor,
        r=r,
        samples=samples,
        trace_max_abs=float(nd.trace_residual.max()),
        trace_max_rel=trace_rel,
        contraction_max_abs=float(nd.contraction_residual.max()),
        oracle_max_abs=oracle,
        frame_defect=defect,
        symmetry_max_abs=float(np.abs(h - np.swapaxes(h, 2, 3)).max()),
        pushforward_normal_max_abs=pushforward,
        frame_invariance_max_rel=invariance,
        ellipticity_min=float(nd.margin.min()),
        passed=bool(trace_rel <= 1e-10 and nd.contraction_residual.max() <= 1e-10
                    and (oracle is None or oracle <= 1e-10 * scale) and pushforward <= 1e-10 * scale
                    and invariance <= 1e-10 and defect <= Tolerances.FRAME_ORTHONORMAL),
    )
    logger.info("identities %s r=%d over %d samples: trace %.3e contraction %.3e", report.surface, r,
                samples, report.trace_max_abs, report.contraction_max_abs)
    return report


def random_identity_suite(trials: int = 1000, seed: int = Defaults.SEED, max_n: int = 4,
                          max_codim: int = 3) -> Dict[str, Any]:
    """
    Trace, contraction and hypersurface-oracle identities for random symmetric
    second fundamental forms with entries in [-2, 2]
    """
    rng = np.random.default_rng(seed)
    trace_rel = contraction = oracle = 0.0
    oracle_samples = 0
    for _ in range(trials):
        n = int(rng.integers(2, max_n + 1))
        m = int(rng.integers(1, max_codim + 1))
        r = 2 * int(rng.integers(0, (n - 1) // 2 + 1))
        A = rng.uniform(-2.0, 2.0, size=(1, m, n, n))
        h = 0.5 * (A + np.swapaxes(A, 2, 3))
        nd = newton_tensor_batch(h, r)
        trace_rel = max(trace_rel, float((nd.trace_residual / (1.0 + np.abs(nd.S_r))).max()))
        contraction = max(contraction, float(nd.contraction_residual.max()))
        if m == 1:
            oracle = max(oracle, float(_oracle_residual(h, nd.T_r, r).max()) / (1.0 + float(np.abs(nd.T_r).max())))
            oracle_samples += 1
    return {
        "schema": ReportFormat.SCHEMA,
        "report": "random-identities",
        "trials": trials,
        "seed": seed,
        "trace_max_rel": trace_rel,
        "contraction_max_abs": contraction,
        "oracle_max_rel": oracle,
        "oracle_samples": oracle_samples,
        "passed": bool(trace_rel <= 1e-10 and contraction <= 1e-10 and oracle <= 1e-10),
    }


# Report I/O

def report_to_dict(report: VerificationReport, include_timings: bool = False) -> Dict[str, Any]:
    """Nested dict with stable key order; timings only on request"""
    body: Dict[str, Any] = {"schema": ReportFormat.SCHEMA, "report": "verify"}
    for f in fields(report):
        if f.name == "timings":
            continue
        value = getattr(report, f.name)
        if isinstance(value, (IntegralBundle, InequalityCheck, IdentityResiduals, LemmaResult)):
            value = asdict(value)
        elif f.name == "clusters":
            value = [list(c) for c in value]
        elif isinstance(value, tuple):
            value = list(value)
        body[f.name] = value
    body["timings"] = dict(sorted(report.timings.items())) if include_timings else {}
    return body


def report_from_dict(body: Mapping[str, Any]) -> VerificationReport:
    """Inverse of report_to_dict"""
    if body.get("schema") != ReportFormat.SCHEMA:
        raise InvalidInputError(ErrorMessages.UNKNOWN_CONFIG.format(keys=[body.get("schema")]))

    def floats(mapping: Mapping[str, Any], cls):
        values = {}
        for f in fields(cls):
            v = mapping[f.name]
            values[f.name] = float(v) if f.type in (float, "float") and v is not None else v
        return cls(**values)

    integrals = IntegralBundle(**{k: float(v) for k, v in body["integrals"].items()})
    checks = {name: floats(body[name], InequalityCheck) for name in ("thm1", "thm2", "cor1", "cor2")}
    residuals = body["identity_residuals"]
    weak = residuals.get("weak_lr_x")
    analytic = body.get("analytic_lambda1")
    return VerificationReport(
        surface=body["surface"],
        kind=body["kind"],
        n=int(body["n"]),
        N=int(body["N"]),
        c=int(body["c"]),
        r=int(body["r"]),
        level=int(body["level"]),
        vertices=int(body["vertices"]),
        elements=int(body["elements"]),
        solver=body["solver"],
        eigenvalues=tuple(float(v) for v in body["eigenvalues"]),
        clusters=tuple((int(s), int(m)) for s, m in body["clusters"]),
        analytic_lambda1=None if analytic is None else float(analytic),
        integrals=integrals,
        identity_residuals=IdentityResiduals(float(residuals["trace_max_abs"]),
                                             float(residuals["contraction_max_abs"]),
                                             None if weak is None else float(weak)),
        ellipticity_min=float(body["ellipticity_min"]),
        lemma_check_pass=bool(body["lemma_check_pass"]),
        lemma=floats(body["lemma"], LemmaResult),
        energy_identity_rel=float(body["energy_identity_rel"]),
        classical_hypersurface_case=bool(body["classical_hypersurface_case"]),
        r_minimal_defect=float(body["r_minimal_defect"]),
        umbilicity_defect=float(body["umbilicity_defect"]),
        equality_case=bool(body["equality_case"]),
        tol_discr=float(body["tol_discr"]),
        passed=bool(body["passed"]),
        chain_holds=bool(body["chain_holds"]),
        timings={k: float(v) for k, v in body.get("timings", {}).items()},
        **checks,
    )


def _format_float(value: float) -> str:
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    return format(value, f".{ReportFormat.FLOAT_DIGITS}g")


def _to_plain(value: Any) -> Any:
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, Mapping):
        return {str(k): _to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_to_plain(v) for v in value]
    return value


def dumps_report(body: Mapping[str, Any], indent: int = 2) -> str:
    """JSON text with stable key order and 17-significant-digit floats"""

    def encode(value: Any, depth: int) -> str:
        pad, inner = " " * (indent * depth), " " * (indent * (depth + 1))
        if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
            return json.dumps(value)
        if isinstance(value, float):
            return _format_float(value)
        if isinstance(value, Mapping):
            if not value:
                return "{}"
            items = [f"{inner}{json.dumps(k)}: {encode(v, depth + 1)}" for k, v in value.items()]
            return "{\n" + ",\n".join(items) + "\n" + pad + "}"
        if not value:
            return "[]"
        return "[" + ", ".join(encode(v, depth + 1) for v in value) + "]"

    return encode(_to_plain(body), 0) + "\n"


def _flatten(value: Any, prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    if isinstance(value, Mapping):
        for k, v in value.items():
            flat.update(_flatten(v, f"{prefix}.{k}" if prefix else str(k)))
    elif isinstance(value, list):
        for i, v in enumerate(value):
            flat.update(_flatten(v, f"{prefix}.{i}"))
    else:
        flat[prefix] = _format_float(value) if isinstance(value, float) else value
    return flat


def emit_report(report: Any, path: str, fmt: str = "json", include_timings: bool = False) -> None:
    """
    Write a report as JSON or as a one-row CSV of flattened scalars

    Raises:
        InvalidInputError: If the format is unknown
        ReportWriteError: If the file cannot be written
    """
    if fmt not in ReportFormat.FORMATS:
        raise InvalidInputError(ErrorMessages.INVALID_FORMAT.format(formats=ReportFormat.FORMATS, fmt=fmt))
    body = _to_plain(report if isinstance(report, Mapping) else report.to_dict(include_timings))
    try:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            if fmt == "json":
                handle.write(dumps_report(body))
            else:
                row = _flatten(body)
                writer = csv.DictWriter(handle, fieldnames=list(row))
                writer.writeheader()
                writer.writerow(row)
    except OSError as e:
        raise ReportWriteError(ErrorMessages.REPORT_WRITE.format(path=path, reason=e), path=path)
    logger.info("report written to %s (%s)", path, fmt)


def parse_report(text: str) -> VerificationReport:
    """Parse JSON text written by emit_report"""
    try:
        body = json.loads(text)
    except json.JSONDecodeError as e:
        raise InvalidInputError(ErrorMessages.MESH_READ.format(path="<report>", reason=e))
    return report_from_dict(body)


def read_report(path: str) -> VerificationReport:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_report(handle.read())
