#!/usr/bin/env python3
"""
newtonspec Verification Test

Integrals, equality cases of the inequalities, the lemma check,
convergence studies and report I/O.
"""

import csv
import math

import pytest

from newtonspec_assembly import assemble_mass, assemble_stiffness, evaluate_coefficients
from newtonspec_constants import Defaults, ReportFormat, Tolerances
from newtonspec_eigensolve import smallest_eigenpairs
from newtonspec_errors import InvalidInputError, InvalidOrderError, ReportWriteError, UnsupportedError
from newtonspec_immersion import SurfaceSpec
from newtonspec_mesh import generate
from newtonspec_verify import (InequalityCheck, RunConfig, _inequalities, analytic_first_eigenvalue,
                               check_identities, check_lemma, check_theorem, converge, dumps_report,
                               emit_report, equality_case, integrate, parse_report, read_report, spectrum)


@pytest.fixture(scope="module")
def sphere_report():
    return check_theorem(SurfaceSpec.sphere(), 0, RunConfig(level=3))


def test_sphere_integrals():
    mesh = generate(SurfaceSpec.sphere(), 4)
    bundle = integrate(mesh, 0)
    assert bundle.vol == pytest.approx(4.0 * math.pi, rel=5e-3)
    assert bundle.int_H2_plus_c == pytest.approx(bundle.vol, rel=1e-12)
    assert bundle.int_Hnext2_plus_cHr2 == pytest.approx(bundle.vol, rel=1e-12)
    assert bundle.c_r == 2.0


def test_flat_torus_integrals():
    bundle = integrate(generate(SurfaceSpec.flat_torus(), 2), 0)
    assert bundle.vol == pytest.approx(4.0 * math.pi ** 2, rel=1e-2)
    assert bundle.int_H2_plus_c == pytest.approx(0.5 * bundle.vol, rel=1e-12)


def test_three_sphere_r2_integrals():
    bundle = integrate(generate(SurfaceSpec.sphere(1.0, n=3), 1), 2)
    assert bundle.int_H_r == pytest.approx(bundle.vol, rel=1e-10)
    assert bundle.int_S_r == pytest.approx(3.0 * bundle.vol, rel=1e-10)
    assert bundle.int_Hnext2_plus_cHr2 == pytest.approx(bundle.vol, rel=1e-10)
    assert bundle.c_r == 3.0


@pytest.mark.parametrize("spec, r, expected", [
    (SurfaceSpec.sphere(2.0), 0, 0.5),
    (SurfaceSpec.sphere(1.0, n=3), 2, 3.0),
    (SurfaceSpec.sphere(1.0, n=3), 0, 3.0),
    (SurfaceSpec.flat_torus(1.0, 2.0), 0, 0.25),
    (SurfaceSpec.clifford_torus(), 0, 2.0),
    (SurfaceSpec.ellipsoid([1.0, 1.0, 1.5]), 0, None),
])
def test_analytic_first_eigenvalue(spec, r, expected):
    value = analytic_first_eigenvalue(spec, r)
    if expected is None:
        assert value is None
    else:
        assert value == pytest.approx(expected)


def test_inequality_check():
    tol = 0.03
    assert not InequalityCheck.evaluate(1.0 + tol / 2, 1.0, tol).passed
    near = InequalityCheck.evaluate(1.0 + tol / 2, 1.0, tol, equality_case=True)
    assert near.passed
    assert near.allowance == tol
    assert not InequalityCheck.evaluate(1.05, 1.0, tol, equality_case=True).passed
    assert InequalityCheck.evaluate(1.0, 1.0, tol).passed
    assert not InequalityCheck.evaluate(1.0, 1.0, tol, strict=True, equality_case=True).passed
    assert InequalityCheck.evaluate(0.5, 1.0, 0.0, strict=True).slack_ratio == 0.5


@pytest.mark.parametrize("spec, expected", [
    (SurfaceSpec.sphere(), True),
    (SurfaceSpec.sphere(1.0, n=3), True),
    (SurfaceSpec.ellipsoid([1.0, 1.0, 1.5]), False),
    (SurfaceSpec.flat_torus(), True),
    (SurfaceSpec.flat_torus(1.0, 2.0), False),
    (SurfaceSpec.clifford_torus(), True),
    (SurfaceSpec.clifford_torus(0.6, 0.8), False),
])
def test_equality_case_detection(spec, expected):
    field = evaluate_coefficients(generate(spec, 0), 0)
    assert equality_case(spec, field) is expected


def test_ellipsoid_gets_no_allowance():
    mesh = generate(SurfaceSpec.ellipsoid([1.0, 1.0, 1.5]), 1)
    field = evaluate_coefficients(mesh, 0)
    bundle = integrate(mesh, 0, field=field)
    # first eigenvalue placed just past the bound, inside tol_discr
    lam1 = bundle.c_r * bundle.int_Hnext2_plus_cHr2 / bundle.int_H_r * (1.0 + Defaults.TOL_DISCR / 2)
    eigenvalues = [lam1, 1.1 * lam1]
    detected = equality_case(mesh.spec, field)
    thm1, _, _, _, _ = _inequalities(bundle, eigenvalues, 2, 0, Defaults.TOL_DISCR, detected)
    assert not thm1.passed
    assert thm1.allowance == 0.0
    thm1, _, _, _, _ = _inequalities(bundle, eigenvalues, 2, 0, Defaults.TOL_DISCR, True)
    assert thm1.passed


def test_sphere_is_an_equality_case(sphere_report):
    report = sphere_report
    assert report.passed
    assert report.classical_hypersurface_case
    for check in (report.thm1, report.thm2, report.cor1):
        assert abs(check.slack_ratio - 1.0) <= Defaults.TOL_DISCR
    assert report.cor2.passed
    assert report.chain_holds
    assert report.eigenvalues[0] == pytest.approx(2.0, rel=2e-2)
    assert report.analytic_lambda1 == 2.0
    assert report.identity_residuals.trace_max_abs <= 1e-10
    assert report.identity_residuals.contraction_max_abs <= 1e-10
    assert report.energy_identity_rel <= 1e-10
    assert report.umbilicity_defect <= 1e-10
    assert report.equality_case
    assert report.thm1.allowance == Defaults.TOL_DISCR
    assert report.cor2.allowance == 0.0


def test_sphere_lemma(sphere_report):
    lemma = sphere_report.lemma
    assert lemma.passed
    assert lemma.violations == 0
    assert lemma.delta_star_minimal
    assert lemma.trials == Defaults.LEMMA_TRIALS
    assert lemma.coordinate_first_lhs <= lemma.coordinate_first_rhs
    assert lemma.coordinate_delta_star == pytest.approx(lemma.analytic_delta, rel=5e-2)
    assert lemma.delta_centre == lemma.analytic_delta
    assert abs(lemma.delta_log2_offset) <= Tolerances.DELTA_CENTRE


@pytest.fixture(scope="module")
def ellipsoid_operators():
    mesh = generate(SurfaceSpec.ellipsoid([1.0, 1.0, 1.5]), 3)
    K, M = assemble_stiffness(mesh, 0), assemble_mass(mesh)
    return mesh, K, M, smallest_eigenpairs(K, M, k=1).first


def test_lemma_centre_on_a_non_umbilic_surface(ellipsoid_operators):
    mesh, K, M, lam1 = ellipsoid_operators
    lemma = check_lemma(mesh, 0, lam1, K, K, M, trials=20)
    assert lemma.passed
    assert lemma.delta_star_minimal
    assert lemma.delta_centre == lemma.analytic_delta
    assert lemma.coordinate_delta_star == pytest.approx(lemma.analytic_delta, rel=0.15)


@pytest.mark.parametrize("factor", [3.0, 1.0 / 3.0])
def test_lemma_flags_a_misplaced_centre(ellipsoid_operators, factor):
    mesh, K, M, lam1 = ellipsoid_operators
    analytic = check_lemma(mesh, 0, lam1, K, K, M, trials=0).analytic_delta
    lemma = check_lemma(mesh, 0, lam1, K, K, M, trials=20, delta_centre=factor * analytic)
    assert lemma.violations == 0
    assert not lemma.delta_star_minimal
    assert not lemma.passed
    assert abs(lemma.delta_log2_offset) > Tolerances.DELTA_CENTRE


def test_lemma_rejects_a_non_positive_centre(ellipsoid_operators):
    mesh, K, M, lam1 = ellipsoid_operators
    with pytest.raises(InvalidInputError):
        check_lemma(mesh, 0, lam1, K, K, M, trials=0, delta_centre=0.0)


def test_lemma_is_tight_on_the_first_eigenvector():
    mesh = generate(SurfaceSpec.sphere(), 2)
    K, M = assemble_stiffness(mesh, 0), assemble_mass(mesh)
    result = smallest_eigenpairs(K, M, k=1)
    lemma = check_lemma(mesh, 0, result.first, K, K, M, trial_vectors=result.eigenvectors[:, :1])
    assert lemma.violations == 0
    assert abs(lemma.worst_margin_first) <= 1e-8


def test_flat_torus_is_an_equality_case():
    report = check_theorem(SurfaceSpec.flat_torus(), 0, RunConfig(level=2))
    assert report.equality_case
    assert report.eigenvalues[0] == pytest.approx(1.0, rel=1e-2)
    assert abs(report.thm1.slack_ratio - 1.0) <= Defaults.TOL_DISCR
    assert report.r_minimal_defect > 0.0
    assert not report.classical_hypersurface_case


def test_clifford_torus_is_an_equality_case():
    report = check_theorem(SurfaceSpec.clifford_torus(), 0, RunConfig(level=2))
    assert report.c == 1
    assert report.eigenvalues[0] == pytest.approx(2.0, rel=2e-2)
    assert abs(report.thm1.slack_ratio - 1.0) <= Defaults.TOL_DISCR
    assert abs(report.thm2.slack_ratio - 1.0) <= Defaults.TOL_DISCR
    assert report.r_minimal_defect <= 1e-12
    assert report.passed
    assert report.equality_case


def test_ellipsoid_is_strict():
    report = check_theorem(SurfaceSpec.ellipsoid([1.0, 1.0, 1.5]), 0, RunConfig(level=3))
    assert report.thm1.passed
    assert report.thm1.slack_ratio < 1.0
    assert report.cor2.passed
    assert not report.equality_case
    assert all(check.allowance == 0.0 for check in (report.thm1, report.thm2, report.cor1))
    assert report.passed
    assert report.analytic_lambda1 is None


def test_three_sphere_r2():
    report = check_theorem(SurfaceSpec.sphere(1.0, n=3), 2, RunConfig(level=1))
    assert len(report.eigenvalues) >= 3
    assert report.ellipticity_min == pytest.approx(1.0)
    assert report.energy_identity_rel <= 1e-10
    assert report.lemma.violations == 0


def test_theorem_errors():
    with pytest.raises(InvalidOrderError):
        check_theorem(SurfaceSpec.sphere(), 1, RunConfig(level=0))
    with pytest.raises(UnsupportedError):
        check_theorem(SurfaceSpec.hyperplane_patch(2), 0, RunConfig(level=0))


def test_progress_phases():
    phases = []
    check_theorem(SurfaceSpec.sphere(), 0, RunConfig(level=1, lemma_trials=5),
                  progress=lambda phase, elapsed: phases.append(phase))
    assert phases == ["mesh", "assemble", "solve", "integrate", "lemma", "report"]


def test_convergence_study():
    table = converge(SurfaceSpec.sphere(), 0, [2, 3, 4], RunConfig(lemma_trials=0))
    assert table.truth == 2.0
    assert table.truth_source == "analytic"
    assert table.mass == "consistent"
    errors = [row.lambda1_error for row in table.rows]
    assert errors[0] > errors[1] > errors[2]
    assert table.lambda1_orders[-1] > 1.0
    weak = [row.weak_lr_x for row in table.rows]
    assert weak[0] > weak[1] > weak[2]
    assert all(row.trace_max_abs <= 1e-10 for row in table.rows)


def test_consistent_mass_converges_from_above():
    table = converge(SurfaceSpec.sphere(), 0, [1, 2, 3, 4])
    lambda1 = [row.eigenvalues[0] for row in table.rows]
    assert all(value > table.truth for value in lambda1)
    assert all(fine < coarse for coarse, fine in zip(lambda1, lambda1[1:]))
    assert table.lambda1_nonincreasing


def test_convergence_with_lumped_mass():
    table = converge(SurfaceSpec.sphere(), 0, [1, 2], RunConfig(lumped=True))
    assert table.mass == "lumped"
    assert table.rows[-1].lambda1_error < table.rows[0].lambda1_error


def test_convergence_against_finest_level():
    table = converge(SurfaceSpec.ellipsoid([1.0, 1.0, 1.5]), 0, [1, 2])
    assert table.truth_source == "finest"
    assert table.rows[-1].lambda1_error is None
    assert math.isnan(table.lambda1_orders[0])


@pytest.mark.parametrize("levels", [[], [2, 1], [-1, 0]])
def test_convergence_rejects_levels(levels):
    with pytest.raises(InvalidInputError):
        converge(SurfaceSpec.sphere(), 0, levels)


def test_spectrum_report():
    report = spectrum(SurfaceSpec.sphere(), 0, RunConfig(level=2, eigs=3))
    assert len(report.eigenvalues) == 3
    assert report.clusters[0] == (0, 3)
    assert report.to_dict()["report"] == "spectrum"


def test_identity_reports():
    ellipsoid = check_identities(SurfaceSpec.ellipsoid([1.0, 1.0, 1.0, 1.3]), 2, samples=200)
    assert ellipsoid.passed
    assert ellipsoid.oracle_max_abs <= 1e-11
    assert ellipsoid.symmetry_max_abs <= 1e-14
    assert ellipsoid.pushforward_normal_max_abs <= 1e-10
    assert ellipsoid.frame_invariance_max_rel <= 1e-10

    clifford = check_identities(SurfaceSpec.clifford_torus(), 0, samples=50)
    assert clifford.passed
    assert clifford.frame_defect <= 1e-10
    assert clifford.pushforward_normal_max_abs <= 1e-10
    assert clifford.frame_invariance_max_rel <= 1e-10
    assert clifford.oracle_max_abs is not None

    torus = check_identities(SurfaceSpec.flat_torus(), 0, samples=50)
    assert torus.oracle_max_abs is None
    assert torus.pushforward_normal_max_abs <= 1e-10
    assert torus.frame_invariance_max_rel <= 1e-10
    assert torus.passed


def test_run_config():
    config = RunConfig.from_mapping({"level": 2, "eigs": 6})
    assert (config.level, config.eigs, config.tol) == (2, 6, Defaults.TOL)
    with pytest.raises(InvalidInputError):
        RunConfig.from_mapping({"levle": 2})
    with pytest.raises(InvalidInputError):
        RunConfig(level=-1)
    with pytest.raises(InvalidInputError):
        RunConfig(quad_order=3)
    with pytest.raises(InvalidInputError):
        RunConfig.from_mapping({"lumped": "yes"})
    assert RunConfig().mass_lumped(True) and not RunConfig().mass_lumped(False)
    assert RunConfig(lumped=False).mass_lumped(True) is False


def test_report_round_trip(tmp_path, sphere_report):
    path = tmp_path / "report.json"
    emit_report(sphere_report, str(path))
    text = path.read_text()
    assert text.startswith("{\n  \"schema\": \"" + ReportFormat.SCHEMA + "\"")
    assert "\"timings\": {}" in text
    assert read_report(str(path)) == sphere_report


def test_reports_are_reproducible(tmp_path):
    config = RunConfig(level=1, lemma_trials=10)
    first = check_theorem(SurfaceSpec.ellipsoid([1.0, 1.0, 1.5]), 0, config)
    second = check_theorem(SurfaceSpec.ellipsoid([1.0, 1.0, 1.5]), 0, RunConfig(level=1, lemma_trials=10, threads=2))
    assert dumps_report(first.to_dict()) == dumps_report(second.to_dict())


def test_timings_on_request(sphere_report):
    body = sphere_report.to_dict(include_timings=True)
    assert set(body["timings"]) == {"mesh", "assemble", "solve", "integrate", "lemma", "report"}
    assert sphere_report.to_dict()["timings"] == {}


def test_dumps_report_formats_floats():
    text = dumps_report({"a": 0.1, "b": float("nan"), "c": [1, 2.5], "d": None})
    assert "\"a\": 0.10000000000000001" in text
    assert "\"b\": NaN" in text
    assert "\"c\": [1, 2.5]" in text
    assert "\"d\": null" in text


def test_csv_report(tmp_path, sphere_report):
    path = tmp_path / "report.csv"
    emit_report(sphere_report, str(path), fmt="csv")
    with open(path, newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 1
    assert float(rows[0]["thm1.slack_ratio"]) == sphere_report.thm1.slack_ratio
    assert rows[0]["surface"] == "sphere:1"


def test_report_errors(tmp_path, sphere_report):
    with pytest.raises(ReportWriteError) as info:
        emit_report(sphere_report, str(tmp_path / "missing" / "report.json"))
    assert info.value.path.endswith("report.json")
    with pytest.raises(InvalidInputError):
        emit_report(sphere_report, str(tmp_path / "report.xml"), fmt="xml")
    with pytest.raises(InvalidInputError):
        parse_report("{\"schema\": \"other\"}")
    with pytest.raises(InvalidInputError):
        parse_report("not json")
