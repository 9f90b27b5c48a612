import math

import numpy as np
import pytest

import covsteer as cs
from covsteer.problem import IssueKind

from conftest import make_di_spec


def kinds(report):
    return {issue.kind for issue in report.issues}


def test_di_spec_passes():
    report = cs.validate(make_di_spec())
    assert report.ok, str(report)


def test_zero_r_fails_not_pd():
    spec = cs.ProblemSpec.constant(
        A=np.eye(2), B=[[0.0], [1.0]], D=np.eye(2),
        Q=np.zeros((2, 2)), R=[[0.0]], horizon=3,
        mu0=[0, 0], Sigma0=np.eye(2), muN=[1, 0], SigmaN=np.eye(2),
    )
    report = cs.validate(spec)
    assert not report.ok
    assert IssueKind.NOT_PD in kinds(report)
    assert any("R[0]" == i.where for i in report.issues)


def test_zero_system_not_controllable():
    spec = cs.ProblemSpec.constant(
        A=np.zeros((2, 2)), B=np.zeros((2, 1)), D=np.eye(2),
        Q=np.zeros((2, 2)), R=[[1.0]], horizon=3,
        mu0=[0, 0], Sigma0=np.eye(2), muN=[1, 0], SigmaN=np.eye(2),
    )
    report = cs.validate(spec)
    assert not report.ok
    assert IssueKind.NOT_CONTROLLABLE in kinds(report)


def test_dimension_mismatch_names_offender():
    spec = cs.ProblemSpec(
        horizon=2,
        systems=((np.eye(2), np.zeros((2, 1)), np.eye(2)),
                 (np.eye(2), np.zeros((3, 1)), np.eye(2))),
        weights=((np.zeros((2, 2)), np.eye(1)),) * 2,
        mu0=[0, 0], Sigma0=np.eye(2), muN=[0, 0], SigmaN=np.eye(2),
    )
    report = cs.validate(spec)
    assert not report.ok
    assert any(i.kind is IssueKind.DIMENSION_MISMATCH and i.where == "B[1]"
               for i in report.issues)


def test_indefinite_q_fails_not_psd():
    spec = cs.ProblemSpec.constant(
        A=np.eye(2), B=[[0.0], [1.0]], D=np.eye(2),
        Q=np.diag([1.0, -1.0]), R=[[1.0]], horizon=3,
        mu0=[0, 0], Sigma0=np.eye(2), muN=[1, 0], SigmaN=np.eye(2),
    )
    report = cs.validate(spec)
    assert IssueKind.NOT_PSD in kinds(report)


def test_validate_is_pure():
    spec = make_di_spec()
    assert cs.validate(spec) == cs.validate(spec)


def test_spec_is_immutable():
    spec = make_di_spec()
    with pytest.raises(AttributeError):
        spec.horizon = 5


def test_require_valid_raises_with_report():
    spec = cs.ProblemSpec.constant(
        A=np.eye(2), B=[[0.0], [1.0]], D=np.eye(2),
        Q=np.zeros((2, 2)), R=[[0.0]], horizon=2,
        mu0=[0, 0], Sigma0=np.eye(2), muN=[1, 0], SigmaN=np.eye(2),
    )
    with pytest.raises(cs.InvalidProblem) as exc:
        spec.require_valid()
    assert not exc.value.report.ok


class TestUniformRiskAllocation:
    def test_eleven_rows(self):
        shares = cs.uniform_risk_allocation(0.011, 11)
        assert len(shares) == 11
        assert all(abs(p - 0.001) < 1e-15 for p in shares)
        assert abs(math.fsum(shares) - 0.011) <= math.ulp(0.011)
        assert all(p < 0.5 for p in shares)

    def test_exact_division(self):
        assert cs.uniform_risk_allocation(0.02, 4) == [0.005] * 4

    def test_boundary_rejected(self):
        with pytest.raises(cs.RiskTooLarge):
            cs.uniform_risk_allocation(0.5, 1)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            cs.uniform_risk_allocation(0.1, 0)
        with pytest.raises(ValueError):
            cs.uniform_risk_allocation(0.0, 3)
        with pytest.raises(ValueError):
            cs.uniform_risk_allocation(1.0, 3)


class TestResolveRisks:
    def test_all_explicit(self):
        spec = make_di_spec()
        assert cs.resolve_risks(spec) == [0.001] * 11

    def test_uniform_from_budget(self):
        spec = make_di_spec()
        c = cs.HalfspaceConstraint(a=[1, 1], b=20, steps=range(11))
        spec = cs.ProblemSpec.constant(
            A=spec.systems[0][0], B=spec.systems[0][1], D=spec.systems[0][2],
            Q=spec.weights[0][0], R=spec.weights[0][1], horizon=10,
            mu0=spec.mu0, Sigma0=spec.Sigma0, muN=spec.muN, SigmaN=spec.SigmaN,
            chance_set=[c], total_risk=0.011,
        )
        risks = cs.resolve_risks(spec)
        assert len(risks) == 11
        assert abs(math.fsum(risks) - 0.011) <= math.ulp(0.011)

    def test_mixed_split(self):
        spec = make_di_spec()
        cs1 = cs.HalfspaceConstraint(a=[1, 0], b=5, steps=[0, 1], p_fail=0.002)
        cs2 = cs.HalfspaceConstraint(a=[0, 1], b=5, steps=[2])
        spec = cs.ProblemSpec.constant(
            A=spec.systems[0][0], B=spec.systems[0][1], D=spec.systems[0][2],
            Q=spec.weights[0][0], R=spec.weights[0][1], horizon=10,
            mu0=spec.mu0, Sigma0=spec.Sigma0, muN=spec.muN, SigmaN=spec.SigmaN,
            chance_set=[cs1, cs2], total_risk=0.01,
        )
        risks = cs.resolve_risks(spec)
        assert risks[:2] == [0.002, 0.002]
        assert risks[2] == pytest.approx(0.006)

    def test_budget_exceeded_flagged(self):
        base = make_di_spec()
        c = cs.HalfspaceConstraint(a=[1, 1], b=20, steps=range(11), p_fail=0.01)
        spec = cs.ProblemSpec.constant(
            A=base.systems[0][0], B=base.systems[0][1], D=base.systems[0][2],
            Q=base.weights[0][0], R=base.weights[0][1], horizon=10,
            mu0=base.mu0, Sigma0=base.Sigma0, muN=base.muN, SigmaN=base.SigmaN,
            chance_set=[c], total_risk=0.011,
        )
        report = cs.validate(spec)
        assert IssueKind.RISK_BUDGET_EXCEEDED in kinds(report)

    def test_p_fail_out_of_range_flagged(self):
        base = make_di_spec()
        c = cs.HalfspaceConstraint(a=[1, 1], b=20, steps=[0], p_fail=0.6)
        spec = cs.ProblemSpec.constant(
            A=base.systems[0][0], B=base.systems[0][1], D=base.systems[0][2],
            Q=base.weights[0][0], R=base.weights[0][1], horizon=10,
            mu0=base.mu0, Sigma0=base.Sigma0, muN=base.muN, SigmaN=base.SigmaN,
            chance_set=[c], total_risk=0.9,
        )
        report = cs.validate(spec)
        assert IssueKind.RISK_BUDGET_EXCEEDED in kinds(report)
