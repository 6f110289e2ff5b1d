"""Residual evaluators, linearization, phase classification."""

import numpy as np
import pytest

from slag_lab import (
    GridSpec,
    PhaseError,
    ProblemSpec,
    hessian_field,
    ma_residual,
    mar_residual,
    phase_classify,
    rotate_spectrum,
    sample_potential,
    slag_linearization,
    slag_residual,
)
from slag_lab.formulas import iso_quad, quad_form
from slag_lab.rotation import RotationParams


def hessian_of(formula, nodes=33, dim=2):
    grid = GridSpec.ball_box(dim, nodes)
    return hessian_field(sample_potential(formula, grid))


def sum_arctan(m):
    return float(np.arctan(np.linalg.eigvalsh(m)).sum())


class TestSlagResidual:
    def test_identity_at_half_pi(self):
        h = hessian_of(iso_quad(1.0))
        res = slag_residual(h, np.pi / 2)
        assert np.abs(res.values[res.valid]).max() < 1e-10

    def test_reciprocal_pair(self):
        h = hessian_of(quad_form([[3.0, 0.0], [0.0, 1.0 / 3.0]]))
        res = slag_residual(h, np.pi / 2)
        assert np.abs(res.values[res.valid]).max() < 1e-10

    def test_3d_identity_phase(self):
        h = hessian_of(iso_quad(1.0), nodes=15, dim=3)
        res = slag_residual(h, 0.0)
        assert np.allclose(res.values[res.valid], 3 * np.pi / 4, atol=1e-10)

    def test_orthogonal_invariance(self, rng):
        q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
        a = np.array([[2.0, 0.3], [0.3, 0.8]])
        b = q @ a @ q.T
        ha = hessian_of(quad_form(a))
        hb = hessian_of(quad_form(0.5 * (b + b.T)))
        ra = slag_residual(ha, 0.3)
        rb = slag_residual(hb, 0.3)
        va = ra.values[ra.valid].mean()
        vb = rb.values[rb.valid].mean()
        assert abs(va - vb) < 1e-9

    def test_monotone_in_eigenvalues(self, rng):
        for _ in range(20):
            lam = np.sort(rng.uniform(-3, 3, size=3))[::-1]
            bump = np.zeros(3)
            bump[rng.integers(0, 3)] = rng.uniform(0.01, 0.5)
            assert (
                np.arctan(lam + bump).sum() > np.arctan(lam).sum()
            )


class TestMaResidual:
    def test_identity_zero(self):
        h = hessian_of(iso_quad(1.0))
        res = ma_residual(h, 0.0)
        assert np.abs(res.values[res.valid]).max() < 1e-10
        assert res.flagged == []

    def test_exp_level(self):
        h = hessian_of(iso_quad(np.e))
        res = ma_residual(h, 2.0)
        assert np.abs(res.values[res.valid]).max() < 1e-9

    def test_log_det_additivity(self):
        h = hessian_of(quad_form([[2.0, 0.0], [0.0, 0.5]]))
        res = ma_residual(h, 0.0)
        assert np.abs(res.values[res.valid]).max() < 1e-10

    def test_nonpositive_nodes_flagged_not_raised(self):
        h = hessian_of(quad_form([[1.0, 0.0], [0.0, -0.5]]))
        res = ma_residual(h, 0.0)
        assert len(res.flagged) == int(h.interior_mask.sum())
        assert not res.valid.any()


class TestMarResidual:
    def test_zero_hessian(self):
        h = hessian_of(lambda x: np.zeros(x.shape[:-1]))
        res = mar_residual(h, 0.0)
        assert np.abs(res.values[res.valid]).max() < 1e-12

    def test_odd_cancellation(self):
        h = hessian_of(quad_form([[0.5, 0.0], [0.0, -0.5]]))
        res = mar_residual(h, 0.0)
        assert np.abs(res.values[res.valid]).max() < 1e-10

    def test_log_three_level(self):
        h = hessian_of(iso_quad(0.5))
        res = mar_residual(h, 2.0 * np.log(3.0))
        assert np.abs(res.values[res.valid]).max() < 1e-10

    def test_out_of_range_flagged(self):
        h = hessian_of(iso_quad(1.5))
        res = mar_residual(h, 0.0)
        assert len(res.flagged) == int(h.interior_mask.sum())

    def test_rotation_turns_logdet_into_logratio(self, rng):
        # pi/4 spectral rotation maps lambda -> (lambda-1)/(lambda+1) and
        # ln((1+rot)/(1-rot)) recovers ln(lambda) exactly
        params = RotationParams.from_alpha(np.pi / 4)
        lam = rng.uniform(0.2, 5.0, size=(30, 2))
        rot = rotate_spectrum(np.sort(lam, axis=1)[:, ::-1], params)
        lhs = np.log((1.0 + rot) / (1.0 - rot)).sum(axis=1)
        rhs = np.log(lam).sum(axis=1)
        assert np.abs(lhs - rhs).max() < 1e-9


class TestLinearization:
    def test_zero_matrix(self):
        assert np.allclose(slag_linearization(np.zeros((2, 2))), np.eye(2))

    def test_identity_matrix(self):
        out = slag_linearization(np.eye(2))
        assert np.allclose(out, 0.5 * np.eye(2))

    def test_matches_finite_differences(self, rng):
        # directional derivative oracle at t = 1e-5
        for _ in range(10):
            m = rng.uniform(-2, 2, size=(3, 3))
            m = 0.5 * (m + m.T)
            e = rng.uniform(-1, 1, size=(3, 3))
            e = 0.5 * (e + e.T)
            t = 1e-5
            fd = (sum_arctan(m + t * e) - sum_arctan(m - t * e)) / (2 * t)
            lin = float(np.trace(slag_linearization(m) @ e))
            assert abs(fd - lin) < 1e-6

    def test_concavity_on_positive_cone(self, rng):
        for _ in range(20):
            a = rng.uniform(0.1, 3.0, size=3)
            b = rng.uniform(0.1, 3.0, size=3)
            qa, _ = np.linalg.qr(rng.normal(size=(3, 3)))
            qb, _ = np.linalg.qr(rng.normal(size=(3, 3)))
            ma = qa @ np.diag(a) @ qa.T
            mb = qb @ np.diag(b) @ qb.T
            t = rng.uniform(0.0, 1.0)
            mix = sum_arctan(t * ma + (1 - t) * mb)
            assert mix >= t * sum_arctan(ma) + (1 - t) * sum_arctan(mb) - 1e-9


class TestPhaseClassify:
    def test_critical_in_3d(self):
        assert phase_classify(np.pi / 2, 3) == "critical"

    def test_supercritical_in_2d(self):
        assert phase_classify(0.1, 2) == "supercritical"

    def test_subcritical_in_3d(self):
        assert phase_classify(np.pi / 4, 3) == "subcritical"

    def test_infeasible_raises(self):
        with pytest.raises(PhaseError):
            phase_classify(np.pi, 2)

    def test_problem_spec_guards(self):
        with pytest.raises(PhaseError):
            ProblemSpec(dim=2, theta=3.2, variant="SLAG")
        spec = ProblemSpec(dim=2, theta=np.pi / 2)
        assert spec.variant == "SLAG"
