import numpy as np
import pytest

from lagshadow.errors import EmptySample, NoConvergence, RankLoss
from lagshadow.geometry import (
    AmbientSpace, TangentVector, fs_distance, horizontal_project,
    normalize_point, random_coords, retract,
)
from lagshadow.sections import section_from_monomials
from lagshadow.variety import (
    VarietyConstraint, check_transversality, constraint_residual,
    project_to_variety, sample_divisor_intersection, tangent_project_variety,
)

SP = AmbientSpace((2, 2))


def incidence_constraint():
    """The flag variety: sum_i x_i y_i = 0 inside CP^2 x CP^2."""
    eq = section_from_monomials([
        (1, ((1, 0, 0), (1, 0, 0))),
        (1, ((0, 1, 0), (0, 1, 0))),
        (1, ((0, 0, 1), (0, 0, 1)))])
    return VarietyConstraint((eq,))


def gz_section():
    return section_from_monomials([
        (1, ((1, 0, 0), (1, 0, 0))),
        (1, ((0, 1, 0), (0, 1, 0))),
        (-1, ((0, 0, 1), (0, 0, 1)))])


def rand_flag_point(rng):
    """Random point on the flag variety via orthogonal pair construction."""
    x = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    y = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    # bilinear orthogonality: subtract the component along conj(x)
    y = y - (x @ y) / (x @ np.conj(x)) * np.conj(x)
    return normalize_point(SP, [x, y])


class TestResidual:
    def test_exact_zero(self):
        Y = incidence_constraint()
        p = normalize_point(SP, [[1, 0, 0], [0, 1, 0]])
        assert constraint_residual(Y, p) == 0.0

    def test_unit(self):
        Y = incidence_constraint()
        p = normalize_point(SP, [[1, 0, 0], [1, 0, 0]])
        assert constraint_residual(Y, p) == pytest.approx(1.0)

    def test_gauge_invariance(self):
        Y = incidence_constraint()
        rng = np.random.default_rng(0)
        raw = [c[0] for c in random_coords(SP, 1, rng)]
        p = normalize_point(SP, raw)
        q = normalize_point(SP, [3.3j * raw[0], -0.4 * raw[1]])
        assert constraint_residual(Y, p) == pytest.approx(
            constraint_residual(Y, q), abs=1e-12)

    def test_complete_intersection_only(self):
        eq = incidence_constraint().equations[0]
        with pytest.raises(ValueError, match="complete intersections"):
            VarietyConstraint((eq,), expected_codim=2)


class TestProjection:
    def test_fixed_on_variety(self):
        Y = incidence_constraint()
        p = rand_flag_point(np.random.default_rng(1))
        q = project_to_variety(Y, p)
        assert fs_distance(p, q) < 1e-11

    def test_small_perturbation(self):
        Y = incidence_constraint()
        rng = np.random.default_rng(2)
        p = rand_flag_point(rng)
        v = horizontal_project(p, [c[0] for c in random_coords(SP, 1, rng)])
        v = TangentVector(p, tuple(a / v.norm for a in v.parts))
        moved = retract(p, v, 1e-3)
        q = project_to_variety(Y, moved)
        assert constraint_residual(Y, q) < 1e-11
        assert fs_distance(moved, q) < 2e-3

    def test_outside_basin_rejected(self):
        Y = incidence_constraint()
        p = normalize_point(SP, [[1, 0, 0], [1, 0, 0]])  # residual 1
        with pytest.raises(NoConvergence):
            project_to_variety(Y, p)

    def test_idempotence(self):
        Y = incidence_constraint()
        rng = np.random.default_rng(3)
        p = rand_flag_point(rng)
        v = horizontal_project(p, [c[0] for c in random_coords(SP, 1, rng)])
        moved = retract(p, TangentVector(p, tuple(a / v.norm for a in v.parts)),
                        5e-3)
        q1 = project_to_variety(Y, moved)
        q2 = project_to_variety(Y, q1)
        assert fs_distance(q1, q2) < 1e-11


class TestTangentProjection:
    def test_idempotence_and_kernel(self):
        Y = incidence_constraint()
        rng = np.random.default_rng(4)
        p = rand_flag_point(rng)
        v = horizontal_project(p, [c[0] for c in random_coords(SP, 1, rng)])
        w = tangent_project_variety(Y, p, v)
        w2 = tangent_project_variety(Y, p, w)
        assert max(np.abs(a - b).max() for a, b in zip(w.parts, w2.parts)) < 1e-10
        # dF(w) ~ 0: the differential is the Hermitian pairing with the rows
        from lagshadow.sections import section_partials_batch
        _, partials = section_partials_batch(Y.equations[0],
                                             [c[None, :] for c in p.coords])
        df = sum((a[None, :] * d).sum() for a, d in zip(w.parts, partials))
        assert abs(df) < 1e-10

    def test_j_invariance(self):
        Y = incidence_constraint()
        rng = np.random.default_rng(5)
        for _ in range(200):
            p = rand_flag_point(rng)
            v = horizontal_project(p, [c[0] for c in random_coords(SP, 1, rng)])
            jv = TangentVector(p, tuple(1j * a for a in v.parts))
            pj = tangent_project_variety(Y, p, jv)
            jp = TangentVector(p, tuple(
                1j * a for a in tangent_project_variety(Y, p, v).parts))
            assert max(np.abs(a - b).max()
                       for a, b in zip(pj.parts, jp.parts)) < 1e-10

    def test_tangent_dimension(self):
        # the constrained tangent space has real dimension 6 = 2 dim_C F^3
        Y = incidence_constraint()
        rng = np.random.default_rng(6)
        p = rand_flag_point(rng)
        from lagshadow.geometry import flatten_coords
        from lagshadow.potential import PotentialProblem, problem_frame_batch
        prob = PotentialProblem(SP, gz_section(), Y)
        flat = flatten_coords(SP, [c[None, :] for c in p.coords])
        F = problem_frame_batch(prob, flat)
        assert F.shape[1] == 6
        G = np.real(np.einsum("kd,ld->kl", np.conj(F[0]), F[0]))
        assert np.abs(G - np.eye(6)).max() < 1e-10

    def test_rank_loss(self):
        # x0 * y0 = 0 is singular where both gradients vanish
        eq = section_from_monomials([(1, ((1, 0, 0), (1, 0, 0)))])
        Y = VarietyConstraint((eq,))
        p = normalize_point(SP, [[0, 1, 0], [0, 0, 1]])
        v = horizontal_project(p, [[1, 0, 0], [0, 0, 0]])
        with pytest.raises(RankLoss):
            tangent_project_variety(Y, p, v)


class TestTransversality:
    def test_flag_pair_full_rank(self):
        Y = incidence_constraint()
        s = gz_section()
        rng = np.random.default_rng(7)
        samples = sample_divisor_intersection(SP, Y, s, 50, rng)
        assert len(samples) == 50
        for p in samples:
            assert constraint_residual(Y, p) < 1e-8
            from lagshadow.sections import eval_section
            assert abs(eval_section(s, p)) < 1e-8
        rep = check_transversality(Y, s, samples)
        assert rep.full_rank and rep.failures == 0
        assert rep.min_singular > 1e-3

    def test_degenerate_instance_flagged(self):
        # the section equal to the constraint itself makes ds parallel to dF
        Y = incidence_constraint()
        s = Y.equations[0]
        rng = np.random.default_rng(8)
        samples = sample_divisor_intersection(SP, Y, s, 10, rng)
        rep = check_transversality(Y, s, samples)
        assert not rep.full_rank

    def test_empty_sample(self):
        Y = incidence_constraint()
        with pytest.raises(EmptySample):
            check_transversality(Y, gz_section(), [])
