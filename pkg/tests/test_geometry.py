import numpy as np
import pytest

from lagshadow.errors import BaseMismatch, MismatchedSpace, ZeroVector
from lagshadow.geometry import (
    AmbientSpace, TangentVector, batch_fs_distance, batch_log, batch_normalize,
    complex_structure, flatten_coords, frame_coeffs, frame_vector,
    fs_distance, global_frame, horizontal_frame, horizontal_project,
    metric_inner, normalize_point, random_coords, retract, sobol_coords,
    symplectic_eval,
)

CP1 = AmbientSpace((1,))
Q3 = AmbientSpace((1, 1, 1))
RNG = np.random.default_rng(20240601)


def rand_point(space, rng=RNG):
    return normalize_point(space, [c[0] for c in random_coords(space, 1, rng)])


def rand_tangent(p, rng=RNG):
    raw = [c[0] for c in random_coords(p.space, 1, rng)]
    return horizontal_project(p, raw)


class TestNormalize:
    def test_scaling_invariance(self):
        p = normalize_point(CP1, [[2, 0]])
        assert np.allclose(p.coords[0], [1, 0])

    def test_phase_absorbed_by_gauge(self):
        p = normalize_point(CP1, [[0, 3j]])
        assert np.allclose(p.coords[0], [0, 1])

    def test_unit_diagonal_and_idempotence(self):
        p = normalize_point(CP1, [[1, 1]])
        r = 0.7071067811865475
        assert np.allclose(p.coords[0], [r, r], atol=1e-15)
        again = normalize_point(CP1, p.coords)
        assert np.allclose(again.coords[0], p.coords[0], atol=0)

    def test_zero_vector_raises(self):
        with pytest.raises(ZeroVector):
            normalize_point(CP1, [[1e-15, 0]])

    def test_gauge_canonicity_under_scalar(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            raw = [c[0] for c in random_coords(Q3, 1, rng)]
            lam = [np.exp(rng.normal() + 1j * rng.uniform(0, 2 * np.pi))
                   for _ in raw]
            p = normalize_point(Q3, raw)
            q = normalize_point(Q3, [l * c for l, c in zip(lam, raw)])
            assert fs_distance(p, q) < 1e-10
            for a, b in zip(p.coords, q.coords):
                assert np.abs(a - b).max() < 1e-10

    def test_point_invariants(self):
        p = rand_point(Q3)
        for c in p.coords:
            assert abs(np.linalg.norm(c) - 1) < 1e-12
            lead = c[np.argmax(np.abs(c))]
            assert abs(lead.imag) < 1e-12 and lead.real > 0


class TestDistance:
    def test_identity(self):
        p = rand_point(Q3)
        assert fs_distance(p, p) < 1e-14

    def test_orthogonal_cp1(self):
        p = normalize_point(CP1, [[1, 0]])
        q = normalize_point(CP1, [[0, 1]])
        assert abs(fs_distance(p, q) - np.pi / 2) < 1e-14

    def test_product_pythagoras(self):
        sp = AmbientSpace((1, 1))
        p = normalize_point(sp, [[1, 0], [1, 0]])
        q = normalize_point(sp, [[0, 1], [0, 1]])
        assert abs(fs_distance(p, q) - np.pi / np.sqrt(2)) < 1e-14

    def test_symmetry_and_triangle(self):
        rng = np.random.default_rng(11)
        a = batch_normalize(random_coords(Q3, 1000, rng))
        b = batch_normalize(random_coords(Q3, 1000, rng))
        c = batch_normalize(random_coords(Q3, 1000, rng))
        dab = batch_fs_distance(a, b)
        dba = batch_fs_distance(b, a)
        assert np.abs(dab - dba).max() == 0.0
        dbc = batch_fs_distance(b, c)
        dac = batch_fs_distance(a, c)
        assert np.all(dac <= dab + dbc + 1e-9)

    def test_mismatched_space(self):
        with pytest.raises(MismatchedSpace):
            fs_distance(rand_point(CP1), rand_point(Q3))


class TestHorizontal:
    def test_projection_kills_base(self):
        p = rand_point(Q3)
        v = horizontal_project(p, p.coords)
        assert v.norm < 1e-14

    def test_idempotence(self):
        p = rand_point(Q3)
        v = rand_tangent(p)
        w = horizontal_project(p, v.parts)
        assert max(np.abs(a - b).max() for a, b in zip(v.parts, w.parts)) < 1e-12

    def test_cp1_example(self):
        p = normalize_point(CP1, [[1, 0]])
        v = horizontal_project(p, [[1, 1]])
        assert np.allclose(v.parts[0], [0, 1])

    def test_invariant(self):
        p = rand_point(Q3)
        v = rand_tangent(p)
        for b, a in zip(p.coords, v.parts):
            assert abs((a * np.conj(b)).sum()) < 1e-10


class TestKahler:
    def test_antisymmetry(self):
        p = rand_point(Q3)
        v = rand_tangent(p)
        assert symplectic_eval(v, v) == pytest.approx(0.0, abs=1e-12)

    def test_sign_convention_example(self):
        # omega(v, w) = g(Jv, w) = -Im<v, w> with <a,b> = sum a conj(b):
        # at [1,0] with v = (0,1), w = (0,i): <v,w> = -i, so omega = +1
        p = normalize_point(CP1, [[1, 0]])
        v = horizontal_project(p, [[0, 1]])
        w = horizontal_project(p, [[0, 1j]])
        assert metric_inner(v, w) == pytest.approx(0.0, abs=1e-15)
        assert symplectic_eval(v, w) == pytest.approx(1.0, abs=1e-15)
        assert symplectic_eval(v, w) == pytest.approx(
            metric_inner(complex_structure(v), w), abs=1e-15)

    def test_j_squared(self):
        p = rand_point(Q3)
        v = rand_tangent(p)
        jjv = complex_structure(complex_structure(v))
        assert max(np.abs(a + b).max() for a, b in zip(jjv.parts, v.parts)) < 1e-15

    def test_compatibility(self):
        p = rand_point(Q3)
        v, w = rand_tangent(p), rand_tangent(p)
        jv, jw = complex_structure(v), complex_structure(w)
        assert metric_inner(jv, jw) == pytest.approx(metric_inner(v, w),
                                                     abs=1e-12)
        assert symplectic_eval(v, w) == pytest.approx(metric_inner(jv, w),
                                                      abs=1e-12)

    def test_base_mismatch(self):
        p, q = rand_point(Q3), rand_point(Q3)
        with pytest.raises(BaseMismatch):
            metric_inner(rand_tangent(p), rand_tangent(q))


class TestRetract:
    def test_zero_step(self):
        p = rand_point(Q3)
        v = rand_tangent(p)
        q = retract(p, v, 0.0)
        assert fs_distance(p, q) < 1e-14

    def test_first_order_distance(self):
        p = rand_point(Q3)
        v = rand_tangent(p)
        v = TangentVector(p, tuple(a / v.norm for a in v.parts))
        h = 1e-4
        d = fs_distance(p, retract(p, v, h))
        assert abs(d - h) < 1e-11  # O(h^3) error at h = 1e-4

    def test_cp1_example(self):
        p = normalize_point(CP1, [[1, 0]])
        v = horizontal_project(p, [[0, 1]])
        q = retract(p, v, 1.0)
        r = 0.7071067811865475
        assert np.allclose(q.coords[0], [r, r], atol=1e-15)


class TestFrames:
    def test_orthonormal_across_batch(self):
        coords = batch_normalize(
            [np.array([[1, 0], [0, 1], [0.6, 0.8]], complex),
             np.array([[1, 0], [1, 0], [1j, 0.2]], complex)])
        sp = AmbientSpace((1, 1))
        F = global_frame(sp, coords)
        for b in range(3):
            G = np.real(np.einsum("kd,ld->kl", np.conj(F[b]), F[b]))
            assert np.abs(G - np.eye(4)).max() < 1e-12

    def test_coeff_roundtrip(self):
        sp = Q3
        rng = np.random.default_rng(3)
        coords = batch_normalize(random_coords(sp, 5, rng))
        F = horizontal_frame(sp, coords)
        raw = random_coords(sp, 5, rng)
        from lagshadow.geometry import batch_horizontal
        hv = batch_horizontal(coords, raw)
        back = frame_vector(F, frame_coeffs(F, hv))
        assert max(np.abs(a - b).max() for a, b in zip(hv, back)) < 1e-12

    def test_log_inverts_retract(self):
        rng = np.random.default_rng(5)
        p = rand_point(Q3, rng)
        v = rand_tangent(p, rng)
        v = TangentVector(p, tuple(a / v.norm for a in v.parts))
        t = 1e-3
        q = retract(p, v, t)
        lg = batch_log([c[None, :] for c in p.coords],
                       [c[None, :] for c in q.coords])
        dev = max(np.abs(l[0] - t * a).max() for l, a in zip(lg, v.parts))
        assert dev < 1e-8  # retraction deviates from the geodesic at O(t^3)


def test_sobol_deterministic():
    a = sobol_coords(Q3, 33, seed=42)
    b = sobol_coords(Q3, 33, seed=42)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
