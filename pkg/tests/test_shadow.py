import numpy as np
import pytest

from lagshadow.critical import dedup_and_cluster, densify_cluster, \
    find_critical_points
from lagshadow.errors import (
    EmptyIntersection, IncompatibleCandidate, NoTangents, TooSparse,
)
from lagshadow.geometry import (
    AmbientSpace, batch_gauge, batch_normalize, flatten_coords,
    normalize_point, random_coords, sobol_coords, split_coords,
)
from lagshadow.potential import gradient_batch, make_problem
from lagshadow.sections import section_from_monomials
from lagshadow.shadow import (
    AssemblyControls, ShadowCloud, assemble_shadow, compare_candidate,
    compute_frames, conj_flip, count_components, estimate_tangent,
    existence_verdict, gz_sphere, product_of, proposition_check, real_circle,
    singular_loci, verify_lagrangian, verify_specialty,
)
from lagshadow.variety import VarietyConstraint


def ex1_problem():
    return make_problem((1, 1), [(1, ((1, 0), (1, 0))),
                                 (1, ((0, 1), (0, 1)))])


def cloud_from_coords(prob, coords, spacing=0.1, radius=0.3):
    coords = batch_gauge(coords)
    flat = flatten_coords(prob.ambient, coords)
    _, psi, gnorm, _ = gradient_batch(prob, split_coords(prob.ambient, flat))
    n = flat.shape[0]
    return ShadowCloud(space=prob.ambient, points_flat=flat, psi=psi,
                       grad_norm=gnorm, provenance=np.zeros(n, dtype=np.int64),
                       segments=np.zeros((0, 2), dtype=np.int64),
                       sample_spacing=spacing, pca_radius=radius)


def antidiagonal_coords(n=500, seed=8, dim=2):
    rng = np.random.default_rng(seed)
    xs = rng.standard_normal((n, dim)) + 1j * rng.standard_normal((n, dim))
    xs /= np.linalg.norm(xs, axis=1)[:, None]
    return [xs, np.conj(xs)]


@pytest.fixture(scope="module")
def ex1_assembled():
    prob = ex1_problem()
    seeds = batch_normalize(sobol_coords(prob.ambient, 200, seed=55))
    res = find_critical_points(prob, seeds)
    clusters = dedup_and_cluster(res.points)
    big = max(clusters, key=lambda c: len(c.members))
    densify_cluster(prob, big, spacing=0.11, max_members=900)
    clusters = dedup_and_cluster([m for c in clusters for m in c.members])
    cloud = assemble_shadow(prob, clusters,
                            AssemblyControls(sample_spacing=0.05))
    compute_frames(cloud, radius=0.22, expected_max_dim=2)
    return prob, cloud


class TestAssembly:
    def test_ex1_cloud_is_minimum_set(self, ex1_assembled):
        prob, cloud = ex1_assembled
        # the bilinear shadow has no unstable directions: no connectors
        assert cloud.diagnostics["num_trajectories"] == 0
        assert cloud.size > 400
        r = compare_candidate(cloud, conj_flip((1, 1)))
        assert r["max_residual"] < 1e-3

    def test_ex1_dimension_and_verifiers(self, ex1_assembled):
        prob, cloud = ex1_assembled
        assert cloud.max_local_dim() == 2
        lag = verify_lagrangian(cloud)
        spec = verify_specialty(prob, cloud)
        assert lag.max_residual < 1e-6
        assert spec.max_residual < 1e-6
        verdict = existence_verdict(cloud, 2, lag, spec, None)
        assert verdict.exists


class TestTangentEstimation:
    def test_antidiagonal_dimension_and_angle(self):
        prob = ex1_problem()
        cloud = cloud_from_coords(prob, antidiagonal_coords(600, 9),
                                  radius=0.1 * 3)
        fit = estimate_tangent(cloud, 0, radius=0.3)
        assert fit.dim == 2
        # analytic tangent at ([x],[conj x]) is {(u, conj(u))}: check the
        # principal angle against two explicit directions
        from lagshadow.geometry import batch_horizontal, global_frame
        coords = cloud.coords
        base = [c[0] for c in coords]
        F = global_frame(prob.ambient, [c[None, :] for c in base])[0]
        angles = []
        rng = np.random.default_rng(0)
        T = fit.frame_rows
        for _ in range(4):
            u = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            parts = batch_horizontal([c[None, :] for c in base],
                                     [u[None, :], np.conj(u)[None, :]])
            vec = flatten_coords(prob.ambient, parts)[0]
            coeff = np.real(np.einsum("d,kd->k", vec, np.conj(F)))
            coeff /= np.linalg.norm(coeff)
            resid = coeff - T.T @ (T @ coeff)
            angles.append(np.arcsin(min(1.0, np.linalg.norm(resid))))
        assert max(angles) < np.deg2rad(2.0)

    def test_too_sparse(self):
        prob = ex1_problem()
        cloud = cloud_from_coords(prob, antidiagonal_coords(3, 10))
        with pytest.raises(TooSparse):
            estimate_tangent(cloud, 0, radius=0.05)


class TestVerifiers:
    def test_exact_antidiagonal_residuals(self):
        prob = ex1_problem()
        cloud = cloud_from_coords(prob, antidiagonal_coords(700, 11))
        compute_frames(cloud, radius=0.25, expected_max_dim=2)
        assert verify_lagrangian(cloud).max_residual < 1e-6
        spec = verify_specialty(prob, cloud)
        assert spec.max_residual < 1e-6

    def test_holomorphic_curve_fails_lagrangian(self):
        # the diagonal ([z],[z]) is a complex curve; omega restricted to its
        # tangent is an area form, so the residual is order one
        prob = ex1_problem()
        rng = np.random.default_rng(12)
        xs = rng.standard_normal((500, 2)) + 1j * rng.standard_normal((500, 2))
        xs /= np.linalg.norm(xs, axis=1)[:, None]
        cloud = cloud_from_coords(prob, [xs, xs.copy()])
        compute_frames(cloud, radius=0.25, expected_max_dim=2)
        lag = verify_lagrangian(cloud)
        assert lag.max_residual > 0.5

    def test_rotated_cloud_fails_specialty(self):
        # an isometry that is not a flow symmetry moves the minimum set; the
        # gradient no longer vanishes along it and d^c psi picks that up
        prob = ex1_problem()
        coords = antidiagonal_coords(600, 13)
        th = 0.15
        rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        coords = [coords[0], coords[1] @ rot.T]
        cloud = cloud_from_coords(prob, coords)
        compute_frames(cloud, radius=0.25, expected_max_dim=2)
        spec = verify_specialty(prob, cloud)
        assert spec.max_residual > 1e-2

    def test_no_tangents(self):
        prob = ex1_problem()
        cloud = cloud_from_coords(prob, antidiagonal_coords(5, 14))
        with pytest.raises(NoTangents):
            verify_lagrangian(cloud)


class TestCandidates:
    def test_exact_flip_zero(self):
        prob = ex1_problem()
        cloud = cloud_from_coords(prob, antidiagonal_coords(50, 15))
        r = compare_candidate(cloud, conj_flip((1, 1)))
        assert r["max_residual"] < 1e-12

    def test_orthogonal_pair_residual_one(self):
        prob = ex1_problem()
        coords = [np.array([[1, 0]], complex), np.array([[0, 1]], complex)]
        cloud = cloud_from_coords(prob, coords)
        r = compare_candidate(cloud, conj_flip((1, 1)))
        assert r["max_residual"] == pytest.approx(1.0)

    def test_gz_closed_form_point(self):
        sp = AmbientSpace((2, 2))
        eq = section_from_monomials([
            (1, ((1, 0, 0), (1, 0, 0))), (1, ((0, 1, 0), (0, 1, 0))),
            (1, ((0, 0, 1), (0, 0, 1)))])
        Y = VarietyConstraint((eq,))
        x = np.array([1, 0, 1]) / np.sqrt(2)
        y = np.array([1, 0, -1]) / np.sqrt(2)
        prob = make_problem((2, 2), [(1, ((1, 0, 0), (1, 0, 0))),
                                     (1, ((0, 1, 0), (0, 1, 0))),
                                     (-1, ((0, 0, 1), (0, 0, 1)))])
        cloud = cloud_from_coords(prob, [x[None, :].astype(complex),
                                         y[None, :].astype(complex)])
        r = compare_candidate(cloud, gz_sphere(Y))
        assert r["max_residual"] < 1e-12
        assert float(x @ y) == pytest.approx(0.0, abs=1e-15)

    def test_real_circle_values(self):
        prob = make_problem((1,), [(1, ((1, 1),))], level=2)
        pts = np.stack([[np.cos(0.3) + 0j, np.sin(0.3) * np.exp(0.9j)],
                        [1 + 0j, 0 + 0j]])
        pts /= np.linalg.norm(pts, axis=1)[:, None]
        cloud = cloud_from_coords(prob, [np.array(
            [[1 / np.sqrt(2), np.exp(0.8j) / np.sqrt(2)], [1, 0]],
            complex)])
        from lagshadow.shadow import candidate_residual_batch
        res = candidate_residual_batch(real_circle(0), prob.ambient,
                                       cloud.coords)
        assert res[0] < 1e-12          # |x0| = |x1| lies on the model circle
        assert res[1] == pytest.approx(1.0)  # the pole is distance-one off

    def test_product_candidate(self):
        prob = make_problem(
            (1, 1, 1, 1),
            [(1, ((1, 0), (1, 0), (1, 0), (1, 0))),
             (1, ((0, 1), (0, 1), (0, 1), (0, 1)))])
        rng = np.random.default_rng(16)
        xs = rng.standard_normal((40, 2)) + 1j * rng.standard_normal((40, 2))
        xs /= np.linalg.norm(xs, axis=1)[:, None]
        zs = rng.standard_normal((40, 2)) + 1j * rng.standard_normal((40, 2))
        zs /= np.linalg.norm(zs, axis=1)[:, None]
        cloud = cloud_from_coords(prob, [xs, np.conj(xs), zs, np.conj(zs)])
        cand = product_of(conj_flip((1, 1), (0, 1)), conj_flip((1, 1), (2, 3)))
        assert compare_candidate(cloud, cand)["max_residual"] < 1e-12

    def test_incompatible(self):
        prob = ex1_problem()
        cloud = cloud_from_coords(prob, antidiagonal_coords(5, 17))
        with pytest.raises(IncompatibleCandidate):
            compare_candidate(cloud, conj_flip((1, 1, 1)))


class TestComponents:
    def test_two_far_clusters(self):
        prob = ex1_problem()
        rng = np.random.default_rng(18)
        a = antidiagonal_coords(40, 19)
        # second blob: same shape moved to an orthogonal region
        b = [np.roll(c, 1, axis=1) for c in antidiagonal_coords(40, 20)]
        coords = [np.concatenate([x, y]) for x, y in zip(a, b)]
        cloud = cloud_from_coords(prob, coords)
        n = count_components(cloud, radius=0.25)
        assert n >= 2

    def test_chain_connects(self):
        prob = ex1_problem()
        coords = antidiagonal_coords(60, 21)
        cloud = cloud_from_coords(prob, coords)
        # declare a chain covering every point: one component regardless of radius
        segs = np.stack([np.arange(59), np.arange(1, 60)], axis=1)
        cloud.segments = segs
        assert count_components(cloud, radius=1e-6) == 1


class TestProposition:
    def test_self_comparison_is_zero(self):
        # constrained cloud against itself through the filter must be ~exact
        eq = section_from_monomials([
            (1, ((1, 0, 0), (1, 0, 0))), (1, ((0, 1, 0), (0, 1, 0))),
            (1, ((0, 0, 1), (0, 0, 1)))])
        Y = VarietyConstraint((eq,))
        prob = make_problem((2, 2), [(1, ((1, 0, 0), (1, 0, 0))),
                                     (1, ((0, 1, 0), (0, 1, 0))),
                                     (-1, ((0, 0, 1), (0, 0, 1)))])
        rng = np.random.default_rng(22)
        # sample the GZ sphere: |x2|^2 = 1/2, y = (conj x0, conj x1, -conj x2)
        u = rng.standard_normal((300, 2)) + 1j * rng.standard_normal((300, 2))
        u /= np.linalg.norm(u, axis=1)[:, None] * np.sqrt(2)
        ph = np.exp(1j * rng.uniform(0, 2 * np.pi, 300))
        xs = np.concatenate([u, (ph / np.sqrt(2))[:, None]], axis=1)
        ys = np.conj(xs) * np.array([1, 1, -1.0])
        cloud = cloud_from_coords(prob, [xs, ys], spacing=0.08, radius=0.35)
        compute_frames(cloud, expected_max_dim=3)
        rep = proposition_check(cloud, Y, cloud, tol=5e-3, filter_tol=1e-3)
        assert rep.passed
        assert rep.filtered_dimension == 3
        assert rep.hausdorff_filtered_to_constrained < 1e-6

    def test_empty_intersection(self):
        eq = section_from_monomials([
            (1, ((1, 0, 0), (1, 0, 0))), (1, ((0, 1, 0), (0, 1, 0))),
            (1, ((0, 0, 1), (0, 0, 1)))])
        Y = VarietyConstraint((eq,))
        prob = make_problem((2, 2), [(1, ((1, 0, 0), (1, 0, 0))),
                                     (1, ((0, 1, 0), (0, 1, 0))),
                                     (-1, ((0, 0, 1), (0, 0, 1)))])
        # a single far-from-Y point: the filter retains nothing
        cloud = cloud_from_coords(prob, [np.array([[1, 0, 0]], complex),
                                         np.array([[1, 0, 0]], complex)])
        with pytest.raises(EmptyIntersection):
            proposition_check(cloud, Y, cloud, filter_tol=1e-3)


class TestSingularLoci:
    def test_q3_loci_sit_at_minima(self):
        # lean version of the full pipeline: loci anchors must be the minima
        prob = make_problem((1, 1, 1), [(1, ((1, 0), (1, 0), (1, 0))),
                                        (1, ((0, 1), (0, 1), (0, 1)))])
        seeds = batch_normalize(sobol_coords(prob.ambient, 300, seed=77))
        res = find_critical_points(prob, seeds)
        clusters = dedup_and_cluster(res.points)
        tor = max((c for c in clusters if c.estimated_dim == 2),
                  key=lambda c: len(c.members))
        densify_cluster(prob, tor, spacing=0.16, max_members=900)
        clusters = dedup_and_cluster([m for c in clusters for m in c.members])
        cloud = assemble_shadow(prob, clusters,
                                AssemblyControls(sample_spacing=0.06))
        compute_frames(cloud, radius=0.22, target=2500, expected_max_dim=3)
        loci = singular_loci(cloud, radius=0.2)
        assert len(loci) == 2
        for l in loci:
            assert l["anchor_psi"] < 1e-9  # anchored at the minima
