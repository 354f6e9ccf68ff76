import numpy as np
import pytest

from lagshadow.errors import WrongScenario
from lagshadow.critical import (
    CriticalCluster, build_critical_points, classify_spectrum,
    dedup_and_cluster, densify_cluster, find_critical_points, torus_residual,
)
from lagshadow.geometry import (
    batch_normalize, flatten_coords, fs_distance, normalize_point,
    sobol_coords, stack_coords,
)
from lagshadow.potential import make_problem

Q3_MONOS = [(1, ((1, 0), (1, 0), (1, 0))), (1, ((0, 1), (0, 1), (0, 1)))]


@pytest.fixture(scope="module")
def q3():
    return make_problem((1, 1, 1), Q3_MONOS)


@pytest.fixture(scope="module")
def q3_census(q3):
    seeds = batch_normalize(sobol_coords(q3.ambient, 240, seed=99))
    res = find_critical_points(q3, seeds, budget=60)
    return res, dedup_and_cluster(res.points)


def tc_point(space, ex, ey):
    return normalize_point(space, [[1, np.exp(1j * ex)], [1, np.exp(1j * ey)],
                                   [1, np.exp(-1j * (ex + ey))]])


class TestClosedFormsCP1:
    def test_product_section_has_critical_circle(self):
        # x0 x1: dpsi/dr = -1/r + 2r/(1+r^2) vanishes exactly at chart radius 1
        prob = make_problem((1,), [(1, ((1, 1),))], level=2)
        seeds = batch_normalize(sobol_coords(prob.ambient, 80, seed=5))
        res = find_critical_points(prob, seeds)
        assert res.points, "no critical points found"
        clusters = dedup_and_cluster(res.points, cluster_radius=0.3)
        assert len(clusters) == 1
        circle = clusters[0]
        assert circle.estimated_dim == 1
        assert circle.common_nullity == 1
        assert circle.common_index == 0
        for cp in circle.members:
            c = cp.location.coords[0]
            assert abs(abs(c[0]) - abs(c[1])) < 1e-8  # |z| = 1 in the chart
            lam = cp.eigenvalues
            assert abs(lam.max() - 4.0) < 1e-3  # closed-form radial curvature

    def test_squared_section_single_minimum(self):
        # x0^2: psi = -2 ln r + ln(1+r^2) has no interior critical radius;
        # the only finite critical point is the minimum at [1:0]
        prob = make_problem((1,), [(1, ((2, 0),))], level=2)
        seeds = batch_normalize(sobol_coords(prob.ambient, 80, seed=6))
        res = find_critical_points(prob, seeds)
        clusters = dedup_and_cluster(res.points)
        assert len(clusters) == 1
        only = clusters[0]
        assert only.estimated_dim == 0 and len(only.members) == 1
        cp = only.members[0]
        assert fs_distance(cp.location,
                           normalize_point(prob.ambient, [[1, 0]])) < 1e-9
        assert cp.index == 0 and cp.nullity == 0
        assert np.allclose(cp.eigenvalues, [2, 2], atol=1e-3)


class TestQ3Census:
    def test_finds_both_minima(self, q3, q3_census):
        _, clusters = q3_census
        mins = [c for c in clusters
                if c.estimated_dim == 0 and c.common_nullity == 0]
        assert len(mins) == 2
        corners = [normalize_point(q3.ambient, [[1, 0]] * 3),
                   normalize_point(q3.ambient, [[0, 1]] * 3)]
        dists = sorted(min(fs_distance(c.members[0].location, corner)
                           for c in mins) for corner in corners)
        assert dists[1] < 1e-8

    def test_torus_cluster(self, q3, q3_census):
        res, clusters = q3_census
        tori = [c for c in clusters if c.estimated_dim == 2]
        assert len(tori) >= 1
        tc = max(tori, key=lambda c: len(c.members))
        assert tc.common_nullity == 2
        assert tc.common_index == 1
        assert torus_residual(tc, q3) < 1e-6

    def test_index_bound(self, q3, q3_census):
        res, _ = q3_census
        for cp in res.points:
            assert cp.index <= q3.ambient.total_dim
        assert res.diagnostics.index_violations == 0

    def test_solver_soundness(self, q3, q3_census):
        res, _ = q3_census
        sample = res.points[::40]
        coords = stack_coords([list(cp.location.coords) for cp in sample])
        rerun = find_critical_points(q3, coords, budget=10)
        assert len(rerun.points) == len(sample)
        for a, b in zip(sample, rerun.points):
            assert fs_distance(a.location, b.location) < 1e-10

    def test_minima_distance(self, q3, q3_census):
        # the two corner minima sit at sqrt(3) * pi / 2
        _, clusters = q3_census
        mins = [c for c in clusters
                if c.estimated_dim == 0 and c.common_nullity == 0]
        d = fs_distance(mins[0].members[0].location,
                        mins[1].members[0].location)
        assert d == pytest.approx(np.sqrt(3) * np.pi / 2, abs=1e-8)


class TestDedup:
    def test_duplicates_merge(self, q3):
        p = normalize_point(q3.ambient, [[1, 0], [1, 0], [1, 0]])
        flat = flatten_coords(q3.ambient, [c[None, :] for c in p.coords])
        pts = build_critical_points(q3, np.concatenate([flat, flat]))
        # perturbing one copy by 1e-9 must still merge to a single cluster
        clusters = dedup_and_cluster(pts, dedup_tol=1e-6)
        assert len(clusters) == 1
        assert clusters[0].estimated_dim == 0

    def test_torus_samples_cluster(self, q3):
        rng = np.random.default_rng(13)
        pts = []
        etas = rng.uniform(0, 2 * np.pi, size=(200, 2))
        coords = stack_coords([
            list(tc_point(q3.ambient, ex, ey).coords) for ex, ey in etas])
        pts = build_critical_points(q3, flatten_coords(q3.ambient, coords))
        clusters = dedup_and_cluster(pts, cluster_radius=0.3)
        big = max(clusters, key=lambda c: len(c.members))
        assert big.estimated_dim == 2


class TestDensify:
    def test_spacing_and_purity(self, q3, q3_census):
        _, clusters = q3_census
        tc = max((c for c in clusters if c.estimated_dim == 2),
                 key=lambda c: len(c.members))
        tc = CriticalCluster(members=list(tc.members), estimated_dim=2,
                             cluster_id=tc.cluster_id)
        densify_cluster(q3, tc, spacing=0.18, max_members=700)
        assert len(tc.members) > 200
        assert torus_residual(tc, q3) < 1e-6


class TestTorusResidual:
    def test_exact_point(self, q3):
        flat = flatten_coords(
            q3.ambient, [c[None, :] for c in tc_point(q3.ambient, 1.0, 2.2).coords])
        cp = build_critical_points(q3, flat)[0]
        cluster = CriticalCluster(members=[cp], estimated_dim=2)
        assert torus_residual(cluster) < 1e-12

    def test_phase_defect(self, q3):
        # equal magnitudes but eta sum = pi: residual pi
        p = normalize_point(q3.ambient,
                            [[1, 1], [1, 1], [1, np.exp(1j * np.pi)]])
        flat = flatten_coords(q3.ambient, [c[None, :] for c in p.coords])
        from lagshadow.critical import CriticalPoint
        cp = CriticalPoint(location=p, grad_norm=1.0,
                           eigenvalues=np.zeros(6))
        cluster = CriticalCluster(members=[cp], estimated_dim=2)
        assert torus_residual(cluster) == pytest.approx(np.pi, abs=1e-12)

    def test_wrong_scenario(self):
        prob = make_problem((1, 1), [(1, ((1, 0), (1, 0))),
                                     (1, ((0, 1), (0, 1)))])
        p = normalize_point(prob.ambient, [[1, 0], [1, 0]])
        from lagshadow.critical import CriticalPoint
        cp = CriticalPoint(location=p, grad_norm=0.0, eigenvalues=np.zeros(4))
        cluster = CriticalCluster(members=[cp])
        with pytest.raises(WrongScenario):
            torus_residual(cluster)


class TestSpectrumClassification:
    def test_counts(self):
        vals = np.array([-2.0, -1e-9, 1e-9, 0.5, 1.0])
        index, nullity = classify_spectrum(vals, null_tol_rel=1e-5)
        assert index == 1 and nullity == 2

    def test_reducible_q3_dimension_cap(self):
        # (x0 y0 + x1 y1) z0: every critical point has index 0 and nullity 2,
        # so nothing can assemble beyond dimension 2
        prob = make_problem((1, 1, 1), [(1, ((1, 0), (1, 0), (1, 0))),
                                        (1, ((0, 1), (0, 1), (1, 0)))])
        seeds = batch_normalize(sobol_coords(prob.ambient, 150, seed=21))
        res = find_critical_points(prob, seeds)
        assert res.points
        for cp in res.points:
            assert cp.index == 0
            assert cp.nullity == 2
