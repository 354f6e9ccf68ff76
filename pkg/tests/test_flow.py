import numpy as np
import pytest

from lagshadow.critical import (
    CriticalCluster, build_critical_points, dedup_and_cluster,
    find_critical_points,
)
from lagshadow.flow import (
    ASCEND, CONVERGED, DESCEND, ESCAPED, UNDECIDED, FlowControls, Fate,
    check_flow_invariance, classify_fate, integrate_flow, integrate_flow_batch,
)
from lagshadow.geometry import (
    batch_fs_distance, batch_normalize, flatten_coords, fs_distance,
    normalize_point, random_coords, sobol_coords, split_coords, stack_coords,
)
from lagshadow.potential import make_problem
from lagshadow.shadow import ShadowCloud, compute_frames
from lagshadow.variety import VarietyConstraint, residual_batch

Q3_MONOS = [(1, ((1, 0), (1, 0), (1, 0))), (1, ((0, 1), (0, 1), (0, 1)))]


@pytest.fixture(scope="module")
def q3():
    return make_problem((1, 1, 1), Q3_MONOS)


def tc_coords(space, ex, ey):
    return normalize_point(space, [[1, np.exp(1j * ex)], [1, np.exp(1j * ey)],
                                   [1, np.exp(-1j * (ex + ey))]])


def tc_cluster(prob, n=60, seed=3):
    rng = np.random.default_rng(seed)
    etas = rng.uniform(0, 2 * np.pi, size=(n, 2))
    coords = stack_coords([list(tc_coords(prob.ambient, ex, ey).coords)
                           for ex, ey in etas])
    pts = build_critical_points(prob, flatten_coords(prob.ambient, coords))
    cluster = CriticalCluster(members=pts, estimated_dim=2, cluster_id=1)
    return cluster


def min_cluster(prob, which=0):
    corner = [[1, 0]] * 3 if which == 0 else [[0, 1]] * 3
    p = normalize_point(prob.ambient, corner)
    pts = build_critical_points(
        prob, flatten_coords(prob.ambient, [c[None, :] for c in p.coords]))
    return CriticalCluster(members=pts, estimated_dim=0, cluster_id=which + 10)


class TestIntegration:
    def test_stationary_at_critical(self, q3):
        p = tc_coords(q3.ambient, 0.9, -0.4)
        tr = integrate_flow(q3, p, ASCEND)
        assert tr.status == CONVERGED
        assert fs_distance(tr.point(tr.num_samples - 1), p) < 1e-12

    def test_ascent_from_connector_reaches_torus(self, q3):
        # the connector through phases (0,0,0) is [cos t, sin t]^3; starting
        # below the torus and ascending must converge into T_c
        t0 = np.pi / 4 - 0.3
        p = normalize_point(q3.ambient, [[np.cos(t0), np.sin(t0)]] * 3)
        tr = integrate_flow(q3, p, ASCEND)
        assert tr.status == CONVERGED
        end = tr.point(tr.num_samples - 1)
        assert fs_distance(end, tc_coords(q3.ambient, 0, 0)) < 1e-6
        fate = classify_fate(q3, tr, [tc_cluster(q3), min_cluster(q3)])
        assert fate.kind == CONVERGED and fate.cluster_id == 1

    def test_descents_bounded_and_monotone(self, q3):
        rng = np.random.default_rng(1)
        starts = flatten_coords(
            q3.ambient, batch_normalize(random_coords(q3.ambient, 40, rng)))
        trajs = integrate_flow_batch(q3, starts, DESCEND)
        for tr in trajs:
            assert tr.status == CONVERGED
            assert np.all(np.diff(tr.psi) <= 1e-9)

    def test_generic_ascents_escape(self, q3):
        starts = flatten_coords(
            q3.ambient, batch_normalize(sobol_coords(q3.ambient, 100, seed=17)))
        trajs = integrate_flow_batch(q3, starts, ASCEND, FlowControls(store=False))
        escaped = [tr for tr in trajs if tr.status == ESCAPED]
        assert len(escaped) >= 95
        assert all(tr.psi[-1] > q3.tolerances.escape_psi for tr in escaped)
        for tr in trajs:
            if tr.status == ASCEND:
                assert np.all(np.diff(tr.psi) >= -1e-9)

    def test_time_reversal(self, q3):
        p = normalize_point(q3.ambient, [[1, 0.3 + 0.2j], [1, -0.2j], [0.9, 0.4]])
        fwd = integrate_flow(q3, p, ASCEND, FlowControls(max_time=0.1,
                                                         store=False))
        assert abs(fwd.times[-1] - 0.1) < 1e-12
        back = integrate_flow_batch(q3, fwd.coords_flat[-1:], DESCEND,
                                    FlowControls(max_time=0.1, store=False))[0]
        d = batch_fs_distance(split_coords(q3.ambient, back.coords_flat[-1:]),
                              [c[None, :] for c in p.coords])
        assert float(d[0]) < 1e-4

    def test_constrained_flow_conserves_residual(self):
        eq = [(1, ((1, 0, 0), (1, 0, 0))), (1, ((0, 1, 0), (0, 1, 0))),
              (1, ((0, 0, 1), (0, 0, 1)))]
        prob = make_problem(
            (2, 2),
            [(1, ((1, 0, 0), (1, 0, 0))), (1, ((0, 1, 0), (0, 1, 0))),
             (-1, ((0, 0, 1), (0, 0, 1)))],
            constraint_monomials=[eq])
        rng = np.random.default_rng(2)
        x = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        y = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        y = y - (x @ y) / (x @ np.conj(x)) * np.conj(x)
        p = normalize_point(prob.ambient, [x, y])
        tr = integrate_flow(prob, p, DESCEND, FlowControls(max_time=1.0))
        res = residual_batch(prob.constraint,
                             split_coords(prob.ambient, tr.coords_flat))
        assert res.max() < 1e-8


class TestFate:
    def test_terminal_at_member(self, q3):
        tc = tc_cluster(q3)
        p = tc.members[0].location
        tr = integrate_flow(q3, p, ASCEND)
        fate = classify_fate(q3, tr, [tc])
        assert fate.kind == CONVERGED and fate.cluster_id == tc.cluster_id

    def test_escape_threshold(self, q3):
        rng = np.random.default_rng(4)
        starts = flatten_coords(
            q3.ambient, batch_normalize(random_coords(q3.ambient, 1, rng)))
        tr = integrate_flow_batch(q3, starts, ASCEND,
                                  FlowControls(store=False))[0]
        fate = classify_fate(q3, tr, [tc_cluster(q3)])
        assert fate.kind == ESCAPED

    def test_unknown_critical_flagged(self, q3):
        # withhold the torus from the cluster list: an ascent converging
        # there must come back Undecided with the re-census flag raised
        t0 = np.pi / 4 - 0.2
        p = normalize_point(q3.ambient, [[np.cos(t0), np.sin(t0)]] * 3)
        tr = integrate_flow(q3, p, ASCEND)
        assert tr.status == CONVERGED
        fate = classify_fate(q3, tr, [min_cluster(q3, 0), min_cluster(q3, 1)])
        assert fate.kind == UNDECIDED
        assert fate.new_critical_suspected


def antidiagonal_cloud(prob, n=400, seed=8):
    rng = np.random.default_rng(seed)
    xs = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
    xs /= np.linalg.norm(xs, axis=1)[:, None]
    coords = [xs, np.conj(xs)]
    from lagshadow.geometry import batch_gauge
    coords = batch_gauge(coords)
    flat = flatten_coords(prob.ambient, coords)
    from lagshadow.potential import gradient_batch
    _, psi, gnorm, _ = gradient_batch(prob, split_coords(prob.ambient, flat))
    return ShadowCloud(space=prob.ambient, points_flat=flat, psi=psi,
                       grad_norm=gnorm,
                       provenance=np.zeros(n, dtype=np.int64),
                       segments=np.zeros((0, 2), dtype=np.int64),
                       sample_spacing=0.1, pca_radius=0.3)


class TestInvariance:
    def test_exact_antidiagonal_is_invariant(self):
        prob = make_problem((1, 1), [(1, ((1, 0), (1, 0))),
                                     (1, ((0, 1), (0, 1)))])
        cloud = antidiagonal_cloud(prob)
        rep = check_flow_invariance(prob, cloud, 1.0, 1e-8)
        assert rep.passed
        assert rep.max_displacement < 1e-8

    def test_translated_cloud_fails(self):
        prob = make_problem((1, 1), [(1, ((1, 0), (1, 0))),
                                     (1, ((0, 1), (0, 1)))])
        cloud = antidiagonal_cloud(prob)
        # rotate only the second factor: the set is no longer flow-invariant
        th = 0.05
        rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        coords = cloud.coords
        moved = [coords[0], coords[1] @ rot.T]
        from lagshadow.geometry import batch_gauge
        flat = flatten_coords(prob.ambient, batch_gauge(moved))
        from lagshadow.potential import gradient_batch
        _, psi, gnorm, _ = gradient_batch(prob, split_coords(prob.ambient, flat))
        bad = ShadowCloud(space=prob.ambient, points_flat=flat, psi=psi,
                          grad_norm=gnorm,
                          provenance=np.zeros(cloud.size, dtype=np.int64),
                          segments=np.zeros((0, 2), dtype=np.int64),
                          sample_spacing=0.1, pca_radius=0.3)
        rep = check_flow_invariance(prob, bad, 1.0, 1e-3, max_points=100)
        assert not rep.passed
        assert rep.max_displacement > 1e-2

    def test_zero_time(self):
        prob = make_problem((1, 1), [(1, ((1, 0), (1, 0))),
                                     (1, ((0, 1), (0, 1)))])
        cloud = antidiagonal_cloud(prob, n=50)
        rep = check_flow_invariance(prob, cloud, 0.0, 1e-9)
        assert rep.max_displacement < 1e-12
