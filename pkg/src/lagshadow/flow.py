"""Adaptive integration of the gradient flow of the potential.

Embedded Dormand-Prince 5(4) pair on dx/dt = +-grad psi with retraction to the
product of unit spheres after every stage and variety reprojection after every
accepted step.  Monotonicity of psi along the flow direction is enforced by
step rejection.  Near critical sets (gradient norm below the crawl threshold)
the integrator switches to fixed-length safeguarded gradient steps, which
separates genuine convergence from slow passage near a saddle: a trajectory
that merely passes a critical torus keeps strictly gaining psi and re-enters
the adaptive regime on the far side, while a converging one stalls below the
gradient tolerance.

All trajectories are integrated in lockstep batches: stages are evaluated for
every active entry at once with per-entry step sizes and accept/reject masks,
which is what makes whole-cloud invariance checks affordable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StepCollapse
from .geometry import (
    Point, batch_fs_distance, batch_log, flat_unit_normalize, flatten_coords,
    point_from_batch, split_coords, stack_coords,
)
from .potential import PotentialProblem, gradient_batch

# Dormand-Prince 5(4) tableau; the 5th-order solution propagates.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])

ASCEND = "ascend"
DESCEND = "descend"

CONVERGED = "converged"
ESCAPED = "escaped"
UNDECIDED = "undecided"
COLLAPSED = "collapsed"


@dataclass(frozen=True)
class Fate:
    """Terminal classification of a trajectory."""

    kind: str                      # converged | escaped | undecided
    cluster_id: int = -1
    new_critical_suspected: bool = False


@dataclass
class FlowControls:
    max_time: float = 400.0
    max_steps: int = 4000
    min_step: float = 1e-14
    store_spacing: float = 0.05    # thinning distance for stored samples
    store: bool = True
    crawl_step: float = 2e-3


@dataclass
class Trajectory:
    """Time-parametrized flow line with stored samples and a fate."""

    direction: str
    times: np.ndarray
    coords_flat: np.ndarray        # (S, D)
    psi: np.ndarray
    grad_norm: np.ndarray
    status: str
    seed_id: int = -1
    fate: Fate = None
    space: object = None

    @property
    def num_samples(self):
        return len(self.times)

    def point(self, i) -> Point:
        coords = split_coords(self.space, self.coords_flat[i:i + 1])
        return point_from_batch(self.space, coords, 0)

    @property
    def samples(self):
        """(time, Point, psi, gradient norm) tuples; built on demand."""
        return [(float(self.times[i]), self.point(i), float(self.psi[i]),
                 float(self.grad_norm[i])) for i in range(self.num_samples)]


class _Recorder:
    """Distance-thinned per-entry sample storage with batched thinning."""

    def __init__(self, n, spacing, enabled, dim=0):
        self.enabled = enabled
        self.spacing = spacing
        self.rows = [[] for _ in range(n)] if enabled else None
        self.last = np.zeros((n, dim), dtype=np.complex128) if enabled else None

    def push_rows(self, idx_rows, t, x, psi, gnorm, space, force=False):
        """Store samples for the given entry rows, thinning by stored distance."""
        if not self.enabled or len(idx_rows) == 0:
            return
        idx_rows = np.asarray(idx_rows)
        if force:
            keep = np.ones(len(idx_rows), dtype=bool)
        else:
            d = batch_fs_distance(split_coords(space, self.last[idx_rows]),
                                  split_coords(space, x[idx_rows]))
            keep = d >= self.spacing
        for row in idx_rows[keep]:
            self.rows[row].append((float(t[row]), x[row].copy(),
                                   float(psi[row]), float(gnorm[row])))
        self.last[idx_rows[keep]] = x[idx_rows[keep]]


def _grad_sign(prob, flat, sign):
    parts, psi, gnorm, mask = gradient_batch(prob, split_coords(prob.ambient, flat))
    f = sign * flatten_coords(prob.ambient, parts)
    return f, psi, gnorm, mask


def integrate_flow_batch(prob: PotentialProblem, starts_flat, direction,
                         controls: FlowControls = None, seed_ids=None):
    """Integrate the flow from a batch of starts; returns a list of Trajectory.

    Entries terminate independently on convergence (gradient below grad_tol),
    escape (psi above escape_psi), step collapse, or budget exhaustion.
    """
    space = prob.ambient
    tol = prob.tolerances
    controls = controls or FlowControls()
    sign = +1.0 if direction == ASCEND else -1.0
    x = flat_unit_normalize(space, np.array(starts_flat, dtype=np.complex128))
    if prob.constraint is not None:
        from .variety import gauss_newton_batch
        x, _ = gauss_newton_batch(space, prob.constraint, x, tol=1e-12, max_iter=20)
    B, D = x.shape
    t = np.zeros(B)
    h = np.full(B, 1e-3)
    status = np.array([""] * B, dtype=object)
    steps = np.zeros(B, dtype=np.int64)
    rec = _Recorder(B, controls.store_spacing, controls.store, dim=D)

    f0, psi0, g0, m0 = _grad_sign(prob, x, sign)
    rec.push_rows(np.arange(B), t, x, psi0, g0, space, force=True)
    active = np.ones(B, dtype=bool)
    status[m0] = ESCAPED
    active[m0] = False
    conv0 = g0 < tol.grad_tol
    status[conv0 & active] = CONVERGED
    active[conv0] = False

    psi_cur = psi0.copy()
    g_cur = g0.copy()

    while np.any(active):
        idx = np.nonzero(active)[0]
        # split by regime
        crawl = g_cur[idx] < tol.crawl_threshold
        rk_idx = idx[~crawl]
        cr_idx = idx[crawl]

        if rk_idx.size:
            xa = x[rk_idx]
            ha = h[rk_idx].copy()
            f1, _, g1, _ = _grad_sign(prob, xa, sign)
            # distance cap on the step, and land exactly on the time budget
            ha = np.minimum(ha, tol.max_step / np.maximum(g1, 1e-30))
            ha = np.minimum(ha, np.maximum(controls.max_time - t[rk_idx], 1e-12))
            ks = [f1]
            for s in range(1, 7):
                incr = sum(a * k for a, k in zip(_DP_A[s], ks))
                xs = flat_unit_normalize(space, xa + ha[:, None] * incr)
                fs_, _, _, ms = _grad_sign(prob, xs, sign)
                fs_[ms] = 0.0
                ks.append(fs_)
            x5 = sum(b * k for b, k in zip(_DP_B5, ks))
            x4 = sum(b * k for b, k in zip(_DP_B4, ks))
            err = np.linalg.norm(ha[:, None] * (x5 - x4), axis=1)
            xn = flat_unit_normalize(space, xa + ha[:, None] * x5)
            if prob.constraint is not None:
                from .variety import gauss_newton_batch
                xn, _ = gauss_newton_batch(space, prob.constraint, xn,
                                           tol=1e-12, max_iter=6)
            _, psin, gn, maskn = _grad_sign(prob, xn, sign)
            mono_slack = 1e-9 * (1.0 + np.abs(psi_cur[rk_idx]))
            mono_ok = np.where(
                maskn, True,
                (psin - psi_cur[rk_idx]) * (1.0 if sign > 0 else -1.0) >= -mono_slack)
            tol_step = tol.step_rtol
            accept = (err <= tol_step) & mono_ok
            # escaped entries are accepted regardless of the error estimate:
            # psi blew past the threshold, the endpoint only needs recording
            esc_now = maskn | (np.where(maskn, np.inf, psin) > tol.escape_psi)
            accept = accept | (esc_now & mono_ok)
            # update step sizes
            with np.errstate(divide="ignore", over="ignore"):
                fac = 0.9 * (tol_step / np.maximum(err, 1e-300)) ** 0.2
            fac = np.clip(fac, 0.2, 5.0)
            h[rk_idx] = ha * fac
            acc_rows = rk_idx[accept]
            if acc_rows.size:
                x[acc_rows] = xn[accept]
                t[acc_rows] += ha[accept]
                psi_cur[acc_rows] = psin[accept]
                g_cur[acc_rows] = gn[accept]
                rec.push_rows(acc_rows, t, x, psi_cur, g_cur, space)
                esc_rows = acc_rows[esc_now[accept]]
                status[esc_rows] = ESCAPED
                active[esc_rows] = False
                cv = acc_rows[(gn[accept] < tol.grad_tol) & ~esc_now[accept]]
                status[cv] = CONVERGED
                active[cv] = False
            steps[rk_idx] += 1
            dead = rk_idx[(h[rk_idx] < controls.min_step) & active[rk_idx]]
            status[dead] = COLLAPSED
            active[dead] = False

        if cr_idx.size:
            # safeguarded crawl: explicit Euler with a fixed time increment
            # (step length proportional to the gradient), Armijo-halved.  Near
            # an attracting critical set this contracts geometrically; past a
            # saddle the gradient regrows and the entry re-enters the RK path.
            xa = x[cr_idx]
            fa, _, ga, _ = _grad_sign(prob, xa, sign)
            dt_c = np.minimum(np.full(cr_idx.size, 0.5),
                              np.maximum(controls.max_time - t[cr_idx], 1e-12))
            s_len = np.minimum(controls.crawl_step, dt_c * ga)
            unit = fa / np.maximum(ga, 1e-300)[:, None]
            moved = np.zeros(cr_idx.size, dtype=bool)
            for _ in range(10):
                open_ = ~moved & (s_len > 1e-15)
                if not np.any(open_):
                    break
                cand = flat_unit_normalize(
                    space, xa[open_] + (s_len[open_])[:, None] * unit[open_])
                if prob.constraint is not None:
                    from .variety import gauss_newton_batch
                    cand, _ = gauss_newton_batch(space, prob.constraint, cand,
                                                 tol=1e-12, max_iter=6)
                _, psic, gc, mc = _grad_sign(prob, cand, sign)
                gain = (psic - psi_cur[cr_idx][open_]) * (1.0 if sign > 0 else -1.0)
                need = 0.25 * s_len[open_] * ga[open_]
                # once the expected gain sinks below the float resolution of
                # psi the Armijo test is blind; trust the gradient direction
                blind = need < 5e-15 * (1.0 + np.abs(psi_cur[cr_idx][open_]))
                ok = ((gain >= need) | blind) & ~mc
                rows = np.nonzero(open_)[0]
                good = rows[ok]
                if good.size:
                    gi = cr_idx[good]
                    x[gi] = cand[ok]
                    t[gi] += s_len[good] / np.maximum(ga[good], 1e-300)
                    psi_cur[gi] = psic[ok]
                    g_cur[gi] = gc[ok]
                    moved[good] = True
                    rec.push_rows(gi, t, x, psi_cur, g_cur, space)
                s_len[rows[~ok]] *= 0.5
            stalled = cr_idx[~moved]
            if stalled.size:
                near = g_cur[stalled] < tol.grad_tol
                status[stalled[near]] = CONVERGED
                status[stalled[~near]] = UNDECIDED
                active[stalled] = False
            steps[cr_idx] += 1
            cv = cr_idx[(g_cur[cr_idx] < tol.grad_tol) & active[cr_idx]]
            status[cv] = CONVERGED
            active[cv] = False

        over = np.nonzero(active & ((t >= controls.max_time) |
                                    (steps >= controls.max_steps)))[0]
        status[over] = UNDECIDED
        active[over] = False

    rec.push_rows(np.arange(B), t, x, psi_cur, g_cur, space, force=True)
    trajectories = []
    for b in range(B):
        if rec.enabled:
            rows = rec.rows[b]
            times = np.array([r[0] for r in rows])
            coords = np.stack([r[1] for r in rows])
            psi = np.array([r[2] for r in rows])
            gn = np.array([r[3] for r in rows])
        else:
            times = np.array([t[b]])
            coords = x[b][None, :]
            psi = np.array([psi_cur[b]])
            gn = np.array([g_cur[b]])
        trajectories.append(Trajectory(
            direction=direction, times=times, coords_flat=coords, psi=psi,
            grad_norm=gn, status=str(status[b]) or UNDECIDED,
            seed_id=int(seed_ids[b]) if seed_ids is not None else b,
            space=space))
    return trajectories


def integrate_flow(prob: PotentialProblem, start: Point, direction,
                   controls: FlowControls = None) -> Trajectory:
    """Single-trajectory wrapper; raises StepCollapse on integrator breakdown."""
    flat = flatten_coords(prob.ambient, [c[None, :] for c in start.coords])
    traj = integrate_flow_batch(prob, flat, direction, controls)[0]
    if traj.status == COLLAPSED:
        raise StepCollapse("adaptive step fell below the floor",
                           last_point=traj.point(traj.num_samples - 1))
    return traj


def _cluster_distance(prob, cluster, end_flat):
    """Distance from a point to a critical cluster, aware of its submanifold.

    Point distance to the nearest member, improved by removing the component
    of the log displacement along the member's Hessian null directions (which
    span the critical submanifold): landing between the stored samples of a
    critical torus still counts as landing on the cluster.
    """
    space = prob.ambient
    end_coords = split_coords(space, end_flat[None, :])
    coords = cluster.coords_batch()
    d = batch_fs_distance(
        coords, [np.broadcast_to(cc[0], (len(cluster.members),) + cc[0].shape)
                 for cc in end_coords])
    mi = int(np.argmin(d))
    dmin = float(d[mi])
    cp = cluster.members[mi]
    if cp.frame is None or cp.eigenvectors is None or dmin > 0.5:
        return dmin
    scale = max(float(np.max(np.abs(cp.eigenvalues))), 1e-9)
    thr = prob.tolerances.null_tol * scale
    null_cols = np.nonzero(np.abs(cp.eigenvalues) <= thr)[0]
    if null_cols.size == 0:
        return dmin
    base = [c[None, :] for c in cp.location.coords]
    lg = flatten_coords(space, batch_log(base, end_coords))[0]
    for c in null_cols:
        v = np.einsum("k,kd->d", cp.eigenvectors[:, c], cp.frame)
        lg = lg - np.real(np.sum(lg * np.conj(v))) * v
    return min(dmin, float(np.linalg.norm(lg)))


def classify_fate(prob: PotentialProblem, traj: Trajectory, clusters) -> Fate:
    """Match the terminal point against known clusters, else apply thresholds."""
    tol = prob.tolerances
    end = traj.coords_flat[-1]
    best = (np.inf, -1)
    for c in clusters:
        dmin = _cluster_distance(prob, c, end)
        if dmin < best[0]:
            best = (dmin, c.cluster_id)
    if best[0] < tol.match_radius:
        return Fate(kind=CONVERGED, cluster_id=best[1])
    psi_end = float(traj.psi[-1])
    if psi_end > tol.escape_psi or not np.isfinite(psi_end):
        return Fate(kind=ESCAPED)
    if float(traj.grad_norm[-1]) < tol.grad_tol:
        # a genuine critical point the census does not know about
        return Fate(kind=UNDECIDED, new_critical_suspected=True)
    return Fate(kind=UNDECIDED)


@dataclass(frozen=True)
class InvarianceReport:
    max_displacement: float
    mean_displacement: float
    num_points: int
    num_failures: int
    passed: bool


def check_flow_invariance(prob: PotentialProblem, cloud, dt, tol,
                          max_points=None) -> InvarianceReport:
    """Flow every cloud point upward for time dt; measure distance back to the cloud.

    The distance is taken to the cloud's own structure (points, stored
    adjacency segments, local patches), so a flow-invariant continuum sampled
    at finite spacing passes at tolerances far below the sampling distance.
    """
    flat = cloud.flat_coords()
    n = flat.shape[0]
    if max_points is not None and n > max_points:
        sel = np.linspace(0, n - 1, max_points).astype(np.int64)
        flat = flat[sel]
    controls = FlowControls(max_time=dt, max_steps=2000, store=False)
    trajs = integrate_flow_batch(prob, flat, ASCEND, controls)
    ends = np.stack([tr.coords_flat[-1] for tr in trajs])
    d = cloud.distance_to_batch(ends)
    failures = sum(1 for tr in trajs if tr.status == COLLAPSED)
    return InvarianceReport(
        max_displacement=float(np.max(d)) if d.size else 0.0,
        mean_displacement=float(np.mean(d)) if d.size else 0.0,
        num_points=int(flat.shape[0]),
        num_failures=failures,
        passed=bool(np.max(d) <= tol if d.size else True),
    )
