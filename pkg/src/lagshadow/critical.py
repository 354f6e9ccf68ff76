"""Critical locus of the potential: census, Morse-Bott data, clusters.

The solver is a damped least-squares Newton (Levenberg-Marquardt on the
squared gradient norm) run in the deterministic horizontal frame.  Plain
Newton would fail on critical submanifolds, where the Hessian is singular;
with Tikhonov damping the iteration converges to the nearest point of the
critical set instead.  Optional auxiliary equations can be appended to the
residual, which lets callers walk the intersection of the critical set with
algebraic slices (used to densify near-variety bands).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import WrongScenario
from .geometry import (
    Point, batch_fs_distance, flat_unit_normalize, flatten_coords,
    point_from_batch, split_coords, stack_coords,
)
from .potential import (
    PotentialProblem, gradient_batch, hessian_batch, problem_frame_batch,
    psi_batch,
)
from .pointset import ChordalIndex, fit_local_tangent


@dataclass(frozen=True)
class CriticalPoint:
    """A converged critical point with its Morse-Bott data."""

    location: Point
    grad_norm: float
    eigenvalues: np.ndarray = field(repr=False)
    index: int = 0
    nullity: int = 0
    frame: np.ndarray = field(default=None, repr=False)        # (K, D) complex
    eigenvectors: np.ndarray = field(default=None, repr=False)  # (K, K) columns
    psi: float = 0.0

    @property
    def positive_count(self):
        return len(self.eigenvalues) - self.index - self.nullity


@dataclass
class CriticalCluster:
    """Connected group of critical points; positive estimated_dim marks a critical submanifold."""

    members: list
    estimated_dim: int = 0
    label: str = ""
    cluster_id: int = -1

    @property
    def common_nullity(self):
        votes = np.array([m.nullity for m in self.members])
        return int(np.bincount(votes).argmax())

    @property
    def common_index(self):
        votes = np.array([m.index for m in self.members])
        return int(np.bincount(votes).argmax())

    @property
    def min_psi(self):
        return min(m.psi for m in self.members)

    def coords_batch(self):
        return stack_coords([list(m.location.coords) for m in self.members])


@dataclass
class CensusDiagnostics:
    num_seeds: int = 0
    converged: int = 0
    not_converged: int = 0
    hit_divisor: int = 0
    index_violations: int = 0


@dataclass
class CensusResult:
    points: list
    diagnostics: CensusDiagnostics


def _aux_rows(prob, aux_sections, coords_flat):
    """Values and Hermitian-pairing rows of auxiliary sections (complex)."""
    from .variety import VarietyConstraint, _jacobian_rows
    Yaux = VarietyConstraint(tuple(aux_sections))
    return _jacobian_rows(prob.ambient, Yaux, coords_flat)


def solve_critical_batch(prob: PotentialProblem, coords_flat, max_iter=60,
                         aux_sections=None, aux_weight=1.0):
    """Damped Gauss-Newton toward grad psi = 0 (plus optional aux equations).

    Returns (coords_flat, converged_mask, iterations_used).
    """
    space = prob.ambient
    tol = prob.tolerances
    x = flat_unit_normalize(space, coords_flat)
    if prob.constraint is not None:
        from .variety import gauss_newton_batch
        x, _ = gauss_newton_batch(space, prob.constraint, x, tol=1e-12, max_iter=30)
    B = x.shape[0]
    lam = np.full(B, 1e-8)
    alive = np.ones(B, dtype=bool)
    done = np.zeros(B, dtype=bool)
    iters = np.zeros(B, dtype=np.int64)

    def residual_and_jac(xa):
        frames = problem_frame_batch(prob, xa)
        parts, psi, gnorm, divmask = gradient_batch(prob, split_coords(space, xa))
        pf = flatten_coords(space, parts)
        g = np.real(np.einsum("bd,bkd->bk", pf, np.conj(frames)))
        H, _, _ = hessian_batch(prob, xa, frames)
        if aux_sections:
            vals, rows = _aux_rows(prob, aux_sections, xa)
            # complex equations become two real residual rows each; the
            # Jacobian of <v, w_e> along frame direction f_a is <f_a, w_e>
            dmat = np.einsum("bkd,bed->bke", frames, np.conj(rows))
            g_aux = np.concatenate(
                [aux_weight * np.real(vals), aux_weight * np.imag(vals)], axis=-1)
            J_aux = np.concatenate(
                [aux_weight * np.real(dmat), aux_weight * np.imag(dmat)], axis=-1)
            g = np.concatenate([g, g_aux], axis=-1)
            J = np.concatenate([H, np.swapaxes(J_aux, -1, -2)], axis=-2)
        else:
            J = H
        return frames, g, J, gnorm, divmask

    for it in range(max_iter):
        if not np.any(alive):
            break
        xa = x[alive]
        frames, g, J, gnorm, divmask = residual_and_jac(xa)
        full_res = np.linalg.norm(g, axis=-1)
        conv = full_res < tol.grad_tol
        div = divmask
        keep_going = ~conv & ~div
        idx_alive = np.nonzero(alive)[0]
        done[idx_alive[conv]] = True
        alive[idx_alive[conv | div]] = False
        if not np.any(keep_going):
            continue
        sel = idx_alive[keep_going]
        frames = frames[keep_going]
        g = g[keep_going]
        J = J[keep_going]
        x_sel = x[sel]
        lam_sel = lam[sel]
        JtJ = np.einsum("brk,brl->bkl", J, J)
        scale = np.maximum(np.einsum("bkk->b", JtJ), 1e-12)
        K = JtJ.shape[-1]
        res_old = np.linalg.norm(g, axis=-1)
        accepted = np.zeros(len(sel), dtype=bool)
        x_new = x_sel.copy()
        for attempt in range(6):
            trial = ~accepted
            if not np.any(trial):
                break
            A = JtJ[trial] + (lam_sel[trial] * scale[trial])[:, None, None] * \
                np.eye(K)[None]
            rhs = -np.einsum("brk,br->bk", J[trial], g[trial])
            try:
                delta = np.linalg.solve(A, rhs[..., None])[..., 0]
            except np.linalg.LinAlgError:
                lam_sel[trial] *= 10.0
                continue
            step = np.einsum("bk,bkd->bd", delta, frames[trial])
            cand = flat_unit_normalize(space, x_sel[trial] + step)
            if prob.constraint is not None:
                from .variety import gauss_newton_batch
                cand, _ = gauss_newton_batch(space, prob.constraint, cand,
                                             tol=1e-12, max_iter=8)
            _, g2, _, _, div2 = residual_and_jac(cand)
            res_new = np.linalg.norm(g2, axis=-1)
            better = (res_new < res_old[trial]) & ~div2
            tr_idx = np.nonzero(trial)[0]
            good = tr_idx[better]
            x_new[good] = cand[better]
            lam_sel[good] = np.maximum(lam_sel[good] * 0.3, 1e-10)
            accepted[good] = True
            bad = tr_idx[~better]
            lam_sel[bad] *= 10.0
        x[sel] = x_new
        lam[sel] = lam_sel
        iters[sel] += 1
        stuck = sel[~accepted]
        alive[stuck] = False

    # final convergence check
    _, _, gnorm, divmask = gradient_batch(prob, split_coords(space, x))
    if aux_sections:
        vals, _ = _aux_rows(prob, aux_sections, x)
        aux_ok = np.abs(vals).max(axis=-1) < 1e-9
    else:
        aux_ok = np.ones(x.shape[0], dtype=bool)
    ok = (gnorm < tol.grad_tol) & ~divmask & aux_ok
    return x, ok, iters


def morse_data_batch(prob: PotentialProblem, coords_flat):
    """Hessian spectra at (assumed critical) points: (eigvals, eigvecs, frames, asym)."""
    H, frames, asym = hessian_batch(prob, coords_flat)
    vals, vecs = np.linalg.eigh(H)
    return vals, vecs, frames, asym


def classify_spectrum(eigenvalues, null_tol_rel, floor=1e-9):
    """(index, nullity) from a sorted spectrum with the relative null threshold."""
    scale = max(float(np.max(np.abs(eigenvalues))), floor)
    thr = null_tol_rel * scale
    index = int(np.sum(eigenvalues < -thr))
    nullity = int(np.sum(np.abs(eigenvalues) <= thr))
    return index, nullity


def find_critical_points(prob: PotentialProblem, seeds, budget=60,
                         aux_sections=None) -> CensusResult:
    """Run the damped Newton census from the given seeds.

    seeds: list of Points or batched per-factor coordinate arrays.  Converged,
    deduplicated-at-machine-level results come back as CriticalPoints with
    Morse data attached; non-converged seeds only bump the diagnostics.
    """
    space = prob.ambient
    tol = prob.tolerances
    if isinstance(seeds, list) and seeds and isinstance(seeds[0], Point):
        coords = stack_coords([list(p.coords) for p in seeds])
    else:
        coords = seeds
    flat = flatten_coords(space, coords)
    diag = CensusDiagnostics(num_seeds=flat.shape[0])
    _, mask0 = psi_batch(prob, split_coords(space, flat))
    usable = ~mask0
    diag.hit_divisor = int(np.sum(mask0))
    if not np.any(usable):
        return CensusResult([], diag)
    x, ok, _ = solve_critical_batch(prob, flat[usable], max_iter=budget,
                                    aux_sections=aux_sections)
    diag.converged = int(np.sum(ok))
    diag.not_converged = int(np.sum(~ok))
    if not np.any(ok):
        return CensusResult([], diag)
    x = x[ok]
    points = build_critical_points(prob, x, diag)
    return CensusResult(points, diag)


def build_critical_points(prob: PotentialProblem, coords_flat, diag=None):
    """Attach Morse data to converged locations and wrap them as CriticalPoints.

    Coordinates are gauge-fixed first so the stored frame and eigenvectors are
    expressed at exactly the stored representative; mixing representatives
    would phase-rotate the eigendirections (J maps one eigenspace into
    another, so a rotated "negative" direction leaks into positive ones).
    """
    from .geometry import batch_gauge
    space = prob.ambient
    tol = prob.tolerances
    coords_flat = flatten_coords(space,
                                 batch_gauge(split_coords(space, coords_flat)))
    vals, vecs, frames, _ = morse_data_batch(prob, coords_flat)
    coords = split_coords(space, coords_flat)
    _, psi, gnorm, _ = gradient_batch(prob, coords)
    points = []
    bound = prob.lagrangian_dim
    for b in range(coords_flat.shape[0]):
        index, nullity = classify_spectrum(vals[b], tol.null_tol)
        if index > bound and diag is not None:
            diag.index_violations += 1
        points.append(CriticalPoint(
            location=point_from_batch(space, coords, b),
            grad_norm=float(gnorm[b]),
            eigenvalues=vals[b],
            index=index,
            nullity=nullity,
            frame=frames[b],
            eigenvectors=vecs[b],
            psi=float(psi[b]),
        ))
    return points


def canonical_key(p: Point):
    """Deterministic sort key from the gauge-fixed coordinates."""
    flat = np.concatenate([np.stack([c.real, c.imag], -1).ravel()
                           for c in p.coords])
    return tuple(np.round(flat, 10))


def dedup_and_cluster(points, cluster_radius=0.3, dedup_tol=1e-6,
                      pca_threshold=0.1, dim_radius=None) -> list:
    """Merge duplicates, single-link the survivors, estimate cluster dimensions.

    Points within dedup_tol are duplicates (the one of smallest canonical key
    survives); the remainder is single-linked at cluster_radius into clusters,
    whose dimension is the majority vote of per-member local PCA ranks.
    """
    if not points:
        return []
    pts = sorted(points, key=lambda cp: (round(cp.psi, 9), canonical_key(cp.location)))
    space = pts[0].location.space
    coords = stack_coords([list(cp.location.coords) for cp in pts])
    index = ChordalIndex(space, coords)
    # deduplicate: scan in canonical order, keep points far from all kept ones
    kept_mask = np.zeros(len(pts), dtype=bool)
    for i in range(len(pts)):
        nbr, _ = index.query_ball([c[i] for c in coords], dedup_tol)
        if any(kept_mask[j] for j in nbr if j != i):
            continue
        kept_mask[i] = True
    pts = [pts[i] for i in range(len(pts)) if kept_mask[i]]
    coords = stack_coords([list(cp.location.coords) for cp in pts])
    index = ChordalIndex(space, coords)
    # single linkage at cluster_radius
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components
    pairs = index.pairs_within(cluster_radius)
    n = len(pts)
    if pairs.size:
        data = np.ones(len(pairs), dtype=np.int8)
        adj = coo_matrix((data, (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    else:
        adj = coo_matrix((n, n), dtype=np.int8)
    ncomp, labels = connected_components(adj, directed=False)
    clusters = []
    for cid in range(ncomp):
        member_idx = np.nonzero(labels == cid)[0]
        members = [pts[i] for i in member_idx]
        dim = _cluster_dimension(space, coords, member_idx, index,
                                 cluster_radius, pca_threshold, dim_radius)
        clusters.append(CriticalCluster(members=members, estimated_dim=dim))
    clusters.sort(key=lambda c: (round(c.min_psi, 9),
                                 canonical_key(c.members[0].location)))
    for i, c in enumerate(clusters):
        c.cluster_id = i
    return clusters


def _cluster_dimension(space, coords, member_idx, index, radius,
                       pca_threshold, dim_radius=None, scale_floor=1e-6):
    """Majority vote of local PCA ranks over the cluster members."""
    from .geometry import batch_log, global_frame
    if len(member_idx) == 1:
        return 0
    r = dim_radius if dim_radius is not None else radius
    votes = []
    sample = member_idx if len(member_idx) <= 60 else \
        member_idx[np.linspace(0, len(member_idx) - 1, 60).astype(int)]
    member_set = set(int(i) for i in member_idx)
    for i in sample:
        nbr, dist = index.query_ball([c[i] for c in coords], r)
        nbr = np.array([j for j in nbr if int(j) in member_set and j != i])
        if len(nbr) == 0:
            votes.append(0)
            continue
        base = [c[i] for c in coords]
        lg = batch_log([np.broadcast_to(c, (len(nbr),) + c.shape) for c in base],
                       index.take(nbr))
        F = global_frame(space, [c[None, :] for c in base])[0]
        disp = np.real(np.einsum("bd,kd->bk", flatten_coords(space, lg),
                                 np.conj(F)))
        norms = np.linalg.norm(disp, axis=1)
        if norms.max() < scale_floor:
            votes.append(0)
            continue
        sv = np.linalg.svd(disp, compute_uv=False)
        votes.append(int(np.sum(sv >= pca_threshold * sv[0])))
    votes = np.array(votes)
    return int(np.bincount(votes).argmax())


def densify_cluster(prob: PotentialProblem, cluster: CriticalCluster,
                    spacing, max_members=20000, aux_sections=None,
                    batch_size=256):
    """Grow a critical submanifold cluster to a target sampling spacing.

    Breadth-first walk: step from each member along its Hessian null
    directions by +-spacing, re-converge with the damped Newton, and keep
    arrivals that are not within 0.55 * spacing of an existing member.  The
    walk is deterministic (FIFO over members in stored order, fixed direction
    order) and stops when no new members appear or the budget is reached.
    """
    if cluster.estimated_dim == 0:
        return cluster
    space = prob.ambient
    tol = prob.tolerances
    members = list(cluster.members)
    coords = stack_coords([list(cp.location.coords) for cp in members])
    index = ChordalIndex(space, coords)

    def null_dirs(cp):
        scale = max(float(np.max(np.abs(cp.eigenvalues))), 1e-9)
        thr = tol.null_tol * scale
        cols = np.nonzero(np.abs(cp.eigenvalues) <= thr)[0]
        return [np.einsum("k,kd->d", cp.eigenvectors[:, c], cp.frame)
                for c in cols]

    psi_ref = cluster.min_psi
    nullity_ref = cluster.common_nullity
    queue = list(range(len(members)))
    head = 0
    while head < len(queue) and len(members) < max_members:
        batch_seeds = []
        while head < len(queue) and len(batch_seeds) < batch_size:
            mi = queue[head]
            head += 1
            cp = members[mi]
            base = flatten_coords(space, [c[None, :] for c in cp.location.coords])[0]
            for v in null_dirs(cp):
                for sgn in (1.0, -1.0):
                    batch_seeds.append(base + sgn * spacing * v)
        if not batch_seeds:
            break
        seeds = flat_unit_normalize(space, np.stack(batch_seeds, axis=0))
        x, ok, _ = solve_critical_batch(prob, seeds, max_iter=25,
                                        aux_sections=aux_sections)
        x = x[ok]
        if x.shape[0] == 0:
            continue
        new_pts = build_critical_points(prob, x)
        accepted = []
        for cp in new_pts:
            if len(members) + len(accepted) >= max_members:
                break
            # psi is constant on a connected critical submanifold and the
            # nullity is its dimension: both must match, otherwise the walker
            # fell onto a different piece of the critical set
            if abs(cp.psi - psi_ref) > 1e-6 * (1.0 + abs(psi_ref)):
                continue
            if cp.nullity != nullity_ref:
                continue
            d, _ = index.query_nearest(list(cp.location.coords), k=1)
            if d.size and d[0] < 0.55 * spacing:
                continue
            close = False
            for other in accepted:
                if float(batch_fs_distance(
                        [c[None, :] for c in cp.location.coords],
                        [c[None, :] for c in other.location.coords])[0]) \
                        < 0.55 * spacing:
                    close = True
                    break
            if close:
                continue
            accepted.append(cp)
        if not accepted:
            continue
        for cp in accepted:
            members.append(cp)
            queue.append(len(members) - 1)
        for i in range(len(coords)):
            coords[i] = np.concatenate(
                [coords[i]] + [m.location.coords[i][None, :] for m in accepted],
                axis=0)
        index = ChordalIndex(space, coords)
    cluster.members = members
    return cluster


def torus_residual(cluster: CriticalCluster, prob: PotentialProblem = None) -> float:
    """Scenario verifier for the critical torus of the cubic section on (CP^1)^3.

    Each member must have equal-magnitude coordinates in every factor and
    phases eta_x + eta_y + eta_z = 0 (mod 2pi).  When the problem is supplied
    the ambient/section pattern is validated first (WrongScenario otherwise).
    """
    if not cluster.members:
        raise WrongScenario("empty cluster")
    if prob is not None:
        verify_torus_scenario(prob)
    space = cluster.members[0].location.space
    if space.factor_dims != (1, 1, 1):
        raise WrongScenario("torus residual requires (CP^1)^3")
    worst = 0.0
    for cp in cluster.members:
        dev = 0.0
        phase = 0.0
        for c in cp.location.coords:
            dev = max(dev, abs(abs(c[0]) - abs(c[1])))
            phase += np.angle(c[1]) - np.angle(c[0])
        phase = abs((phase + np.pi) % (2 * np.pi) - np.pi)
        worst = max(worst, dev + phase)
    return float(worst)


def verify_torus_scenario(prob: PotentialProblem):
    """Guard used by torus verifiers: ambient (CP^1)^3 with the cubic two-term section."""
    if prob.ambient.factor_dims != (1, 1, 1):
        raise WrongScenario("expected (CP^1)^3")
    s = prob.section
    if len(s.coefficients) != 2:
        raise WrongScenario("expected the two-monomial cubic section")
    for e in s.exponents:
        rows = {tuple(r) for r in e.tolist()}
        if rows != {(1, 0), (0, 1)}:
            raise WrongScenario("expected the x0 y0 z0 + x1 y1 z1 pattern")
