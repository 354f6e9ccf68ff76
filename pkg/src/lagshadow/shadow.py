"""Assembly and verification of lagrangian shadows.

The shadow of a divisor is assembled as the union of (a) every critical
cluster member and (b) descending trajectories shot from each member along its
negative Hessian eigendirections (both signs; for saddles of index two and
higher the unit sphere of the negative eigenspace is sampled, of which the
+-eigenvector rule is the index-one case).  Descents always terminate at
finite critical sets because psi is bounded below; a descent that lands at an
unknown critical point aborts the assembly with NewCriticalDiscovered so the
caller can re-census.

The cloud caches local tangent fits (PCA plus polynomial refinement) and
stored trajectory adjacency, which turn the discrete sample into a usable
continuum: distances to the cloud are taken against points, chain segments,
and local graph patches, so verification tolerances can sit far below the
sampling spacing.  Points whose neighborhoods disagree on the local dimension
are flagged as singular candidates (the cone points of the shadow) and are
excluded from tangent-based aggregates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyIntersection, IncompatibleCandidate, NewCriticalDiscovered, NoTangents,
    TooSparse,
)
from .geometry import (
    batch_fs_distance, batch_log, flat_unit_normalize, flatten_coords,
    global_frame, split_coords, stack_coords,
)
from .pointset import ChordalIndex, TangentFit, _poly_basis, fit_local_tangent
from .potential import PotentialProblem, gradient_batch, psi_batch
from .flow import (
    CONVERGED, DESCEND, FlowControls, classify_fate, integrate_flow_batch,
)


@dataclass
class AssemblyControls:
    eig_offset: float = 1e-3       # seed displacement along negative eigendirections
    sample_spacing: float = 0.05   # arc thinning of stored trajectory samples
    pca_radius: float = None       # neighborhood radius for tangent fits
    frame_target: int = 6000       # max number of points carrying tangent fits
    saddle_circle: int = 24        # unstable-sphere samples per index-2 point
    flow: FlowControls = None
    min_neighbors: int = None      # default 2N + 2
    dim_vote_share: float = 0.3    # disagreement share that flags a singular point


@dataclass
class ShadowCloud:
    """Provenance-tagged point cloud sampling the shadow."""

    space: object
    points_flat: np.ndarray                  # (P, D) complex, unit, gauge-fixed
    psi: np.ndarray
    grad_norm: np.ndarray
    provenance: np.ndarray                   # (P,) int
    prov_info: dict = field(default_factory=dict)
    segments: np.ndarray = None              # (E, 2) int adjacency chains
    sample_spacing: float = 0.05
    pca_radius: float = 0.15
    fits: dict = field(default_factory=dict)         # index -> TangentFit
    sparse_excluded: set = field(default_factory=set)
    singular_flags: set = field(default_factory=set)
    unreliable: set = field(default_factory=set)     # rms-gated fits
    component_ids: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)
    _index: ChordalIndex = None

    @property
    def size(self):
        return self.points_flat.shape[0]

    @property
    def coords(self):
        return split_coords(self.space, self.points_flat)

    def flat_coords(self):
        return self.points_flat

    @property
    def index(self) -> ChordalIndex:
        if self._index is None:
            self._index = ChordalIndex(self.space, self.coords)
        return self._index

    def framed_indices(self, include_singular=False):
        out = [i for i in sorted(self.fits)
               if include_singular or (i not in self.singular_flags
                                       and i not in self.unreliable)]
        return out

    def max_local_dim(self):
        framed = self.framed_indices()
        if not framed:
            return 0
        return max(self.fits[i].dim for i in framed)

    # ---- distances to the cloud as a structure ------------------------------

    def _candidate_matrix(self, queries_flat, k=6):
        emb_q = _embed(self.space, queries_flat)
        kk = min(self.size, k)
        _, cand = self.index.tree.query(emb_q, k=kk)
        cand = np.atleast_2d(cand)
        if cand.shape[0] != queries_flat.shape[0]:
            cand = cand.T
        return cand

    def distance_to_batch(self, queries_flat, k=6, use_patches=True):
        """Distance from each query to the cloud structure.

        Minimum over candidate points, adjacency segments incident to them,
        and local graph patches centered at them.
        """
        Q = queries_flat.shape[0]
        if Q == 0:
            return np.zeros(0)
        cand = self._candidate_matrix(queries_flat, k=k)
        q_coords = split_coords(self.space, queries_flat)
        best = np.full(Q, np.inf)
        # incident segment endpoints per cloud point
        incident = self._incident_map()
        for j in range(cand.shape[1]):
            cj = cand[:, j]
            base = [c[cj] for c in self.coords]
            d_pt = batch_fs_distance(base, q_coords)
            best = np.minimum(best, d_pt)
            lg = flatten_coords(self.space, batch_log(base, q_coords))
            # segments: project the log displacement on the chord to the neighbor
            if self.segments is not None and len(incident):
                for other in self._incident_columns(cj, incident):
                    valid = other >= 0
                    if not np.any(valid):
                        continue
                    nb = [c[np.where(valid, other, 0)] for c in self.coords]
                    lb = flatten_coords(self.space, batch_log(base, nb))
                    nn = np.real(np.sum(lb * np.conj(lb), axis=-1))
                    tau = np.real(np.sum(lg * np.conj(lb), axis=-1)) / \
                        np.maximum(nn, 1e-300)
                    tau = np.clip(tau, 0.0, 1.0)
                    diff = lg - tau[:, None] * lb
                    d_seg = np.sqrt(np.real(np.sum(diff * np.conj(diff), axis=-1)))
                    best = np.minimum(best, np.where(valid, d_seg, np.inf))
            if use_patches and self.fits:
                d_patch = self._patch_column(cj, lg)
                best = np.minimum(best, d_patch)
        return best

    def distance_to(self, point_flat):
        return float(self.distance_to_batch(point_flat[None, :])[0])

    def _incident_map(self):
        if self.segments is None or self.segments.size == 0:
            return {}
        if "incident" not in self.diagnostics:
            inc = {}
            for a, b in self.segments:
                inc.setdefault(int(a), []).append(int(b))
                inc.setdefault(int(b), []).append(int(a))
            self.diagnostics["incident"] = inc
        return self.diagnostics["incident"]

    def _incident_columns(self, cj, incident, max_deg=3):
        cols = []
        for d in range(max_deg):
            col = np.full(len(cj), -1, dtype=np.int64)
            for r, c in enumerate(cj):
                nbrs = incident.get(int(c), ())
                if d < len(nbrs):
                    col[r] = nbrs[d]
            if np.any(col >= 0):
                cols.append(col)
        return cols

    def _patch_column(self, cj, lg):
        """Patch distances for one candidate column (grouped by fit signature).

        Flagged (singular-region) fits and full-dimensional fits carry no
        usable graph model and are skipped; those regions fall back to point
        and segment distances.
        """
        Q = len(cj)
        out = np.full(Q, np.inf)
        K = 2 * self.space.total_dim
        rows_with_fit = [r for r in range(Q)
                         if int(cj[r]) in self.fits
                         and int(cj[r]) not in self.singular_flags
                         and int(cj[r]) not in self.unreliable
                         and self.fits[int(cj[r])].dim < K]
        if not rows_with_fit:
            return out
        # frame coefficients of the displacement at each candidate base
        base_idx = cj[rows_with_fit]
        base = [c[base_idx] for c in self.coords]
        F = global_frame(self.space, base)
        disp = np.real(np.einsum("bd,bkd->bk", lg[rows_with_fit], np.conj(F)))
        groups = {}
        for pos, r in enumerate(rows_with_fit):
            fit = self.fits[int(cj[r])]
            groups.setdefault((fit.dim, fit.fit_degree,
                               fit.poly_coeffs.shape[0]), []).append((pos, r))
        for (dim, degree, nterms), members in groups.items():
            pos = np.array([m[0] for m in members])
            rows = np.array([m[1] for m in members])
            T = np.stack([self.fits[int(cj[r])].frame_rows for r in rows])
            Nm = np.stack([self.fits[int(cj[r])].normal_rows for r in rows])
            C = np.stack([self.fits[int(cj[r])].poly_coeffs for r in rows])
            rad = np.array([self.fits[int(cj[r])].radius for r in rows])
            u = disp[pos]
            t = np.einsum("bak,bk->ba", T, u)
            n = np.einsum("bak,bk->ba", Nm, u)
            tn = np.linalg.norm(t, axis=1)
            over = tn > rad
            scale = np.where(over, rad / np.maximum(tn, 1e-300), 1.0)
            t = t * scale[:, None]
            excess = np.where(over, tn - rad, 0.0)
            A = _poly_basis(t, degree)
            pred = np.einsum("bt,btc->bc", A, C)
            d = np.sqrt(np.sum((n - pred) ** 2, axis=1) + excess ** 2)
            out[pos] = d
        return out


def _embed(space, flat):
    from .pointset import chordal_embedding
    return chordal_embedding(space, split_coords(space, flat))


# ---- assembly ---------------------------------------------------------------


def _negative_directions(cp, null_tol_rel, circle_count):
    """Unit seeds spanning the unstable sphere of a critical point."""
    scale = max(float(np.max(np.abs(cp.eigenvalues))), 1e-9)
    thr = null_tol_rel * scale
    neg_cols = np.nonzero(cp.eigenvalues < -thr)[0]
    k = len(neg_cols)
    if k == 0:
        return []
    vecs = [np.einsum("k,kd->d", cp.eigenvectors[:, c], cp.frame)
            for c in neg_cols]
    if k == 1:
        return [vecs[0], -vecs[0]]
    if k == 2:
        out = []
        for a in range(circle_count):
            ang = 2 * np.pi * a / circle_count
            out.append(np.cos(ang) * vecs[0] + np.sin(ang) * vecs[1])
        return out
    # index three and beyond (not attained in the catalog scenarios): coarse
    # latitude-longitude sampling of the first three unstable directions
    out = []
    n_lat = max(circle_count // 4, 3)
    for a in range(n_lat):
        th = np.pi * (a + 0.5) / n_lat
        for b in range(circle_count):
            ph = 2 * np.pi * b / circle_count
            out.append(np.cos(th) * vecs[0] +
                       np.sin(th) * np.cos(ph) * vecs[1] +
                       np.sin(th) * np.sin(ph) * vecs[2])
    return out


def assemble_shadow(prob: PotentialProblem, clusters,
                    controls: AssemblyControls = None) -> ShadowCloud:
    """Critical cluster members plus descending connectors, as one cloud."""
    controls = controls or AssemblyControls()
    space = prob.ambient
    tol = prob.tolerances
    flow_controls = controls.flow or FlowControls(
        store_spacing=controls.sample_spacing)
    flow_controls.store = True

    rows = []
    psi_rows = []
    g_rows = []
    prov = []
    prov_info = {}
    segments = []
    member_row = {}
    for c in clusters:
        prov_info[c.cluster_id] = {
            "kind": "cluster", "cluster_id": c.cluster_id,
            "dim": c.estimated_dim, "nullity": c.common_nullity,
            "index": c.common_index,
        }
        for mi, cp in enumerate(c.members):
            member_row[(c.cluster_id, mi)] = len(rows)
            rows.append(flatten_coords(space, [x[None, :] for x in
                                               cp.location.coords])[0])
            psi_rows.append(cp.psi)
            g_rows.append(cp.grad_norm)
            prov.append(c.cluster_id)

    # descent seeds from every negative eigendirection of every member
    seeds = []
    seed_owner = []
    for c in clusters:
        for mi, cp in enumerate(c.members):
            dirs = _negative_directions(cp, tol.null_tol, controls.saddle_circle)
            base = rows[member_row[(c.cluster_id, mi)]]
            for v in dirs:
                seeds.append(base + controls.eig_offset * v)
                seed_owner.append((c.cluster_id, mi))

    next_prov = max((c.cluster_id for c in clusters), default=-1) + 1
    unknown_criticals = []
    undecided = 0
    if seeds:
        starts = flat_unit_normalize(space, np.stack(seeds))
        trajs = integrate_flow_batch(prob, starts, DESCEND, flow_controls)
        for j, tr in enumerate(trajs):
            fate = classify_fate(prob, tr, clusters)
            if fate.new_critical_suspected:
                unknown_criticals.append(tr.point(tr.num_samples - 1))
                continue
            if fate.kind != CONVERGED:
                undecided += 1
                continue
            pid = next_prov
            next_prov += 1
            prov_info[pid] = {
                "kind": "trajectory",
                "from_cluster": seed_owner[j][0],
                "to_cluster": fate.cluster_id,
                "seed_id": j,
            }
            first_row = len(rows)
            n_s = tr.num_samples
            for s in range(n_s):
                rows.append(tr.coords_flat[s])
                psi_rows.append(float(tr.psi[s]))
                g_rows.append(float(tr.grad_norm[s]))
                prov.append(pid)
                if s > 0:
                    segments.append((first_row + s - 1, first_row + s))
            # tie the chain into its source member and target cluster
            segments.append((member_row[seed_owner[j]], first_row))
            target = _nearest_member_row(clusters, fate.cluster_id, member_row,
                                         rows[first_row + n_s - 1], space, rows)
            if target is not None:
                segments.append((first_row + n_s - 1, target))
    if unknown_criticals:
        raise NewCriticalDiscovered(
            f"{len(unknown_criticals)} descents reached critical points "
            "missing from the census", locations=unknown_criticals)

    pts = np.stack(rows) if rows else np.zeros((0, sum(space.factor_sizes)),
                                               dtype=np.complex128)
    pts = flat_unit_normalize(space, pts)
    from .geometry import batch_gauge
    pts = flatten_coords(space, batch_gauge(split_coords(space, pts)))
    cloud = ShadowCloud(
        space=space,
        points_flat=pts,
        psi=np.array(psi_rows),
        grad_norm=np.array(g_rows),
        provenance=np.array(prov, dtype=np.int64),
        prov_info=prov_info,
        segments=np.array(segments, dtype=np.int64) if segments else
        np.zeros((0, 2), dtype=np.int64),
        sample_spacing=controls.sample_spacing,
        pca_radius=controls.pca_radius or 3.0 * controls.sample_spacing,
    )
    cloud.diagnostics["undecided_descents"] = undecided
    cloud.diagnostics["num_trajectories"] = next_prov - len(clusters)
    return cloud


def _nearest_member_row(clusters, cluster_id, member_row, end_flat, space, rows):
    for c in clusters:
        if c.cluster_id == cluster_id:
            coords = c.coords_batch()
            end = split_coords(space, end_flat[None, :])
            d = batch_fs_distance(
                coords,
                [np.broadcast_to(e[0], (len(c.members),) + e[0].shape)
                 for e in end])
            mi = int(np.argmin(d))
            return member_row.get((cluster_id, mi))
    return None


# ---- tangent estimation -----------------------------------------------------


def _fit_from_neighbors(cloud, i, nbr, radius, min_nbrs, max_fit_neighbors=220):
    space = cloud.space
    coords = cloud.coords
    if len(nbr) > max_fit_neighbors:
        nbr = nbr[np.linspace(0, len(nbr) - 1, max_fit_neighbors).astype(int)]
    base = [c[i] for c in coords]
    lg = batch_log([np.broadcast_to(c, (len(nbr),) + c.shape) for c in base],
                   cloud.index.take(nbr))
    F = global_frame(space, [c[None, :] for c in base])[0]
    disp = np.real(np.einsum("bd,kd->bk", flatten_coords(space, lg), np.conj(F)))
    out = fit_local_tangent(disp, radius, min_neighbors=min_nbrs)
    if out is None:
        raise TooSparse(f"point {i}: degenerate displacement set")
    dim, T, Nm, coeffs, degree, sv, rms = out
    return TangentFit(index=int(i), dim=dim, frame_rows=T, normal_rows=Nm,
                      poly_coeffs=coeffs, fit_degree=degree, radius=radius,
                      n_neighbors=len(nbr), singular_values=sv,
                      rms_residual=rms)


def estimate_tangent(cloud: ShadowCloud, i, radius=None):
    """Tangent fit at cloud point i; raises TooSparse below the neighbor quorum."""
    radius = radius or cloud.pca_radius
    N = cloud.space.total_dim
    min_nbrs = 2 * N + 2
    coords = cloud.coords
    nbr, _ = cloud.index.query_ball([c[i] for c in coords], radius)
    nbr = nbr[nbr != i]
    if len(nbr) < min_nbrs:
        raise TooSparse(f"point {i}: {len(nbr)} neighbors < {min_nbrs}")
    return _fit_from_neighbors(cloud, int(i), nbr, radius, min_nbrs)


def compute_frames(cloud: ShadowCloud, radius=None, target=None,
                   expected_max_dim=None):
    """Fit tangent frames on an even subsample of the cloud (all clusters kept).

    Populates cloud.fits, cloud.sparse_excluded and the singular flags.
    Neighbor balls come from one vectorized tree pass; each fit uses an evenly
    thinned subset of its ball when the ball is large.  expected_max_dim is
    the lagrangian dimension bound: a fit above it is geometrically impossible
    for a shadow and marks the singular (cone) region.
    """
    radius = radius or cloud.pca_radius
    space = cloud.space
    n = cloud.size
    target = target or n
    if n <= target:
        picks = np.arange(n)
    else:
        picks = np.linspace(0, n - 1, target).astype(np.int64)
    N = space.total_dim
    min_nbrs = 2 * N + 2
    cloud.fits.clear()
    cloud.sparse_excluded.clear()
    emb = cloud.index.embedding
    balls = cloud.index.tree.query_ball_point(
        emb[picks], np.sqrt(2.0) * radius + 1e-12)
    coords = cloud.coords
    neighbor_lists = {}
    for row, i in enumerate(picks):
        cand = np.asarray(balls[row], dtype=np.int64)
        cand = cand[cand != i]
        if len(cand) < min_nbrs:
            cloud.sparse_excluded.add(int(i))
            continue
        d = cloud.index.fs_to([c[i] for c in coords], cand)
        nbr = cand[d <= radius]
        if len(nbr) < min_nbrs:
            cloud.sparse_excluded.add(int(i))
            continue
        try:
            fit = _fit_from_neighbors(cloud, int(i), nbr, radius, min_nbrs)
        except TooSparse:
            cloud.sparse_excluded.add(int(i))
            continue
        cloud.fits[int(i)] = fit
        neighbor_lists[int(i)] = nbr
    _flag_singular(cloud, neighbor_lists, expected_max_dim=expected_max_dim)
    return cloud


def _flag_singular(cloud: ShadowCloud, neighbor_lists, expected_max_dim=None,
                   rms_gate_factor=8.0):
    """Mark dimension-unstable points (singular loci) and low-quality fits.

    Dimensional instability defines the singular loci: a fitted dimension
    above the lagrangian bound (inside a cone, where the ray family through
    the apex spans more directions than any manifold patch of the shadow
    could) or a dimension that disagrees with the neighborhood majority (the
    rim where sheets meet a cone).  Separately, fits whose graph residual
    sits far above the cloud's median describe their neighborhood poorly
    (cone spill-over, sparse pockets); they are excluded from tangent-based
    verifiers and patch distances but do not create singular loci.
    """
    cloud.singular_flags.clear()
    cloud.unreliable.clear()
    if not cloud.fits:
        return
    rms_all = np.array([f.rms_residual for f in cloud.fits.values()])
    gate = max(rms_gate_factor * float(np.median(rms_all)), 1e-12)
    for i, nbr in neighbor_lists.items():
        fit = cloud.fits[i]
        if expected_max_dim is not None and fit.dim > expected_max_dim:
            cloud.singular_flags.add(int(i))
            continue
        dims = [cloud.fits[int(j)].dim for j in nbr if int(j) in cloud.fits]
        dims.append(fit.dim)
        if len(dims) >= 2:
            counts = np.bincount(np.array(dims))
            if fit.dim != int(np.argmax(counts)):
                cloud.singular_flags.add(int(i))
                continue
        if fit.rms_residual > gate:
            cloud.unreliable.add(int(i))


def singular_loci(cloud: ShadowCloud, radius=None, min_members=3):
    """Group the singular-flagged points; anchor each locus at its lowest psi.

    Flag islands below min_members are dimension-vote noise, not cone
    structure, and are dropped.
    """
    radius = radius or 3.0 * cloud.sample_spacing
    flags = sorted(cloud.singular_flags)
    if not flags:
        return []
    coords = cloud.coords
    sub = [c[np.array(flags)] for c in coords]
    idx = ChordalIndex(cloud.space, sub)
    pairs = idx.pairs_within(radius)
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components
    n = len(flags)
    if pairs.size:
        adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
                         shape=(n, n))
    else:
        adj = coo_matrix((n, n))
    ncomp, labels = connected_components(adj, directed=False)
    loci = []
    for cid in range(ncomp):
        members = [flags[i] for i in np.nonzero(labels == cid)[0]]
        if len(members) < min_members:
            continue
        anchor = members[int(np.argmin(cloud.psi[np.array(members)]))]
        loci.append({"members": members, "anchor": int(anchor),
                     "anchor_psi": float(cloud.psi[anchor])})
    loci.sort(key=lambda l: l["anchor_psi"])
    return loci


# ---- verifiers ---------------------------------------------------------------


@dataclass(frozen=True)
class VerifierReport:
    max_residual: float
    mean_residual: float
    num_points: int
    worst_index: int = -1
    extra: dict = field(default_factory=dict)


def _framed_vectors(cloud, indices):
    """Complex frame vectors (B, dim_max, D) for the fits at given indices."""
    coords = cloud.coords
    base = [c[np.array(indices)] for c in coords]
    F = global_frame(cloud.space, base)
    return base, F


def verify_lagrangian(cloud: ShadowCloud) -> VerifierReport:
    """max |omega(v, w)| / (|v||w|) over tangent frame pairs at framed points."""
    framed = cloud.framed_indices()
    if not framed:
        raise NoTangents("no tangent frames on the cloud")
    coords = cloud.coords
    worst = 0.0
    worst_i = -1
    total = 0.0
    count = 0
    groups = {}
    for i in framed:
        groups.setdefault(cloud.fits[i].dim, []).append(i)
    for dim, idxs in sorted(groups.items()):
        if dim < 2:
            for i in idxs:
                total += 0.0
                count += 1
            continue
        arr = np.array(idxs)
        base = [c[arr] for c in coords]
        F = global_frame(cloud.space, base)
        T = np.stack([cloud.fits[i].frame_rows for i in idxs])  # (B, dim, K)
        V = np.einsum("bak,bkd->bad", T, F)                      # complex vectors
        parts = split_coords(cloud.space, V)
        om = np.zeros((len(idxs), dim, dim))
        for p in parts:
            om -= np.imag(np.einsum("bad,bcd->bac", p, np.conj(p)))
        om = np.abs(om)
        m = om.reshape(len(idxs), -1).max(axis=1)
        total += float(m.sum())
        count += len(idxs)
        j = int(np.argmax(m))
        if m[j] > worst:
            worst = float(m[j])
            worst_i = idxs[j]
    return VerifierReport(max_residual=worst,
                          mean_residual=total / max(count, 1),
                          num_points=count, worst_index=worst_i)


def verify_specialty(prob: PotentialProblem, cloud: ShadowCloud) -> VerifierReport:
    """max |d^c psi(v)| / |v| over tangent frames, plus a transport phase check.

    The secondary statistic is the largest gauge-invariant phase transport
    defect arg(P(p) conj(P(q)) prod_i <q_i, p_i>^{d_i}) over stored adjacency
    edges: on a shadow the section is proportional to a covariantly constant
    section with a real positive factor, so the discrete transport phase
    vanishes to second order in the edge length.
    """
    framed = cloud.framed_indices()
    if not framed:
        raise NoTangents("no tangent frames on the cloud")
    coords = cloud.coords
    worst = 0.0
    worst_i = -1
    total = 0.0
    count = 0
    groups = {}
    for i in framed:
        groups.setdefault(cloud.fits[i].dim, []).append(i)
    for dim, idxs in sorted(groups.items()):
        arr = np.array(idxs)
        base = [c[arr] for c in coords]
        parts, _, _, _ = gradient_batch(prob, base)
        gradf = flatten_coords(cloud.space, parts)
        F = global_frame(cloud.space, base)
        T = np.stack([cloud.fits[i].frame_rows for i in idxs])
        V = np.einsum("bak,bkd->bad", T, F)
        # d^c psi(v) = g(grad, J v) = Re<grad, i v> = Im<grad, v>... with
        # <a,b> = sum a conj(b):  Re<grad, iv> = Re(-i <grad, v>) = -Im<grad, v>
        inner = np.einsum("bd,bad->ba", gradf, np.conj(V))
        dc = np.abs(np.imag(inner))
        m = dc.max(axis=1)
        total += float(m.sum())
        count += len(idxs)
        j = int(np.argmax(m))
        if m[j] > worst:
            worst = float(m[j])
            worst_i = idxs[j]
    extra = {}
    if cloud.segments is not None and cloud.segments.size:
        from .sections import eval_section_batch
        a = cloud.segments[:, 0]
        b = cloud.segments[:, 1]
        pa = [c[a] for c in coords]
        pb = [c[b] for c in coords]
        va = eval_section_batch(prob.section, pa)
        vb = eval_section_batch(prob.section, pb)
        transport = va * np.conj(vb)
        for ca, cb, d in zip(pa, pb, prob.section.multidegree):
            s = (cb * np.conj(ca)).sum(axis=-1)
            transport = transport * s ** d
        extra["max_transport_phase"] = float(np.abs(np.angle(transport)).max())
    return VerifierReport(max_residual=worst,
                          mean_residual=total / max(count, 1),
                          num_points=count, worst_index=worst_i, extra=extra)


# ---- candidates --------------------------------------------------------------


@dataclass(frozen=True)
class CandidateShadow:
    """Analytic model sets: real circle, conjugation flips, products, GZ sphere."""

    kind: str                       # real_circle | conj_flip | product | gz_sphere
    factors: tuple = ()             # factor indices the model binds
    signs: tuple = ()               # per-coordinate signs for flips
    parts: tuple = ()               # sub-candidates for products
    constraint: object = None       # VarietyConstraint for the GZ sphere


def real_circle(factor=0):
    return CandidateShadow(kind="real_circle", factors=(factor,))


def conj_flip(signs, factors=(0, 1)):
    return CandidateShadow(kind="conj_flip", factors=tuple(factors),
                           signs=tuple(signs))


def product_of(*parts):
    return CandidateShadow(kind="product", parts=tuple(parts))


def gz_sphere(constraint, signs=(1, 1, -1), factors=(0, 1)):
    return CandidateShadow(kind="gz_sphere", factors=tuple(factors),
                           signs=tuple(signs), constraint=constraint)


def candidate_residual_batch(candidate: CandidateShadow, space, coords):
    if candidate.kind == "real_circle":
        # the unit-modulus circle |x1| = |x0| is the real axis of the Cayley
        # chart w = i (1 - z)/(1 + z); a quarter-rotated copy covers the pole
        (i,) = candidate.factors
        if space.factor_dims[i] != 1:
            raise IncompatibleCandidate("real circle needs a CP^1 factor")
        x = coords[i]
        z = x[..., 1] / np.where(np.abs(x[..., 0]) > 1e-300, x[..., 0], 1e300)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = 1j * (1.0 - z) / (1.0 + z)
            v = 1j * (1.0 - 1j * z) / (1.0 + 1j * z)
        r1 = np.where(np.isfinite(w), np.abs(np.imag(w)), np.inf)
        r2 = np.where(np.isfinite(v), np.abs(np.imag(v)), np.inf)
        return np.minimum(r1, r2)
    if candidate.kind == "conj_flip":
        i, j = candidate.factors
        if space.factor_sizes[i] != space.factor_sizes[j]:
            raise IncompatibleCandidate("conjugation flip needs equal factors")
        if len(candidate.signs) != space.factor_sizes[i]:
            raise IncompatibleCandidate("sign vector length mismatch")
        sig = np.array(candidate.signs, dtype=np.float64)
        flip = sig * np.conj(coords[i])
        inner = np.abs((flip * np.conj(coords[j])).sum(axis=-1))
        return 1.0 - np.minimum(inner, 1.0)
    if candidate.kind == "product":
        res = None
        for part in candidate.parts:
            r = candidate_residual_batch(part, space, coords)
            res = r if res is None else np.maximum(res, r)
        return res
    if candidate.kind == "gz_sphere":
        from .variety import residual_batch
        flipres = candidate_residual_batch(
            CandidateShadow(kind="conj_flip", factors=candidate.factors,
                            signs=candidate.signs), space, coords)
        yres = residual_batch(candidate.constraint, coords)
        return np.maximum(flipres, yres)
    raise IncompatibleCandidate(f"unknown candidate kind {candidate.kind}")


def compare_candidate(cloud: ShadowCloud, candidate: CandidateShadow):
    """{max, mean} residual of the cloud against an analytic model set."""
    res = candidate_residual_batch(candidate, cloud.space, cloud.coords)
    return {"max_residual": float(np.max(res)) if res.size else 0.0,
            "mean_residual": float(np.mean(res)) if res.size else 0.0,
            "num_points": int(res.size)}


# ---- components and verdict ---------------------------------------------------


def count_components(cloud: ShadowCloud, radius=None) -> int:
    """Connected components of the neighborhood graph at the given radius.

    The graph joins stored adjacency chains with the radius-filtered k-nearest
    neighbors of every point, a faithful stand-in for single linkage on clouds
    whose chains already provide the long-range connectivity.
    """
    radius = radius or 3.0 * cloud.sample_spacing
    n = cloud.size
    if n == 0:
        return 0
    emb = cloud.index.embedding
    k = min(n, 7)
    _, nbrs = cloud.index.tree.query(emb, k=k)
    nbrs = np.atleast_2d(nbrs)
    rows = np.repeat(np.arange(n), k)
    cols = nbrs.ravel()
    keep = cols < n
    rows, cols = rows[keep], cols[keep]
    d = batch_fs_distance(cloud.index.take(rows), cloud.index.take(cols))
    keep = d <= radius
    rows, cols = rows[keep], cols[keep]
    if cloud.segments is not None and cloud.segments.size:
        rows = np.concatenate([rows, cloud.segments[:, 0]])
        cols = np.concatenate([cols, cloud.segments[:, 1]])
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, labels = connected_components(adj, directed=False)
    cloud.component_ids = labels.astype(np.int64)
    return int(ncomp)


@dataclass(frozen=True)
class Verdict:
    exists: bool
    max_dim: int
    expected_dim: int
    reasons: tuple = ()


def existence_verdict(cloud: ShadowCloud, expected_dim,
                      lagrangian_report=None, specialty_report=None,
                      invariance_report=None, lagr_tol=1e-3, spec_tol=1e-3,
                      inv_tol=2e-3) -> Verdict:
    """Exists iff the cloud attains the lagrangian dimension and all verifiers pass."""
    reasons = []
    max_dim = cloud.max_local_dim()
    if max_dim != expected_dim:
        reasons.append(f"max local dimension {max_dim} != {expected_dim}")
    if lagrangian_report is not None and \
            lagrangian_report.max_residual > lagr_tol:
        reasons.append(f"lagrangian residual {lagrangian_report.max_residual:.2e}"
                       f" > {lagr_tol}")
    if specialty_report is not None and \
            specialty_report.max_residual > spec_tol:
        reasons.append(f"specialty residual {specialty_report.max_residual:.2e}"
                       f" > {spec_tol}")
    if invariance_report is not None and not invariance_report.passed:
        reasons.append("flow invariance failed")
    return Verdict(exists=not reasons, max_dim=max_dim,
                   expected_dim=expected_dim, reasons=tuple(reasons))


# ---- intersection with a subvariety -------------------------------------------


@dataclass(frozen=True)
class PropositionReport:
    hausdorff_filtered_to_constrained: float
    hausdorff_constrained_to_filtered: float
    filtered_dimension: int
    num_filtered: int
    passed: bool


def proposition_check(ambient_cloud: ShadowCloud, Y, constrained_cloud: ShadowCloud,
                      tol=5e-3, filter_tol=1e-3) -> PropositionReport:
    """Compare (ambient shadow) cap Y with the shadow of the restricted data.

    Ambient points with constraint residual below filter_tol are projected
    onto Y; the two one-sided Hausdorff distances between that set and the
    constrained cloud are measured against each side's local structure, and
    the filtered set's local dimension must equal dim_C Y.
    """
    from .variety import gauss_newton_batch, residual_batch
    space = ambient_cloud.space
    res = residual_batch(Y, ambient_cloud.coords)
    keep = np.nonzero(res < filter_tol)[0]
    if keep.size == 0:
        raise EmptyIntersection("no ambient cloud point within the filter "
                                f"tolerance {filter_tol}")
    filt = ambient_cloud.points_flat[keep]
    filt, ok = gauss_newton_batch(space, Y, filt, tol=1e-11, max_iter=50)
    filt = filt[ok]
    if filt.shape[0] == 0:
        raise EmptyIntersection("projection onto the variety failed for every "
                                "filtered point")
    # wrap the filtered set as a cloud of its own so it carries patches
    fc = ShadowCloud(
        space=space, points_flat=filt,
        psi=np.zeros(filt.shape[0]), grad_norm=np.zeros(filt.shape[0]),
        provenance=np.zeros(filt.shape[0], dtype=np.int64),
        segments=np.zeros((0, 2), dtype=np.int64),
        sample_spacing=ambient_cloud.sample_spacing,
        pca_radius=max(ambient_cloud.pca_radius, 2.5 * _median_nn(space, filt)),
    )
    compute_frames(fc)
    d1 = constrained_cloud.distance_to_batch(filt)
    d2 = fc.distance_to_batch(constrained_cloud.points_flat)
    dims = [fc.fits[i].dim for i in fc.framed_indices()]
    fdim = int(np.bincount(np.array(dims)).argmax()) if dims else 0
    expected = space.total_dim - Y.expected_codim
    h1 = float(np.max(d1)) if d1.size else np.inf
    h2 = float(np.max(d2)) if d2.size else np.inf
    return PropositionReport(
        hausdorff_filtered_to_constrained=h1,
        hausdorff_constrained_to_filtered=h2,
        filtered_dimension=fdim,
        num_filtered=int(filt.shape[0]),
        passed=bool(h1 <= tol and h2 <= tol and fdim == expected),
    )


def _median_nn(space, flat):
    idx = ChordalIndex(space, split_coords(space, flat))
    n = flat.shape[0]
    sample = np.linspace(0, n - 1, min(n, 200)).astype(np.int64)
    ds = []
    for i in sample:
        d, _ = idx.query_nearest([c[i] for c in idx.coords], k=2)
        if len(d) > 1:
            ds.append(d[1])
    return float(np.median(ds)) if ds else 0.05
