"""Nearest-neighbor search, local tangent fits, and patch distances for point clouds.

Projective points are indexed through a gauge-invariant chordal embedding: per
factor the rank-one projector p p^H is flattened (with sqrt(2) weights on the
off-diagonal entries) so that Euclidean distance in the embedding equals
sqrt(sum_i 2 sin^2 d_i), a monotone proxy of the Fubini-Study distance that is
exact enough for candidate generation; exact FS distances are recomputed on
the candidates.

Local structure at a cloud point is estimated from log-chart displacements of
its neighbors expressed in the horizontal frame: plain PCA fixes the dimension
(singular values above a relative threshold), and a weighted polynomial
regression of the normal components over the tangent components refines the
tangent frame (the fitted linear term is exactly the PCA tilt induced by
curvature and uneven sampling) and yields a local graph model used for
point-to-surface distances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import (
    batch_fs_distance, batch_log, factor_offsets, flatten_coords, global_frame,
    split_coords,
)


def chordal_embedding(space, coords):
    """Per-factor projector flattening, shape (B, sum (n_i+1)^2) real."""
    blocks = []
    for c in coords:
        size = c.shape[-1]
        outer = c[..., :, None] * np.conj(c[..., None, :])
        iu, ju = np.triu_indices(size, k=1)
        diag = np.real(outer[..., np.arange(size), np.arange(size)])
        off = outer[..., iu, ju]
        blocks.extend([diag,
                       np.sqrt(2.0) * np.real(off),
                       np.sqrt(2.0) * np.imag(off)])
    return np.concatenate(blocks, axis=-1)


class ChordalIndex:
    """KD-tree over the chordal embedding with exact FS post-filtering."""

    def __init__(self, space, coords):
        self.space = space
        self.coords = [np.asarray(c) for c in coords]
        self.size = self.coords[0].shape[0]
        self.embedding = chordal_embedding(space, self.coords)
        self.tree = cKDTree(self.embedding)

    def take(self, idx):
        return [c[idx] for c in self.coords]

    def fs_to(self, point_coords, idx):
        """Exact FS distances from one point to the indexed entries."""
        single = [c[None, :] if c.ndim == 1 else c for c in point_coords]
        return batch_fs_distance([c[idx] for c in self.coords],
                                 [np.broadcast_to(c, (len(idx),) + c.shape[1:])
                                  for c in single])

    def query_ball(self, point_coords, radius):
        """Indices within exact FS radius of one point."""
        emb = chordal_embedding(self.space,
                                [c[None, :] if c.ndim == 1 else c
                                 for c in point_coords])[0]
        cand = self.tree.query_ball_point(emb, np.sqrt(2.0) * radius + 1e-12)
        if not cand:
            return np.array([], dtype=np.int64), np.array([])
        cand = np.asarray(cand, dtype=np.int64)
        d = self.fs_to(point_coords, cand)
        keep = d <= radius
        return cand[keep], d[keep]

    def query_nearest(self, point_coords, k=1):
        """(distances, indices) of the k FS-nearest entries to one point."""
        emb = chordal_embedding(self.space,
                                [c[None, :] if c.ndim == 1 else c
                                 for c in point_coords])[0]
        kk = min(self.size, max(2 * k + 4, 8))
        _, cand = self.tree.query(emb, k=kk)
        cand = np.atleast_1d(cand)
        cand = cand[cand < self.size]
        d = self.fs_to(point_coords, cand)
        order = np.argsort(d, kind="stable")[:k]
        return d[order], cand[order]

    def pairs_within(self, radius):
        """Candidate index pairs within FS radius (chordal superset, FS filtered)."""
        pairs = self.tree.query_pairs(np.sqrt(2.0) * radius + 1e-12,
                                      output_type="ndarray")
        if pairs.size == 0:
            return pairs.reshape(0, 2)
        a = self.take(pairs[:, 0])
        b = self.take(pairs[:, 1])
        d = batch_fs_distance(a, b)
        return pairs[d <= radius]


def _poly_basis(t, degree):
    """Polynomial feature matrix in d variables up to the given total degree."""
    M, d = t.shape
    cols = [np.ones(M)]
    if degree >= 1:
        cols.extend(t[:, a] for a in range(d))
    if degree >= 2:
        for a in range(d):
            for b in range(a, d):
                cols.append(t[:, a] * t[:, b])
    if degree >= 3:
        for a in range(d):
            for b in range(a, d):
                for c in range(b, d):
                    cols.append(t[:, a] * t[:, b] * t[:, c])
    return np.stack(cols, axis=1)


def _n_poly_terms(d, degree):
    n = 1
    if degree >= 1:
        n += d
    if degree >= 2:
        n += d * (d + 1) // 2
    if degree >= 3:
        n += d * (d + 1) * (d + 2) // 6
    return n


@dataclass
class TangentFit:
    """Local tangent estimate at a cloud point.

    frame_rows: (dim, K) real coefficients in the base point's horizontal frame;
    the patch model predicts normal components as a polynomial over tangent
    components (coefficient layout of _poly_basis at fit_degree).
    """

    index: int
    dim: int
    frame_rows: np.ndarray
    normal_rows: np.ndarray = field(repr=False)
    poly_coeffs: np.ndarray = field(repr=False)   # (n_terms, K - dim)
    fit_degree: int = 2
    radius: float = 0.0
    n_neighbors: int = 0
    singular_values: np.ndarray = field(default=None, repr=False)
    rms_residual: float = 0.0


def fit_local_tangent(disp, radius, rel_threshold=0.2, max_degree=3,
                      min_neighbors=4, refine_iters=8, forced_dim=None):
    """Tangent/dimension fit from log-chart displacements (M, K).

    Returns (dim, tangent_rows, normal_rows, poly_coeffs, degree, sv, rms) or
    None when fewer than min_neighbors displacements are available.
    """
    M, K = disp.shape
    if M < min_neighbors:
        return None
    sv_scale = np.linalg.norm(disp, axis=1)
    U, S, Vt = np.linalg.svd(disp, full_matrices=True)
    if S[0] <= 1e-300:
        return None
    if forced_dim is None:
        dim = int(np.sum(S >= rel_threshold * S[0]))
        dim = max(1, min(dim, K))
    else:
        dim = forced_dim
    T = Vt[:dim]
    Nm = Vt[dim:]
    if dim == K:
        return dim, T, Nm, np.zeros((1, 0)), 1, S, 0.0
    w = np.maximum(1.0 - (sv_scale / max(radius, 1e-30)) ** 2, 0.0) ** 2 + 1e-6
    degree = max_degree
    while degree > 1 and M < int(1.4 * _n_poly_terms(dim, degree)):
        degree -= 1
    coeffs = None
    for _ in range(max(refine_iters, 1)):
        t = disp @ T.T
        n = disp @ Nm.T
        A = _poly_basis(t, degree)
        Aw = A * w[:, None]
        ridge = 1e-10 * max(1.0, float((Aw * Aw).sum()))
        G = A.T @ Aw + ridge * np.eye(A.shape[1])
        coeffs = np.linalg.solve(G, A.T @ (n * w[:, None]))
        if degree < 1 or K - dim == 0:
            break
        L = coeffs[1:1 + dim]                     # (dim, K-dim) linear part
        if np.abs(L).max() < 1e-11:
            break  # frame converged: the graph has no linear term left
        T_new = T + L @ Nm
        # re-orthonormalize the tangent and rebuild the normal complement
        q, _ = np.linalg.qr(np.concatenate([T_new, Nm]).T)
        T = q.T[:dim]
        Nm = q.T[dim:]
    t = disp @ T.T
    n = disp @ Nm.T
    A = _poly_basis(t, degree)
    resid = n - A @ coeffs
    rms = float(np.sqrt(np.mean(resid ** 2))) if resid.size else 0.0
    return dim, T, Nm, coeffs, degree, S, rms


def patch_normal_distance(fit: TangentFit, disp_vec):
    """Distance from a log-chart displacement to the fitted local graph.

    Clamps the tangent coordinate to the patch radius; out-of-patch excess is
    added in quadrature so the value degrades gracefully to point distance.
    """
    t = fit.frame_rows @ disp_vec
    n = fit.normal_rows @ disp_vec
    tn = np.linalg.norm(t)
    excess = 0.0
    if tn > fit.radius > 0:
        t = t * (fit.radius / tn)
        excess = tn - fit.radius
    A = _poly_basis(t[None, :], fit.fit_degree)
    pred = (A @ fit.poly_coeffs)[0]
    return float(np.sqrt(np.sum((n - pred) ** 2) + excess ** 2))
