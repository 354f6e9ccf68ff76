"""Geometry kernel for products of complex projective spaces.

A point of CP^{n_1} x ... x CP^{n_m} is stored as one unit-norm homogeneous
coordinate vector per factor, with the leftover phase freedom removed by a
deterministic gauge: the largest-magnitude entry of each factor vector is made
real and positive (ties broken by lowest index).  The gauge only matters for
deduplication and serialization; every geometric operation below is invariant
under per-factor phase changes.

Tangent vectors live in the horizontal space {v : <v, p> = 0} per factor
(Hermitian inner product zero), which removes both the radial and the
phase-fiber direction and models the projective tangent space faithfully.
With the Hermitian convention <a, b> = sum_k a_k * conj(b_k):

    metric:             g(v, w)     = sum_i Re<v_i, w_i>
    complex structure:  (J v)_i     = i * v_i
    symplectic form:    omega(v, w) = g(Jv, w) = -sum_i Im<v_i, w_i>

This is the Fubini-Study structure up to one global constant (the round-sphere
scale is used; rescaling the metric only reparametrizes flow time and changes
none of the residual checks downstream).

All low-level helpers are vectorized: "batched coordinates" means a list with
one complex array of shape (..., n_i + 1) per factor, sharing the leading
batch shape.  The public dataclasses wrap single points (batch shape ()).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BaseMismatch, MismatchedSpace, ZeroVector

GAUGE_TOL = 1e-12
HORIZONTAL_TOL = 1e-10
_ZERO_NORM = 1e-14


@dataclass(frozen=True)
class AmbientSpace:
    """Product of complex projective spaces with factor dimensions (n_1, ..., n_m)."""

    factor_dims: tuple

    def __post_init__(self):
        dims = tuple(int(n) for n in self.factor_dims)
        if len(dims) < 1 or any(n < 1 for n in dims):
            raise ValueError("need at least one factor, every factor dimension >= 1")
        object.__setattr__(self, "factor_dims", dims)

    @property
    def num_factors(self):
        return len(self.factor_dims)

    @property
    def total_dim(self):
        """Total complex dimension; equals the expected real dimension of a shadow."""
        return sum(self.factor_dims)

    @property
    def factor_sizes(self):
        """Lengths n_i + 1 of the homogeneous coordinate vectors."""
        return tuple(n + 1 for n in self.factor_dims)

    def check_same(self, other):
        if self.factor_dims != other.factor_dims:
            raise MismatchedSpace(
                f"factor structure {self.factor_dims} != {other.factor_dims}")

    def check_coords(self, coords):
        if len(coords) != self.num_factors:
            raise MismatchedSpace(
                f"expected {self.num_factors} factor vectors, got {len(coords)}")
        for c, size in zip(coords, self.factor_sizes):
            if c.shape[-1] != size:
                raise MismatchedSpace(
                    f"factor vector length {c.shape[-1]} != {size}")


def as_coords(raw):
    """Coerce per-factor input to a list of complex arrays."""
    return [np.asarray(c, dtype=np.complex128) for c in raw]


def herm(a, b):
    """Per-factor Hermitian inner product sum_k a_k conj(b_k), batched."""
    return (a * np.conj(b)).sum(axis=-1)


def batch_unit_normalize(coords):
    """Rescale each factor vector to unit norm (no gauge).  Raises ZeroVector."""
    out = []
    for c in coords:
        norm = np.linalg.norm(c, axis=-1)
        if np.any(norm <= _ZERO_NORM):
            raise ZeroVector("factor vector has norm <= 1e-14")
        out.append(c / norm[..., None])
    return out


def batch_gauge(coords):
    """Rotate each unit factor vector so its largest-magnitude entry is real positive.

    Ties are broken toward the lowest index by a tiny monotone bias, which keeps
    the rule deterministic without disturbing the argmax in non-degenerate cases.
    """
    out = []
    for c in coords:
        mag = np.abs(c)
        bias = np.linspace(0.0, 1e-9, c.shape[-1])
        idx = np.argmax(mag - bias[(None,) * (c.ndim - 1)], axis=-1)
        lead = np.take_along_axis(c, idx[..., None], axis=-1)[..., 0]
        phase = lead / np.abs(lead)
        out.append(c * np.conj(phase)[..., None])
    return out


def batch_normalize(coords):
    """Unit normalization followed by the phase gauge."""
    return batch_gauge(batch_unit_normalize(coords))


def batch_horizontal(base, raw):
    """Project raw per-factor vectors onto the horizontal space at base."""
    return [r - herm(r, b)[..., None] * b for b, r in zip(base, raw)]


def batch_fs_distance(a, b):
    """Fubini-Study distance sqrt(sum_i arccos(min(1, |<a_i, b_i>|))^2), batched.

    Evaluated per factor as arctan2(||w||, |s|) with s = <b_i, a_i> and w the
    phase-aligned component of b_i orthogonal to a_i, which equals arccos(|s|)
    but stays fully accurate near zero distance where arccos loses half the
    significant digits.
    """
    total = 0.0
    for x, y in zip(a, b):
        s_yx = herm(y, x)
        s_xy = herm(x, y)
        # every ingredient is averaged over the two argument orders, which
        # makes the distance bitwise symmetric on top of stable
        mag = 0.5 * (np.abs(s_yx) + np.abs(s_xy))
        safe = np.where(mag > 1e-300, mag, 1.0)
        ph_y = np.where(mag > 1e-300, np.conj(s_yx) / safe, 1.0)
        ph_x = np.where(mag > 1e-300, np.conj(s_xy) / safe, 1.0)
        w_xy = y * ph_y[..., None] - mag[..., None] * x
        w_yx = x * ph_x[..., None] - mag[..., None] * y
        wn = 0.5 * (np.linalg.norm(w_xy, axis=-1) +
                    np.linalg.norm(w_yx, axis=-1))
        total = total + np.arctan2(wn, np.minimum(mag, 1.0)) ** 2
    return np.sqrt(total)


def batch_metric(v, w):
    return sum(np.real(herm(a, b)) for a, b in zip(v, w))


def batch_symplectic(v, w):
    return -sum(np.imag(herm(a, b)) for a, b in zip(v, w))


def batch_norm(v):
    return np.sqrt(sum(np.real(herm(a, a)) for a in v))


def batch_scale(v, s):
    s = np.asarray(s)
    return [s[..., None] * a if s.ndim else s * a for a in v]


def batch_add(v, w):
    return [a + b for a, b in zip(v, w)]


def batch_log(base, target):
    """Log map of the product Fubini-Study metric, batched.

    Returns horizontal per-factor vectors u with ||u_i|| equal to the factor
    distance and exp_base(u) = target as projective points.  The target's
    representative phase is aligned per factor before splitting off the
    horizontal component, so the result is gauge-invariant.
    """
    out = []
    for p, q in zip(base, target):
        s = herm(q, p)
        mag = np.abs(s)
        # On the cut locus (|s| = 0) the direction is ill-defined; align with
        # phase 1 there, the magnitude arccos(0) = pi/2 is still correct.
        phase = np.where(mag > 1e-300, s / np.where(mag > 1e-300, mag, 1.0), 1.0)
        q_al = q * np.conj(phase)[..., None]
        cos_t = np.minimum(mag, 1.0)
        w = q_al - cos_t[..., None] * p
        wn = np.linalg.norm(w, axis=-1)
        theta = np.arctan2(wn, cos_t)  # = arccos(cos_t), stable near zero distance
        scale = np.where(wn > 1e-300, theta / np.where(wn > 1e-300, wn, 1.0), 0.0)
        out.append(scale[..., None] * w)
    return out


def batch_retract(base, v, step=1.0):
    """First-order retraction: unit-normalize base + step * v (no gauge)."""
    return batch_unit_normalize([p + step * a for p, a in zip(base, v)])


def random_coords(space, batch, rng):
    """Uniform random points (unnormalized Gaussian representatives)."""
    out = []
    for size in space.factor_sizes:
        z = rng.standard_normal((batch, size)) + 1j * rng.standard_normal((batch, size))
        out.append(z)
    return out


def sobol_coords(space, count, seed):
    """Deterministic low-discrepancy points on the product of projective spaces.

    A scrambled Sobol sequence is pushed through the inverse normal CDF, which
    turns uniform cube samples into Gaussian representatives and hence uniform
    projective points after normalization.
    """
    from scipy.stats import norm, qmc

    dim = 2 * sum(space.factor_sizes)
    sampler = qmc.Sobol(d=dim, scramble=True, seed=seed)
    pow2 = 1 << max(int(np.ceil(np.log2(max(count, 1)))), 0)
    u = sampler.random(pow2)[:count]
    z = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    out = []
    offset = 0
    for size in space.factor_sizes:
        re = z[:, offset:offset + size]
        im = z[:, offset + size:offset + 2 * size]
        out.append(re + 1j * im)
        offset += 2 * size
    return out


def stack_coords(coord_list):
    """Stack a list of single-point coordinate lists into one batch."""
    m = len(coord_list[0])
    return [np.stack([c[i] for c in coord_list], axis=0) for i in range(m)]


def take_coords(coords, idx):
    """Index the leading batch axis."""
    return [c[idx] for c in coords]


def coords_count(coords):
    return coords[0].shape[0]


@dataclass(frozen=True)
class Point:
    """Gauge-fixed unit-norm representative of a point in the ambient product."""

    space: AmbientSpace
    coords: tuple = field(repr=False)

    def __post_init__(self):
        self.space.check_coords(self.coords)
        for c in self.coords:
            n = np.linalg.norm(c)
            if abs(n - 1.0) > 1e-12:
                raise ValueError(f"factor norm {n} deviates from 1 beyond 1e-12")
            lead = c[int(np.argmax(np.abs(c) - np.linspace(0.0, 1e-9, c.shape[-1])))]
            if abs(np.imag(lead)) > GAUGE_TOL or np.real(lead) <= 0:
                raise ValueError("gauge entry is not real positive")
            c.setflags(write=False)

    def batch(self):
        """Coordinates viewed as a batch of one."""
        return [c[None, :] for c in self.coords]


@dataclass(frozen=True)
class TangentVector:
    """Horizontal tangent vector based at a Point."""

    base: Point
    parts: tuple = field(repr=False)

    def __post_init__(self):
        self.base.space.check_coords(self.parts)
        for p, v in zip(self.base.coords, self.parts):
            if abs(herm(v, p)) > HORIZONTAL_TOL * max(1.0, np.linalg.norm(v)):
                raise ValueError("tangent part is not horizontal at the base point")
            v.setflags(write=False)

    @property
    def norm(self):
        return float(batch_norm(list(self.parts)))

    def batch(self):
        return [v[None, :] for v in self.parts]


def point_from_batch(space, coords, index=0):
    """Extract one gauge-fixed Point from batched (already normalized) coordinates."""
    single = [np.array(c[index]) for c in coords]
    single = batch_gauge(single)
    return Point(space, tuple(single))


def normalize_point(space, raw) -> Point:
    """Gauge-fixed unit representative of the projective point with coordinates raw.

    Idempotent, and constant on scaling raw by nonzero per-factor complex
    scalars.  Raises ZeroVector when a factor vector has norm <= 1e-14.
    """
    coords = as_coords(raw)
    space.check_coords(coords)
    return Point(space, tuple(batch_normalize(coords)))


def fs_distance(p: Point, q: Point) -> float:
    """Fubini-Study distance between two points over the same ambient space."""
    p.space.check_same(q.space)
    return float(batch_fs_distance(list(p.coords), list(q.coords)))


def horizontal_project(p: Point, raw) -> TangentVector:
    """Hermitian projection of raw per-factor vectors onto the horizontal space at p.

    Idempotent and real-linear; kills the radial and phase-fiber directions.
    """
    vecs = as_coords(raw)
    p.space.check_coords(vecs)
    parts = batch_horizontal(list(p.coords), vecs)
    return TangentVector(p, tuple(parts))


def _check_same_base(v: TangentVector, w: TangentVector):
    if v.base.space.factor_dims != w.base.space.factor_dims:
        raise BaseMismatch("tangent vectors over different ambient spaces")
    if v.base is w.base:
        return
    # gauge-fixed representatives are canonical, so coordinates compare directly
    dev = max(float(np.abs(p - q).max())
              for p, q in zip(v.base.coords, w.base.coords))
    if dev > 1e-10:
        raise BaseMismatch("tangent vectors based at different points")


def metric_inner(v: TangentVector, w: TangentVector) -> float:
    """Riemannian metric sum_i Re<v_i, w_i>."""
    _check_same_base(v, w)
    return float(batch_metric(list(v.parts), list(w.parts)))


def complex_structure(v: TangentVector) -> TangentVector:
    """Multiply every part by the imaginary unit (stays horizontal)."""
    return TangentVector(v.base, tuple(1j * a for a in v.parts))


def symplectic_eval(v: TangentVector, w: TangentVector) -> float:
    """Kahler form omega(v, w) = g(Jv, w) = -sum_i Im<v_i, w_i>."""
    _check_same_base(v, w)
    return float(batch_symplectic(list(v.parts), list(w.parts)))


def retract(p: Point, v: TangentVector, step: float) -> Point:
    """Normalize p + step * v; agrees with the geodesic to second order."""
    moved = [c + step * a for c, a in zip(p.coords, v.parts)]
    return normalize_point(p.space, moved)


def _slot_gram_schmidt(candidates, n_slots, tol=1e-6):
    """Fill n_slots orthonormal vectors per batch entry from an ordered candidate list.

    candidates: array (B, n_cand, d) of real-inner-product vectors (complex dtype,
    inner product Re<a, b>).  Which candidates survive differs per entry, so
    acceptance is decided entrywise: each candidate is orthogonalized against the
    already-filled slots of its entry and accepted into the next free slot when
    its residual norm exceeds tol.  Returns (B, n_slots, d); raises if any entry
    cannot be filled.
    """
    B, n_cand, d = candidates.shape
    slots = np.zeros((B, n_slots, d), dtype=np.complex128)
    filled = np.zeros(B, dtype=np.int64)
    for k in range(n_cand):
        if np.all(filled == n_slots):
            break
        c = candidates[:, k, :].copy()
        # subtract projections onto filled slots only
        proj = np.real(np.einsum("bsd,bd->bs", np.conj(slots), c))
        mask = np.arange(n_slots)[None, :] < filled[:, None]
        proj = np.where(mask, proj, 0.0)
        c = c - np.einsum("bs,bsd->bd", proj, slots)
        nrm = np.linalg.norm(c, axis=-1)
        accept = (nrm > tol) & (filled < n_slots)
        if not np.any(accept):
            continue
        unit = c[accept] / nrm[accept, None]
        rows = np.nonzero(accept)[0]
        slots[rows, filled[rows], :] = unit
        filled[rows] += 1
    if np.any(filled < n_slots):
        from .errors import DegenerateFrame
        raise DegenerateFrame("could not fill an orthonormal horizontal frame")
    return slots


def horizontal_frame(space, coords):
    """Deterministic orthonormal basis of the horizontal space, batched.

    The coordinate-ordered spanning set (e_0, .., e_n, i*e_0, .., i*e_n per
    factor) is horizontally projected and Gram-Schmidt orthonormalized with the
    real inner product Re<a, b>; exactly 2*n_i vectors survive per factor.
    Returns one array of shape (B, 2*n_i, n_i + 1) per factor; a global frame
    index runs factor-major over the concatenation (total 2N vectors, each
    supported on a single factor, hence mutually orthonormal).
    """
    frames = []
    for i, size in enumerate(space.factor_sizes):
        p = coords[i]
        B = int(np.prod(p.shape[:-1])) if p.ndim > 1 else 1
        pf = p.reshape(B, size)
        cands = np.zeros((B, 2 * size, size), dtype=np.complex128)
        for k in range(size):
            cands[:, k, k] = 1.0
            cands[:, size + k, k] = 1j
        # horizontal projection of every candidate at once
        inner = np.einsum("bkd,bd->bk", cands, np.conj(pf))
        cands = cands - inner[:, :, None] * pf[:, None, :]
        slots = _slot_gram_schmidt(cands, 2 * space.factor_dims[i])
        frames.append(slots.reshape(p.shape[:-1] + (2 * space.factor_dims[i], size)))
    return frames


def factor_offsets(space):
    """Slice boundaries of the concatenated coordinate layout."""
    sizes = space.factor_sizes
    offs = [0]
    for s in sizes:
        offs.append(offs[-1] + s)
    return offs


def flatten_coords(space, coords):
    """Concatenate per-factor coordinates into one (..., D) complex array."""
    return np.concatenate(list(coords), axis=-1)


def split_coords(space, flat):
    """Inverse of flatten_coords."""
    offs = factor_offsets(space)
    return [flat[..., offs[i]:offs[i + 1]] for i in range(space.num_factors)]


def global_frame(space, coords):
    """Horizontal frame as one (..., 2N, D) array over concatenated coordinates.

    Rows are the per-factor frame vectors embedded at their factor's column
    block; the global index runs factor-major.
    """
    frames = horizontal_frame(space, coords)
    batch_shape = coords[0].shape[:-1]
    D = sum(space.factor_sizes)
    offs = factor_offsets(space)
    blocks = []
    for i, F in enumerate(frames):
        pad = np.zeros(batch_shape + (F.shape[-2], D), dtype=np.complex128)
        pad[..., :, offs[i]:offs[i + 1]] = F
        blocks.append(pad)
    return np.concatenate(blocks, axis=-2)


def flat_unit_normalize(space, flat):
    """Per-factor unit normalization acting on concatenated coordinates."""
    return flatten_coords(space, batch_unit_normalize(split_coords(space, flat)))


def flat_horizontal(space, base_flat, raw_flat):
    """Per-factor horizontal projection on concatenated coordinates."""
    base = split_coords(space, base_flat)
    raw = split_coords(space, raw_flat)
    return flatten_coords(space, batch_horizontal(base, raw))


def frame_coeffs(frames, parts):
    """Real coefficients of horizontal vectors in a frame: (..., 2N)."""
    cols = []
    for F, v in zip(frames, parts):
        cols.append(np.real(np.einsum("...kd,...d->...k", np.conj(F), v)))
    return np.concatenate(cols, axis=-1)


def frame_vector(frames, coeffs):
    """Per-factor vectors from real frame coefficients."""
    parts = []
    offset = 0
    for F in frames:
        k = F.shape[-2]
        c = coeffs[..., offset:offset + k]
        parts.append(np.einsum("...k,...kd->...d", c, F))
        offset += k
    return parts
