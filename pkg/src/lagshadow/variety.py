"""Smooth subvarieties cut by multihomogeneous equations.

Only complete intersections are supported: the number of equations equals the
expected complex codimension, and the complex Jacobian must have full rank at
every point the engines visit.  The tangent space of the variety at a point is
the real kernel of the complex Jacobian intersected with the horizontal space;
that kernel is complex-linear, so the constrained distribution is J-invariant
and the Hermitian projection used below is simultaneously the metric-orthogonal
one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySample, MismatchedSpace, NoConvergence, RankLoss
from .geometry import (
    batch_fs_distance, batch_unit_normalize, flat_unit_normalize,
    flatten_coords, normalize_point, split_coords,
)
from .sections import (
    MultiHomogeneousSection, eval_section_batch, section_partials_batch,
)


@dataclass(frozen=True)
class VarietyConstraint:
    """Complete-intersection constraint: one multihomogeneous equation per codimension."""

    equations: tuple
    expected_codim: int = 0

    def __post_init__(self):
        eqs = tuple(self.equations)
        codim = self.expected_codim or len(eqs)
        if codim != len(eqs):
            raise ValueError("complete intersections only: "
                             "expected_codim must equal the number of equations")
        if codim < 1:
            raise ValueError("need at least one equation")
        object.__setattr__(self, "equations", eqs)
        object.__setattr__(self, "expected_codim", codim)

    def check_space(self, space):
        for eq in self.equations:
            eq.check_space(space)


def residual_batch(Y: VarietyConstraint, coords):
    """max_e |F_e| on batched coordinates."""
    res = None
    for eq in Y.equations:
        r = np.abs(eval_section_batch(eq, coords))
        res = r if res is None else np.maximum(res, r)
    return res


def constraint_residual(Y: VarietyConstraint, p) -> float:
    """Maximum equation modulus at the unit representative (gauge-invariant)."""
    Y.check_space(p.space)
    return float(residual_batch(Y, p.batch())[0])


def _jacobian_rows(space, Y, coords):
    """Conjugate-gradient rows w_e with dF_e(v) = <v, w_e>, horizontalized.

    Returns (values (..., k) complex, rows (..., k, D) complex).  The Hermitian
    pairing <v, w_e> reproduces the complex-linear differential of F_e, so the
    real kernel of the Jacobian is exactly {v : <v, w_e> = 0 for all e}.
    """
    vals = []
    rows = []
    base = split_coords(space, coords) if not isinstance(coords, list) else coords
    flat_base = coords if not isinstance(coords, list) else flatten_coords(space, coords)
    for eq in Y.equations:
        v, partials = section_partials_batch(eq, base)
        w = np.conj(flatten_coords(space, partials))
        vals.append(v)
        rows.append(w)
    vals = np.stack(vals, axis=-1)
    rows = np.stack(rows, axis=-2)
    # horizontalize each row per factor (hygiene; rows are horizontal on Y exactly)
    from .geometry import factor_offsets
    offs = factor_offsets(space)
    out = rows.copy()
    for i in range(space.num_factors):
        blk = slice(offs[i], offs[i + 1])
        p = flat_base[..., None, blk]
        inner = (out[..., blk] * np.conj(p)).sum(axis=-1)
        out[..., blk] = out[..., blk] - inner[..., None] * p
    return vals, out


def normal_basis_batch(space, Y: VarietyConstraint, coords, rank_tol=1e-8):
    """Hermitian-orthonormal basis of the complex normal rows, shape (..., k, D).

    Raises RankLoss when the Gram-Schmidt collapses (Jacobian rank below the
    expected codimension).
    """
    _, rows = _jacobian_rows(space, Y, coords)
    k = rows.shape[-2]
    basis = np.zeros_like(rows)
    for e in range(k):
        w = rows[..., e, :].copy()
        scale = np.linalg.norm(w, axis=-1)
        for f in range(e):
            inner = (w * np.conj(basis[..., f, :])).sum(axis=-1)
            w = w - inner[..., None] * basis[..., f, :]
        nrm = np.linalg.norm(w, axis=-1)
        if np.any(nrm <= rank_tol * np.maximum(scale, 1e-30)):
            raise RankLoss("constraint Jacobian rank below expected codimension")
        basis[..., e, :] = w / nrm[..., None]
    return basis


def project_tangent_batch(space, Y, coords, parts_flat):
    """Project horizontal vectors onto the variety tangent space (batched, flat)."""
    basis = normal_basis_batch(space, Y, coords)
    out = parts_flat
    for e in range(basis.shape[-2]):
        b = basis[..., e, :]
        inner = (out * np.conj(b)).sum(axis=-1)
        out = out - inner[..., None] * b
    return out


def tangent_project_variety(Y: VarietyConstraint, p, v):
    """Metric-orthogonal projection of a tangent vector onto T(Y).

    The output satisfies dF(result) ~ 0 and commutes with the complex
    structure (the kernel is complex-linear).  Raises RankLoss near the
    singular locus of Y.
    """
    from .geometry import TangentVector
    space = p.space
    Y.check_space(space)
    flat = flatten_coords(space, [c[None, :] for c in p.coords])
    vf = flatten_coords(space, [a[None, :] for a in v.parts])
    out = project_tangent_batch(space, Y, flat, vf)
    parts = split_coords(space, out)
    return TangentVector(p, tuple(a[0] for a in parts))


def project_to_variety(Y: VarietyConstraint, p, tol=1e-11, max_iter=50):
    """Project a point onto Y (Gauss-Newton along horizontal directions).

    Requires the basin condition residual < 0.1; raises NoConvergence after
    max_iter iterations or when called outside the basin.
    """
    space = p.space
    Y.check_space(space)
    r0 = constraint_residual(Y, p)
    if r0 >= 0.1:
        raise NoConvergence(f"outside projection basin: residual {r0:.3g} >= 0.1")
    flat = flatten_coords(space, [c[None, :] for c in p.coords])
    out, ok = gauss_newton_batch(space, Y, flat, tol=tol, max_iter=max_iter)
    if not ok[0]:
        raise NoConvergence("Gauss-Newton projection did not reach tolerance")
    coords = split_coords(space, out)
    return normalize_point(space, [c[0] for c in coords])


def gauss_newton_batch(space, Y, coords_flat, tol=1e-11, max_iter=50, damping=1.0):
    """Batched Gauss-Newton for F(x) = 0; returns (coords_flat, converged mask)."""
    x = flat_unit_normalize(space, coords_flat)
    B = x.shape[0]
    active = np.ones(B, dtype=bool)
    for _ in range(max_iter):
        vals, rows = _jacobian_rows(space, Y, x)
        res = np.abs(vals).max(axis=-1)
        active = res > tol
        if not np.any(active):
            break
        xa = x[active]
        va = vals[active]
        ra = rows[active]
        gram = np.einsum("bed,bfd->bef", ra, np.conj(ra))
        try:
            alpha = np.linalg.solve(gram, va[..., None])[..., 0]
        except np.linalg.LinAlgError:
            raise RankLoss("singular Gram matrix in Gauss-Newton projection")
        step = -np.einsum("be,bed->bd", alpha, np.conj(ra))
        xa = flat_unit_normalize(space, xa + damping * step)
        x[active] = xa
    vals, _ = _jacobian_rows(space, Y, x)
    ok = np.abs(vals).max(axis=-1) <= tol
    return x, ok


def check_transversality(Y: VarietyConstraint, section: MultiHomogeneousSection,
                         samples, rel_tol=1e-6):
    """Full-rank check of the combined Jacobian (variety equations plus ds) on D cap Y.

    samples: list of Points on the intersection (|s| and residual below 1e-8).
    Returns a report with the minimum singular value over samples; raises
    EmptySample when the list is empty.
    """
    if not samples:
        raise EmptySample("no intersection samples supplied")
    space = samples[0].space
    combined = VarietyConstraint(tuple(Y.equations) + (section,))
    from .geometry import stack_coords
    coords = stack_coords([list(p.coords) for p in samples])
    flat = flatten_coords(space, coords)
    _, rows = _jacobian_rows(space, combined, flat)
    svals = np.linalg.svd(rows, compute_uv=False)
    smin = svals[:, -1]
    smax = svals[:, 0]
    ok = smin > rel_tol * np.maximum(smax, 1e-30)
    return TransversalityReport(
        num_samples=len(samples),
        min_singular=float(smin.min()),
        max_singular=float(smax.max()),
        full_rank=bool(np.all(ok)),
        failures=int(np.sum(~ok)),
    )


@dataclass(frozen=True)
class TransversalityReport:
    num_samples: int
    min_singular: float
    max_singular: float
    full_rank: bool
    failures: int


def sample_divisor_intersection(space, Y: VarietyConstraint,
                                section: MultiHomogeneousSection,
                                count, rng, tol=1e-9, max_tries=None):
    """Sample points of D cap Y by complex-line root solving plus projection.

    Strategy per sample: draw a random complex line in one factor (the one of
    highest section degree), interpolate the restricted section as a univariate
    polynomial, take a root as a seed on D, then run the combined Gauss-Newton
    on [equations of Y, s] to land on the intersection.
    """
    from .geometry import random_coords
    section.check_space(space)
    Y.check_space(space)
    j = int(np.argmax(section.multidegree))
    deg = section.multidegree[j]
    if deg < 1:
        raise ValueError("section does not depend on any factor")
    combined = VarietyConstraint(tuple(Y.equations) + (section,))
    out = []
    tries = 0
    budget = max_tries if max_tries is not None else 40 * count
    while len(out) < count and tries < budget:
        tries += 1
        a = [c[0] for c in random_coords(space, 1, rng)]
        b = [c[0] for c in random_coords(space, 1, rng)]
        # univariate restriction P(t) = s(..., a_j + t b_j, ...), degree <= deg
        nodes = np.exp(2j * np.pi * np.arange(deg + 1) / (deg + 1))
        vals = []
        for t in nodes:
            coords = [np.array(c) for c in a]
            coords[j] = a[j] + t * b[j]
            vals.append(eval_section_batch(section, [c[None, :] for c in coords])[0])
        coeffs = np.fft.fft(np.asarray(vals)) / (deg + 1)  # exact on roots of unity
        poly = coeffs[::-1]  # highest power first for np.roots
        if np.max(np.abs(poly)) < 1e-12:
            continue
        roots = np.roots(poly)
        if roots.size == 0:
            continue
        t0 = roots[np.argmin(np.abs(roots))]
        seed = [np.array(c) for c in a]
        seed[j] = a[j] + t0 * b[j]
        try:
            seed = batch_unit_normalize([c[None, :] for c in seed])
        except Exception:
            continue
        flat = flatten_coords(space, seed)
        refined, ok = gauss_newton_batch(space, combined, flat, tol=tol, max_iter=60)
        if not ok[0]:
            continue
        coords = split_coords(space, refined)
        out.append(normalize_point(space, [c[0] for c in coords]))
    if not out:
        raise EmptySample("could not locate any point on the intersection")
    return out
