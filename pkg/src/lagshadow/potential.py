"""The ample-divisor potential psi = -ln|h| and its first/second derivative calculus.

On unit-norm representatives the modulus of the section equals its hermitian
norm up to a fixed constant, so psi is computed as -ln|P|.  Its Riemannian
gradient with respect to the product Fubini-Study metric has the per-factor
components

    G_i = -conj(dP/dx_i / P) + d_i * p_i,

followed by horizontal projection.  The d_i * p_i term cancels the radial
component exactly (Euler's identity), making the formula scale-invariant and
testable off the unit sphere; the horizontal projection is numerical hygiene.
When a variety constraint is present the gradient is further projected onto
the constrained tangent space, which realizes the potential of the restricted
data without building charts on the subvariety.

The Hessian is finite differences of the analytic gradient composed with the
retraction, evaluated in a deterministic orthonormal horizontal frame and then
symmetrized.  Displaced representatives are renormalized without the phase
gauge: a gauge re-fix would rotate the gradient relative to the transported
frame vectors at first order in the step and wreck the difference quotient.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import OnDivisor
from .geometry import (
    AmbientSpace, Point, TangentVector, batch_horizontal, batch_metric,
    batch_unit_normalize, complex_structure, flat_horizontal,
    flat_unit_normalize, flatten_coords, global_frame, metric_inner,
    split_coords,
)
from .sections import MultiHomogeneousSection, eval_section_batch, \
    section_partials_batch


@dataclass(frozen=True)
class Tolerances:
    """Named numerical thresholds shared across the pipeline."""

    grad_tol: float = 1e-9         # gradient norm below which a point is critical
    null_tol: float = 1e-5         # |eigenvalue| <= null_tol * max|eig| counts as null
    escape_psi: float = 12.0       # psi above this means "on the divisor"
    fd_step: float = 1e-4          # finite-difference step for the Hessian
    step_rtol: float = 1e-9        # per-step relative tolerance of the integrator
    max_step: float = 0.05         # maximum integrator step in FS distance
    crawl_threshold: float = 1e-4  # gradient norm that switches to the safeguarded crawl
    dedup_tol: float = 1e-6        # critical points closer than this are duplicates
    cluster_radius: float = 0.3    # single-linkage radius for critical clusters
    match_radius: float = 1e-2     # trajectory endpoint-to-cluster matching radius
    filter_tol: float = 1e-3       # near-variety filter for the intersection check

    def __post_init__(self):
        if self.escape_psi <= 0 or self.grad_tol <= 0 or self.null_tol <= 0:
            raise ValueError("escape_psi, grad_tol and null_tol must be positive")


@dataclass(frozen=True)
class PotentialProblem:
    """Ambient space, section, optional constraint, and the tolerance set."""

    ambient: AmbientSpace
    section: MultiHomogeneousSection
    constraint: object = None
    level: int = 1
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        self.section.check_space(self.ambient)
        if self.constraint is not None:
            self.constraint.check_space(self.ambient)
        if self.level < 1:
            raise ValueError("level must be a positive integer")

    @property
    def frame_dim(self):
        """Real dimension of the (constrained) horizontal frame."""
        n = 2 * self.ambient.total_dim
        if self.constraint is not None:
            n -= 2 * self.constraint.expected_codim
        return n

    @property
    def lagrangian_dim(self):
        """Complex dimension of X, or of Y when constrained: the shadow dimension."""
        n = self.ambient.total_dim
        if self.constraint is not None:
            n -= self.constraint.expected_codim
        return n

    @property
    def divisor_floor(self):
        """|P| at or below this counts as on the divisor."""
        return float(np.exp(-self.tolerances.escape_psi))


def psi_batch(prob: PotentialProblem, coords):
    """(psi values, on-divisor mask) on batched per-factor coordinates."""
    vals = eval_section_batch(prob.section, coords)
    mod = np.abs(vals)
    mask = mod <= prob.divisor_floor
    psi = -np.log(np.where(mask, 1.0, mod))
    psi = np.where(mask, np.inf, psi)
    return psi, mask


def gradient_batch(prob: PotentialProblem, coords):
    """Projected gradient of psi on batched unit-norm coordinates.

    Returns (parts, psi, grad_norm, on_divisor_mask); parts is a per-factor
    list.  Entries on the divisor carry zero gradient and psi = +inf.
    """
    vals, partials = section_partials_batch(prob.section, coords)
    mod = np.abs(vals)
    mask = mod <= prob.divisor_floor
    safe = np.where(mask, 1.0, vals)
    degrees = prob.section.multidegree
    parts = []
    for i, (c, dP) in enumerate(zip(coords, partials)):
        g = -np.conj(dP / safe[..., None]) + degrees[i] * c
        parts.append(np.where(mask[..., None], 0.0, g))
    parts = batch_horizontal(coords, parts)
    if prob.constraint is not None:
        from .variety import project_tangent_batch
        flat = project_tangent_batch(
            prob.ambient, prob.constraint,
            flatten_coords(prob.ambient, coords),
            flatten_coords(prob.ambient, parts))
        parts = split_coords(prob.ambient, flat)
    psi = np.where(mask, np.inf, -np.log(np.where(mask, 1.0, mod)))
    norm = np.sqrt(sum((np.abs(p) ** 2).sum(axis=-1) for p in parts))
    return parts, psi, norm, mask


def potential_value(prob: PotentialProblem, p: Point) -> float:
    """psi(p) = -ln|P(p)| on the unit representative; raises OnDivisor near D."""
    psi, mask = psi_batch(prob, p.batch())
    if bool(mask[0]):
        raise OnDivisor("point is numerically on the divisor")
    return float(psi[0])


def potential_gradient(prob: PotentialProblem, p: Point) -> TangentVector:
    """Riemannian gradient of psi at p (constrained-projected when applicable)."""
    parts, _, _, mask = gradient_batch(prob, p.batch())
    if bool(mask[0]):
        raise OnDivisor("point is numerically on the divisor")
    return TangentVector(p, tuple(a[0] for a in parts))


def dc_potential(prob: PotentialProblem, p: Point, v: TangentVector) -> float:
    """d^c psi evaluated on v: the metric pairing of grad psi with J v."""
    g = potential_gradient(prob, p)
    return metric_inner(g, complex_structure(v))


def problem_frame_batch(prob: PotentialProblem, coords_flat):
    """Orthonormal frame of the (constrained) horizontal space, (B, K, D)."""
    space = prob.ambient
    coords = split_coords(space, coords_flat)
    F = global_frame(space, coords)
    if prob.constraint is None:
        return F
    from .geometry import _slot_gram_schmidt
    from .variety import project_tangent_batch
    B, K, D = F.shape
    flatrows = F.reshape(B * K, D)
    base = np.repeat(coords_flat, K, axis=0)
    projected = project_tangent_batch(space, prob.constraint, base, flatrows)
    cands = projected.reshape(B, K, D)
    return _slot_gram_schmidt(cands, prob.frame_dim)


def _transported_frame_coeffs(prob, coords_flat, frame_rows, parts_flat):
    """Re< parts, Pi_x frame_b > for every frame row, batched.

    frame_rows: (B, K, D) vectors defined at nearby base points; they are
    horizontalized (and constraint-projected) at coords before pairing, the
    projection standing in for parallel transport over the short displacement.
    """
    space = prob.ambient
    B, K, D = frame_rows.shape
    base = np.repeat(coords_flat, K, axis=0)
    rows = flat_horizontal(space, base, frame_rows.reshape(B * K, D))
    if prob.constraint is not None:
        from .variety import project_tangent_batch
        rows = project_tangent_batch(space, prob.constraint, base, rows)
    rows = rows.reshape(B, K, D)
    return np.real(np.einsum("bd,bkd->bk", parts_flat, np.conj(rows)))


@dataclass(frozen=True)
class HessianResult:
    matrix: np.ndarray      # (K, K) symmetric real
    frame: np.ndarray       # (K, D) complex frame rows
    asymmetry: float        # max |H - H^T| before symmetrization


def hessian_batch(prob: PotentialProblem, coords_flat, frames=None):
    """Finite-difference Hessians of psi in the horizontal frame, batched.

    Returns (H (B, K, K) symmetrized, frames (B, K, D), asym (B,)).
    Displaced representatives are unit-normalized without the phase gauge and,
    when constrained, reprojected onto the variety before the gradient call.
    """
    space = prob.ambient
    tol = prob.tolerances
    h = tol.fd_step
    x = coords_flat
    B, D = x.shape
    if frames is None:
        frames = problem_frame_batch(prob, x)
    K = frames.shape[1]
    disp = np.concatenate([
        (x[:, None, :] + h * frames),
        (x[:, None, :] - h * frames),
    ], axis=1).reshape(B * 2 * K, D)
    disp = flat_unit_normalize(space, disp)
    if prob.constraint is not None:
        from .variety import gauss_newton_batch
        disp, _ = gauss_newton_batch(space, prob.constraint, disp, tol=1e-12,
                                     max_iter=8)
    coords = split_coords(space, disp)
    parts, _, _, _ = gradient_batch(prob, coords)
    parts_flat = flatten_coords(space, parts)
    frame_rep = np.repeat(frames, 2 * K, axis=0)
    coeffs = _transported_frame_coeffs(prob, disp, frame_rep, parts_flat)
    coeffs = coeffs.reshape(B, 2, K, K)
    H = (coeffs[:, 0] - coeffs[:, 1]) / (2.0 * h)
    asym = np.abs(H - np.swapaxes(H, -1, -2)).max(axis=(-1, -2))
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    return H, frames, asym


def potential_hessian(prob: PotentialProblem, p: Point) -> HessianResult:
    """Symmetrized finite-difference Hessian at p with its frame."""
    psi, mask = psi_batch(prob, p.batch())
    if bool(mask[0]):
        raise OnDivisor("point is numerically on the divisor")
    flat = flatten_coords(prob.ambient, p.batch())
    H, frames, asym = hessian_batch(prob, flat)
    return HessianResult(matrix=H[0], frame=frames[0], asymmetry=float(asym[0]))


@dataclass(frozen=True)
class RatioReport:
    """Positivity report for the quotient of two sections over a point cloud."""

    min_real: float
    max_abs_imag: float
    passed: bool
    worst_real_index: int
    num_points: int


def ratio_positivity(s_new: MultiHomogeneousSection,
                     s_old: MultiHomogeneousSection,
                     cloud, imag_tol=1e-9, floor=1e-12) -> RatioReport:
    """Evaluate s_new/s_old over a cloud; pass iff real positive everywhere.

    cloud: anything with per-factor batched coordinates (a ShadowCloud or a
    raw coordinate list).  Raises OnDivisor when either section vanishes at a
    cloud point.
    """
    coords = getattr(cloud, "coords", cloud)
    if s_new.multidegree != s_old.multidegree:
        raise ValueError("sections must share the multidegree")
    a = eval_section_batch(s_new, coords)
    b = eval_section_batch(s_old, coords)
    for name, v in (("numerator", a), ("denominator", b)):
        bad = np.abs(v) <= floor
        if np.any(bad):
            idx = int(np.argmax(bad))
            raise OnDivisor(f"{name} section vanishes at cloud point {idx}")
    q = a / b
    re = np.real(q)
    im = np.abs(np.imag(q))
    worst = int(np.argmin(re))
    imag_ok = bool(np.all(im < imag_tol * (1.0 + np.abs(q))))
    return RatioReport(
        min_real=float(re.min()),
        max_abs_imag=float(im.max()),
        passed=bool(re.min() > 0.0) and imag_ok,
        worst_real_index=worst,
        num_points=int(np.size(re)),
    )


def make_problem(factor_dims, monomials, constraint_monomials=None, level=1,
                 **tol_overrides):
    """Convenience constructor used by tests and scenario builders."""
    from .sections import section_from_monomials
    space = AmbientSpace(tuple(factor_dims))
    section = section_from_monomials(monomials)
    constraint = None
    if constraint_monomials:
        from .variety import VarietyConstraint
        eqs = tuple(section_from_monomials(m) for m in constraint_monomials)
        constraint = VarietyConstraint(eqs)
    tols = Tolerances(**tol_overrides) if tol_overrides else Tolerances()
    return PotentialProblem(space, section, constraint, level, tols)
