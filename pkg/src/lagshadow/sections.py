"""Multihomogeneous polynomial sections and their derivatives.

A section of O(d_1, ..., d_m) on a product of projective spaces is a finite
sum of monomials, each carrying a complex coefficient and one exponent table
per factor; every monomial must have the same per-factor total degree
(d_1, ..., d_m), the multidegree.  Evaluation happens on unit-norm
representatives, where |P| equals the hermitian norm of the section up to one
fixed global constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MismatchedSpace
from .geometry import AmbientSpace


@dataclass(frozen=True)
class MultiHomogeneousSection:
    """Polynomial section: complex coefficients plus per-factor exponent tables.

    coefficients: complex array of shape (M,)
    exponents:    per factor, int array of shape (M, n_i + 1)
    """

    coefficients: np.ndarray = field(repr=False)
    exponents: tuple = field(repr=False)

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=np.complex128)
        exps = tuple(np.asarray(e, dtype=np.int64) for e in self.exponents)
        if coeffs.ndim != 1 or coeffs.shape[0] == 0:
            raise ValueError("need a nonempty 1-d coefficient array")
        if np.max(np.abs(coeffs)) <= 1e-14:
            raise ValueError("all coefficients are numerically zero")
        for e in exps:
            if e.ndim != 2 or e.shape[0] != coeffs.shape[0]:
                raise ValueError("exponent table shape mismatch")
            if np.any(e < 0):
                raise ValueError("negative exponent")
            deg = e.sum(axis=1)
            if np.any(deg != deg[0]):
                raise ValueError("monomials disagree on the factor degree "
                                 "(mixed multidegree)")
        coeffs.setflags(write=False)
        for e in exps:
            e.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "exponents", exps)

    @property
    def multidegree(self):
        return tuple(int(e[0].sum()) for e in self.exponents)

    @property
    def num_factors(self):
        return len(self.exponents)

    def check_space(self, space: AmbientSpace):
        if self.num_factors != space.num_factors:
            raise MismatchedSpace("section factor count != ambient factor count")
        for e, size in zip(self.exponents, space.factor_sizes):
            if e.shape[1] != size:
                raise MismatchedSpace("exponent table width != factor size")

    def scaled(self, c):
        return MultiHomogeneousSection(c * self.coefficients, self.exponents)


def section_from_monomials(monomials):
    """Build a section from [(coeff, exponents-per-factor), ...] literals.

    Example: x0*y0*z0 + x1*y1*z1 on (CP^1)^3 is
    section_from_monomials([(1, ((1, 0), (1, 0), (1, 0))),
                            (1, ((0, 1), (0, 1), (0, 1)))])
    """
    coeffs = np.array([m[0] for m in monomials], dtype=np.complex128)
    m_factors = len(monomials[0][1])
    exps = tuple(
        np.array([m[1][i] for m in monomials], dtype=np.int64)
        for i in range(m_factors))
    return MultiHomogeneousSection(coeffs, exps)


def section_product(a: MultiHomogeneousSection, b: MultiHomogeneousSection):
    """Product section (tensor product of the line bundles)."""
    if a.num_factors != b.num_factors:
        raise MismatchedSpace("factor count mismatch in section product")
    coeffs = np.outer(a.coefficients, b.coefficients).ravel()
    exps = []
    for ea, eb in zip(a.exponents, b.exponents):
        exps.append((ea[:, None, :] + eb[None, :, :]).reshape(-1, ea.shape[1]))
    return MultiHomogeneousSection(coeffs, tuple(exps))


def _factor_monomials(coords, exp):
    """Per-factor monomial values x^e, shape (..., M)."""
    return np.prod(coords[..., None, :] ** exp, axis=-1)


def eval_section_batch(section: MultiHomogeneousSection, coords):
    """Section values on batched per-factor coordinates, shape (...,)."""
    vals = None
    for c, e in zip(coords, section.exponents):
        fm = _factor_monomials(c, e)
        vals = fm if vals is None else vals * fm
    return vals @ section.coefficients


def section_partials_batch(section: MultiHomogeneousSection, coords):
    """Values and all first partial derivatives on batched coordinates.

    Returns (values, partials) with partials[i] of shape (..., n_i + 1):
    partials[i][..., k] = dP/dx_{i,k}.
    """
    factor_vals = [_factor_monomials(c, e)
                   for c, e in zip(coords, section.exponents)]
    m = len(coords)
    # prefix/suffix products over factors of the per-monomial values
    prefix = [None] * (m + 1)
    prefix[0] = 1.0
    for i in range(m):
        prefix[i + 1] = prefix[i] * factor_vals[i]
    suffix = [None] * (m + 1)
    suffix[m] = 1.0
    for i in range(m - 1, -1, -1):
        suffix[i] = factor_vals[i] * suffix[i + 1]
    values = (prefix[m] if m > 0 else None) @ section.coefficients

    partials = []
    for i, (c, e) in enumerate(zip(coords, section.exponents)):
        others = prefix[i] * suffix[i + 1]          # (..., M)
        size = e.shape[1]
        cols = []
        for k in range(size):
            ek = e[:, k]                            # (M,)
            # d/dx_k of x^e within this factor: e_k * x_k^(e_k - 1) * rest
            e_mod = e.copy()
            e_mod[:, k] = 0
            rest = np.prod(c[..., None, :] ** e_mod, axis=-1)
            xk_pow = c[..., k, None] ** np.maximum(ek - 1, 0)
            dmono = ek * np.where(ek > 0, xk_pow, 0.0) * rest
            cols.append((others * dmono) @ section.coefficients)
        partials.append(np.stack(cols, axis=-1))
    return values, partials


def eval_section(section: MultiHomogeneousSection, point) -> complex:
    """Section value at the unit-norm gauge representative of a point.

    Because representatives are unit-norm, |eval_section| realizes the
    hermitian norm of the section up to a fixed global normalization.
    """
    section.check_space(point.space)
    return complex(eval_section_batch(section, point.batch())[0])
