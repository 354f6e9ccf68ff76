"""Built-in scenario configurations.

Each entry is a complete YAML document; `builtin_config(name)` returns the
text (so the CLI and tests exercise the same parse path as user files).
Sections are written as monomial lists; exponent rows are per factor over
that factor's homogeneous coordinates.
"""

from __future__ import annotations

_MONO = {
    # frequently used monomials on products of CP^1
    "x0y0z0": {"coeff_re": 1.0, "exponents": [[1, 0], [1, 0], [1, 0]]},
    "x1y1z1": {"coeff_re": 1.0, "exponents": [[0, 1], [0, 1], [0, 1]]},
}

_CATALOG = {}

_CATALOG["ex0-circle"] = """\
name: ex0-circle
seed: 20240601
ambient: [1]
level: 2
section:
  - {coeff_re: 1.0, exponents: [[1, 1]]}
seeds: {count: 160}
census: {budget: 60, densify_spacing: 0.05, densify_max: 400}
assembly: {sample_spacing: 0.05, pca_radius: 0.16, frame_target: 400}
verify:
  lagrangian_tol: 1.0e-3
  specialty_tol: 1.0e-3
  invariance_tol: 1.0e-3
  invariance_dt: 1.0
  component_radius: 0.15
candidates:
  - {kind: real_circle, factor: 0, tol: 1.0e-8}
expected: {verdict: exists, components: 1, max_dim: 1}
"""

_CATALOG["ex0-double"] = """\
name: ex0-double
seed: 20240601
ambient: [1]
level: 2
section:
  - {coeff_re: 1.0, exponents: [[2, 0]]}
seeds: {count: 160}
census: {budget: 60}
assembly: {sample_spacing: 0.05, frame_target: 400}
verify: {component_radius: 0.15, invariance_dt: 1.0, invariance_tol: 1.0e-3}
expected: {verdict: vanishing, components: 1, max_dim: 0}
"""

_CATALOG["example1-antidiagonal"] = """\
name: example1-antidiagonal
seed: 20240601
ambient: [1, 1]
level: 1
section:
  - {coeff_re: 1.0, exponents: [[1, 0], [1, 0]]}
  - {coeff_re: 1.0, exponents: [[0, 1], [0, 1]]}
seeds: {count: 300}
census: {budget: 60, densify_spacing: 0.11, densify_max: 1200}
assembly: {sample_spacing: 0.05, pca_radius: 0.22, frame_target: 1200}
verify:
  lagrangian_tol: 1.0e-3
  specialty_tol: 1.0e-3
  invariance_tol: 1.0e-3
  invariance_dt: 1.0
  component_radius: 0.25
  escape_probe: 100
candidates:
  - {kind: conj_flip, factors: [0, 1], signs: [1, 1], tol: 1.0e-3}
expected: {verdict: exists, components: 1, max_dim: 2}
"""

_CATALOG["example1a-n2"] = """\
name: example1a-n2
seed: 20240601
ambient: [2, 2]
level: 1
section:
  - {coeff_re: 1.0, exponents: [[1, 0, 0], [1, 0, 0]]}
  - {coeff_re: 1.0, exponents: [[0, 1, 0], [0, 1, 0]]}
  - {coeff_re: 1.0, exponents: [[0, 0, 1], [0, 0, 1]]}
seeds: {count: 400}
census: {budget: 60, densify_spacing: 0.17, densify_max: 16000}
assembly: {sample_spacing: 0.06, pca_radius: 0.34, frame_target: 2500}
verify:
  lagrangian_tol: 5.0e-2
  specialty_tol: 5.0e-2
  invariance_tol: 2.0e-3
  invariance_dt: 1.0
  component_radius: 0.4
candidates:
  - {kind: conj_flip, factors: [0, 1], signs: [1, 1, 1], tol: 1.0e-3}
expected: {verdict: exists, components: 1, max_dim: 4}
"""

_CATALOG["q3-irreducible"] = """\
name: q3-irreducible
seed: 20240601
ambient: [1, 1, 1]
level: 1
section:
  - {coeff_re: 1.0, exponents: [[1, 0], [1, 0], [1, 0]]}
  - {coeff_re: 1.0, exponents: [[0, 1], [0, 1], [0, 1]]}
seeds: {count: 500}
census: {budget: 60, densify_spacing: 0.1, densify_max: 4000}
assembly: {sample_spacing: 0.04, pca_radius: 0.15, frame_target: 4000}
verify:
  lagrangian_tol: 1.0e-3
  specialty_tol: 1.0e-3
  invariance_tol: 2.0e-3
  invariance_dt: 1.0
  component_radius: 0.12
  escape_probe: 100
torus_check: {min_samples: 100, residual_tol: 1.0e-6}
expected: {verdict: exists, components: 1, max_dim: 3, singular_loci: 2}
"""

_CATALOG["q3-reducible"] = """\
name: q3-reducible
seed: 20240601
ambient: [1, 1, 1]
level: 1
section:
  - {coeff_re: 1.0, exponents: [[1, 0], [1, 0], [1, 0]]}
  - {coeff_re: 1.0, exponents: [[0, 1], [0, 1], [1, 0]]}
seeds: {count: 400}
census: {budget: 60, densify_spacing: 0.12, densify_max: 2000}
assembly: {sample_spacing: 0.05, pca_radius: 0.25, frame_target: 1500}
verify: {component_radius: 0.25, invariance_dt: 1.0, invariance_tol: 2.0e-3}
expected: {verdict: vanishing, components: 1, max_dim: 2}
"""

_CATALOG["q4-2plus2"] = """\
name: q4-2plus2
seed: 20240601
ambient: [1, 1, 1, 1]
level: 1
section:
  - {coeff_re: 1.0, exponents: [[1, 0], [1, 0], [1, 0], [1, 0]]}
  - {coeff_re: 1.0, exponents: [[1, 0], [1, 0], [0, 1], [0, 1]]}
  - {coeff_re: 1.0, exponents: [[0, 1], [0, 1], [1, 0], [1, 0]]}
  - {coeff_re: 1.0, exponents: [[0, 1], [0, 1], [0, 1], [0, 1]]}
seeds: {count: 400}
census: {budget: 60, densify_spacing: 0.2, densify_max: 26000}
assembly: {sample_spacing: 0.07, pca_radius: 0.38, frame_target: 2200}
verify:
  lagrangian_tol: 8.0e-2
  specialty_tol: 8.0e-2
  invariance_tol: 2.0e-3
  invariance_dt: 1.0
  component_radius: 0.45
candidates:
  - kind: product
    tol: 1.0e-3
    parts:
      - {kind: conj_flip, factors: [0, 1], signs: [1, 1]}
      - {kind: conj_flip, factors: [2, 3], signs: [1, 1]}
expected: {verdict: exists, components: 1, max_dim: 4}
"""

_CATALOG["q4-3plus1"] = """\
name: q4-3plus1
seed: 20240601
ambient: [1, 1, 1, 1]
level: 1
section:
  - {coeff_re: 1.0, exponents: [[1, 0], [1, 0], [1, 0], [1, 0]]}
  - {coeff_re: 1.0, exponents: [[0, 1], [0, 1], [0, 1], [1, 0]]}
seeds: {count: 400}
census: {budget: 60, densify_spacing: 0.14, densify_max: 2500}
assembly: {sample_spacing: 0.05, pca_radius: 0.2, frame_target: 2500}
verify: {component_radius: 0.15, invariance_dt: 1.0, invariance_tol: 2.0e-3}
expected: {verdict: vanishing, components: 1, max_dim: 3}
"""

_CATALOG["q4-irreducible"] = """\
name: q4-irreducible
seed: 20240601
ambient: [1, 1, 1, 1]
level: 1
section:
  - {coeff_re: 1.0, exponents: [[1, 0], [1, 0], [1, 0], [1, 0]]}
  - {coeff_re: 1.0, exponents: [[0, 1], [0, 1], [0, 1], [0, 1]]}
seeds: {count: 500}
census: {budget: 60, densify_spacing: 0.21, densify_max: 9000}
assembly: {sample_spacing: 0.07, pca_radius: 0.32, frame_target: 3000}
verify:
  lagrangian_tol: 8.0e-2
  specialty_tol: 8.0e-2
  invariance_tol: 3.0e-3
  invariance_dt: 1.0
  component_radius: 0.25
expected: {verdict: exists, components: 1, max_dim: 4}
"""

_CATALOG["flag-gz"] = """\
name: flag-gz
seed: 20240601
ambient: [2, 2]
level: 1
section:
  - {coeff_re: 1.0, exponents: [[1, 0, 0], [1, 0, 0]]}
  - {coeff_re: 1.0, exponents: [[0, 1, 0], [0, 1, 0]]}
  - {coeff_re: -1.0, exponents: [[0, 0, 1], [0, 0, 1]]}
seeds: {count: 400}
census:
  budget: 60
  densify_spacing: 0.17
  densify_max: 15000
  band_spacing: 0.11
  band_max: 9000
  band_tol: 8.0e-4
assembly: {sample_spacing: 0.06, pca_radius: 0.3, frame_target: 2500}
verify:
  lagrangian_tol: 5.0e-2
  specialty_tol: 5.0e-2
  invariance_tol: 2.0e-3
  invariance_dt: 1.0
  component_radius: 0.4
candidates:
  - {kind: conj_flip, factors: [0, 1], signs: [1, 1, -1], tol: 1.0e-3}
expected: {verdict: exists, components: 1, max_dim: 4}
proposition:
  constraint:
    equations:
      - - {coeff_re: 1.0, exponents: [[1, 0, 0], [1, 0, 0]]}
        - {coeff_re: 1.0, exponents: [[0, 1, 0], [0, 1, 0]]}
        - {coeff_re: 1.0, exponents: [[0, 0, 1], [0, 0, 1]]}
  hausdorff_tol: 5.0e-3
  filter_tol: 1.0e-3
  transversality_samples: 50
  census: {budget: 60, densify_spacing: 0.13, densify_max: 6000}
"""

_CATALOG["flag-alpha-sweep"] = _CATALOG["flag-gz"].replace(
    "name: flag-gz", "name: flag-alpha-sweep") + """\
sweep:
  kind: alpha
  count: 10
  low: 0.5
  high: 2.0
  include_negative_control: true
  drift_tol: 5.0e-3
"""

_CATALOG["example1-perturbation-sweep"] = """\
name: example1-perturbation-sweep
seed: 20240601
ambient: [1, 1]
level: 1
section:
  - {coeff_re: 1.0, exponents: [[1, 0], [1, 0]]}
  - {coeff_re: 1.0, exponents: [[0, 1], [0, 1]]}
seeds: {count: 220}
census: {budget: 110}
assembly:
  sample_spacing: 0.05
  pca_radius: 0.2
  frame_target: 1500
  saddle_circle: 48
  max_flow_time: 4000
verify: {component_radius: 0.15}
expected: {}
sweep:
  kind: coefficient_noise
  count: 20
  scale: 1.0e-2
"""


def catalog_names():
    return sorted(_CATALOG)


def builtin_config(name):
    if name not in _CATALOG:
        raise KeyError(f"unknown builtin scenario {name!r}; "
                       f"available: {', '.join(catalog_names())}")
    return _CATALOG[name]
