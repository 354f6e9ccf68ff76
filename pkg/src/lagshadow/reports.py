"""Run reports and point-cloud files.

Clouds are comma-separated text with a header row: per point the gauge-fixed
factor coordinates interleaved re/im, then psi, gradient norm, provenance id
and component id (2 * sum(n_i + 1) + 4 columns).  Numbers are printed with 17
significant digits, which round-trips doubles losslessly, so identical runs
give byte-identical files.

Reports are YAML documents mirroring the RunReport structure.  Wall-clock
timings are deliberately kept out of the canonical file (they are echoed on
stdout instead): the emitted report must be byte-identical across re-runs
with the same configuration and seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .geometry import split_coords
from .shadow import ShadowCloud


def _fmt(x):
    return format(float(x), ".17g")


def cloud_header(space, name=""):
    cols = []
    for i, size in enumerate(space.factor_sizes):
        for k in range(size):
            cols.append(f"re{i}_{k}")
            cols.append(f"im{i}_{k}")
    cols += ["psi", "grad_norm", "provenance", "component"]
    return cols


def emit_cloud(cloud: ShadowCloud, path):
    """Write the cloud as delimiter-separated text (deterministic bytes)."""
    cols = cloud_header(cloud.space)
    comp = cloud.component_ids
    if comp is None:
        comp = np.full(cloud.size, -1, dtype=np.int64)
    lines = [",".join(cols)]
    coords = cloud.coords
    for r in range(cloud.size):
        vals = []
        for c in coords:
            for k in range(c.shape[-1]):
                vals.append(_fmt(c[r, k].real))
                vals.append(_fmt(c[r, k].imag))
        vals.append(_fmt(cloud.psi[r]))
        vals.append(_fmt(cloud.grad_norm[r]))
        vals.append(str(int(cloud.provenance[r])))
        vals.append(str(int(comp[r])))
        lines.append(",".join(vals))
    text = "\n".join(lines) + "\n"
    with open(path, "w") as fh:
        fh.write(text)
    return path


def load_cloud(path, space, sample_spacing=0.05, pca_radius=None) -> ShadowCloud:
    """Read a cloud file back; rebuilds chain adjacency from provenance runs.

    Consecutive rows sharing a provenance id are re-linked as a chain only
    when their spacing looks like an arc sampling (at most twice the declared
    sample spacing); unordered cluster groups fail that gate and stay
    chain-free.
    """
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    ncoord = 2 * sum(space.factor_sizes)
    if len(header) != ncoord + 4:
        raise ValueError(f"cloud file has {len(header)} columns, "
                         f"expected {ncoord + 4}")
    data = np.array([[float(v) for v in r[:ncoord + 2]] for r in rows])
    prov = np.array([int(r[ncoord + 2]) for r in rows], dtype=np.int64)
    comp = np.array([int(r[ncoord + 3]) for r in rows], dtype=np.int64)
    flat = data[:, 0:ncoord:2] + 1j * data[:, 1:ncoord:2]
    psi = data[:, ncoord]
    gnorm = data[:, ncoord + 1]
    from .geometry import batch_fs_distance
    segments = []
    for r in range(1, flat.shape[0]):
        if prov[r] == prov[r - 1]:
            d = float(batch_fs_distance(
                split_coords(space, flat[r - 1][None, :]),
                split_coords(space, flat[r][None, :]))[0])
            if d <= 2.0 * sample_spacing:
                segments.append((r - 1, r))
    return ShadowCloud(
        space=space, points_flat=flat, psi=psi, grad_norm=gnorm,
        provenance=prov,
        segments=np.array(segments, dtype=np.int64) if segments else
        np.zeros((0, 2), dtype=np.int64),
        sample_spacing=sample_spacing,
        pca_radius=pca_radius or 3.0 * sample_spacing,
        component_ids=comp,
    )


@dataclass
class RunReport:
    """Everything a scenario run measured, in plain serializable values."""

    scenario: str
    seed: int
    body: dict = field(default_factory=dict)
    wall_clock: float = 0.0   # not emitted: reports must be byte-stable

    @property
    def overall_pass(self):
        return bool(self.body.get("overall_pass", False))

    def to_yaml(self):
        doc = {"scenario": self.scenario, "seed": self.seed}
        doc.update(self.body)
        return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False,
                              width=100)


def emit_report(report: RunReport, path):
    with open(path, "w") as fh:
        fh.write(report.to_yaml())
    return path


def _pyfloat(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def clean_tree(obj):
    """Recursively coerce numpy scalars/arrays to plain Python for YAML."""
    if isinstance(obj, dict):
        return {k: clean_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean_tree(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean_tree(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj
