"""Scenario catalog, configuration, and the run pipeline.

A scenario is one YAML document: ambient factor dimensions, the section as a
monomial list, optional constraint equations, seed counts, tolerance
overrides, pipeline controls, expectations, candidate models, and an optional
sweep block.  The built-in catalog reproduces the worked geometries: the
degree-two divisors on CP^1, the antidiagonal shadows of bilinear sections on
CP^1 x CP^1 and CP^2 x CP^2, the cubic and quartic products of projective
lines with their irreducible and reducible sections, and the flag-variety
pair with its Gelfand-Zeytlin sphere, alpha-family sweep and perturbation
sweep.

run_scenario executes census -> densify -> assembly -> verification ->
verdict and is deterministic for a fixed config text: all randomness flows
from the mandatory seed, reductions are ordered, and reports/clouds are
emitted with fixed formatting.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import (
    EmptyIntersection, NewCriticalDiscovered, NoTangents, ParseError,
    ValidationError, WrongScenario,
)
from .geometry import (
    AmbientSpace, batch_fs_distance, batch_normalize, flat_unit_normalize,
    flatten_coords, normalize_point, sobol_coords, split_coords, stack_coords,
)
from .sections import MultiHomogeneousSection, section_from_monomials
from .potential import PotentialProblem, Tolerances, ratio_positivity
from .variety import (
    VarietyConstraint, check_transversality, sample_divisor_intersection,
)
from .critical import (
    dedup_and_cluster, densify_cluster, find_critical_points, torus_residual,
)
from .flow import ASCEND, FlowControls, check_flow_invariance, \
    integrate_flow_batch
from .shadow import (
    AssemblyControls, assemble_shadow, compare_candidate, compute_frames,
    conj_flip, count_components, existence_verdict, gz_sphere, product_of,
    proposition_check, real_circle, singular_loci, verify_lagrangian,
    verify_specialty,
)
from .reports import RunReport, clean_tree


# ---- configuration ------------------------------------------------------------

_TOP_KEYS = {
    "name", "seed", "ambient", "level", "section", "constraint", "seeds",
    "tolerances", "census", "assembly", "verify", "candidates", "torus_check",
    "expected", "proposition", "sweep",
}
_SEED_KEYS = {"count", "special"}
_CENSUS_KEYS = {"budget", "densify_spacing", "densify_max",
                "band_spacing", "band_max", "band_tol"}
_ASSEMBLY_KEYS = {"sample_spacing", "pca_radius", "frame_target",
                  "saddle_circle", "eig_offset", "max_flow_time"}
_VERIFY_KEYS = {"lagrangian_tol", "specialty_tol", "invariance_tol",
                "invariance_dt", "component_radius", "max_flow_points",
                "escape_probe"}
_EXPECT_KEYS = {"verdict", "components", "singular_loci", "max_dim"}
_CAND_KEYS = {"kind", "factors", "factor", "signs", "parts", "tol",
              "use_constraint"}
_TORUS_KEYS = {"min_samples", "residual_tol"}
_PROP_KEYS = {"constraint", "hausdorff_tol", "filter_tol",
              "transversality_samples", "census"}
_SWEEP_KEYS = {"kind", "count", "low", "high", "scale",
               "include_negative_control", "drift_tol"}
_TOL_KEYS = {f for f in Tolerances.__dataclass_fields__}


def _check_keys(block, allowed, where):
    if not isinstance(block, dict):
        raise ValidationError(f"{where}: expected a mapping")
    unknown = set(block) - allowed
    if unknown:
        raise ValidationError(f"{where}: unknown keys {sorted(unknown)}")


def _parse_monomials(block, where):
    if not isinstance(block, list) or not block:
        raise ValidationError(f"{where}: expected a nonempty monomial list")
    monos = []
    for k, m in enumerate(block):
        _check_keys(m, {"coeff_re", "coeff_im", "exponents"}, f"{where}[{k}]")
        if "exponents" not in m:
            raise ValidationError(f"{where}[{k}]: missing exponents")
        coeff = complex(float(m.get("coeff_re", 0.0)),
                        float(m.get("coeff_im", 0.0)))
        exps = tuple(tuple(int(e) for e in fac) for fac in m["exponents"])
        monos.append((coeff, exps))
    try:
        return section_from_monomials(monos)
    except Exception as exc:
        raise ValidationError(f"{where}: {exc}") from exc


@dataclass
class ScenarioConfig:
    name: str
    seed: int
    ambient: AmbientSpace
    section: MultiHomogeneousSection
    constraint: VarietyConstraint = None
    level: int = 1
    seed_count: int = 500
    special_seeds: list = field(default_factory=list)
    tolerances: Tolerances = field(default_factory=Tolerances)
    census: dict = field(default_factory=dict)
    assembly: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    candidates: list = field(default_factory=list)
    torus_check: dict = None
    expected: dict = field(default_factory=dict)
    proposition: dict = None
    sweep: dict = None
    raw: dict = field(default_factory=dict, repr=False)

    def problem(self) -> PotentialProblem:
        return PotentialProblem(self.ambient, self.section, self.constraint,
                                self.level, self.tolerances)


def load_config(text) -> ScenarioConfig:
    """Parse and validate a YAML scenario document; unknown keys are rejected."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("configuration must be a mapping")
    _check_keys(doc, _TOP_KEYS, "config")
    if "name" not in doc:
        raise ValidationError("config: missing name")
    if "seed" not in doc:
        raise ValidationError("config: missing mandatory RNG seed")
    if "ambient" not in doc or "section" not in doc:
        raise ValidationError("config: ambient and section are required")
    try:
        space = AmbientSpace(tuple(int(n) for n in doc["ambient"]))
    except Exception as exc:
        raise ValidationError(f"ambient: {exc}") from exc
    section = _parse_monomials(doc["section"], "section")
    try:
        section.check_space(space)
    except Exception as exc:
        raise ValidationError(f"section: {exc}") from exc

    constraint = None
    if doc.get("constraint") is not None:
        _check_keys(doc["constraint"], {"equations"}, "constraint")
        eqs = tuple(_parse_monomials(e, f"constraint.equations[{i}]")
                    for i, e in enumerate(doc["constraint"].get("equations", [])))
        if not eqs:
            raise ValidationError("constraint: needs at least one equation")
        constraint = VarietyConstraint(eqs)
        try:
            constraint.check_space(space)
        except Exception as exc:
            raise ValidationError(f"constraint: {exc}") from exc

    seeds_block = doc.get("seeds", {}) or {}
    _check_keys(seeds_block, _SEED_KEYS, "seeds")
    seed_count = int(seeds_block.get("count", 500))
    special = []
    for j, sp in enumerate(seeds_block.get("special", []) or []):
        try:
            factors = [np.array([complex(p[0], p[1]) for p in fac]) for fac in sp]
            special.append(normalize_point(space, factors))
        except Exception as exc:
            raise ValidationError(f"seeds.special[{j}]: {exc}") from exc

    tol_block = doc.get("tolerances", {}) or {}
    _check_keys(tol_block, _TOL_KEYS, "tolerances")
    try:
        tols = Tolerances(**{k: float(v) for k, v in tol_block.items()})
    except Exception as exc:
        raise ValidationError(f"tolerances: {exc}") from exc

    for blk, keys in (("census", _CENSUS_KEYS), ("assembly", _ASSEMBLY_KEYS),
                      ("verify", _VERIFY_KEYS), ("expected", _EXPECT_KEYS)):
        if doc.get(blk) is not None:
            _check_keys(doc[blk], keys, blk)
    cands = []
    for j, c in enumerate(doc.get("candidates", []) or []):
        _check_keys(c, _CAND_KEYS, f"candidates[{j}]")
        if "kind" not in c:
            raise ValidationError(f"candidates[{j}]: missing kind")
        cands.append(dict(c))
    if doc.get("torus_check") is not None:
        _check_keys(doc["torus_check"], _TORUS_KEYS, "torus_check")
    prop = None
    if doc.get("proposition") is not None:
        _check_keys(doc["proposition"], _PROP_KEYS, "proposition")
        prop = dict(doc["proposition"])
        _check_keys(prop.get("constraint", {}), {"equations"},
                    "proposition.constraint")
        if prop.get("census") is not None:
            _check_keys(prop["census"], _CENSUS_KEYS, "proposition.census")
    swp = None
    if doc.get("sweep") is not None:
        _check_keys(doc["sweep"], _SWEEP_KEYS, "sweep")
        swp = dict(doc["sweep"])
        if swp.get("kind") not in ("alpha", "coefficient_noise"):
            raise ValidationError("sweep.kind must be alpha or coefficient_noise")

    expected = dict(doc.get("expected", {}) or {})
    if expected.get("verdict") not in (None, "exists", "vanishing"):
        raise ValidationError("expected.verdict must be exists or vanishing")

    cfg = ScenarioConfig(
        name=str(doc["name"]), seed=int(doc["seed"]), ambient=space,
        section=section, constraint=constraint, level=int(doc.get("level", 1)),
        seed_count=seed_count, special_seeds=special, tolerances=tols,
        census=dict(doc.get("census", {}) or {}),
        assembly=dict(doc.get("assembly", {}) or {}),
        verify=dict(doc.get("verify", {}) or {}),
        candidates=cands, torus_check=doc.get("torus_check"),
        expected=expected, proposition=prop, sweep=swp, raw=doc,
    )
    cfg.problem()  # shape/degree validation
    return cfg


def _candidate_from_spec(spec, constraint=None):
    kind = spec["kind"]
    if kind == "real_circle":
        return real_circle(int(spec.get("factor", 0)))
    if kind == "conj_flip":
        return conj_flip(tuple(spec["signs"]),
                         tuple(spec.get("factors", (0, 1))))
    if kind == "product":
        return product_of(*[_candidate_from_spec(p) for p in spec["parts"]])
    if kind == "gz_sphere":
        if constraint is None:
            raise ValidationError("gz_sphere candidate needs a constraint")
        return gz_sphere(constraint, tuple(spec.get("signs", (1, 1, -1))),
                         tuple(spec.get("factors", (0, 1))))
    raise ValidationError(f"unknown candidate kind {kind}")


# ---- pipeline ------------------------------------------------------------------


def _run_census(prob, cfg_census, seed, seed_count, special_seeds,
                aux_band=None):
    space = prob.ambient
    seeds = batch_normalize(sobol_coords(space, seed_count, seed=seed))
    if special_seeds:
        extra = stack_coords([list(p.coords) for p in special_seeds])
        seeds = [np.concatenate([a, b], axis=0) for a, b in zip(seeds, extra)]
    budget = int(cfg_census.get("budget", 60))
    res = find_critical_points(prob, seeds, budget=budget)
    clusters = dedup_and_cluster(
        res.points, cluster_radius=prob.tolerances.cluster_radius,
        dedup_tol=prob.tolerances.dedup_tol)
    spacing = cfg_census.get("densify_spacing")
    if spacing:
        max_members = int(cfg_census.get("densify_max", 4000))
        for c in clusters:
            if c.estimated_dim > 0:
                densify_cluster(prob, c, float(spacing),
                                max_members=max_members)
        merged = [m for c in clusters for m in c.members]
        clusters = dedup_and_cluster(
            merged, cluster_radius=prob.tolerances.cluster_radius,
            dedup_tol=prob.tolerances.dedup_tol)
    if aux_band is not None:
        band_spacing = float(cfg_census.get("band_spacing", 0.1))
        band_max = int(cfg_census.get("band_max", 9000))
        band_tol = float(cfg_census.get("band_tol",
                                        prob.tolerances.filter_tol * 0.8))
        _band_walk(prob, clusters, aux_band, band_spacing, band_max, band_tol)
    return res, clusters


def _band_walk(prob, clusters, band_equations, spacing, max_members, band_tol):
    """Densify critical submanifolds inside the slice {aux equations = 0}.

    Members already inside the band seed a walk that keeps both the critical
    equations and the auxiliary sections at zero, so the near-variety slab of
    the critical set reaches the sampling density the intersection check needs.
    """
    from .critical import build_critical_points, solve_critical_batch
    from .variety import residual_batch
    space = prob.ambient
    for c in clusters:
        if c.estimated_dim == 0:
            continue
        coords = c.coords_batch()
        res = residual_batch(VarietyConstraint(tuple(band_equations)), coords)
        seeds_idx = np.nonzero(res < 0.2)[0]
        if seeds_idx.size == 0:
            continue
        flat = flatten_coords(space, coords)[seeds_idx]
        x, ok, _ = solve_critical_batch(prob, flat, max_iter=40,
                                        aux_sections=band_equations)
        x = x[ok]
        if x.shape[0] == 0:
            continue
        base_pts = build_critical_points(prob, x)
        sub = type(c)(members=base_pts, estimated_dim=c.estimated_dim - 1,
                      cluster_id=c.cluster_id)
        densify_cluster(prob, sub, spacing, max_members=max_members,
                        aux_sections=band_equations)
        have = {tuple(np.round(np.abs(flatten_coords(
            space, [cc[None, :] for cc in m.location.coords])[0]), 8))
            for m in c.members}
        for m in sub.members:
            key = tuple(np.round(np.abs(flatten_coords(
                space, [cc[None, :] for cc in m.location.coords])[0]), 8))
            if key not in have:
                c.members.append(m)
                have.add(key)


def run_scenario(cfg: ScenarioConfig, rerun_on_new_critical=2):
    """Census -> assembly -> verifiers -> verdict, returning (report, artifacts)."""
    start = time.time()
    prob = cfg.problem()
    space = cfg.ambient
    tol = cfg.tolerances
    body = {"config_echo": clean_tree(cfg.raw)}
    artifacts = {}

    band = None
    if cfg.proposition is not None:
        band = [_parse_monomials(e, "proposition.constraint")
                for e in cfg.proposition["constraint"]["equations"]]

    census_res, clusters = _run_census(prob, cfg.census, cfg.seed,
                                       cfg.seed_count, cfg.special_seeds,
                                       aux_band=band)
    artifacts["clusters"] = clusters

    max_index = max((c.common_index for c in clusters), default=0)
    body["census"] = {
        "num_seeds": census_res.diagnostics.num_seeds,
        "converged": census_res.diagnostics.converged,
        "not_converged": census_res.diagnostics.not_converged,
        "hit_divisor": census_res.diagnostics.hit_divisor,
        "clusters": [{
            "id": c.cluster_id, "members": len(c.members),
            "dim": c.estimated_dim, "nullity": c.common_nullity,
            "index": c.common_index, "psi": round(float(c.min_psi), 12),
        } for c in clusters],
        "max_index": max_index,
        "index_bound": prob.lagrangian_dim,
        "index_bound_ok": bool(max_index <= prob.lagrangian_dim and
                               census_res.diagnostics.index_violations == 0),
    }

    # assembly (re-census when a descent discovers a new critical point)
    asm = AssemblyControls(
        eig_offset=float(cfg.assembly.get("eig_offset", 1e-3)),
        sample_spacing=float(cfg.assembly.get("sample_spacing", 0.05)),
        pca_radius=cfg.assembly.get("pca_radius"),
        frame_target=int(cfg.assembly.get("frame_target", 5000)),
        saddle_circle=int(cfg.assembly.get("saddle_circle", 24)),
        flow=FlowControls(
            max_time=float(cfg.assembly.get("max_flow_time", 400.0)),
            store_spacing=float(cfg.assembly.get("sample_spacing", 0.05))),
    )
    cloud = None
    for attempt in range(rerun_on_new_critical + 1):
        try:
            cloud = assemble_shadow(prob, clusters, asm)
            break
        except NewCriticalDiscovered as exc:
            if attempt == rerun_on_new_critical:
                raise
            fresh = stack_coords([list(p.coords) for p in exc.locations])
            extra = find_critical_points(prob, fresh,
                                         budget=int(cfg.census.get("budget", 60)))
            merged = [m for c in clusters for m in c.members] + extra.points
            clusters = dedup_and_cluster(
                merged, cluster_radius=tol.cluster_radius,
                dedup_tol=tol.dedup_tol)
            body["census"]["recensus"] = attempt + 1
    artifacts["cloud"] = cloud
    body["assembly"] = {
        "num_points": cloud.size,
        "num_trajectories": cloud.diagnostics.get("num_trajectories", 0),
        "undecided_descents": cloud.diagnostics.get("undecided_descents", 0),
        "sample_spacing": asm.sample_spacing,
    }

    compute_frames(cloud, radius=asm.pca_radius,
                   target=asm.frame_target,
                   expected_max_dim=prob.lagrangian_dim)
    body["frames"] = {
        "framed": len(cloud.fits),
        "sparse_excluded": len(cloud.sparse_excluded),
        "singular_flagged": len(cloud.singular_flags),
        "max_local_dim": cloud.max_local_dim(),
    }

    # verifiers
    ver = cfg.verify
    lagr_tol = float(ver.get("lagrangian_tol", 1e-3))
    spec_tol = float(ver.get("specialty_tol", 1e-3))
    inv_tol = float(ver.get("invariance_tol", 2e-3))
    inv_dt = float(ver.get("invariance_dt", 1.0))
    comp_radius = float(ver.get("component_radius", 3 * asm.sample_spacing))
    max_flow_points = int(ver.get("max_flow_points", 0)) or None

    lag = spec = None
    try:
        lag = verify_lagrangian(cloud)
        spec = verify_specialty(prob, cloud)
    except NoTangents:
        pass
    inv = check_flow_invariance(prob, cloud, inv_dt, inv_tol,
                                max_points=max_flow_points)
    body["verifiers"] = {
        "lagrangian": None if lag is None else {
            "max": lag.max_residual, "mean": lag.mean_residual,
            "tol": lagr_tol, "pass": bool(lag.max_residual <= lagr_tol)},
        "specialty": None if spec is None else {
            "max": spec.max_residual, "mean": spec.mean_residual,
            "tol": spec_tol, "pass": bool(spec.max_residual <= spec_tol),
            "transport_phase": spec.extra.get("max_transport_phase")},
        "invariance": {
            "max_displacement": inv.max_displacement,
            "mean_displacement": inv.mean_displacement,
            "dt": inv_dt, "tol": inv_tol, "pass": inv.passed,
            "num_points": inv.num_points},
    }

    ncomp = count_components(cloud, radius=comp_radius)
    loci = singular_loci(cloud)
    body["components"] = {"count": ncomp, "radius": comp_radius}
    body["singular"] = {
        "loci": len(loci),
        "anchor_psi": [round(l["anchor_psi"], 9) for l in loci],
    }

    # candidate models
    cand_out = []
    for spec_c in cfg.candidates:
        cand = _candidate_from_spec(
            spec_c, constraint=cfg.constraint or
            (VarietyConstraint(tuple(band)) if band else None))
        r = compare_candidate(cloud, cand)
        ctol = float(spec_c.get("tol", 1e-3))
        cand_out.append({
            "kind": spec_c["kind"], "max_residual": r["max_residual"],
            "mean_residual": r["mean_residual"], "tol": ctol,
            "pass": bool(r["max_residual"] <= ctol)})
    body["candidates"] = cand_out

    # scenario-specific torus verification
    if cfg.torus_check is not None:
        tor = [c for c in clusters if c.estimated_dim == 2]
        if not tor:
            body["torus"] = {"pass": False, "reason": "no 2-dimensional cluster"}
        else:
            tc = max(tor, key=lambda c: len(c.members))
            resid = torus_residual(tc, prob)
            min_samples = int(cfg.torus_check.get("min_samples", 100))
            rtol = float(cfg.torus_check.get("residual_tol", 1e-6))
            raw_hits = census_res.diagnostics.converged
            body["torus"] = {
                "members": len(tc.members), "residual": resid,
                "nullity": tc.common_nullity,
                "pass": bool(len(tc.members) >= min_samples and resid <= rtol
                             and tc.common_nullity == 2)}

    # escape statistics probe
    probe_n = int(ver.get("escape_probe", 0))
    if probe_n:
        rng_seed = cfg.seed + 1
        starts = batch_normalize(sobol_coords(space, probe_n, seed=rng_seed))
        flat = flatten_coords(space, starts)
        if prob.constraint is not None:
            from .variety import gauss_newton_batch
            flat, okp = gauss_newton_batch(space, prob.constraint, flat)
            flat = flat[okp]
        trajs = integrate_flow_batch(prob, flat, ASCEND,
                                     FlowControls(store=False))
        stats = {}
        for t_ in trajs:
            stats[t_.status] = stats.get(t_.status, 0) + 1
        body["trajectory_stats"] = {"ascent_probe": stats,
                                    "probe_size": int(flat.shape[0])}

    verdict = existence_verdict(
        cloud, prob.lagrangian_dim, lag, spec, inv,
        lagr_tol=lagr_tol, spec_tol=spec_tol, inv_tol=inv_tol)
    body["verdict"] = {
        "exists": verdict.exists,
        "max_dim": verdict.max_dim,
        "expected_dim": verdict.expected_dim,
        "reasons": list(verdict.reasons),
    }

    # proposition stage: constrained sub-run plus intersection comparison
    if cfg.proposition is not None:
        prop_body, con_cloud = _run_proposition(cfg, cloud, band)
        body["proposition"] = prop_body
        artifacts["constrained_cloud"] = con_cloud

    # expectations
    checks = []
    exp = cfg.expected
    if exp.get("verdict"):
        want = exp["verdict"] == "exists"
        checks.append(("verdict", verdict.exists == want))
    if exp.get("components") is not None:
        checks.append(("components", ncomp == int(exp["components"])))
    if exp.get("singular_loci") is not None:
        checks.append(("singular_loci", len(loci) == int(exp["singular_loci"])))
    if exp.get("max_dim") is not None:
        checks.append(("max_dim", verdict.max_dim == int(exp["max_dim"])))
    body["expected_checks"] = {k: bool(v) for k, v in checks}

    ok = all(v for _, v in checks)
    ok &= body["census"]["index_bound_ok"]
    ok &= all(c["pass"] for c in cand_out)
    if "torus" in body:
        ok &= body["torus"]["pass"]
    if cfg.proposition is not None and "proposition" in body:
        ok &= body["proposition"].get("pass", False)
    if exp.get("verdict") == "exists":
        ok &= body["verifiers"]["invariance"]["pass"]
        if lag is not None:
            ok &= body["verifiers"]["lagrangian"]["pass"]
            ok &= body["verifiers"]["specialty"]["pass"]
    body["overall_pass"] = bool(ok)

    report = RunReport(scenario=cfg.name, seed=cfg.seed,
                       body=clean_tree(body), wall_clock=time.time() - start)
    return report, artifacts


def _run_proposition(cfg, ambient_cloud, band):
    """Constrained sub-run, transversality check, and intersection comparison."""
    prop = cfg.proposition
    Y = VarietyConstraint(tuple(band))
    tols = cfg.tolerances
    con_prob = PotentialProblem(cfg.ambient, cfg.section, Y, cfg.level, tols)
    census_cfg = dict(prop.get("census") or {})
    _, con_clusters = _run_census(con_prob, census_cfg, cfg.seed + 11,
                                  cfg.seed_count, [])
    asm = AssemblyControls(
        sample_spacing=float(cfg.assembly.get("sample_spacing", 0.05)),
        pca_radius=cfg.assembly.get("pca_radius"),
        frame_target=int(cfg.assembly.get("frame_target", 5000)),
    )
    con_cloud = assemble_shadow(con_prob, con_clusters, asm)
    compute_frames(con_cloud, radius=asm.pca_radius, target=asm.frame_target,
                   expected_max_dim=con_prob.lagrangian_dim)
    out = {
        "constrained": {
            "clusters": [{"id": c.cluster_id, "members": len(c.members),
                          "dim": c.estimated_dim, "nullity": c.common_nullity,
                          "psi": round(float(c.min_psi), 12)}
                         for c in con_clusters],
            "num_points": con_cloud.size,
            "max_local_dim": con_cloud.max_local_dim(),
        },
    }
    gz = gz_sphere(Y)
    r = compare_candidate(con_cloud, gz)
    out["gz_candidate"] = {"max_residual": r["max_residual"],
                           "mean_residual": r["mean_residual"]}
    # transversality of D cap Y
    n_samp = int(prop.get("transversality_samples", 50))
    rng = np.random.default_rng(cfg.seed + 23)
    samples = sample_divisor_intersection(cfg.ambient, Y, cfg.section,
                                          n_samp, rng)
    trep = check_transversality(Y, cfg.section, samples)
    out["transversality"] = {
        "samples": trep.num_samples, "min_singular": trep.min_singular,
        "full_rank": trep.full_rank, "failures": trep.failures,
    }
    # the intersection comparison itself
    htol = float(prop.get("hausdorff_tol", 5e-3))
    ftol = float(prop.get("filter_tol", tols.filter_tol))
    prep = proposition_check(ambient_cloud, Y, con_cloud, tol=htol,
                             filter_tol=ftol)
    out["intersection"] = {
        "hausdorff_filtered_to_constrained":
            prep.hausdorff_filtered_to_constrained,
        "hausdorff_constrained_to_filtered":
            prep.hausdorff_constrained_to_filtered,
        "filtered_dimension": prep.filtered_dimension,
        "num_filtered": prep.num_filtered,
        "tol": htol,
        "pass": prep.passed,
    }
    out["pass"] = bool(prep.passed and trep.full_rank)
    return out, con_cloud


# ---- sweeps --------------------------------------------------------------------


def sweep_family(cfg: ScenarioConfig):
    """Run a parameter family around a base scenario; summarize stability."""
    if cfg.sweep is None:
        raise ValidationError("config has no sweep block")
    kind = cfg.sweep["kind"]
    if kind == "alpha":
        return _sweep_alpha(cfg)
    return _sweep_noise(cfg)


def _sweep_alpha(cfg: ScenarioConfig):
    """Coefficient family a0 x0 y0 + a1 x1 y1 - a2 x2 y2 on the flag pair."""
    sw = cfg.sweep
    count = int(sw.get("count", 10))
    lo = float(sw.get("low", 0.5))
    hi = float(sw.get("high", 2.0))
    drift_tol = float(sw.get("drift_tol", 5e-3))
    base_report, base_art = run_scenario(cfg)
    base_cloud = base_art["cloud"]
    con_cloud = base_art.get("constrained_cloud")
    Y = VarietyConstraint(tuple(
        _parse_monomials(e, "proposition.constraint")
        for e in cfg.proposition["constraint"]["equations"]))
    rng = np.random.default_rng(cfg.seed + 101)
    alphas = [tuple(rng.uniform(lo, hi, size=3)) for _ in range(count)]
    if sw.get("include_negative_control", True):
        alphas.append((-1.0, 1.0, 1.0))
    members = []
    base_coeffs = cfg.section.coefficients
    for j, alpha in enumerate(alphas):
        # the family scales each monomial coefficient: (1, 1, -1) -> alpha * it
        s_alpha = MultiHomogeneousSection(base_coeffs * np.asarray(alpha),
                                          cfg.section.exponents)
        entry = {"alpha": [round(float(a), 12) for a in alpha]}
        try:
            ratio = ratio_positivity(s_alpha, cfg.section, base_cloud)
            entry["ratio"] = {"min_real": ratio.min_real,
                              "max_abs_imag": ratio.max_abs_imag,
                              "pass": ratio.passed}
        except Exception as exc:
            entry["ratio"] = {"pass": False, "error": str(exc)}
        if entry["ratio"]["pass"] and con_cloud is not None:
            con_prob = PotentialProblem(cfg.ambient, s_alpha, Y, cfg.level,
                                        cfg.tolerances)
            census_cfg = dict((cfg.proposition or {}).get("census") or {})
            _, cl = _run_census(con_prob, census_cfg, cfg.seed + 300 + j,
                                cfg.seed_count, [])
            asm = AssemblyControls(
                sample_spacing=float(cfg.assembly.get("sample_spacing", 0.05)),
                pca_radius=cfg.assembly.get("pca_radius"),
                frame_target=int(cfg.assembly.get("frame_target", 4000)))
            cl_cloud = assemble_shadow(con_prob, cl, asm)
            compute_frames(cl_cloud, radius=asm.pca_radius,
                           target=asm.frame_target,
                           expected_max_dim=con_prob.lagrangian_dim)
            d1 = con_cloud.distance_to_batch(cl_cloud.points_flat)
            d2 = cl_cloud.distance_to_batch(con_cloud.points_flat)
            drift = float(max(d1.max() if d1.size else 0.0,
                              d2.max() if d2.size else 0.0))
            entry["drift"] = drift
            entry["drift_pass"] = bool(drift <= drift_tol)
            entry["components"] = count_components(cl_cloud)
        members.append(entry)
    positives = [m for m in members if m["alpha"][0] > 0]
    controls = [m for m in members if m["alpha"][0] < 0]
    summary = {
        "kind": "alpha", "members": len(members),
        "all_positive_pass": bool(all(
            m["ratio"]["pass"] and m.get("drift_pass", False)
            for m in positives)),
        "negative_control_flagged": bool(all(
            not m["ratio"]["pass"] for m in controls)) if controls else None,
        "max_drift_positive": max((m.get("drift", 0.0) for m in positives),
                                  default=0.0),
    }
    body = {"base": base_report.body, "sweep_members": members,
            "summary": summary,
            "overall_pass": bool(base_report.overall_pass and
                                 summary["all_positive_pass"] and
                                 (summary["negative_control_flagged"]
                                  is not False))}
    return RunReport(scenario=cfg.name, seed=cfg.seed,
                     body=clean_tree(body)), {"base": base_art}


def _sweep_noise(cfg: ScenarioConfig):
    """Small irreducible perturbations of a bilinear section; component stability."""
    sw = cfg.sweep
    count = int(sw.get("count", 20))
    scale = float(sw.get("scale", 1e-2))
    rng = np.random.default_rng(cfg.seed + 77)
    members = []
    sizes = cfg.ambient.factor_sizes
    if len(sizes) != 2 or sizes[0] != sizes[1]:
        raise ValidationError("coefficient_noise sweep needs two equal factors")
    n = sizes[0]
    base_mat = np.zeros((n, n), dtype=np.complex128)
    exps0, exps1 = cfg.section.exponents
    for m in range(len(cfg.section.coefficients)):
        i = int(np.argmax(exps0[m]))
        j = int(np.argmax(exps1[m]))
        base_mat[i, j] = cfg.section.coefficients[m]
    for j in range(count):
        while True:
            noise = scale * (rng.standard_normal((n, n)) +
                             1j * rng.standard_normal((n, n))) / np.sqrt(2)
            mat = base_mat + noise
            if abs(np.linalg.det(mat)) > 0.25:
                break
        monos = []
        for a in range(n):
            for b in range(n):
                if abs(mat[a, b]) > 1e-14:
                    e0 = tuple(1 if k == a else 0 for k in range(n))
                    e1 = tuple(1 if k == b else 0 for k in range(n))
                    monos.append((complex(mat[a, b]), (e0, e1)))
        s_pert = section_from_monomials(monos)
        prob = PotentialProblem(cfg.ambient, s_pert, None, cfg.level,
                                cfg.tolerances)
        _, clusters = _run_census(prob, cfg.census, cfg.seed + 500 + j,
                                  cfg.seed_count, [])
        asm = AssemblyControls(
            sample_spacing=float(cfg.assembly.get("sample_spacing", 0.05)),
            pca_radius=cfg.assembly.get("pca_radius"),
            frame_target=int(cfg.assembly.get("frame_target", 2500)),
            saddle_circle=int(cfg.assembly.get("saddle_circle", 48)),
            flow=FlowControls(
                max_time=float(cfg.assembly.get("max_flow_time", 3000.0)),
                max_steps=20000,
                store_spacing=float(cfg.assembly.get("sample_spacing", 0.05))))
        cloud = assemble_shadow(prob, clusters, asm)
        compute_frames(cloud, radius=asm.pca_radius, target=asm.frame_target,
                       expected_max_dim=prob.lagrangian_dim)
        ncomp = count_components(
            cloud, radius=float(cfg.verify.get(
                "component_radius", 3 * asm.sample_spacing)))
        members.append({
            "member": j,
            "det": round(float(abs(np.linalg.det(mat))), 12),
            "clusters": len(clusters),
            "components": ncomp,
            "max_dim": cloud.max_local_dim(),
            "num_points": cloud.size,
        })
    comps = [m["components"] for m in members]
    summary = {"kind": "coefficient_noise", "members": count,
               "component_counts": sorted(set(comps)),
               "constant_one": bool(all(c == 1 for c in comps))}
    body = {"sweep_members": members, "summary": summary,
            "overall_pass": summary["constant_one"]}
    return RunReport(scenario=cfg.name, seed=cfg.seed,
                     body=clean_tree(body)), {}
