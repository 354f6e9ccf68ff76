"""Command-line interface.

Subcommands:
    run <config>      execute one scenario, emit report + cloud files
    catalog           list the built-in scenarios
    sweep <config>    run a parameter family and its stability summary
    verify <cloud> <config>   re-run the verifiers against an existing cloud

<config> is a YAML file path or the name of a built-in scenario.  Exit codes:
0 all checks pass, 2 a verdict or verifier failed, 3 configuration error,
4 internal numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import ParseError, ShadowError, ValidationError

EXIT_OK = 0
EXIT_VERIFY_FAIL = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4


def _read_config_text(arg):
    from .catalog import builtin_config, catalog_names
    if os.path.exists(arg):
        with open(arg) as fh:
            return fh.read()
    if arg in catalog_names():
        return builtin_config(arg)
    raise ParseError(f"no such config file or builtin scenario: {arg}")


def _apply_overrides(text, seed_override, tol_overrides):
    import yaml
    doc = yaml.safe_load(text)
    if seed_override is not None:
        doc["seed"] = int(seed_override)
    for name, value in tol_overrides or []:
        doc.setdefault("tolerances", {})[name] = float(value)
    return yaml.safe_dump(doc, sort_keys=False)


def _parse_tol(values):
    out = []
    for v in values or []:
        if "=" not in v:
            raise ValidationError(f"--tol expects name=value, got {v!r}")
        name, val = v.split("=", 1)
        out.append((name.strip(), val.strip()))
    return out


def cmd_run(args):
    from .reports import emit_cloud, emit_report
    from .scenarios import load_config, run_scenario
    text = _read_config_text(args.config)
    text = _apply_overrides(text, args.seed_override, _parse_tol(args.tol))
    cfg = load_config(text)
    report, artifacts = run_scenario(cfg)
    outdir = args.out_dir
    os.makedirs(outdir, exist_ok=True)
    rpath = os.path.join(outdir, f"{cfg.name}.report.yaml")
    emit_report(report, rpath)
    cloud = artifacts.get("cloud")
    if cloud is not None:
        cpath = os.path.join(outdir, f"{cfg.name}.cloud.csv")
        emit_cloud(cloud, cpath)
        print(f"cloud:  {cpath} ({cloud.size} points)")
    con = artifacts.get("constrained_cloud")
    if con is not None:
        cpath = os.path.join(outdir, f"{cfg.name}.constrained-cloud.csv")
        emit_cloud(con, cpath)
        print(f"cloud:  {cpath} ({con.size} points)")
    print(f"report: {rpath}")
    print(f"wall_clock: {report.wall_clock:.1f}s")
    print(f"overall_pass: {report.overall_pass}")
    return EXIT_OK if report.overall_pass else EXIT_VERIFY_FAIL


def cmd_catalog(args):
    from .catalog import catalog_names
    for name in catalog_names():
        print(name)
    return EXIT_OK


def cmd_sweep(args):
    from .reports import emit_report
    from .scenarios import load_config, sweep_family
    text = _read_config_text(args.config)
    text = _apply_overrides(text, args.seed_override, _parse_tol(args.tol))
    cfg = load_config(text)
    report, _ = sweep_family(cfg)
    outdir = args.out_dir
    os.makedirs(outdir, exist_ok=True)
    rpath = os.path.join(outdir, f"{cfg.name}.sweep.yaml")
    emit_report(report, rpath)
    print(f"report: {rpath}")
    print(f"overall_pass: {report.overall_pass}")
    return EXIT_OK if report.overall_pass else EXIT_VERIFY_FAIL


def cmd_verify(args):
    import numpy as np
    from .flow import check_flow_invariance
    from .reports import load_cloud
    from .scenarios import load_config, _candidate_from_spec
    from .shadow import (
        compare_candidate, compute_frames, count_components,
        verify_lagrangian, verify_specialty,
    )
    text = _read_config_text(args.config)
    text = _apply_overrides(text, args.seed_override, _parse_tol(args.tol))
    cfg = load_config(text)
    prob = cfg.problem()
    spacing = float(cfg.assembly.get("sample_spacing", 0.05))
    cloud = load_cloud(args.cloud, cfg.ambient, sample_spacing=spacing,
                       pca_radius=cfg.assembly.get("pca_radius"))
    compute_frames(cloud, target=int(cfg.assembly.get("frame_target", 4000)),
                   expected_max_dim=prob.lagrangian_dim)
    ver = cfg.verify
    ok = True
    lag = verify_lagrangian(cloud)
    spec = verify_specialty(prob, cloud)
    inv = check_flow_invariance(
        prob, cloud, float(ver.get("invariance_dt", 1.0)),
        float(ver.get("invariance_tol", 2e-3)),
        max_points=int(ver.get("max_flow_points", 0)) or None)
    ncomp = count_components(cloud, radius=float(
        ver.get("component_radius", 3 * spacing)))
    print(f"points: {cloud.size}  framed: {len(cloud.fits)}  "
          f"max_dim: {cloud.max_local_dim()}  components: {ncomp}")
    lagr_tol = float(ver.get("lagrangian_tol", 1e-3))
    spec_tol = float(ver.get("specialty_tol", 1e-3))
    checks = [
        ("lagrangian", lag.max_residual, lagr_tol,
         lag.max_residual <= lagr_tol),
        ("specialty", spec.max_residual, spec_tol,
         spec.max_residual <= spec_tol),
        ("invariance", inv.max_displacement,
         float(ver.get("invariance_tol", 2e-3)), inv.passed),
    ]
    for spec_c in cfg.candidates:
        cand = _candidate_from_spec(spec_c, constraint=cfg.constraint)
        r = compare_candidate(cloud, cand)
        ctol = float(spec_c.get("tol", 1e-3))
        checks.append((f"candidate:{spec_c['kind']}", r["max_residual"], ctol,
                       r["max_residual"] <= ctol))
    exp_comp = cfg.expected.get("components")
    if exp_comp is not None:
        checks.append(("components", ncomp, exp_comp, ncomp == int(exp_comp)))
    for name, value, tol, passed in checks:
        ok &= bool(passed)
        print(f"{name}: {value:.3e} (tol {tol:.3e}) "
              f"{'PASS' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VERIFY_FAIL


def build_parser():
    ap = argparse.ArgumentParser(
        prog="lagshadow",
        description="Numerical lagrangian shadows of ample divisors")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out-dir", default="out",
                       help="directory for reports and clouds")
        p.add_argument("--seed-override", type=int, default=None)
        p.add_argument("--tol", action="append", metavar="NAME=VALUE",
                       help="tolerance override (repeatable)")

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("config")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_cat = sub.add_parser("catalog", help="list built-in scenarios")
    p_cat.set_defaults(func=cmd_catalog)

    p_sweep = sub.add_parser("sweep", help="run a parameter family")
    p_sweep.add_argument("config")
    common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_ver = sub.add_parser("verify", help="re-run verifiers on a cloud file")
    p_ver.add_argument("cloud")
    p_ver.add_argument("config")
    common(p_ver)
    p_ver.set_defaults(func=cmd_verify)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ShadowError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
