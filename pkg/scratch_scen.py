import sys
import time
from lagshadow.catalog import builtin_config
from lagshadow.scenarios import load_config, run_scenario

for name in sys.argv[1:]:
    t0 = time.time()
    cfg = load_config(builtin_config(name))
    report, artifacts = run_scenario(cfg)
    b = report.body
    print(f"=== {name}: {time.time()-t0:.0f}s overall_pass={b['overall_pass']}")
    print("  census:", [(c['id'], c['members'], c['dim'], c['nullity'], c['index'])
                        for c in b['census']['clusters']])
    print("  assembly:", b['assembly'])
    print("  frames:", b['frames'])
    print("  verdict:", b['verdict'])
    print("  components:", b['components'], "singular:", b['singular'])
    print("  verifiers:", {k: (None if v is None else
                               {kk: vv for kk, vv in v.items()})
                           for k, v in b['verifiers'].items()})
    print("  candidates:", b.get('candidates'))
    if 'torus' in b:
        print("  torus:", b['torus'])
    if 'proposition' in b:
        print("  proposition:", b['proposition'])
    print("  expected_checks:", b['expected_checks'])
