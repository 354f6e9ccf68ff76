import time
import numpy as np
from lagshadow.geometry import *
from lagshadow.potential import *
from lagshadow.critical import *
from lagshadow.flow import *
from lagshadow.shadow import *

t_start = time.time()
prob = make_problem((1, 1, 1), [(1, ((1, 0), (1, 0), (1, 0))), (1, ((0, 1), (0, 1), (0, 1)))])
sp = prob.ambient
seeds = batch_normalize(sobol_coords(sp, 500, seed=12345))
res = find_critical_points(prob, seeds, budget=60)
clusters = dedup_and_cluster(res.points)
tor = [c for c in clusters if c.estimated_dim == 2][0]
densify_cluster(prob, tor, spacing=0.1, max_members=4000)
allpts = [m for c in clusters for m in c.members]
clusters = dedup_and_cluster(allpts)
print(f'census+densify: {time.time()-t_start:.0f}s, clusters:',
      [(c.cluster_id, len(c.members), c.estimated_dim) for c in clusters], flush=True)

t0 = time.time()
cloud = assemble_shadow(prob, clusters, AssemblyControls(sample_spacing=0.04))
print(f'assembly {time.time()-t0:.0f}s: {cloud.size} points, '
      f'{cloud.diagnostics["num_trajectories"]} trajs, undecided={cloud.diagnostics["undecided_descents"]}', flush=True)

t0 = time.time()
compute_frames(cloud, radius=0.15, target=4000, expected_max_dim=3)
print(f'frames {time.time()-t0:.0f}s: framed={len(cloud.fits)} sparse={len(cloud.sparse_excluded)} '
      f'singular={len(cloud.singular_flags)}', flush=True)
print('max local dim:', cloud.max_local_dim())
dims = {}
for i in cloud.framed_indices():
    dims[cloud.fits[i].dim] = dims.get(cloud.fits[i].dim, 0) + 1
print('dim histogram (unflagged):', dims, flush=True)

t0 = time.time()
lag = verify_lagrangian(cloud)
spec = verify_specialty(prob, cloud)
print(f'verifiers {time.time()-t0:.0f}s: lagr={lag.max_residual:.2e} spec={spec.max_residual:.2e} '
      f'transport={spec.extra}', flush=True)

t0 = time.time()
ncomp = count_components(cloud, radius=0.12)
print(f'components {time.time()-t0:.0f}s: {ncomp}', flush=True)

loci = singular_loci(cloud)
pm1 = normalize_point(sp, [[1, 0], [1, 0], [1, 0]])
pm2 = normalize_point(sp, [[0, 1], [0, 1], [0, 1]])
print('singular loci:', len(loci))
for l in loci[:6]:
    pt = split_coords(sp, cloud.points_flat[l['anchor']][None, :])
    d1 = float(batch_fs_distance(pt, [c[None, :] for c in pm1.coords])[0])
    d2 = float(batch_fs_distance(pt, [c[None, :] for c in pm2.coords])[0])
    print(f'  locus n={len(l["members"])} anchor_psi={l["anchor_psi"]:.4f} dist_to_min={min(d1, d2):.2e}')

t0 = time.time()
flat = cloud.flat_coords()
trajs = integrate_flow_batch(prob, flat, ASCEND, FlowControls(max_time=1.0, max_steps=2000, store=False))
ends = np.stack([tr.coords_flat[-1] for tr in trajs])
d = cloud.distance_to_batch(ends)
worst = np.argsort(d)[-5:]
print(f'invariance {time.time()-t0:.0f}s: max={d.max():.2e} mean={d.mean():.2e}')
for w in worst:
    print(f'  outlier idx={w} d={d[w]:.2e} psi={cloud.psi[w]:.4f} g={cloud.grad_norm[w]:.2e} '
          f'prov={cloud.provenance[w]} end_psi={trajs[w].psi[-1]:.4f} status={trajs[w].status}')
print(f'TOTAL {time.time()-t_start:.0f}s', flush=True)
