import time
import numpy as np
from lagshadow.geometry import *
from lagshadow.potential import *
from lagshadow.critical import *
from lagshadow.flow import *
from lagshadow.shadow import *

prob = make_problem((1, 1, 1), [(1, ((1, 0), (1, 0), (1, 0))), (1, ((0, 1), (0, 1), (0, 1)))])
sp = prob.ambient
seeds = batch_normalize(sobol_coords(sp, 500, seed=12345))
res = find_critical_points(prob, seeds, budget=60)
clusters = dedup_and_cluster(res.points)
tor = [c for c in clusters if c.estimated_dim == 2][0]
densify_cluster(prob, tor, spacing=0.1, max_members=4000)
allpts = [m for c in clusters for m in c.members]
clusters = dedup_and_cluster(allpts)
cloud = assemble_shadow(prob, clusters, AssemblyControls(sample_spacing=0.04))
compute_frames(cloud, radius=0.15, target=4000, expected_max_dim=3)

pm1 = normalize_point(sp, [[1, 0], [1, 0], [1, 0]])
pm2 = normalize_point(sp, [[0, 1], [0, 1], [0, 1]])

def min_dist(i):
    pt = split_coords(sp, cloud.points_flat[i][None, :])
    d1 = float(batch_fs_distance(pt, [c[None, :] for c in pm1.coords])[0])
    d2 = float(batch_fs_distance(pt, [c[None, :] for c in pm2.coords])[0])
    return min(d1, d2)

# per-point omega residual for framed unflagged points
rows = []
framed = cloud.framed_indices()
coords = cloud.coords
for i in framed:
    fit = cloud.fits[i]
    base = [c[np.array([i])] for c in coords]
    F = global_frame(sp, base)
    V = np.einsum("ak,kd->ad", fit.frame_rows, F[0])
    parts = split_coords(sp, V)
    om = 0.0
    for p in parts:
        om = om - np.imag(np.einsum("ad,cd->ac", p, np.conj(p)))
    m = float(np.abs(om).max())
    rows.append((m, i, fit.rms_residual, fit.n_neighbors))
rows.sort()
print("worst omega points:")
for m, i, rms, nn in rows[-8:]:
    print(f"  om={m:.2e} idx={i} rms={rms:.2e} nn={nn} psi={cloud.psi[i]:.4f} "
          f"dmin={min_dist(i):.3f} prov={cloud.provenance[i]}")
arr = np.array([r[0] for r in rows])
rmss = np.array([r[2] for r in rows])
print("omega quantiles:", [f"{np.quantile(arr, q):.1e}" for q in (0.5, 0.9, 0.99, 1.0)])
print("rms quantiles:", [f"{np.quantile(rmss, q):.1e}" for q in (0.5, 0.9, 0.99, 1.0)])
# correlation: omega large <-> rms large?
big = arr > 1e-3
print(f"points with omega>1e-3: {big.sum()} of {len(arr)}; their min rms: "
      f"{rmss[big].min() if big.any() else 0:.2e}; rms of clean: {np.median(rmss[~big]):.2e}")
print("min dist-to-minima of omega>1e-3 points:",
      min((min_dist(rows[j][1]) for j in np.nonzero(big)[0]), default=None))
print("max dist-to-minima of omega>1e-3 points:",
      max((min_dist(rows[j][1]) for j in np.nonzero(big)[0]), default=None))
