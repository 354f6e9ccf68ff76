import numpy as np
from lagshadow.geometry import *
from lagshadow.potential import *
from lagshadow.critical import *
from lagshadow.shadow import *

prob = make_problem((1, 1, 1), [(1, ((1, 0), (1, 0), (1, 0))), (1, ((0, 1), (0, 1), (0, 1)))])
sp = prob.ambient
seeds = batch_normalize(sobol_coords(sp, 500, seed=12345))
res = find_critical_points(prob, seeds, budget=60)
clusters = dedup_and_cluster(res.points)
tor = [c for c in clusters if c.estimated_dim == 2][0]
densify_cluster(prob, tor, spacing=0.1, max_members=4000)
clusters = dedup_and_cluster([m for c in clusters for m in c.members])
cloud = assemble_shadow(prob, clusters, AssemblyControls(sample_spacing=0.04))
compute_frames(cloud, radius=0.15, target=4000, expected_max_dim=3)

pm1 = normalize_point(sp, [[1, 0], [1, 0], [1, 0]])
pm2 = normalize_point(sp, [[0, 1], [0, 1], [0, 1]])
coords = cloud.coords

def min_dist(i):
    pt = split_coords(sp, cloud.points_flat[i][None, :])
    return min(float(batch_fs_distance(pt, [c[None, :] for c in p.coords])[0])
               for p in (pm1, pm2))

def omega_of(rows, F):
    V = np.einsum("ak,kd->ad", rows, F)
    parts = split_coords(sp, V)
    om = 0.0
    for p in parts:
        om = om - np.imag(np.einsum("ad,cd->ac", p, np.conj(p)))
    return float(np.abs(om).max())

def analytic_tangent(i, F):
    # reconstruct (tau, eta) from the point; sheet param [cos t, sin t e^{i eta_j}]
    pt = [c[i] for c in coords]
    taus = [np.arccos(min(abs(c[0]), 1.0)) for c in pt]
    etas = [np.angle(c[1] / c[0]) if abs(c[0]) > 1e-9 else 0.0 for c in pt]
    tau = float(np.mean(taus))
    def emb(t, ex, ey):
        ez = -(ex + ey)
        return [np.array([np.cos(t), np.sin(t) * np.exp(1j * e)])
                for e in (ex, ey, ez)]
    eps = 1e-5
    base = emb(tau, etas[0], etas[1])
    tv = []
    for dt, dx, dy in ((eps, 0, 0), (0, eps, 0), (0, 0, eps)):
        qp = emb(tau + dt, etas[0] + dx, etas[1] + dy)
        qm = emb(tau - dt, etas[0] - dx, etas[1] - dy)
        lp = flatten_coords(sp, batch_log([c[None, :] for c in base],
                                          [c[None, :] for c in qp]))[0]
        lm = flatten_coords(sp, batch_log([c[None, :] for c in base],
                                          [c[None, :] for c in qm]))[0]
        tv.append(np.real(np.einsum("d,kd->k", (lp - lm) / (2 * eps), np.conj(F))))
    A = np.linalg.qr(np.stack(tv).T)[0].T
    # distance of the actual point from the reconstructed sheet point
    doff = float(batch_fs_distance([c[None, :] for c in base],
                                   split_coords(sp, cloud.points_flat[i][None, :]))[0])
    return A, doff

rows = []
for i in cloud.framed_indices():
    fit = cloud.fits[i]
    F = global_frame(sp, [c[np.array([i])] for c in coords])[0]
    rows.append((omega_of(fit.frame_rows, F), i, fit, F))
rows.sort(key=lambda r: r[0])
mid = [r for r in rows if min_dist(r[1]) > 0.45]
mid.sort(key=lambda r: r[0])
print(f"mid-sheet points (dmin>0.45): {len(mid)}, worst omega:")
for om, i, fit, F in mid[-5:]:
    A, doff = analytic_tangent(i, F)
    sv = np.linalg.svd(fit.frame_rows @ A.T, compute_uv=False)
    ang = float(np.arccos(np.clip(sv.min(), 0, 1)))
    print(f"  om={om:.2e} idx={i} rms={fit.rms_residual:.2e} tilt_vs_analytic={ang:.2e} "
        f"om_analytic={omega_of(A, F):.2e} sheet_off={doff:.2e} sv={np.round(fit.singular_values[:4]/fit.singular_values[0],3)}")
ring = [r for r in rows if min_dist(r[1]) <= 0.45]
print(f"ring points: {len(ring)}, worst omega {max(r[0] for r in ring):.2e}")
print(f"overall max omega: {rows[-1][0]:.2e}; mid-sheet max: {mid[-1][0] if mid else 0:.2e}")
