import numpy as np
from lagshadow.geometry import *
from lagshadow.potential import *
from lagshadow.critical import *

prob = make_problem((1, 1, 1), [(1, ((1, 0), (1, 0), (1, 0))), (1, ((0, 1), (0, 1), (0, 1)))])
sp = prob.ambient
seeds = batch_normalize(sobol_coords(sp, 500, seed=12345))
res = find_critical_points(prob, seeds, budget=60)
clusters = dedup_and_cluster(res.points)
tor = [c for c in clusters if c.estimated_dim == 2][0]
densify_cluster(prob, tor, spacing=0.12, max_members=2500)
allpts = [m for c in clusters for m in c.members]
clusters = dedup_and_cluster(allpts)
tor = [c for c in clusters if c.estimated_dim == 2][0]

# check |H v_neg| for every member, find the bad ones
bad = 0
worst = (0, None)
for mi, cp in enumerate(tor.members):
    lam = cp.eigenvalues
    vneg = cp.eigenvectors[:, 0]
    # gradient at base + eps * v
    v = np.einsum("k,kd->d", vneg, cp.frame)
    base = flatten_coords(sp, [c[None, :] for c in cp.location.coords])[0]
    seed = flat_unit_normalize(sp, (base + 1e-3 * v)[None, :])
    _, _, g, _ = gradient_batch(prob, split_coords(sp, seed))
    ratio = float(g[0]) / 1e-3
    if ratio > 1.5:
        bad += 1
        if ratio > worst[0]:
            worst = (ratio, mi)
print(f"members={len(tor.members)} with |grad(seed)|/eps > 1.5: {bad}")
if worst[1] is not None:
    cp = tor.members[worst[1]]
    print("worst ratio:", worst[0])
    print("eigenvalues:", np.round(cp.eigenvalues, 6))
    print("torus residual of this member:",
          max(abs(abs(c[0]) - abs(c[1])) for c in cp.location.coords))
    ph = sum(np.angle(c[1]) - np.angle(c[0]) for c in cp.location.coords)
    print("phase sum:", (ph + np.pi) % (2 * np.pi) - np.pi)
    print("grad_norm:", cp.grad_norm, "psi:", cp.psi)
