"""Push particles along the density flow with the three integrators and
check the empirical moments against the closed-form solution.

Run:  python3 demos/04_particle_transport.py
"""

import numpy as np

from fpreg import (
    GaussianParams1D, Gmm, ParticleSet, VectorField, advect_euler, advect_gf,
    advect_rk2, build_space, fp_gaussian_product2d, generate_rect_with_hole,
    gmm_logpdf, gmm_pdf, interpolate, make_time_grid, sample, solve_fp,
)

g_inf = Gmm([1.0], [[0.0, 0.0]], [0.2 * np.eye(2)])
g_0 = Gmm([1.0], [[-2.0, 0.0]], [0.2 * np.eye(2)])

mesh = generate_rect_with_hole((-6, 6), (-6, 6), (0, 0), 0.0, 0.25)
space = build_space(mesh, 2)
V = interpolate(space, lambda p: -gmm_logpdf(g_inf, p))
grad_V = VectorField.from_gradient(V)
rho0 = interpolate(space, lambda p: gmm_pdf(g_0, p))

grid = make_time_grid(T=0.5, K=150, power=1.5)
traj = solve_fp(space, rho0, grad_V, grid, supg=True, store_every=1)

cloud = sample(g_0, 1000, seed=11)
px = GaussianParams1D(-2.0, 0.2, 0.2)
py = GaussianParams1D(0.0, 0.2, 0.2)
mean_T, var_T = fp_gaussian_product2d(px, py, 0.5)
print(f"analytic state at t=0.5: mean=({mean_T[0]:+.4f}, {mean_T[1]:+.4f}), "
      f"var=({var_T[0]:.4f}, {var_T[1]:.4f})\n")

runs = {
    "euler": advect_euler(ParticleSet(cloud.copy()), traj, grad_V,
                          track_distances=False),
    "rk2(2)": advect_rk2(ParticleSet(cloud.copy()), traj, grad_V, substeps=2,
                         track_distances=False),
    "gf": advect_gf(ParticleSet(cloud.copy()), traj, track_distances=False),
}
for name, log in runs.items():
    final = log.positions[-1]
    mean = final.mean(axis=0)
    var = final.var(axis=0)
    print(f"{name:8s}: mean=({mean[0]:+.4f}, {mean[1]:+.4f})  "
          f"var=({var[0]:.4f}, {var[1]:.4f})  exits={log.exit_counts.sum()}")

se = np.sqrt(var_T / len(cloud))
print(f"\n3-standard-error band on the mean: +-({3 * se[0]:.4f}, {3 * se[1]:.4f})")
