"""Solve the density flow between two Gaussians and compare with the
closed-form Ornstein-Uhlenbeck solution.

Run:  python3 demos/03_gaussian_transport.py
"""

import numpy as np

from fpreg import (
    GaussianParams1D, Gmm, VectorField, build_space, fp_gaussian_product2d,
    gaussian2d_pdf, generate_rect_with_hole, gmm_logpdf, gmm_pdf, interpolate,
    l2_error, make_time_grid, solve_fp,
)

# free-space benchmark: N((-2,0), 0.2 I) relaxing toward N(0, 0.2 I)
g_inf = Gmm([1.0], [[0.0, 0.0]], [0.2 * np.eye(2)])
g_0 = Gmm([1.0], [[-2.0, 0.0]], [0.2 * np.eye(2)])

mesh = generate_rect_with_hole((-6, 6), (-6, 6), (0, 0), 0.0, 0.25)
space = build_space(mesh, 2)
print(f"P2 space with {space.n_dofs} dofs")

V = interpolate(space, lambda p: -gmm_logpdf(g_inf, p))
grad_V = VectorField.from_gradient(V)
rho0 = interpolate(space, lambda p: gmm_pdf(g_0, p))

grid = make_time_grid(T=1.0, K=200, power=1.5)
traj = solve_fp(space, rho0, grad_V, grid, supg=True,
                rho_inf=lambda p: gmm_pdf(g_inf, p),
                snapshot_times=[0.1, 0.5, 1.0])

d = traj.diagnostics
print(f"mass drift over the run: {np.abs(d['mass'] - d['mass'][0]).max():.2e}")
print(f"KL monotone nonincreasing: {bool(np.all(np.diff(d['kl']) <= 1e-8))}")
print(f"L1 to target: {d['l1_error'][0]:.3f} -> {d['l1_error'][-1]:.4f}")

px = GaussianParams1D(mu=-2.0, gamma2=0.2, sigma2=0.2)
py = GaussianParams1D(mu=0.0, gamma2=0.2, sigma2=0.2)
print("\nrelative L2 mismatch against the closed-form solution:")
for t in (0.1, 0.5, 1.0):
    k, field = traj.field_nearest_time(t)
    mean, var = fp_gaussian_product2d(px, py, traj.grid.times[k])
    err = l2_error(field, lambda p: gaussian2d_pdf(mean, var, p), relative=True)
    print(f"  t={t:4.1f}: {100 * err:.2f}%  "
          f"(analytic mean x = {mean[0]:+.4f}, var = {var[0]:.4f})")
