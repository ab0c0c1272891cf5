"""Damped oscillator: where positivity is lost.

With kappa = gamma = 1 every excited level has 4 n kappa > gamma^2, so the
survival probability of level n oscillates and eventually turns negative.
"""
import math

import numpy as np

from qsemimarkov import TimeGrid, certify, compute_V, evolve_state, oscillator

grid = TimeGrid(1e-3, 5000)
spec = oscillator(kappa=1.0, gamma=1.0, d=4).spec

report = certify(spec, grid, choi="sampled")
print("COND-1 verdict:", report.cond1.verdict, "at t =", round(report.cond1.earliest_violation_time, 4))
print("per-level zero of g_nn:")
for n, t in enumerate(report.diagonal_violation_times):
    print(f"  n={n}:", "never" if t is None else f"{t:.5f}")
print("analytic n=1 value 4 pi / (3 sqrt 3) =", 4 * math.pi / (3 * math.sqrt(3)))

# start in |1><1| and watch the smallest eigenvalue of rho(t)
rho0 = np.zeros((4, 4))
rho0[1, 1] = 1.0
rho = evolve_state(compute_V(spec, grid), rho0)
lam = np.linalg.eigvalsh(rho)[:, 0]
first = grid.times[np.argmax(lam < 0)]
print(f"rho(t) first has a negative eigenvalue at t = {first:.3f}; minimum {lam.min():.3f}")

# a stronger damping rate restores a positive survival probability on level 1
safe = certify(oscillator(1.0, 4.0, 2).spec, grid, choi="off")
print("gamma=4, d=2 diagonal zeros:", safe.diagonal_violation_times)
