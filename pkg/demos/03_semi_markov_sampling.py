"""The classical process behind the populations.

A walker on a 4-site ring waits a time drawn from f(t) = (k * g)(t) and then
hops left or right.  Monte Carlo occupation frequencies are checked against the
generalized master equation solved on the same grid.
"""
import numpy as np

from qsemimarkov import (
    ScalarFn,
    TimeGrid,
    estimate_populations,
    simulate_ensemble,
    solve_gme,
    transport,
    waiting_time_table,
)

grid = TimeGrid(1e-2, 500)
k = ScalarFn.exponential(1.0, 4.0)
spec = transport(k, 4).spec
pi, rates = spec.classical.pi, spec.classical.k

tables = [waiting_time_table(kn, grid) for kn in rates]
print("waiting-time density valid:", tables[0].valid, " f(1) =", round(tables[0].density[100], 5))
print("probability of no jump before t=5:", round(tables[0].defect, 4))

records = simulate_ensemble(pi, tables, start=0, horizon=grid.horizon, n=20000, master_seed=1)
est = estimate_populations(records, grid, 4)
exact = solve_gme(pi, rates, grid, x0=np.array([1.0, 0, 0, 0]))

for t in (1.0, 2.5, 5.0):
    j = grid.index_of(t)
    print(f"t={t}: MC", np.round(est.populations[j], 3), " GME", np.round(exact[j], 3))

z = np.abs(est.populations - exact) / np.where(est.stderr > 0, est.stderr, np.inf)
print("fraction of points within 3 standard errors:", np.mean(z <= 3))
