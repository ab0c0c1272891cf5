"""Necessary and sufficient test on a three-site semi-Markov model.

For kernels whose channels are single matrix units the matrix G~ (decoherence
functions off the diagonal, return probabilities on it) is PSD exactly when the
map is CP.  Compare it with the brute-force Choi matrix at every grid point.
"""
import numpy as np

from qsemimarkov import certify, preset

for name in ("qsm3", "qsm3-violating"):
    p = preset(name)
    rep = certify(p.descriptor().spec, p.grid, choi="full")
    s = rep.series
    same = np.mean((s["min_eig_Gtilde"] >= -1e-8) == (s["min_eig_choi"] >= -1e-8))
    print(f"{name:15s} {p.description}")
    print(f"   COND-1 {rep.cond1.verdict:5s}  COND-2 {rep.cond2.verdict:5s}  Choi {rep.choi.verdict:5s}"
          f"  agreement {100 * same:.1f}%")
    if rep.cond2.earliest_violation_time is not None:
        print(f"   first violation: COND-2 {rep.cond2.earliest_violation_time:.6f}, "
              f"Choi {rep.choi.earliest_violation_time:.6f}")
    print("   smallest eigenvalues: G~", s["min_eig_Gtilde"].min(), " Choi", s["min_eig_choi"].min())
