"""Two-level atom with an exponential memory kernel.

Solve the map, compare populations and coherences with the closed forms, then
ask whether the map is completely positive.
"""
from qsemimarkov import ScalarFn, TimeGrid, certify, compute_V, two_level
from qsemimarkov.zoo import closed_form_g

grid = TimeGrid(1e-3, 3000)                      # t in [0, 3]
k = ScalarFn.exponential(1.0, 4.0)               # k(tau) = exp(-4 tau)
spec = two_level(k).spec

vt = compute_V(spec, grid)
p_plus = vt.element((0, 0), (0, 0)).real         # <+|V(t)(|+><+|)|+>
coh = vt.element((0, 1), (0, 1)).real            # coherence factor g_{+-}

# survival of the excited level follows g' = -k * g; the coherence sees k/2
print("   t     P_+(t)     closed form   g_+-(t)    closed form")
for t in (0.5, 1.0, 2.0, 3.0):
    j = grid.index_of(t)
    print(f"{t:5.1f}  {p_plus[j]:.7f}   {closed_form_g(1.0, 4.0, t):.7f}    "
          f"{coh[j]:.7f}   {closed_form_g(0.5, 4.0, t):.7f}")

# g_++ - g_+-^2 decides complete positivity for this model; it starts like -t^4/24
det = p_plus - coh ** 2
print("\nsmallest g_++ - g_+-^2 on the grid:", det.min())

report = certify(spec, grid, choi="sampled")
print("COND-1:", report.cond1.verdict, "first violation at t =", report.cond1.earliest_violation_time)
print("Choi  :", report.choi.verdict)
print("waiting-time law valid:", report.classical_valid.verdict)
