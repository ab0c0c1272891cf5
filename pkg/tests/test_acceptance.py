"""Acceptance suite: eight criteria, each printed as one PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v`` or
``python tests/test_acceptance.py``.
"""
import math
import time

import numpy as np
import pytest

from oracles import two_pole_survival, waiting_density
from qsemimarkov.certify import SOLVER_TOL, certify, compute_G, compute_T, compute_G_tilde
from qsemimarkov.classical import estimate_populations, simulate_ensemble, solve_gme, waiting_time_table
from qsemimarkov.cli import deviation_in_se
from qsemimarkov.functions import ScalarFn, TimeGrid
from qsemimarkov.kernel import JumpChannel, KernelSpec, validate_spec
from qsemimarkov.maps import (
    PSD_RTOL,
    compute_V,
    decoherence_functions,
    dyson_series,
    evolve_state,
    min_choi_eigenvalue,
    psd_threshold,
)
from qsemimarkov.zoo import diagonal_qsm, oscillator, preset, two_level

T_ZERO = 4 * math.pi / (3 * math.sqrt(3))
MC_SEED = 12345


def band(norm):
    """Unified tolerance band around zero: PSD tolerance or solver accuracy."""
    return np.maximum(-psd_threshold(norm, PSD_RTOL), SOLVER_TOL)


def report(capsys, number, ok, detail, elapsed, limit):
    with capsys.disabled():
        status = "PASS" if ok and elapsed < limit else "FAIL"
        print(f"\nCRITERION {number}: {status}  {detail}  [{elapsed:.1f}s, limit {limit}s]")
    assert ok, detail
    assert elapsed < limit, f"runtime {elapsed:.1f}s exceeds {limit}s"


def test_criterion_1_oscillator_analytic_match(capsys):
    start = time.perf_counter()
    grid = TimeGrid(1e-3, 5000)
    g = decoherence_functions(oscillator(1.0, 4.0, 4).spec, grid)
    errs = [np.abs(g[:, n, n].real - two_pole_survival(n * 1.0, 4.0, grid.times)).max() for n in range(4)]
    gc = decoherence_functions(oscillator(1.0, 2.0, 2).spec, grid)[:, 1, 1].real
    conf = np.abs(gc - np.exp(-grid.times) * (1 + grid.times)).max()
    worst = max(max(errs), conf)
    report(capsys, 1, worst <= 1e-6,
           f"max|g_nn - oracle| = {max(errs):.2e} (n=0..3), confluent {conf:.2e}",
           time.perf_counter() - start, 10)


def test_criterion_2_violation_threshold(capsys):
    start = time.perf_counter()
    grid = TimeGrid(1e-3, 5000)
    details, ok = [], True
    for d in (2, 3, 4):
        spec = oscillator(1.0, 1.0, d).spec
        rep = certify(spec, grid, choi="sampled")
        t1 = rep.diagonal_violation_times[1]
        rho1 = np.zeros((d, d))
        rho1[1, 1] = 1.0
        rho = evolve_state(compute_V(spec, grid), rho1)
        min_eig = np.linalg.eigvalsh(0.5 * (rho + np.swapaxes(rho, 1, 2).conj()))[:, 0]
        ok &= rep.cond1.verdict == "fail"
        ok &= t1 is not None and abs(t1 - T_ZERO) <= 2 * grid.h
        ok &= min_eig.min() < -1e-3
        details.append(f"d={d}: cond1 fail at {rep.cond1.earliest_violation_time:.4f}, "
                       f"n=1 at {t1:.5f}, min eig rho {min_eig.min():.3f}")
    report(capsys, 2, ok, "; ".join(details), time.perf_counter() - start, 10)


def test_criterion_3_two_level_necessity(capsys):
    start = time.perf_counter()
    grid = TimeGrid(1e-3, 5000)
    discordant, in_band, points, negative = 0, 0, 0, 0
    for a in (0.25, 0.5, 1.0, 2.0, 4.0):
        for gamma in (0.5, 1.0, 2.0, 4.0, 8.0):
            spec = two_level(ScalarFn.exponential(a, gamma)).spec
            g = decoherence_functions(spec, grid)
            det = g[:, 0, 0].real - np.abs(g[:, 0, 1]) ** 2
            # the Choi matrix of this map always has a zero eigenvalue, so the
            # comparison is "clearly negative" against "nonnegative within the band"
            lo, nrm = min_choi_eigenvalue(compute_V(spec, grid), with_norm=True)
            tol = band(nrm)
            mismatch = (det < -tol) != (lo < -tol)
            clear = (np.abs(det) > tol) & (np.abs(lo) > tol)
            discordant += int(np.sum(mismatch & clear))
            in_band += int(np.sum(mismatch & ~clear))
            points += len(det)
            negative += int(np.sum(lo < -tol))
    report(capsys, 3, discordant == 0,
           f"{discordant} discordant points outside the band, {in_band} inside it, of {points} "
           f"over 25 (a, gamma); Choi clearly negative at {negative} points", time.perf_counter() - start, 60)


def test_criterion_4_cond2_equivalence(capsys):
    start = time.perf_counter()
    details, ok = [], True
    for name in ("qsm3", "qsm3-violating"):
        p = preset(name)
        spec, grid = p.descriptor().spec, p.grid
        g = decoherence_functions(spec, grid)
        gt = compute_G_tilde(g, compute_T(spec, grid), grid)
        lo, nrm = min_choi_eigenvalue(compute_V(spec, grid), with_norm=True)
        choi_ok = lo >= psd_threshold(nrm, PSD_RTOL)
        agree = gt.psd == choi_ok
        frac = agree.mean()
        in_band = (np.abs(lo) <= band(nrm)) | (np.abs(gt.min_eigenvalue) <= band(gt.norm))
        ok &= frac >= 0.99 and bool(np.all(in_band[~agree]))
        details.append(f"{name} ({p.regime}): agreement {100 * frac:.2f}%, "
                       f"Choi fails at {int((~choi_ok).sum())} points, {int((~agree).sum())} discordant")
    report(capsys, 4, ok, "; ".join(details), time.perf_counter() - start, 60)


def test_criterion_5_markov_limit(capsys):
    start = time.perf_counter()
    grid = TimeGrid(1e-3, 5000)
    vt = compute_V(two_level(ScalarFn.exponential(100.0, 100.0)).spec, grid)
    p_plus = vt.element((0, 0), (0, 0)).real
    dev = np.abs(p_plus - np.exp(-grid.times)).max()
    t, s = 0.5, 0.7
    defects = []
    for gamma in (10.0, 100.0, 1000.0):
        h = 1e-4 if gamma < 1000 else 5e-5
        g = TimeGrid.from_horizon(t + s, h)
        v = compute_V(two_level(ScalarFn.exponential(gamma, gamma)).spec, g)
        defects.append(np.linalg.norm(v.at(t + s) - v.at(t) @ v.at(s), 2))
    monotone = all(x > y for x, y in zip(defects, defects[1:]))
    report(capsys, 5, dev <= 0.02 and monotone,
           f"max|P_+ - exp(-t)| = {dev:.4f}; semigroup defect "
           + ", ".join(f"{d:.2e}" for d in defects) + " for gamma = 10, 100, 1000",
           time.perf_counter() - start, 30)


def test_criterion_6_dyson_consistency(capsys):
    start = time.perf_counter()
    p = preset("two-level")
    spec = p.descriptor().spec
    grid = TimeGrid.from_horizon(1.0, p.h)
    vt = compute_V(spec, grid)
    reached, dist = None, []
    for order in range(21):
        dist.append(np.abs(dyson_series(spec, grid, order, tol=0.0).maps - vt.maps).max())
        if dist[-1] < 1e-6:
            reached = order
            break
    report(capsys, 6, reached is not None,
           f"sup-norm distance {dist[-1]:.2e} at order {reached} (order 0: {dist[0]:.2e})",
           time.perf_counter() - start, 10)


def _mc_fraction(name):
    p = preset(name)
    spec, grid = p.descriptor().spec, p.grid
    pi, k = spec.classical.pi, spec.classical.k
    tables = [waiting_time_table(kn, grid) for kn in k]
    recs = simulate_ensemble(pi, tables, 0, grid.horizon, 100_000, MC_SEED)
    est = estimate_populations(recs, grid, len(k))
    x0 = np.zeros(len(k))
    x0[0] = 1.0
    z = deviation_in_se(est.populations, est.stderr, solve_gme(pi, k, grid, x0), est.count)
    return float(np.mean(z <= 3.0)), float(z.max())


def test_criterion_7_classical_layer(capsys):
    start = time.perf_counter()
    results = {name: _mc_fraction(name) for name in ("two-level", "transport")}
    grid = TimeGrid(1e-3, 1000)
    f1 = waiting_time_table(ScalarFn.exponential(1.0, 4.0), grid).density[-1]
    f1_quad = waiting_density(1.0, 4.0, 1.0)
    ok = all(frac >= 0.99 for frac, _ in results.values()) and abs(f1 - 0.21392) <= 1e-4 \
        and abs(f1 - f1_quad) <= 1e-4
    detail = "; ".join(f"{n}: {100 * fr:.2f}% within 3 SE (max {zm:.2f})" for n, (fr, zm) in results.items())
    report(capsys, 7, ok, f"{detail}; f(1) = {f1:.5f} (quadrature {f1_quad:.5f})",
           time.perf_counter() - start, 120)


def _random_exp(rng, holding=False):
    a = rng.uniform(0.2, 2.0)
    lo = 2 * math.sqrt(a) if holding else 0.5
    return ScalarFn.exponential(a, rng.uniform(lo, lo + 5.0))


def _random_spec(rng, family, d):
    """Three families with diagonal loss operators:
    single matrix units (semi-Markov class), unitary mixtures, and channels
    M = W diag(s) with W unitary."""
    if family == 0:
        pi = rng.random((d, d)) * (rng.random((d, d)) < 0.7)
        pi[rng.integers(d), np.arange(d)] += 0.1      # no empty columns
        pi /= pi.sum(axis=0)
        eps = [ScalarFn.constant(x) for x in rng.normal(size=d)] if rng.random() < 0.5 else None
        return diagonal_qsm(pi, [_random_exp(rng) for _ in range(d)], eps).spec
    if family == 1:
        k = _random_exp(rng, holding=True)
        weights = rng.dirichlet(np.ones(2))
        chans = []
        for w in weights:
            u, _ = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
            chans.append(JumpChannel(math.sqrt(w) * u, k))
        return KernelSpec(d, None, chans)
    w, _ = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    chans = [JumpChannel(w @ np.diag(rng.uniform(0.0, 1.5, size=d)), _random_exp(rng))]
    eps = [ScalarFn.constant(x) for x in rng.normal(size=d)]
    return KernelSpec(d, eps, chans)


def test_criterion_8_structural_invariants(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    grid = TimeGrid(0.01, 300)
    worst = dict(trace=0.0, herm=0.0, gsym=0.0, stoch=0.0)
    counter, cond1_points, stochastic_checked = 0, 0, 0
    for i in range(50):
        d = int(rng.integers(2, 5))
        spec = _random_spec(rng, i % 3, d)
        validate_spec(spec, grid)
        vt = compute_V(spec, grid)
        one = np.eye(d).reshape(-1, order="F")
        worst["trace"] = max(worst["trace"], np.abs(one @ vt.maps - one).max())
        x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        herm = evolve_state(vt, x + x.conj().T, check=False)
        worst["herm"] = max(worst["herm"], np.abs(herm - np.swapaxes(herm, 1, 2).conj()).max())
        g = decoherence_functions(spec, grid)
        worst["gsym"] = max(worst["gsym"], np.abs(g - np.swapaxes(g, 1, 2).conj()).max())
        if spec.classical is not None:
            t = compute_T(spec, grid)
            worst["stoch"] = max(worst["stoch"], np.abs(t.sum(axis=1) - 1).max())
            stochastic_checked += 1
        gm = compute_G(spec, grid)
        lo, nrm = min_choi_eigenvalue(vt, with_norm=True)
        counter += int(np.sum(gm.psd & (lo < -band(nrm))))
        cond1_points += int(gm.psd.sum())
    ok = max(worst.values()) <= 1e-8 and counter == 0
    report(capsys, 8, ok,
           f"trace {worst['trace']:.1e}, Hermiticity {worst['herm']:.1e}, g symmetry {worst['gsym']:.1e}, "
           f"T columns {worst['stoch']:.1e} ({stochastic_checked} specs); "
           f"{counter} COND-1 => Choi counterexamples over {cond1_points} COND-1 points",
           time.perf_counter() - start, 120)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
