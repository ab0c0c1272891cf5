"""Complete-positivity certification.

Two matrix conditions are checked on the grid:

* ``G(t) = (g_nm(t)) >= 0`` is sufficient for complete positivity of ``V(t)``
  for any kernel with a diagonal loss operator;
* for the diagonal semi-Markov class (every channel a single matrix unit),
  ``G~(t) >= 0``, where ``G~`` is ``G`` with its diagonal replaced by the return
  probabilities ``T_nn(t)``, is necessary and sufficient.

Both are reconciled against the brute-force Choi matrix of the directly solved
map.  Disagreements are reported as warnings, never silently resolved.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .classical import CLASSICAL_RTOL, gme_kernel_from_channels, solve_gme, waiting_time_table
from .functions import TimeGrid
from .kernel import KernelSpec, loss_rates, populations_closed, qsm_structure, validate_spec
from .maps import PSD_RTOL, MapTrajectory, compute_V, decoherence_functions, psd_threshold
from .superop import choi_from_superop
from .volterra import STEP_GUARD, solve_linear_system

__all__ = [
    "SOLVER_TOL",
    "GMatrixTrajectory",
    "ConditionResult",
    "CPReport",
    "NotInClass",
    "compute_G",
    "check_cond1",
    "compute_T",
    "compute_G_tilde",
    "check_cond2",
    "choi_trajectory",
    "certify",
    "refine_violation",
    "diagonal_violation_times",
]

SOLVER_TOL = 1e-6
CHOI_FULL_MAX_DIM = 8
CHOI_FULL_MAX_POINTS = 2000
CHOI_SAMPLES = 50


class NotInClass(ValueError):
    """Spec is outside the diagonal semi-Markov class."""


def _herm(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2).conj())


def _spectrum(mats: np.ndarray):
    lam = np.linalg.eigvalsh(_herm(mats))
    return lam[..., 0], np.abs(lam).max(axis=-1)


@dataclass
class GMatrixTrajectory:
    """Sampled ``G(t)`` (or ``G~(t)`` when ``kind == "G~"``)."""

    grid: TimeGrid
    matrices: np.ndarray = field(repr=False)
    min_eigenvalue: np.ndarray = field(repr=False)
    norm: np.ndarray = field(repr=False)
    kind: str = "G"
    rtol: float = PSD_RTOL

    @classmethod
    def from_matrices(cls, grid, matrices, kind="G", rtol=PSD_RTOL):
        lo, nrm = _spectrum(matrices)
        return cls(grid, matrices, lo, nrm, kind, rtol)

    @property
    def psd(self) -> np.ndarray:
        return self.min_eigenvalue >= psd_threshold(self.norm, self.rtol)


@dataclass
class ConditionResult:
    verdict: str                           # "pass", "fail" or "not-applicable"
    earliest_violation_time: float | None = None
    earliest_violation_grid_time: float | None = None

    @property
    def holds(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self):
        return {"verdict": self.verdict, "earliest_violation_time": self.earliest_violation_time}


def _interp_matrix(samples: np.ndarray, times: np.ndarray, j: int, t: float) -> np.ndarray:
    """Cubic Lagrange interpolation through the four grid samples around
    ``[t_{j-1}, t_j]``."""
    n = len(times)
    lo = min(max(j - 2, 0), max(n - 4, 0))
    idx = range(lo, min(lo + 4, n))
    out = np.zeros(samples.shape[1:], dtype=samples.dtype)
    for a in idx:
        w = 1.0
        for b in idx:
            if b != a:
                w *= (t - times[b]) / (times[a] - times[b])
        out = out + w * samples[a]
    return out


def refine_violation(samples: np.ndarray, grid: TimeGrid, j: int, transform=None,
                     rtol: float = PSD_RTOL, iterations: int = 60) -> float:
    """Bisect ``[t_{j-1}, t_j]`` for the time where the interpolated matrix
    first fails the PSD test (``samples`` passes at ``j-1`` and fails at ``j``)."""
    times = grid.times
    if j <= 0:
        return float(times[0])
    transform = transform or (lambda m: m)

    def margin(t):
        m = transform(_interp_matrix(samples, times, j, t))
        lam = np.linalg.eigvalsh(_herm(m))
        return lam[0] - psd_threshold(np.abs(lam).max(), rtol)

    a, b = float(times[j - 1]), float(times[j])
    if margin(a) < 0 or margin(b) >= 0:
        return b
    for _ in range(iterations):
        mid = 0.5 * (a + b)
        if margin(mid) >= 0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def _first_failure(ok: np.ndarray) -> int | None:
    bad = ~ok
    return int(np.argmax(bad)) if bad.any() else None


def compute_G(spec: KernelSpec, grid: TimeGrid, *, rtol: float = PSD_RTOL,
              guard: float | None = STEP_GUARD) -> GMatrixTrajectory:
    validate_spec(spec, grid)
    return GMatrixTrajectory.from_matrices(grid, decoherence_functions(spec, grid, guard=guard), "G", rtol)


def check_cond1(gtraj: GMatrixTrajectory, *, refine: bool = True) -> ConditionResult:
    """PSD test of ``G`` at every grid point."""
    j = _first_failure(gtraj.psd)
    if j is None:
        return ConditionResult("pass")
    tj = float(gtraj.grid.times[j])
    t = refine_violation(gtraj.matrices, gtraj.grid, j, rtol=gtraj.rtol) if refine else tj
    return ConditionResult("fail", t, tj)


def diagonal_violation_times(gtraj: GMatrixTrajectory, *, refine: bool = True) -> list[float | None]:
    """Per level ``n``: first time the survival probability ``g_nn`` drops
    below zero (the necessary part of the condition), refined by bisection."""
    d = gtraj.matrices.shape[-1]
    out = []
    for n in range(d):
        col = gtraj.matrices[:, n, n].real
        # 1x1 PSD test with norm |g_nn|
        ok = col >= -gtraj.rtol * np.abs(col)
        j = _first_failure(ok)
        if j is None:
            out.append(None)
        elif refine:
            out.append(refine_violation(gtraj.matrices[:, n:n + 1, n:n + 1], gtraj.grid, j, rtol=gtraj.rtol))
        else:
            out.append(float(gtraj.grid.times[j]))
    return out


def compute_T(spec: KernelSpec, grid: TimeGrid, *, guard: float | None = STEP_GUARD) -> np.ndarray:
    """Conditional transition probabilities ``T[j, n, m] = P(n, t_j | m, 0)``.

    Uses the classical annotation when present; otherwise the jump weights
    of the channels, provided populations evolve in closed form.
    """
    if spec.classical is not None:
        spec.classical.check()
        return solve_gme(spec.classical.pi, spec.classical.k, grid, guard=guard)
    if not populations_closed(spec, grid):
        raise NotInClass("populations do not obey a closed master equation")
    d = spec.dimension
    return solve_linear_system(gme_kernel_from_channels(spec.channels, d), np.eye(d), grid, guard=guard).values


def compute_G_tilde(g: np.ndarray, t: np.ndarray, grid: TimeGrid, rtol: float = PSD_RTOL) -> GMatrixTrajectory:
    gt = np.array(g, dtype=complex)
    d = gt.shape[-1]
    idx = np.arange(d)
    gt[:, idx, idx] = np.einsum("jnn->jn", t)
    return GMatrixTrajectory.from_matrices(grid, gt, "G~", rtol)


def check_cond2(spec: KernelSpec, grid: TimeGrid, *, rtol: float = PSD_RTOL, refine: bool = True,
                guard: float | None = STEP_GUARD):
    """Necessary-and-sufficient test for the diagonal semi-Markov class.

    Returns ``(ConditionResult, GMatrixTrajectory of G~)``; raises
    :class:`NotInClass` for other kernels.
    """
    validate_spec(spec, grid)
    structure = qsm_structure(spec, grid)
    if structure is None:
        raise NotInClass("kernel is not of the diagonal semi-Markov form")
    pi, k = structure
    t = solve_gme(pi, k, grid, guard=guard)
    g = decoherence_functions(spec, grid, guard=guard)
    gt = compute_G_tilde(g, t, grid, rtol)
    j = _first_failure(gt.psd)
    if j is None:
        return ConditionResult("pass"), gt
    tj = float(grid.times[j])
    time = refine_violation(gt.matrices, grid, j, rtol=rtol) if refine else tj
    return ConditionResult("fail", time, tj), gt


def choi_indices(grid: TimeGrid, d: int, mode: str = "auto") -> np.ndarray | None:
    """Grid indices at which the Choi oracle runs (None when switched off)."""
    if mode == "off":
        return None
    full = mode == "full" or (mode == "auto" and d <= CHOI_FULL_MAX_DIM and len(grid) <= CHOI_FULL_MAX_POINTS)
    if full:
        return np.arange(len(grid))
    if mode not in ("auto", "sampled"):
        raise ValueError(f"unknown Choi mode {mode!r}")
    return np.unique(np.round(np.linspace(0, grid.steps, CHOI_SAMPLES)).astype(int))


def choi_trajectory(vtraj: MapTrajectory, indices=None, rtol: float = PSD_RTOL):
    """``(indices, min_eigenvalue, norm)`` of the Choi matrices."""
    idx = np.arange(len(vtraj.grid)) if indices is None else np.asarray(indices)
    lo, nrm = _spectrum(choi_from_superop(vtraj.maps[idx]))
    return idx, lo, nrm


@dataclass
class CPReport:
    classical_valid: ConditionResult
    cond1: ConditionResult
    cond2: ConditionResult
    choi: ConditionResult
    tolerances: dict
    grid: dict
    diagonal_violation_times: list
    warnings: list = field(default_factory=list)
    series: dict = field(default_factory=dict, repr=False)  # per-time eigenvalue data

    @property
    def all_pass(self) -> bool:
        return all(c.verdict in ("pass", "not-applicable", "skipped")
                   for c in (self.classical_valid, self.cond1, self.cond2, self.choi))

    def to_dict(self) -> dict:
        return {
            "classical_valid": self.classical_valid.to_dict(),
            "cond1": self.cond1.to_dict(),
            "cond2": self.cond2.to_dict(),
            "choi": self.choi.to_dict(),
            "tolerances": dict(self.tolerances),
            "grid": dict(self.grid),
            "diagonal_violation_times": list(self.diagonal_violation_times),
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def certify(spec: KernelSpec, grid: TimeGrid, *, psd_rtol: float = PSD_RTOL, solver_tol: float = SOLVER_TOL,
            classical_rtol: float = CLASSICAL_RTOL, choi: str = "auto",
            guard: float | None = STEP_GUARD) -> CPReport:
    """Run every applicable check and cross-check their logical implications.

    ``solver_tol`` is the slack used when comparing matrices produced by
    different discretizations (G from scalar solves, Choi from the direct map).
    """
    validate_spec(spec, grid)
    times = grid.times
    d = spec.dimension
    warnings: list[str] = []

    # classical waiting-time validity for every level
    first_neg = None
    for k in loss_rates(spec):
        tab = waiting_time_table(k, grid, classical_rtol, guard=guard)
        if not tab.valid and (first_neg is None or tab.first_negative_time < first_neg):
            first_neg = tab.first_negative_time
    classical = ConditionResult("pass") if first_neg is None else ConditionResult("fail", first_neg, first_neg)

    gtraj = compute_G(spec, grid, rtol=psd_rtol, guard=guard)
    cond1 = check_cond1(gtraj)
    diag_times = diagonal_violation_times(gtraj)
    series = {"t": times, "min_eig_G": gtraj.min_eigenvalue}

    gt = None
    if qsm_structure(spec, grid) is not None:
        cond2, gt = check_cond2(spec, grid, rtol=psd_rtol, guard=guard)
        series["min_eig_Gtilde"] = gt.min_eigenvalue
    else:
        cond2 = ConditionResult("not-applicable")

    idx = choi_indices(grid, d, choi)
    if idx is None:
        choi_res = ConditionResult("skipped")
    else:
        vtraj = compute_V(spec, grid, guard=guard)
        idx, lo, nrm = choi_trajectory(vtraj, idx)
        ok = lo >= psd_threshold(nrm, psd_rtol)
        bad = _first_failure(ok)
        if bad is None:
            choi_res = ConditionResult("pass")
        else:
            j = int(idx[bad])
            tj = float(times[j])
            prev_ok = bad > 0 and idx[bad - 1] == j - 1
            t = refine_violation(vtraj.maps, grid, j, transform=choi_from_superop, rtol=psd_rtol) if prev_ok else tj
            choi_res = ConditionResult("fail", t, tj)
        series["choi_index"] = idx
        series["min_eig_choi"] = lo
        band = np.maximum(-psd_threshold(nrm, psd_rtol), solver_tol)

        # sufficiency: G >= 0  =>  Choi >= 0
        g_ok = gtraj.psd[idx]
        broken = g_ok & (lo < -band)
        if broken.any():
            warnings.append(f"COND-1 holds but Choi negative beyond tolerance at {int(broken.sum())} "
                            f"points (first t={times[idx[np.argmax(broken)]]:.6g})")
        if gt is not None:
            gl = gt.min_eigenvalue[idx]
            gband = np.maximum(-psd_threshold(gt.norm[idx], psd_rtol), solver_tol)
            clear = (np.abs(lo) > band) & (np.abs(gl) > gband)
            disagree = clear & ((lo >= 0) != (gl >= 0))
            if disagree.any():
                warnings.append(f"COND-2 and Choi verdicts disagree outside the tolerance band at "
                                f"{int(disagree.sum())} points (first t={times[idx[np.argmax(disagree)]]:.6g})")
    if cond1.holds and choi_res.verdict == "fail":
        warnings.append("COND-1 passes but the Choi oracle fails: numerical resolution insufficient")

    tolerances = {"psd_rtol": psd_rtol, "solver_tol": solver_tol, "classical_rtol": classical_rtol,
                  "step_guard": guard, "choi_mode": choi}
    grid_meta = {"h": grid.h, "steps": grid.steps, "horizon": grid.horizon}
    return CPReport(classical, cond1, cond2, choi_res, tolerances, grid_meta, diag_times, warnings, series)
