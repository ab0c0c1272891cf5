"""Classical semi-Markov layer: waiting-time tables, trajectory sampling and
ensemble estimates of site populations.

A particle sits at site ``m`` for a waiting time drawn from ``f_m``, then
jumps to ``n`` with probability ``pi[n, m]``.  The survival probability solves
``g_m' = -(k_m * g_m)`` and ``f_m = k_m * g_m``.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .functions import TimeGrid
from .volterra import STEP_GUARD, ConvolutionKernel, solve_linear_system, solve_scalar, trapezoid_convolve

__all__ = [
    "NO_JUMP",
    "CLASSICAL_RTOL",
    "WaitingTimeTable",
    "TrajectoryRecord",
    "PopulationEstimate",
    "waiting_time_table",
    "sample_waiting_time",
    "simulate_trajectory",
    "simulate_ensemble",
    "trajectory_seed",
    "estimate_populations",
    "gme_kernel",
    "gme_kernel_from_channels",
    "solve_gme",
    "write_trajectories",
    "read_trajectories",
    "default_workers",
]

NO_JUMP = math.inf
CLASSICAL_RTOL = 1e-10


@dataclass
class WaitingTimeTable:
    grid: TimeGrid
    survival: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)
    valid: bool = True
    first_negative_time: float | None = None
    asymptotic_defect: float | None = None

    @property
    def defect(self) -> float:
        """Probability of no jump within the grid horizon."""
        return float(self.survival[-1])

    def integrated_survival(self) -> np.ndarray:
        """``1 - int_0^t f`` by cumulative trapezoid; should reproduce ``survival``."""
        h = self.grid.h
        f = self.density
        cum = np.concatenate(([0.0], np.cumsum(0.5 * h * (f[1:] + f[:-1]))))
        return 1.0 - cum


def waiting_time_table(k, grid: TimeGrid, rtol: float = CLASSICAL_RTOL,
                       guard: float | None = STEP_GUARD) -> WaitingTimeTable:
    """Survival probability and waiting-time density for loss rate ``k``.

    Negative density beyond ``-rtol * max f`` marks the table invalid; this is
    a flag, not an error.
    """
    g = solve_scalar(k, grid, guard=guard).values.real
    kk = np.asarray(k(grid.times), dtype=float)
    f = trapezoid_convolve(kk, g, grid.h).real
    scale = float(np.abs(f).max(initial=0.0))
    neg = f < -rtol * scale
    first = float(grid.times[int(np.argmax(neg))]) if neg.any() else None
    modes = k.exponential_modes() if hasattr(k, "exponential_modes") else None
    asym = None
    if modes is not None:
        # g(inf) = lim s/(s + k^(s)) is 0 unless k vanishes identically
        asym = 1.0 if not modes else 0.0
    return WaitingTimeTable(grid, g, f, not neg.any(), first, asym)


def sample_waiting_time(table: WaitingTimeTable, u):
    """Inverse-survival draw: the time ``t`` with ``g(t) = u``.

    ``g`` is interpolated linearly between grid points.  Returns
    :data:`NO_JUMP` when ``u`` is below the survival at the horizon.  Accepts a
    scalar or an array of uniforms.
    """
    if not table.valid:
        raise ValueError("waiting-time table is not a valid probability law")
    gs = np.minimum.accumulate(table.survival)
    u_arr = np.asarray(u, dtype=float)
    j = np.searchsorted(-gs, -u_arr, side="left")
    j = np.clip(j, 1, len(gs) - 1)
    lo, hi = gs[j - 1], gs[j]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(lo > hi, (lo - u_arr) / (lo - hi), 1.0)
    t = table.grid.h * (j - 1 + frac)
    t = np.where(u_arr >= gs[0], 0.0, t)
    t = np.where(u_arr < gs[-1], NO_JUMP, t)
    return float(t) if t.ndim == 0 else t


@dataclass
class TrajectoryRecord:
    start: int
    horizon: float
    seed: object
    times: list = field(default_factory=list)
    sources: list = field(default_factory=list)
    targets: list = field(default_factory=list)

    @property
    def final_site(self) -> int:
        return self.targets[-1] if self.targets else self.start

    @property
    def events(self):
        return list(zip(self.times, self.sources, self.targets))


def trajectory_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Independent stream for trajectory ``index`` of an ensemble."""
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


def _check_pi(pi: np.ndarray):
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 2 or pi.shape[0] != pi.shape[1]:
        raise ValueError("pi must be square")
    if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=0) - 1) > 1e-12):
        raise ValueError("pi must be nonnegative with unit column sums")
    return pi


def simulate_trajectory(pi, tables, start: int, horizon: float, seed) -> TrajectoryRecord:
    pi = _check_pi(pi)
    for tab in tables:
        if not tab.valid:
            raise ValueError("all waiting-time tables must be valid")
        if tab.grid.horizon < horizon - 1e-12:
            raise ValueError("waiting-time tables do not reach the horizon")
    return _simulate(pi, np.cumsum(pi, axis=0), tables, start, horizon, seed)


def _simulate(pi, cum, tables, start, horizon, seed) -> TrajectoryRecord:
    rng = np.random.default_rng(seed)
    rec = TrajectoryRecord(start, horizon, seed)
    t, site = 0.0, start
    d = pi.shape[0]
    while True:
        w = sample_waiting_time(tables[site], rng.random())
        if w == NO_JUMP or t + w > horizon:
            return rec
        t += w
        new = min(int(np.searchsorted(cum[:, site], rng.random(), side="right")), d - 1)
        rec.times.append(t)
        rec.sources.append(site)
        rec.targets.append(new)
        site = new


def _simulate_chunk(args):
    pi, tables, start, horizon, master_seed, lo, hi = args
    cum = np.cumsum(pi, axis=0)
    out = []
    for i in range(lo, hi):
        rec = _simulate(pi, cum, tables, start, horizon, trajectory_seed(master_seed, i))
        rec.seed = (master_seed, i)
        out.append(rec)
    return out


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("MEMKERNEL_THREADS", "1")))
    except ValueError:
        return 1


def simulate_ensemble(pi, tables, start: int, horizon: float, n: int, master_seed: int,
                      workers: int | None = None) -> list[TrajectoryRecord]:
    """``n`` trajectories; trajectory ``i`` draws from stream
    ``(master_seed, i)`` so results do not depend on ``workers``."""
    pi = _check_pi(pi)
    for tab in tables:
        if not tab.valid:
            raise ValueError("all waiting-time tables must be valid")
    workers = workers or default_workers()
    chunk = max(1, math.ceil(n / (4 * workers)))
    jobs = [(pi, tables, start, horizon, master_seed, lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
    if workers == 1 or len(jobs) == 1:
        parts = map(_simulate_chunk, jobs)
        return [rec for part in parts for rec in part]
    with ProcessPoolExecutor(workers) as pool:
        return [rec for part in pool.map(_simulate_chunk, jobs) for rec in part]


@dataclass
class PopulationEstimate:
    grid: TimeGrid
    populations: np.ndarray   # (N+1, d)
    stderr: np.ndarray        # (N+1, d)
    count: int


def estimate_populations(records, grid: TimeGrid, sites: int) -> PopulationEstimate:
    """Occupation frequencies on the grid with binomial standard errors."""
    records = list(records)
    if not records:
        raise ValueError("empty ensemble")
    times = grid.times
    seg_site, seg_lo, seg_hi = [], [], []
    for rec in records:
        starts = [0.0] + list(rec.times)
        ends = list(rec.times) + [math.inf]
        sites_visited = [rec.start] + list(rec.targets)
        seg_site.extend(sites_visited)
        seg_lo.extend(starts)
        seg_hi.extend(ends)
    seg_site = np.asarray(seg_site)
    lo = np.searchsorted(times, np.asarray(seg_lo), side="left")
    hi = np.searchsorted(times, np.asarray(seg_hi), side="left")
    diff = np.zeros((sites, len(times) + 1))
    np.add.at(diff, (seg_site, lo), 1.0)
    np.add.at(diff, (seg_site, hi), -1.0)
    counts = np.cumsum(diff, axis=1)[:, :-1].T
    n = len(records)
    p = counts / n
    se = np.sqrt(np.clip(p * (1 - p), 0, None) / n)
    return PopulationEstimate(grid, p, se, n)


def gme_kernel(pi, k) -> ConvolutionKernel:
    """Kernel of ``P_n' = sum_m int [W_nm P_m - W_mn P_n]`` with ``W_nm = pi_nm k_m``."""
    pi = np.asarray(pi, dtype=float)
    d = len(k)
    terms = []
    for m in range(d):
        if k[m].is_zero:
            continue
        c = np.zeros((d, d))
        c[:, m] = pi[:, m]
        c[m, m] -= pi[:, m].sum()
        terms.append((k[m], c))
    return ConvolutionKernel.from_terms(terms) if terms else ConvolutionKernel.zero(d)


def gme_kernel_from_channels(channels, d: int) -> ConvolutionKernel:
    """GME kernel for general jump weights ``W_nm = sum_a c_a |<n|M_a|m>|^2``.

    No factorization ``W = pi k`` is assumed; self-jumps cancel.
    """
    terms = []
    for ch in channels:
        if ch.profile.is_zero:
            continue
        w = np.abs(np.asarray(ch.matrix)) ** 2
        terms.append((ch.profile, w - np.diag(w.sum(axis=0))))
    return ConvolutionKernel.from_terms(terms) if terms else ConvolutionKernel.zero(d)


def solve_gme(pi, k, grid: TimeGrid, x0=None, guard: float | None = STEP_GUARD) -> np.ndarray:
    """Populations for every start site: ``T[j, n, m] = P_n(t_j | start m)``,
    or a single population vector trajectory when ``x0`` is given."""
    d = len(k)
    init = np.eye(d) if x0 is None else np.asarray(x0, dtype=float)
    return solve_linear_system(gme_kernel(pi, k), init, grid, guard=guard).values


def write_trajectories(records, path) -> None:
    """One row per jump: ``trajectory,time,from,to``."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trajectory", "time", "from", "to"])
        for i, rec in enumerate(records):
            for t, a, b in rec.events:
                w.writerow([i, repr(float(t)), a, b])


def read_trajectories(path, count: int, start: int, horizon: float) -> list[TrajectoryRecord]:
    recs = [TrajectoryRecord(start, horizon, None) for _ in range(count)]
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            rec = recs[int(row["trajectory"])]
            rec.times.append(float(row["time"]))
            rec.sources.append(int(row["from"]))
            rec.targets.append(int(row["to"]))
    return recs
