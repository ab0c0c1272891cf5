"""Dynamical maps generated by memory kernels.

``V(t)`` solves ``V' = K * V`` with ``V(0) = I`` as a d^2 x d^2 matrix in the
column-stacking convention of :mod:`qsemimarkov.superop`.  The no-jump part of
the kernel generates the pinching-type map

    V0(t) rho = sum_nm g_nm(t) |n><n| rho |m><m|

whose coefficients ``g_nm`` solve scalar Volterra equations with kernel
``z_n + conj(z_m)``, ``z_n = k_n/2 + i eps_n``.  Re-inserting the jump part
``B`` gives the Dyson series ``V = V0 + V0*B*V0 + V0*B*V0*B*V0 + ...``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import superop
from .functions import ComplexRate, TimeGrid
from .kernel import KernelSpec, complex_rates, superop_terms
from .volterra import STEP_GUARD, ConvolutionKernel, solve_linear_system, solve_scalar, trapezoid_convolve

__all__ = [
    "PSD_RTOL",
    "MapTrajectory",
    "ChoiSample",
    "superop_kernel",
    "compute_V",
    "decoherence_functions",
    "compute_V0",
    "dyson_series",
    "apply_map",
    "evolve_state",
    "choi_at",
    "min_choi_eigenvalue",
    "psd_threshold",
]

PSD_RTOL = 1e-8


def psd_threshold(matrix_norm, rtol: float = PSD_RTOL):
    """Eigenvalues above ``-rtol * norm`` count as nonnegative."""
    return -rtol * np.asarray(matrix_norm)


@dataclass
class MapTrajectory:
    grid: TimeGrid
    maps: np.ndarray = field(repr=False)  # (N+1, d^2, d^2)
    provenance: str = "direct-solve"

    @property
    def dimension(self) -> int:
        return int(round(np.sqrt(self.maps.shape[-1])))

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def at(self, t: float) -> np.ndarray:
        return self.maps[self.grid.index_of(t)]

    def element(self, out: tuple[int, int], inp: tuple[int, int]) -> np.ndarray:
        """``<n| V(t)(|i><j|) |m>`` over the grid for ``out=(n, m)``, ``inp=(i, j)``."""
        d = self.dimension
        return self.maps[:, superop.unit_index(*out, d), superop.unit_index(*inp, d)]


@dataclass
class ChoiSample:
    time: float | None
    matrix: np.ndarray = field(repr=False)
    min_eigenvalue: float

    @property
    def norm(self) -> float:
        return float(np.abs(np.linalg.eigvalsh(_hermitian_part(self.matrix))).max())

    def is_psd(self, rtol: float = PSD_RTOL) -> bool:
        return self.min_eigenvalue >= psd_threshold(self.norm, rtol)


def superop_kernel(spec: KernelSpec, part: str = "full") -> ConvolutionKernel:
    terms = superop_terms(spec, part)
    if not terms:
        return ConvolutionKernel.zero(spec.dimension ** 2)
    return ConvolutionKernel.from_terms(terms)


def compute_V(spec: KernelSpec, grid: TimeGrid, *, guard: float | None = STEP_GUARD) -> MapTrajectory:
    """Direct solve of the d^2-dimensional convolution system for ``V(t)``."""
    m = spec.dimension ** 2
    sol = solve_linear_system(superop_kernel(spec), np.eye(m, dtype=complex), grid, guard=guard)
    return MapTrajectory(grid, sol.values, "direct-solve")


def decoherence_functions(spec: KernelSpec, grid: TimeGrid, *, guard: float | None = STEP_GUARD) -> np.ndarray:
    """``g[j, n, m] = g_nm(t_j)``; the lower triangle is filled by conjugation."""
    d = spec.dimension
    z = complex_rates(spec)
    g = np.empty((len(grid), d, d), dtype=complex)
    cache: dict = {}
    for n in range(d):
        for m in range(n, d):
            pair = z[n] + z[m].conj()
            key = _rate_key(pair)
            if key not in cache:
                cache[key] = solve_scalar(pair, grid, guard=guard).values
            g[:, n, m] = cache[key]
            g[:, m, n] = np.conj(cache[key])
    return g


def _rate_key(rate: ComplexRate):
    modes = rate.exponential_modes()
    return tuple(modes) if modes is not None else rate


def compute_V0(spec: KernelSpec, grid: TimeGrid, *, guard: float | None = STEP_GUARD) -> MapTrajectory:
    g = decoherence_functions(spec, grid, guard=guard)
    d = spec.dimension
    # |n><m| sits at n + m*d, i.e. vec(g) in column-stacked order
    diag = superop.vec(g)
    maps = np.zeros((len(grid), d * d, d * d), dtype=complex)
    idx = np.arange(d * d)
    maps[:, idx, idx] = diag
    return MapTrajectory(grid, maps, "v0-closed-form")


def dyson_series(spec: KernelSpec, grid: TimeGrid, order: int = 20, *, tol: float = 1e-10,
                 guard: float | None = STEP_GUARD) -> MapTrajectory:
    """Partial sum of the Dyson series with at most ``order`` jump insertions.

    Stops early once a term's sup-norm drops below ``tol``.  The provenance
    tag records the number of insertions actually summed.
    """
    if order < 0:
        raise ValueError("order must be nonnegative")
    v0 = compute_V0(spec, grid, guard=guard)
    total = v0.maps.copy()
    jump = superop_terms(spec, "jump")
    used = 0
    if jump and order > 0:
        b = ConvolutionKernel.from_terms(jump).sample(grid)
        v0diag = np.einsum("jaa->ja", v0.maps)
        term = v0.maps
        for k in range(1, order + 1):
            bt = trapezoid_convolve(b, term, grid.h)
            term = _diag_convolve(v0diag, bt, grid.h)
            total += term
            used = k
            if np.abs(term).max() < tol:
                break
    return MapTrajectory(grid, total, f"dyson({used})")


def _diag_convolve(diag: np.ndarray, mats: np.ndarray, h: float) -> np.ndarray:
    """Trapezoidal ``(D * M)(t)`` for a diagonal matrix function ``D``."""
    n = len(diag)
    size = 1 << (2 * n - 1).bit_length()
    full = np.fft.ifft(np.fft.fft(diag, size, axis=0)[:, :, None] * np.fft.fft(mats, size, axis=0), axis=0)[:n]
    ends = diag[0][None, :, None] * mats + diag[:, :, None] * mats[0][None]
    return h * (full - 0.5 * ends)


def _check_density(rho: np.ndarray, atol: float = 1e-10):
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if np.abs(rho - rho.conj().T).max() > atol:
        raise ValueError("density matrix must be Hermitian")
    if abs(np.trace(rho) - 1) > atol:
        raise ValueError("density matrix must have unit trace")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -atol:
        raise ValueError("density matrix must be positive semidefinite")


def apply_map(vt: np.ndarray, rho0: np.ndarray, *, check: bool = True) -> np.ndarray:
    """``unvec(V vec(rho0))``.  The output is not guaranteed to be positive."""
    rho0 = np.asarray(rho0, dtype=complex)
    if check:
        _check_density(rho0)
    return superop.unvec(np.asarray(vt) @ superop.vec(rho0))


def evolve_state(traj: MapTrajectory, rho0: np.ndarray, *, check: bool = True) -> np.ndarray:
    """States ``rho(t_j)`` for all grid points, shape (N+1, d, d)."""
    rho0 = np.asarray(rho0, dtype=complex)
    if check:
        _check_density(rho0)
    return superop.unvec(np.einsum("jab,b->ja", traj.maps, superop.vec(rho0)))


def _hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2).conj())


def choi_at(vt: np.ndarray, t: float | None = None) -> ChoiSample:
    """Choi matrix of a single map, assembled by applying it to every matrix
    unit ``|i><j|``."""
    vt = np.asarray(vt)
    m = vt.shape[0]
    d = int(round(np.sqrt(m)))
    choi = np.zeros((m, m), dtype=complex)
    for i in range(d):
        for j in range(d):
            unit = np.zeros((d, d), dtype=complex)
            unit[i, j] = 1.0
            out = apply_map(vt, unit, check=False)
            # rows n*d + i, columns m*d + j
            choi[i::d, j::d] = out
    lam = float(np.linalg.eigvalsh(_hermitian_part(choi)).min())
    return ChoiSample(t, choi, lam)


def min_choi_eigenvalue(traj: MapTrajectory, indices=None, *, with_norm: bool = False):
    """Minimum eigenvalue of the Choi matrix at each (selected) grid point.

    With ``with_norm=True`` also returns the spectral norms used for the PSD
    tolerance.
    """
    maps = traj.maps if indices is None else traj.maps[np.asarray(indices)]
    choi = _hermitian_part(superop.choi_from_superop(maps))
    lam = np.linalg.eigvalsh(choi)
    lo = lam[..., 0]
    if with_norm:
        return lo, np.abs(lam).max(axis=-1)
    return lo
