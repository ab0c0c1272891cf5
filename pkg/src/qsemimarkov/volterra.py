"""Linear Volterra integro-differential equations of convolution type.

Solves ``x'(t) = int_0^t K(tau) x(t - tau) dtau`` on a uniform grid with the
product-trapezoidal rule: the convolution at ``t_j`` is approximated by
``h * sum'' K_i x_{j-i}`` (half weights at both ends) and ``x`` is advanced by
the trapezoidal rule.  The unknown ``x_j`` enters through ``h/2 K_0 x_j``, so
each step solves the small system ``(I - h^2/4 K_0) x_j = rhs``.

Kernels are sums ``K(tau) = sum_r f_r(tau) C_r`` of scalar profiles times
constant matrices.  Exponential profiles are folded into decay modes whose
history sums obey ``S_{j+1} = exp(-gamma h) (S_j + x_j)``, so the scheme runs
in O(N) for exponential-sum kernels and O(N^2) for tabulated ones; both give
the same discrete solution.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .functions import TimeGrid

__all__ = [
    "StepSizeError",
    "ConvolutionKernel",
    "SolutionTrajectory",
    "RefinedSolution",
    "solve_linear_system",
    "solve_scalar",
    "laplace_rational_solve",
    "refine_and_estimate",
    "trapezoid_convolve",
    "STEP_GUARD",
]

logger = logging.getLogger(__name__)

STEP_GUARD = 0.1
_CHUNK = 4096


class StepSizeError(ValueError):
    """Grid step too coarse for the kernel magnitude."""


def _as_profile_modes(profile):
    modes = profile.exponential_modes()
    return None if modes is None else [(complex(a), float(g)) for a, g in modes]


class ConvolutionKernel:
    """Matrix- or scalar-valued kernel ``K(tau) = sum_r profile_r(tau) * C_r``.

    Build with :meth:`scalar`, :meth:`from_terms` or :meth:`from_samples`.
    A kernel built from samples is tied to the grid spacing it was sampled on.
    """

    def __init__(self, terms, size: int, samples: np.ndarray | None = None, sample_step: float | None = None):
        self.terms = [(p, np.asarray(c, dtype=complex).reshape(size, size)) for p, c in terms]
        self.size = size
        self._samples = samples
        self._sample_step = sample_step

    @classmethod
    def scalar(cls, profile, scale: complex = 1.0) -> "ConvolutionKernel":
        return cls([(profile, np.array([[scale]]))], 1)

    @classmethod
    def from_terms(cls, terms) -> "ConvolutionKernel":
        terms = list(terms)
        if not terms:
            raise ValueError("use ConvolutionKernel.zero(m) for an empty kernel")
        m = np.atleast_2d(terms[0][1]).shape[0]
        return cls(terms, m)

    @classmethod
    def zero(cls, size: int) -> "ConvolutionKernel":
        return cls([], size)

    @classmethod
    def from_samples(cls, samples, grid: TimeGrid) -> "ConvolutionKernel":
        samples = np.asarray(samples, dtype=complex)
        if samples.ndim == 1:
            samples = samples[:, None, None]
        if samples.ndim != 3 or samples.shape[1] != samples.shape[2]:
            raise ValueError("kernel samples must have shape (N+1,) or (N+1, m, m)")
        return cls([], samples.shape[1], samples=samples, sample_step=grid.h)

    def __neg__(self) -> "ConvolutionKernel":
        return self.scaled(-1.0)

    def scaled(self, c: complex) -> "ConvolutionKernel":
        samples = None if self._samples is None else c * self._samples
        return ConvolutionKernel([(p, c * m) for p, m in self.terms], self.size, samples, self._sample_step)

    def __add__(self, other: "ConvolutionKernel") -> "ConvolutionKernel":
        if other.size != self.size:
            raise ValueError("kernel sizes differ")
        if self._samples is not None and other._samples is not None:
            if self._sample_step != other._sample_step:
                raise ValueError("sampled kernels live on different grids")
            n = min(len(self._samples), len(other._samples))
            samples, step = self._samples[:n] + other._samples[:n], self._sample_step
        else:
            samples = self._samples if self._samples is not None else other._samples
            step = self._sample_step if self._samples is not None else other._sample_step
        return ConvolutionKernel(self.terms + other.terms, self.size, samples, step)

    @property
    def has_function_form(self) -> bool:
        return self._samples is None

    @property
    def is_real(self) -> bool:
        ok = all(not np.iscomplexobj(p(0.0)) and np.all(np.isreal(c)) for p, c in self.terms)
        return ok and (self._samples is None or bool(np.all(np.isreal(self._samples))))

    def _check_grid(self, grid: TimeGrid):
        if self._samples is None:
            return
        if not math.isclose(self._sample_step, grid.h, rel_tol=1e-12):
            raise ValueError(f"kernel sampled with step {self._sample_step}, grid has {grid.h}")
        if len(self._samples) < len(grid):
            raise ValueError("kernel samples do not cover the grid")

    def split(self, grid: TimeGrid):
        """Return ``(modes, residual)``: decay modes ``[(rate, C)]`` and the
        sampled remainder ``(N+1, m, m)`` (or None if there is none)."""
        self._check_grid(grid)
        acc: dict[float, np.ndarray] = {}
        residual = None
        for profile, coeff in self.terms:
            modes = _as_profile_modes(profile)
            if modes is None:
                vals = np.asarray(profile(grid.times), dtype=complex)
                part = vals[:, None, None] * coeff[None]
                residual = part if residual is None else residual + part
                continue
            for a, rate in modes:
                acc[rate] = acc.get(rate, 0) + a * coeff
        if self._samples is not None:
            s = self._samples[: len(grid)]
            residual = s.copy() if residual is None else residual + s
        modes = [(rate, c) for rate, c in sorted(acc.items()) if np.any(c != 0)]
        return modes, residual

    def sample(self, grid: TimeGrid) -> np.ndarray:
        modes, residual = self.split(grid)
        out = np.zeros((len(grid), self.size, self.size), dtype=complex) if residual is None else residual.copy()
        t = grid.times
        for rate, c in modes:
            out += np.exp(-rate * t)[:, None, None] * c[None]
        return out

    def magnitude(self, grid: TimeGrid) -> float:
        """Largest entry modulus of ``K(t_j)`` over the grid."""
        modes, residual = self.split(grid)
        best = 0.0 if residual is None else float(np.abs(residual).max(initial=0.0))
        if not modes:
            return best
        t = grid.times
        for lo in range(0, len(t), _CHUNK):
            chunk = np.zeros((len(t[lo:lo + _CHUNK]), self.size, self.size), dtype=complex)
            for rate, c in modes:
                chunk += np.exp(-rate * t[lo:lo + _CHUNK])[:, None, None] * c[None]
            if residual is not None:
                chunk += residual[lo:lo + _CHUNK]
            best = max(best, float(np.abs(chunk).max()))
        return best


@dataclass
class SolutionTrajectory:
    grid: TimeGrid
    values: np.ndarray
    error: np.ndarray | None = None

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def at(self, t: float):
        return self.values[self.grid.index_of(t)]


@dataclass
class RefinedSolution:
    trajectory: SolutionTrajectory
    error: np.ndarray          # per-sample estimate of |x_h - x_exact|
    flagged: np.ndarray        # error > tol
    observed_order: float
    order_degraded: bool

    @property
    def max_error(self) -> float:
        return float(self.error.max(initial=0.0))


def check_step(kernel: ConvolutionKernel, grid: TimeGrid, guard: float = STEP_GUARD) -> float:
    mag = kernel.magnitude(grid)
    if grid.h * mag > guard:
        raise StepSizeError(f"h*max|K| = {grid.h * mag:.3g} exceeds {guard}; reduce the step below {guard / mag:.3g}")
    return mag


def solve_linear_system(kernel: ConvolutionKernel, x0, grid: TimeGrid, *, guard: float | None = STEP_GUARD) -> SolutionTrajectory:
    """Solve ``x' = K * x`` with ``x(0) = x0`` (vector or matrix of columns).

    Returns samples of shape ``(N+1, m)`` or ``(N+1, m, c)``.  Pass
    ``guard=None`` to skip the step-size check.
    """
    x0 = np.asarray(x0)
    m = kernel.size
    vector = x0.ndim == 1
    x0m = x0.reshape(m, 1) if vector else x0
    if x0m.shape[0] != m:
        raise ValueError(f"initial condition has {x0m.shape[0]} rows, kernel is {m}x{m}")
    if guard is not None:
        check_step(kernel, grid, guard)
    modes, residual = kernel.split(grid)
    real = kernel.is_real and not np.iscomplexobj(x0)
    values = _march(modes, residual, x0m.astype(complex), grid)
    if vector:
        values = values[:, :, 0]
    if real:
        values = values.real.copy()
    return SolutionTrajectory(grid, values)


def _march(modes, residual, x0, grid: TimeGrid) -> np.ndarray:
    h, n = grid.h, grid.steps
    m, c = x0.shape
    t = grid.times
    decay = [math.exp(-rate * h) for rate, _ in modes]

    def k_at(j):
        out = np.zeros((m, m), dtype=complex) if residual is None else residual[j].copy()
        for rate, coeff in modes:
            out += math.exp(-rate * t[j]) * coeff
        return out

    k0 = k_at(0)
    step_inv = np.linalg.inv(np.eye(m) - 0.25 * h * h * k0)
    x = np.empty((n + 1, m, c), dtype=complex)
    x[0] = x0
    hist = [np.zeros((m, c), dtype=complex) for _ in modes]
    if residual is not None:
        # kt[:, i, :] = K_i; xrev[n - j] = x_j so that x_{j-1..1} is a forward slice
        kt = np.ascontiguousarray(residual.transpose(1, 0, 2))
        xrev = np.zeros((n + 1, m, c), dtype=complex)
        xrev[n] = x0
    f_prev = np.zeros((m, c), dtype=complex)
    for j in range(1, n + 1):
        # hist[r] holds sum_{i=1}^{j-1} exp(-rate h i) x_{j-i}
        s = np.zeros((m, c), dtype=complex)
        for (rate, coeff), hr in zip(modes, hist):
            s += coeff @ hr
        if residual is not None and j > 1:
            s += kt[:, 1:j, :].reshape(m, -1) @ xrev[n - j + 1:n].reshape(-1, c)
        explicit = s + 0.5 * (k_at(j) @ x0)
        rhs = x[j - 1] + 0.5 * h * f_prev + 0.5 * h * h * explicit
        xj = step_inv @ rhs
        x[j] = xj
        if residual is not None:
            xrev[n - j] = xj
        f_prev = h * (0.5 * (k0 @ xj) + explicit)
        for r, q in enumerate(decay):
            hist[r] = q * (hist[r] + xj)
    return x


def _scalar_kernel(z) -> ConvolutionKernel:
    if isinstance(z, ConvolutionKernel):
        if z.size != 1:
            raise ValueError("solve_scalar needs a 1x1 kernel")
        return z
    return ConvolutionKernel.scalar(z)


def solve_scalar(z, grid: TimeGrid, *, guard: float | None = STEP_GUARD) -> SolutionTrajectory:
    """Solve ``g'(t) = -int_0^t z(tau) g(t - tau) dtau`` with ``g(0) = 1``.

    ``z`` is a profile (ScalarFn, ComplexRate, ...) or a 1x1
    :class:`ConvolutionKernel`.
    """
    kernel = -_scalar_kernel(z)
    traj = solve_linear_system(kernel, np.ones(1), grid, guard=guard)
    traj.values = traj.values[:, 0]
    return traj


def trapezoid_convolve(f: np.ndarray, g: np.ndarray, h: float) -> np.ndarray:
    """Trapezoidal convolution ``(f * g)(t_j) = h sum'' f_i g_{j-i}`` of sampled
    scalar or matrix-valued functions (matrix product for 3-d inputs)."""
    f = np.asarray(f)
    g = np.asarray(g)
    n = len(f)
    if f.ndim == 1 and g.ndim == 1:
        full = np.convolve(f, g)[:n]
        return h * (full - 0.5 * (f[0] * g + f * g[0]))
    if f.ndim == 1:
        f = f[:, None, None]
    if g.ndim == 1:
        g = g[:, None, None]
    size = 1 << (2 * n - 1).bit_length()
    spec = np.einsum("kab,kbc->kac", np.fft.fft(f, size, axis=0), np.fft.fft(g, size, axis=0))
    full = np.fft.ifft(spec, axis=0)[:n]
    if not (np.iscomplexobj(f) or np.iscomplexobj(g)):
        full = full.real
    ends = np.einsum("ab,jbc->jac", f[0], g) + np.einsum("jab,bc->jac", f, g[0])
    return h * (full - 0.5 * ends)


# --- Laplace inversion --------------------------------------------------------

def _taylor(poly: np.ndarray, p: complex, order: int) -> np.ndarray:
    """Coefficients of poly(p + u) in powers of u, up to u^order."""
    out = []
    cur = poly
    fact = 1.0
    for k in range(order + 1):
        out.append(np.polyval(cur, p) / fact)
        cur = np.polyder(cur) if len(cur) > 1 else np.zeros(1)
        fact *= k + 1
    return np.array(out)


def _cluster(roots: np.ndarray, rtol: float):
    groups: list[list[complex]] = []
    for r in sorted(roots, key=lambda z: (z.real, z.imag)):
        for grp in groups:
            centre = np.mean(grp)
            if abs(r - centre) <= rtol * max(1.0, abs(centre)):
                grp.append(r)
                break
        else:
            groups.append([r])
    return [(complex(np.mean(g)), len(g)) for g in groups]


def laplace_rational_solve(z, t_points, *, merge_rtol: float = 1e-6) -> np.ndarray:
    """Exact solution of ``g' = -z * g``, ``g(0) = 1`` for exponential-sum ``z``.

    With ``z(tau) = sum_r a_r exp(-gamma_r tau)`` the transform is
    ``g^(s) = Q(s) / (s Q(s) + sum_r a_r prod_{i != r}(s + gamma_i))`` with
    ``Q(s) = prod_r (s + gamma_r)``.  Poles come from the companion matrix of
    the denominator; roots closer than ``merge_rtol`` (relative) are merged
    and inverted in confluent form ``t^k/k! exp(p t)``.
    """
    t = np.asarray(t_points, dtype=float)
    modes = _as_profile_modes(z) if not isinstance(z, ConvolutionKernel) else None
    if modes is None:
        raise ValueError("Laplace path needs an exponential-sum kernel")
    acc: dict[float, complex] = {}
    for a, rate in modes:
        acc[rate] = acc.get(rate, 0) + a
    modes = [(a, rate) for rate, a in sorted(acc.items()) if a != 0]
    real = all(a.imag == 0 for a, _ in modes)
    if not modes:
        return np.ones_like(t)
    rates = [rate for _, rate in modes]
    num = np.poly([-g for g in rates]).astype(complex)
    den = np.polymul([1.0, 0.0], num).astype(complex)
    for r, (a, _) in enumerate(modes):
        others = np.poly([-g for i, g in enumerate(rates) if i != r]) if len(rates) > 1 else np.array([1.0])
        den = np.polyadd(den, a * others)
    try:
        roots = np.roots(den)
        if not np.all(np.isfinite(roots)):
            raise np.linalg.LinAlgError("non-finite roots")
    except np.linalg.LinAlgError as exc:
        warnings.warn(f"root finding failed ({exc}); falling back to quadrature")
        return _quadrature_fallback(z, t)
    dden = np.polyder(den)
    out = np.zeros(t.shape, dtype=complex)
    clusters = _cluster(roots, merge_rtol)
    for p, mult in clusters:
        if mult == 1:
            res = np.polyval(num, p) / np.polyval(dden, p)
            out += res * np.exp(p * t)
            continue
        others = [q for q, mq in clusters if q != p for _ in range(mq)]
        rest = np.poly(others) if others else np.array([1.0])
        rest = den[0] * rest
        nt = _taylor(num, p, mult - 1)
        rt = _taylor(rest, p, mult - 1)
        q = np.zeros(mult, dtype=complex)
        for k in range(mult):
            q[k] = (nt[k] - np.dot(rt[1:k + 1], q[k - 1::-1][:k])) / rt[0]
        # Laurent coefficient of (s - p)^-(l+1) is q[mult - 1 - l]
        for ell in range(mult):
            out += q[mult - 1 - ell] * t ** ell / math.factorial(ell) * np.exp(p * t)
    return out.real if real else out


def _quadrature_fallback(z, t: np.ndarray) -> np.ndarray:
    horizon = float(t.max(initial=0.0))
    if horizon == 0:
        return np.ones_like(t)
    h = min(1e-3, horizon / 100)
    grid = TimeGrid.from_horizon(math.ceil(horizon / h) * h, h)
    sol = solve_scalar(z, grid, guard=None)
    vals = sol.values
    if np.iscomplexobj(vals):
        return np.interp(t, grid.times, vals.real) + 1j * np.interp(t, grid.times, vals.imag)
    return np.interp(t, grid.times, vals)


# --- Richardson error estimate -----------------------------------------------

def refine_and_estimate(problem: Callable[[TimeGrid], SolutionTrajectory], grid: TimeGrid,
                        tol: float = 1e-6) -> RefinedSolution:
    """Solve on ``grid``, ``h/2`` and ``h/4`` and estimate the error of the
    coarse solution from the step-halving difference.

    For a second-order scheme ``x_h - x_exact ~ (4/3)(x_h - x_{h/2})``.  The
    observed order ``log2(|x_h - x_{h/2}| / |x_{h/2} - x_{h/4}|)`` is reported
    and ``order_degraded`` is set when it falls below 1.8.
    """
    coarse = problem(grid)
    half = problem(grid.refined(2))
    quarter = problem(grid.refined(4))
    d1 = np.abs(coarse.values - half.values[::2])
    d2 = np.abs(half.values[::2] - quarter.values[::4])
    d1 = d1.reshape(len(grid), -1).max(axis=1)
    d2 = d2.reshape(len(grid), -1).max(axis=1)
    err = 4.0 / 3.0 * d1
    top1, top2 = d1.max(initial=0.0), d2.max(initial=0.0)
    if top1 == 0 or top2 == 0:
        order = math.inf if top1 == 0 else 0.0
    else:
        order = math.log2(top1 / top2)
    coarse.error = err
    return RefinedSolution(coarse, err, err > tol, order, order < 1.8)
