"""Ready-made kernels: two-level atom, damped oscillator, cyclic transport
chain and the general diagonal semi-Markov class, plus named parameter presets.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .functions import ScalarFn, TimeGrid, combine
from .kernel import ClassicalAnnotation, JumpChannel, KernelSpec, SpecError

__all__ = [
    "ModelDescriptor",
    "Preset",
    "two_level",
    "oscillator",
    "transport",
    "diagonal_qsm",
    "cyclic_jumps",
    "PRESETS",
    "preset",
    "closed_form_g",
]


@dataclass(frozen=True, eq=False)
class ModelDescriptor:
    name: str
    parameters: dict
    spec: KernelSpec


def _unit(d, n, m):
    e = np.zeros((d, d))
    e[n, m] = 1.0
    return e


def _scaled(f, c):
    return f.scaled(c) if isinstance(f, ScalarFn) else combine([(c, f)])


def _check_nonnegative(f, name, probe: TimeGrid | None = None):
    probe = probe or TimeGrid(0.01, 1000)
    if np.any(np.asarray(f(probe.times)) < 0):
        raise SpecError(f"{name} must be nonnegative")


def two_level(k, eps=None) -> ModelDescriptor:
    """Atom with excited state ``+`` (index 0) decaying to ``-`` (index 1)
    through ``sqrt(k(tau)) sigma_-``; ``eps`` shifts the excited level."""
    _check_nonnegative(k, "k")
    eps = eps if eps is not None else ScalarFn.zero()
    lower = _unit(2, 1, 0)
    pi = np.array([[0.0, 0.0], [1.0, 1.0]])
    spec = KernelSpec(
        2, (eps, ScalarFn.zero()), (JumpChannel(lower, k),), ("+", "-"),
        ClassicalAnnotation(pi, (k, ScalarFn.zero())),
    )
    return ModelDescriptor("two-level", {"k": k, "eps": eps}, spec)


def oscillator(kappa: float, gamma: float, d: int) -> ModelDescriptor:
    """Number-state truncation of the oscillator damped by
    ``kappa exp(-gamma tau) (a rho a^+ - {a^+ a, rho}/2)``.

    The kernel only lowers the excitation number, so dynamics of states
    supported below level ``d`` is reproduced without truncation error.
    """
    if kappa <= 0 or gamma <= 0:
        raise SpecError("oscillator needs kappa > 0 and gamma > 0")
    if d < 2:
        raise SpecError("truncation must keep at least two levels")
    k = ScalarFn.exponential(kappa, gamma)
    a = np.diag(np.sqrt(np.arange(1, d)), 1)
    pi = np.zeros((d, d))
    pi[0, 0] = 1.0
    for n in range(1, d):
        pi[n - 1, n] = 1.0
    rates = tuple(k.scaled(n) if n else ScalarFn.zero() for n in range(d))
    spec = KernelSpec(d, None, (JumpChannel(a, k),), None, ClassicalAnnotation(pi, rates))
    return ModelDescriptor("oscillator", {"kappa": kappa, "gamma": gamma, "d": d}, spec)


def cyclic_jumps(sites: int) -> np.ndarray:
    """``pi[n +- 1, n] = 1/2`` on a ring."""
    pi = np.zeros((sites, sites))
    for n in range(sites):
        pi[(n + 1) % sites, n] += 0.5
        pi[(n - 1) % sites, n] += 0.5
    return pi


def transport(k, sites: int, boundary: str = "periodic") -> ModelDescriptor:
    """Excitation hopping with ``k(tau)[T rho T^+/2 + T^+ rho T/2 - rho]``,
    ``T`` the cyclic shift."""
    if boundary != "periodic":
        raise SpecError("only periodic boundaries keep the loss term diagonal")
    if sites < 2:
        raise SpecError("transport needs at least two sites")
    _check_nonnegative(k, "k")
    shift = np.roll(np.eye(sites), 1, axis=0)
    half = _scaled(k, 0.5)
    channels = (JumpChannel(shift, half), JumpChannel(shift.T, half))
    spec = KernelSpec(sites, None, channels, None,
                      ClassicalAnnotation(cyclic_jumps(sites), (k,) * sites))
    return ModelDescriptor("transport", {"k": k, "sites": sites, "boundary": boundary}, spec)


def diagonal_qsm(pi, k, eps=None) -> ModelDescriptor:
    """Kernel with channels ``sqrt(pi_nm k_m(tau)) |n><m|``."""
    pi = np.asarray(pi, dtype=float)
    d = len(k)
    if pi.shape != (d, d):
        raise SpecError(f"pi must be {d}x{d}")
    if np.any(pi < 0):
        raise SpecError("jump probabilities must be nonnegative")
    for m in range(d):
        _check_nonnegative(k[m], f"k_{m}")
        if not k[m].is_zero and abs(pi[:, m].sum() - 1) > 1e-12:
            raise SpecError(f"column {m} of pi must sum to 1")
    channels = tuple(JumpChannel(_unit(d, n, m), _scaled(k[m], pi[n, m]))
                     for m in range(d) for n in range(d) if pi[n, m] > 0 and not k[m].is_zero)
    spec = KernelSpec(d, eps, channels, None, ClassicalAnnotation(pi, tuple(k)))
    return ModelDescriptor("diagonal-qsm", {"pi": pi, "k": tuple(k), "eps": eps}, spec)


def closed_form_g(a: float, gamma: float, t):
    """Solution of ``g' = -a exp(-gamma tau) * g``, ``g(0) = 1``.

    ``g = exp(-gamma t/2)[cosh(D t/2) + (gamma/D) sinh(D t/2)]`` with
    ``D = sqrt(gamma^2 - 4a)``; the oscillatory branch (imaginary ``D``) and the
    confluent case ``gamma^2 = 4a`` are handled explicitly.
    """
    t = np.asarray(t, dtype=float)
    disc = gamma * gamma - 4 * a
    env = np.exp(-gamma * t / 2)
    if disc > 0:
        dd = np.sqrt(disc)
        return env * (np.cosh(dd * t / 2) + gamma / dd * np.sinh(dd * t / 2))
    if disc < 0:
        dd = np.sqrt(-disc)
        return env * (np.cos(dd * t / 2) + gamma / dd * np.sin(dd * t / 2))
    return env * (1 + gamma * t / 2)


@dataclass(frozen=True)
class Preset:
    name: str
    regime: str            # "cp-holding", "threshold", "cp-violating", "cond1-violating" or "markov-limit"
    description: str
    build: object = field(repr=False)
    h: float = 1e-3
    steps: int = 5000

    def descriptor(self) -> ModelDescriptor:
        return self.build()

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.h, self.steps)


def _exp(a, g):
    return ScalarFn.exponential(a, g)


def _qsm3(rates):
    return lambda: diagonal_qsm(cyclic_jumps(3), [_exp(a, g) for a, g in rates])


_PRESET_LIST = [
    Preset("two-level", "cp-violating",
           "k = exp(-4 tau): classically valid waiting times, G fails at short times",
           lambda: two_level(_exp(1.0, 4.0))),
    Preset("two-level-threshold", "threshold", "k = exp(-2 tau), gamma^2 = 4a",
           lambda: two_level(_exp(1.0, 2.0))),
    Preset("two-level-oscillating", "cp-violating", "k = exp(-tau): survival probability turns negative",
           lambda: two_level(_exp(1.0, 1.0))),
    Preset("two-level-markov", "markov-limit", "k = 100 exp(-100 tau), approaching exp(-t) decay",
           lambda: two_level(_exp(100.0, 100.0)), 1e-3, 5000),
    Preset("oscillator-damped", "cp-violating", "gamma=4, kappa=1, d=2: g_11 > 0 but G fails off the diagonal",
           lambda: oscillator(1.0, 4.0, 2)),
    Preset("oscillator-threshold", "threshold", "gamma=2, kappa=1, d=2: 4 n kappa = gamma^2 at n=1",
           lambda: oscillator(1.0, 2.0, 2)),
    Preset("oscillator-violating", "cp-violating", "gamma=1, kappa=1, d=4: 4 n kappa > gamma^2 for all n >= 1",
           lambda: oscillator(1.0, 1.0, 4)),
    Preset("transport", "cp-holding", "L=4 ring, k = exp(-4 tau): g > 0 so G = g*ones is PSD",
           lambda: transport(_exp(1.0, 4.0), 4)),
    Preset("transport-threshold", "threshold", "L=4 ring, k = exp(-2 tau)",
           lambda: transport(_exp(1.0, 2.0), 4)),
    Preset("transport-violating", "cond1-violating",
           "L=4 ring, k = exp(-tau): g changes sign so G fails, yet the shift mixture stays CP",
           lambda: transport(_exp(1.0, 1.0), 4)),
    Preset("qsm3", "cp-holding", "3-site ring, equal k = exp(-4 tau)",
           _qsm3([(1.0, 4.0)] * 3), 1e-2, 1000),
    Preset("qsm3-threshold", "threshold", "3-site ring, equal k = exp(-2 tau)",
           _qsm3([(1.0, 2.0)] * 3), 1e-2, 1000),
    Preset("qsm3-violating", "cp-violating", "3-site ring, unequal rates 4exp(-8tau), 0.5exp(-8tau), 0.25exp(-8tau)",
           _qsm3([(4.0, 8.0), (0.5, 8.0), (0.25, 8.0)]), 1e-2, 1000),
]

PRESETS: dict[str, Preset] = {p.name: p for p in _PRESET_LIST}


def preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
