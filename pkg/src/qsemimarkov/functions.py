"""Scalar time profiles and uniform time grids.

Every memory-kernel ingredient (loss rates, energies, channel profiles) is a
real function of the lag ``tau >= 0``.  Three representations are supported:

* ``constant``         f(tau) = c
* ``exponential-sum``  f(tau) = sum_j a_j exp(-gamma_j tau),  gamma_j >= 0
* ``tabulated``        uniform samples, linear interpolation, zero beyond the
                       last sample

Exponential sums are kept symbolic so that the Volterra solver can use an O(N)
history recursion and the Laplace inversion path can build rational transforms.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ScalarFn",
    "CombinedFn",
    "ComplexRate",
    "TimeGrid",
    "combine",
]

TAGS = ("constant", "exponential-sum", "tabulated")


def _check_lags(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("kernel functions are defined for tau >= 0 only")
    return tau


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_j = j*h``, ``j = 0..steps``."""

    h: float
    steps: int

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"grid step must be positive, got {self.h}")
        if self.steps < 1:
            raise ValueError(f"grid needs at least one step, got {self.steps}")

    @classmethod
    def from_horizon(cls, horizon: float, h: float) -> "TimeGrid":
        steps = int(round(horizon / h))
        if not np.isclose(steps * h, horizon, rtol=1e-9, atol=1e-12):
            raise ValueError(f"horizon {horizon} is not a multiple of h={h}")
        return cls(h, steps)

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(self.steps + 1)

    @property
    def horizon(self) -> float:
        return self.h * self.steps

    def __len__(self):
        return self.steps + 1

    def index_of(self, t: float) -> int:
        """Index of the grid point equal to ``t`` (raises if ``t`` is off-grid)."""
        j = int(round(t / self.h))
        if not (0 <= j <= self.steps) or not np.isclose(j * self.h, t, rtol=1e-9, atol=1e-12):
            raise ValueError(f"t={t} is not a point of {self}")
        return j

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.h / factor, self.steps * factor)


@dataclass(frozen=True)
class ScalarFn:
    """Real scalar function of the lag, tagged by representation.

    Use the constructors :meth:`constant`, :meth:`exponential`,
    :meth:`exponential_sum` and :meth:`tabulated` rather than calling the
    class directly.
    """

    tag: str
    value: float = 0.0
    terms: tuple[tuple[float, float], ...] = ()
    values: tuple[float, ...] = ()
    step: float = 0.0

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown ScalarFn tag {self.tag!r}")
        if self.tag == "exponential-sum":
            for a, rate in self.terms:
                if rate < 0:
                    raise ValueError(f"decay rates must be nonnegative, got {rate}")
        if self.tag == "tabulated":
            if not self.step > 0:
                raise ValueError("tabulated grid step must be positive")
            if len(self.values) == 0:
                raise ValueError("tabulated function needs at least one sample")

    # constructors -----------------------------------------------------------
    @classmethod
    def constant(cls, value: float) -> "ScalarFn":
        return cls("constant", value=float(value))

    @classmethod
    def zero(cls) -> "ScalarFn":
        return cls.constant(0.0)

    @classmethod
    def exponential(cls, amplitude: float, rate: float) -> "ScalarFn":
        """``amplitude * exp(-rate * tau)``."""
        return cls.exponential_sum([(amplitude, rate)])

    @classmethod
    def exponential_sum(cls, terms: Iterable[tuple[float, float]]) -> "ScalarFn":
        terms = tuple((float(a), float(g)) for a, g in terms)
        return cls("exponential-sum", terms=terms)

    @classmethod
    def tabulated(cls, values: Sequence[float], step: float) -> "ScalarFn":
        return cls("tabulated", values=tuple(float(v) for v in values), step=float(step))

    # evaluation -------------------------------------------------------------
    def __call__(self, tau):
        tau = _check_lags(tau)
        if self.tag == "constant":
            return np.full(tau.shape, self.value) if tau.ndim else float(self.value)
        if self.tag == "exponential-sum":
            out = np.zeros(tau.shape)
            for a, rate in self.terms:
                out = out + a * np.exp(-rate * tau)
            return out if tau.ndim else float(out)
        table = np.asarray(self.values)
        nodes = self.step * np.arange(table.size)
        out = np.interp(tau, nodes, table, right=0.0)
        # np.interp returns the last value at the last node exactly; beyond it is zero
        return out if tau.ndim else float(out)

    def sample(self, grid: TimeGrid) -> np.ndarray:
        return np.asarray(self(grid.times), dtype=float)

    def exponential_modes(self) -> list[tuple[complex, float]] | None:
        """``[(amplitude, rate), ...]`` or None for tabulated data."""
        if self.tag == "constant":
            return [(self.value, 0.0)] if self.value != 0 else []
        if self.tag == "exponential-sum":
            return [(a, g) for a, g in self.terms if a != 0]
        return None

    @property
    def is_zero(self) -> bool:
        if self.tag == "constant":
            return self.value == 0
        if self.tag == "exponential-sum":
            return all(a == 0 for a, _ in self.terms)
        return not np.any(np.asarray(self.values))

    def scaled(self, c: float) -> "ScalarFn":
        if self.tag == "constant":
            return ScalarFn.constant(c * self.value)
        if self.tag == "exponential-sum":
            return ScalarFn.exponential_sum([(c * a, g) for a, g in self.terms])
        return ScalarFn.tabulated([c * v for v in self.values], self.step)

    # serialization ----------------------------------------------------------
    def to_dict(self) -> dict:
        if self.tag == "constant":
            return {"type": "constant", "value": self.value}
        if self.tag == "exponential-sum":
            return {"type": "exponential-sum", "terms": [list(t) for t in self.terms]}
        return {"type": "tabulated", "step": self.step, "values": list(self.values)}

    @classmethod
    def from_dict(cls, data) -> "ScalarFn":
        if isinstance(data, (int, float)):
            return cls.constant(data)
        kind = data.get("type")
        if kind == "constant":
            return cls.constant(data["value"])
        if kind == "exponential-sum":
            return cls.exponential_sum(data["terms"])
        if kind == "tabulated":
            return cls.tabulated(data["values"], data["step"])
        raise ValueError(f"unknown ScalarFn type {kind!r}")


@dataclass(frozen=True)
class CombinedFn:
    """Linear combination of ScalarFns that has no single tagged form
    (e.g. a tabulated profile plus an exponential)."""

    parts: tuple[tuple[float, ScalarFn], ...]

    def __call__(self, tau):
        tau = _check_lags(tau)
        out = sum(w * np.asarray(f(tau)) for w, f in self.parts)
        return out if tau.ndim else float(out)

    def sample(self, grid: TimeGrid) -> np.ndarray:
        return np.asarray(self(grid.times), dtype=float)

    def exponential_modes(self):
        return None

    @property
    def is_zero(self) -> bool:
        return all(w == 0 or f.is_zero for w, f in self.parts)


def combine(pairs: Iterable[tuple[float, ScalarFn]]):
    """Return ``sum_i w_i f_i`` in the simplest representation available."""
    flat = []
    for w, f in pairs:
        if isinstance(f, CombinedFn):
            flat.extend((w * v, g) for v, g in f.parts)
        else:
            flat.append((w, f))
    pairs = [(float(w), f) for w, f in flat if w != 0 and not f.is_zero]
    if not pairs:
        return ScalarFn.zero()
    tags = {f.tag for _, f in pairs}
    if tags == {"constant"}:
        return ScalarFn.constant(sum(w * f.value for w, f in pairs))
    if "tabulated" not in tags:
        acc: dict[float, float] = {}
        for w, f in pairs:
            for a, rate in f.exponential_modes():
                acc[rate] = acc.get(rate, 0.0) + w * a
        return ScalarFn.exponential_sum(sorted(((a, g) for g, a in acc.items()), key=lambda t: t[1]))
    if tags == {"tabulated"} and len({f.step for _, f in pairs}) == 1:
        n = max(len(f.values) for _, f in pairs)
        total = np.zeros(n)
        for w, f in pairs:
            total[: len(f.values)] += w * np.asarray(f.values)
        return ScalarFn.tabulated(total, pairs[0][1].step)
    return CombinedFn(tuple(pairs))


@dataclass(frozen=True)
class ComplexRate:
    """``z(tau) = k(tau)/2 + i*eps(tau)`` stored as the real pair (k, eps)."""

    k: ScalarFn | CombinedFn
    eps: ScalarFn | CombinedFn

    def __call__(self, tau):
        return 0.5 * np.asarray(self.k(tau)) + 1j * np.asarray(self.eps(tau))

    def conj(self) -> "ComplexRate":
        return ComplexRate(self.k, _negated(self.eps))

    def __add__(self, other: "ComplexRate") -> "ComplexRate":
        return ComplexRate(combine([(1.0, self.k), (1.0, other.k)]),
                           combine([(1.0, self.eps), (1.0, other.eps)]))

    def exponential_modes(self) -> list[tuple[complex, float]] | None:
        mk, me = self.k.exponential_modes(), self.eps.exponential_modes()
        if mk is None or me is None:
            return None
        acc: dict[float, complex] = {}
        for a, g in mk:
            acc[g] = acc.get(g, 0.0) + 0.5 * a
        for a, g in me:
            acc[g] = acc.get(g, 0.0) + 1j * a
        return [(a, g) for g, a in sorted(acc.items()) if a != 0]


def _negated(f):
    return combine([(-1.0, f)]) if not f.is_zero else ScalarFn.zero()
