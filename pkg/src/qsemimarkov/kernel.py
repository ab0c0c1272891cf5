"""Memory kernels of quantum semi-Markov type.

A kernel acts on density matrices as::

    K(tau) rho = -i[H(tau), rho]
                 + sum_a  A_a(tau) rho A_a(tau)^+  -  {A_a(tau)^+ A_a(tau), rho}/2

with a diagonal Hamiltonian ``H(tau) = sum_n eps_n(tau) |n><n|`` and
separable channel operators ``A_a(tau) = sqrt(c_a(tau)) M_a``.  The spec is
solvable in closed form for the coherence-free part when the loss operator
``sum_a A_a^+ A_a`` is diagonal in the same basis; its diagonal entries are the
loss rates ``k_n(tau)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import superop
from .functions import ComplexRate, ScalarFn, TimeGrid, combine

__all__ = [
    "SpecError",
    "NonDiagonalLossTerm",
    "NegativeRate",
    "ClassicalAnnotationError",
    "JumpChannel",
    "ClassicalAnnotation",
    "KernelSpec",
    "ValidationResult",
    "validate_spec",
    "loss_rates",
    "complex_rates",
    "superop_terms",
    "kernel_superop_at",
    "jump_weights",
    "populations_closed",
    "qsm_structure",
    "spec_to_dict",
    "spec_from_dict",
    "load_spec",
    "dump_spec",
]

DIAGONAL_RTOL = 1e-12


class SpecError(ValueError):
    """A kernel spec falls outside the supported class."""


class NonDiagonalLossTerm(SpecError):
    pass


class NegativeRate(SpecError):
    pass


class ClassicalAnnotationError(SpecError):
    pass


@dataclass(frozen=True, eq=False)
class JumpChannel:
    """Channel operator ``sqrt(profile(tau)) * matrix``."""

    matrix: np.ndarray
    profile: ScalarFn

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise SpecError(f"channel matrix must be square, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True, eq=False)
class ClassicalAnnotation:
    """Jump probabilities ``pi[n, m]`` (site m -> site n) and per-site rates."""

    pi: np.ndarray
    k: tuple

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float)
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "k", tuple(self.k))

    def check(self, atol: float = 1e-12):
        pi = self.pi
        if pi.ndim != 2 or pi.shape[0] != pi.shape[1] or pi.shape[0] != len(self.k):
            raise ClassicalAnnotationError("pi must be square and match the number of rates")
        if np.any(pi < 0):
            raise ClassicalAnnotationError("jump probabilities must be nonnegative")
        cols = pi.sum(axis=0)
        for m, s in enumerate(cols):
            if abs(s - 1.0) > atol and not self.k[m].is_zero:
                raise ClassicalAnnotationError(f"column {m} of pi sums to {s}, not 1")


@dataclass(frozen=True, eq=False)
class KernelSpec:
    dimension: int
    epsilon: tuple
    channels: tuple = ()
    basis_labels: tuple | None = None
    classical: ClassicalAnnotation | None = None

    def __post_init__(self):
        d = self.dimension
        eps = tuple(self.epsilon) if self.epsilon is not None else ()
        if not eps:
            eps = (ScalarFn.zero(),) * d
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "channels", tuple(self.channels))
        labels = self.basis_labels
        object.__setattr__(self, "basis_labels",
                           tuple(str(x) for x in labels) if labels is not None else tuple(str(n) for n in range(d)))
        if len(eps) != d:
            raise SpecError(f"need {d} energy profiles, got {len(eps)}")
        if len(self.basis_labels) != d:
            raise SpecError("basis_labels length does not match dimension")
        for ch in self.channels:
            if ch.matrix.shape != (d, d):
                raise SpecError(f"channel matrix shape {ch.matrix.shape} does not match dimension {d}")

    def label_index(self, label) -> int:
        if isinstance(label, (int, np.integer)):
            return int(label)
        label = str(label)
        if label in self.basis_labels:
            return self.basis_labels.index(label)
        return int(label)


@dataclass
class ValidationResult:
    ok: bool
    loss: np.ndarray = field(repr=False)  # (d, N+1) samples of k_n on the grid
    max_offdiagonal: float = 0.0


def _loss_matrices(spec: KernelSpec) -> list[np.ndarray]:
    return [ch.matrix.conj().T @ ch.matrix for ch in spec.channels]


def loss_rates(spec: KernelSpec) -> list:
    """Diagonal loss functions ``k_n = sum_a c_a (M_a^+ M_a)_nn`` as profiles."""
    mats = _loss_matrices(spec)
    return [combine((float(mm[n, n].real), ch.profile) for mm, ch in zip(mats, spec.channels))
            for n in range(spec.dimension)]


def complex_rates(spec: KernelSpec) -> list[ComplexRate]:
    return [ComplexRate(k, e) for k, e in zip(loss_rates(spec), spec.epsilon)]


def validate_spec(spec: KernelSpec, grid: TimeGrid) -> ValidationResult:
    """Check the structural assumptions on every grid point.

    Raises :class:`NegativeRate` if a channel profile or loss rate goes
    negative, :class:`NonDiagonalLossTerm` if the loss operator has
    off-diagonal entries beyond ``1e-12`` times its largest diagonal entry, and
    :class:`ClassicalAnnotationError` if a classical block is inconsistent with
    the channels.
    """
    if spec.dimension < 2:
        raise SpecError("dimension must be at least 2")
    d = spec.dimension
    times = grid.times
    total = np.zeros((len(times), d, d), dtype=complex)
    for ch, mm in zip(spec.channels, _loss_matrices(spec)):
        c = ch.profile.sample(grid)
        if np.any(c < 0):
            j = int(np.argmax(c < 0))
            raise NegativeRate(f"channel profile negative at tau={times[j]:.6g}")
        total += c[:, None, None] * mm[None]
    diag = np.einsum("jnn->jn", total).real
    off = total - np.einsum("jn,nm->jnm", np.einsum("jnn->jn", total), np.eye(d))
    offmax = np.abs(off).max(axis=(1, 2))
    scale = np.abs(diag).max(axis=1)
    bad = offmax > DIAGONAL_RTOL * scale
    bad &= offmax > 0
    if np.any(bad):
        j = int(np.argmax(bad))
        raise NonDiagonalLossTerm(
            f"loss operator off-diagonal {offmax[j]:.3g} at tau={times[j]:.6g} "
            f"(diagonal scale {scale[j]:.3g})")
    if np.any(diag < 0):
        j, n = np.argwhere(diag < 0)[0]
        raise NegativeRate(f"k_{n} negative at tau={times[j]:.6g}")
    if spec.classical is not None:
        _check_classical(spec, grid)
    return ValidationResult(True, diag.T.copy(), float(offmax.max(initial=0.0)))


def jump_weights(spec: KernelSpec, grid: TimeGrid) -> np.ndarray:
    """``W[j, n, m] = sum_a |<n|A_a(t_j)|m>|^2`` on the grid."""
    d = spec.dimension
    w = np.zeros((len(grid), d, d))
    for ch in spec.channels:
        w += ch.profile.sample(grid)[:, None, None] * np.abs(ch.matrix)[None] ** 2
    return w


def populations_closed(spec: KernelSpec, grid: TimeGrid, rtol: float = 1e-10) -> bool:
    """True when populations obey a closed generalized master equation, i.e.
    ``<n|B(tau) rho|n>`` depends on the diagonal of rho alone."""
    d = spec.dimension
    cross = np.zeros((len(grid), d, d, d), dtype=complex)
    for ch in spec.channels:
        m = ch.matrix
        # cross[n, a, b] = M_na conj(M_nb)
        cross += ch.profile.sample(grid)[:, None, None, None] * np.einsum("na,nb->nab", m, m.conj())[None]
    scale = np.abs(cross).max(initial=0.0)
    mask = ~np.eye(d, dtype=bool)
    return bool(np.abs(cross[:, :, mask]).max(initial=0.0) <= rtol * max(scale, 1e-300))


def _check_classical(spec: KernelSpec, grid: TimeGrid):
    ann = spec.classical
    ann.check()
    if not populations_closed(spec, grid):
        raise ClassicalAnnotationError("classical block given but populations are not closed")
    w = jump_weights(spec, grid)
    kk = np.stack([k.sample(grid) for k in ann.k], axis=1)
    expected = ann.pi[None] * kk[:, None, :]
    # self-jumps (pi_mm) are invisible to the population equation
    mask = ~np.eye(spec.dimension, dtype=bool)
    err = np.abs(w - expected)[:, mask].max(initial=0.0)
    scale = max(np.abs(expected).max(initial=0.0), 1.0)
    if err > 1e-10 * scale:
        raise ClassicalAnnotationError(f"jump weights disagree with pi*k by {err:.3g}")


def qsm_structure(spec: KernelSpec, grid: TimeGrid):
    """Return ``(pi, k_profiles)`` if the spec belongs to the diagonal
    semi-Markov class (every channel is a single matrix unit), else None."""
    d = spec.dimension
    for ch in spec.channels:
        if np.count_nonzero(np.abs(ch.matrix) > 0) > 1:
            return None
    if spec.classical is not None:
        return spec.classical.pi, spec.classical.k
    k = loss_rates(spec)
    w = jump_weights(spec, grid)
    kk = np.stack([f.sample(grid) for f in k], axis=1)  # (N+1, d)
    pi = np.zeros((d, d))
    for m in range(d):
        if not np.any(kk[:, m] > 0):
            pi[m, m] = 1.0
            continue
        j = int(np.argmax(kk[:, m]))
        pi[:, m] = w[j, :, m] / kk[j, m]
        if np.abs(w[:, :, m] - pi[None, :, m] * kk[:, m, None]).max() > 1e-10 * kk[j, m]:
            return None  # W_nm does not factorize as pi_nm k_m
    return pi, tuple(k)


def superop_terms(spec: KernelSpec, part: str = "full") -> list[tuple[object, np.ndarray]]:
    """Kernel as ``[(profile, constant d^2 x d^2 matrix), ...]``.

    ``part`` selects the full kernel, the jump part ``B`` (``"jump"``) or the
    remainder ``C = K - B`` (``"no-jump"``).
    """
    d = spec.dimension
    terms = []
    if part in ("full", "no-jump"):
        for n, eps in enumerate(spec.epsilon):
            if eps.is_zero:
                continue
            proj = np.zeros((d, d))
            proj[n, n] = 1.0
            terms.append((eps, superop.commutator(proj)))
    for ch in spec.channels:
        if ch.profile.is_zero:
            continue
        if part == "full":
            terms.append((ch.profile, superop.dissipator(ch.matrix)))
        elif part == "jump":
            terms.append((ch.profile, superop.sandwich(ch.matrix)))
        elif part == "no-jump":
            mm = ch.matrix.conj().T @ ch.matrix
            terms.append((ch.profile, -0.5 * (superop.left(mm) + superop.right(mm))))
        else:
            raise ValueError(f"unknown kernel part {part!r}")
    return terms


def kernel_superop_at(spec: KernelSpec, tau: float, part: str = "full") -> np.ndarray:
    """Matrix of the kernel at lag ``tau`` acting on column-stacked states."""
    if tau < 0:
        raise ValueError("kernel is defined for tau >= 0 only")
    m = spec.dimension ** 2
    out = np.zeros((m, m), dtype=complex)
    for profile, mat in superop_terms(spec, part):
        out += profile(tau) * mat
    return out


# --- spec files -------------------------------------------------------------

def _matrix_to_json(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m, dtype=complex)]


def _matrix_from_json(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)


def spec_to_dict(spec: KernelSpec) -> dict:
    out = {
        "dimension": spec.dimension,
        "basis_labels": list(spec.basis_labels),
        "epsilon": [e.to_dict() for e in spec.epsilon],
        "channels": [{"matrix": _matrix_to_json(ch.matrix), "profile": ch.profile.to_dict()}
                     for ch in spec.channels],
    }
    if spec.classical is not None:
        out["classical"] = {"pi": spec.classical.pi.tolist(),
                            "k": [f.to_dict() for f in spec.classical.k]}
    return out


def spec_from_dict(data: dict) -> KernelSpec:
    try:
        d = int(data["dimension"])
        eps = [ScalarFn.from_dict(e) for e in data.get("epsilon", [])]
        channels = [JumpChannel(_matrix_from_json(c["matrix"]), ScalarFn.from_dict(c["profile"]))
                    for c in data.get("channels", [])]
        classical = None
        if data.get("classical") is not None:
            cl = data["classical"]
            classical = ClassicalAnnotation(np.array(cl["pi"], dtype=float),
                                            [ScalarFn.from_dict(k) for k in cl["k"]])
        return KernelSpec(d, eps, channels, data.get("basis_labels"), classical)
    except (KeyError, TypeError) as exc:
        raise SpecError(f"malformed spec document: {exc}") from exc


def load_spec(path) -> KernelSpec:
    return spec_from_dict(json.loads(Path(path).read_text()))


def dump_spec(spec: KernelSpec, path) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2) + "\n")
