"""Operators on the truncated quantum dot x V-mode x H-mode Hilbert space.

The composite space is ordered QD (slowest) then cavity mode V then cavity
mode H (fastest), row-major, so that the basis index of ``|q, n_V, n_H>`` is::

    index = (q * (n_max_v + 1) + n_V) * (n_max_h + 1) + n_H

with the three QD levels in the order ``|G>, |V>, |H>``. All matrices are
dense complex arrays; the largest spaces used here have a few hundred states.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

QD = "qd"
MODE_V = "V"
MODE_H = "H"

Subsystem = Literal["qd", "V", "H"]

_QD_LEVELS = {"G": 0, "V": 1, "H": 2}


class DimensionError(ValueError):
    """Raised when operator or state dimensions are inconsistent."""


@dataclass(frozen=True)
class SpaceDescriptor:
    """Truncation of the three-factor space.

    Parameters
    ----------
    n_max_v, n_max_h : int
        Highest Fock number kept in the V and H cavity modes.
    """

    n_max_v: int = 4
    n_max_h: int = 2
    qd_dim: int = field(default=3, init=False)

    def __post_init__(self):
        if int(self.n_max_v) < 1 or int(self.n_max_h) < 1:
            raise DimensionError(
                f"Fock truncations must be >= 1, got n_max_v={self.n_max_v}, "
                f"n_max_h={self.n_max_h}"
            )

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.qd_dim, self.n_max_v + 1, self.n_max_h + 1)

    @property
    def total_dim(self) -> int:
        q, v, h = self.dims
        return q * v * h

    def index(self, qd: int | str, n_v: int, n_h: int) -> int:
        """Basis index of ``|qd, n_v, n_h>``."""
        if isinstance(qd, str):
            qd = _QD_LEVELS[qd]
        q, v, h = self.dims
        if not (0 <= qd < q and 0 <= n_v < v and 0 <= n_h < h):
            raise DimensionError(f"state ({qd}, {n_v}, {n_h}) outside {self.dims}")
        return (qd * v + n_v) * h + n_h

    def labels(self, index: int) -> tuple[int, int, int]:
        """Inverse of :meth:`index`."""
        return tuple(int(i) for i in np.unravel_index(index, self.dims))

    def basis_state(self, qd: int | str, n_v: int = 0, n_h: int = 0) -> np.ndarray:
        ket = np.zeros(self.total_dim, dtype=complex)
        ket[self.index(qd, n_v, n_h)] = 1.0
        return ket

    def projector(self, qd: int | str, n_v: int = 0, n_h: int = 0) -> np.ndarray:
        ket = self.basis_state(qd, n_v, n_h)
        return np.outer(ket, ket.conj())

    def ground_state(self) -> np.ndarray:
        """Density matrix of ``|G> x |0> x |0>``."""
        return self.projector("G", 0, 0)


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense operator bound to a :class:`SpaceDescriptor`.

    ``is_hermitian`` is advisory; when set it is checked on construction.
    """

    space: SpaceDescriptor
    matrix: np.ndarray
    is_hermitian: bool = False

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.space.total_dim
        if m.shape != (n, n):
            raise DimensionError(f"matrix shape {m.shape} does not match space dim {n}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.is_hermitian and np.max(np.abs(m - m.conj().T), initial=0.0) >= 1e-12:
            raise ValueError("operator flagged Hermitian but M != M^dagger")

    @property
    def dag(self) -> Operator:
        return Operator(self.space, self.matrix.conj().T, self.is_hermitian)

    def _other(self, other):
        if isinstance(other, Operator):
            if other.space != self.space:
                raise DimensionError("operators live on different spaces")
            return other.matrix
        return None

    def __matmul__(self, other):
        m = self._other(other)
        if m is None:
            return self.matrix @ other
        return Operator(self.space, self.matrix @ m)

    def __add__(self, other):
        m = self._other(other)
        if m is None:
            return NotImplemented
        herm = self.is_hermitian and other.is_hermitian
        return Operator(self.space, self.matrix + m, herm)

    def __sub__(self, other):
        m = self._other(other)
        if m is None:
            return NotImplemented
        herm = self.is_hermitian and other.is_hermitian
        return Operator(self.space, self.matrix - m, herm)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        herm = self.is_hermitian and np.isreal(scalar)
        return Operator(self.space, self.matrix * scalar, bool(herm))

    __rmul__ = __mul__

    def __neg__(self):
        return Operator(self.space, -self.matrix, self.is_hermitian)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))

    def commutator(self, other: Operator) -> Operator:
        return self @ other - other @ self

    def to_csv(self, path, tol: float = 0.0) -> None:
        """Write nonzero entries as ``row, col, re, im`` triples."""
        rows, cols = np.nonzero(np.abs(self.matrix) > tol)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "col", "re", "im"])
            for r, c in zip(rows, cols):
                z = self.matrix[r, c]
                writer.writerow([int(r), int(c), repr(float(z.real)), repr(float(z.imag))])

    @classmethod
    def from_csv(cls, path, space: SpaceDescriptor) -> Operator:
        m = np.zeros((space.total_dim, space.total_dim), dtype=complex)
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                m[int(rec["row"]), int(rec["col"])] = complex(float(rec["re"]), float(rec["im"]))
        return cls(space, m)


def annihilation(n_max: int) -> np.ndarray:
    """Single-mode lowering operator truncated at ``n_max`` photons."""
    if int(n_max) != n_max or n_max < 1:
        raise DimensionError(f"n_max must be an integer >= 1, got {n_max!r}")
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1).astype(complex)


def subsystem_dim(space: SpaceDescriptor, which: Subsystem) -> int:
    try:
        return space.dims[(QD, MODE_V, MODE_H).index(which)]
    except ValueError:
        raise DimensionError(f"unknown subsystem {which!r}") from None


def embed(op: np.ndarray, which: Subsystem, space: SpaceDescriptor) -> Operator:
    """Tensor ``op`` with identities on the other two factors."""
    op = np.asarray(op, dtype=complex)
    d = subsystem_dim(space, which)
    if op.shape != (d, d):
        raise DimensionError(f"{which} operator must be {d}x{d}, got {op.shape}")
    factors = [np.eye(n, dtype=complex) for n in space.dims]
    factors[(QD, MODE_V, MODE_H).index(which)] = op
    full = np.kron(np.kron(factors[0], factors[1]), factors[2])
    herm = bool(np.allclose(op, op.conj().T, atol=1e-14, rtol=0))
    return Operator(space, full, herm)


def identity(space: SpaceDescriptor) -> Operator:
    return Operator(space, np.eye(space.total_dim, dtype=complex), True)


def mode_lowering(space: SpaceDescriptor, mode: Literal["V", "H"]) -> Operator:
    if mode not in (MODE_V, MODE_H):
        raise ValueError(f"mode must be 'V' or 'H', got {mode!r}")
    n_max = space.n_max_v if mode == MODE_V else space.n_max_h
    return embed(annihilation(n_max), mode, space)


def qd_lowering(space: SpaceDescriptor, polarization: Literal["V", "H"]) -> Operator:
    """``|G><V|`` or ``|G><H|`` on the full space."""
    if polarization not in (MODE_V, MODE_H):
        raise ValueError(f"polarization must be 'V' or 'H', got {polarization!r}")
    s = np.zeros((3, 3), dtype=complex)
    s[_QD_LEVELS["G"], _QD_LEVELS[polarization]] = 1.0
    return embed(s, QD, space)


def number(space: SpaceDescriptor, mode: Literal["V", "H"]) -> Operator:
    a = mode_lowering(space, mode)
    return Operator(space, a.dag.matrix @ a.matrix, True)


def exciton_population(space: SpaceDescriptor, polarization: Literal["V", "H"] | None = None) -> Operator:
    """``sigma^dag sigma`` for one polarization, or the sum of both when None."""
    pols = (MODE_V, MODE_H) if polarization is None else (polarization,)
    m = sum(
        qd_lowering(space, p).dag.matrix @ qd_lowering(space, p).matrix for p in pols
    )
    return Operator(space, m, True)


def expectation(op: Operator | np.ndarray, rho: np.ndarray) -> complex:
    """``Tr(op rho)``.

    ``rho`` may be a single matrix or a stack of shape ``(T, d, d)``.
    """
    m = op.matrix if isinstance(op, Operator) else np.asarray(op)
    rho = np.asarray(rho)
    if rho.shape[-2:] != m.shape:
        raise DimensionError(f"state shape {rho.shape} incompatible with operator {m.shape}")
    # Tr(A B) = sum_ij A_ij B_ji
    return np.einsum("ij,...ji->...", m, rho)
