"""Sparse operators over truncated multi-mode Fock spaces.

An operator carries a Hilbert-space descriptor listing the bosonic modes
it acts on.  Mixed-space arithmetic first embeds both operands into the
union space; an operator acts as the identity on modes it does not
mention.  Purely scalar quantities live on the empty descriptor as 1x1
matrices and are only promoted when combined with a modal operator, so
static-network algebra stays exact and cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np
import scipy.sparse as sp

from .errors import SpaceError

Scalar = Union[int, float, complex]


@dataclass(frozen=True)
class HilbertSpace:
    """Ordered list of (mode label, dimension); ordering is ascending by label."""

    modes: tuple[tuple[str, int], ...]

    def __post_init__(self):
        labels = [m[0] for m in self.modes]
        if labels != sorted(labels):
            raise SpaceError(f"mode labels must be sorted: {labels}")
        if len(set(labels)) != len(labels):
            raise SpaceError(f"duplicate mode labels: {labels}")
        for label, dim in self.modes:
            if dim < 1:
                raise SpaceError(f"mode '{label}' has non-positive dimension {dim}")

    @classmethod
    def of(cls, *modes: tuple[str, int]) -> "HilbertSpace":
        return cls(tuple(sorted(modes)))

    @property
    def dim(self) -> int:
        return math.prod(d for _, d in self.modes)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.modes)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.modes)

    def mode_dim(self, label: str) -> int:
        for name, dim in self.modes:
            if name == label:
                return dim
        raise SpaceError(f"no mode '{label}' in space {self.labels}")

    def union(self, other: "HilbertSpace") -> "HilbertSpace":
        merged = dict(self.modes)
        for label, dim in other.modes:
            if merged.get(label, dim) != dim:
                raise SpaceError(
                    f"mode '{label}' declared with conflicting dimensions "
                    f"{merged[label]} and {dim}")
            merged[label] = dim
        return HilbertSpace(tuple(sorted(merged.items())))

    def contains(self, other: "HilbertSpace") -> bool:
        have = dict(self.modes)
        return all(have.get(label) == dim for label, dim in other.modes)


TRIVIAL_SPACE = HilbertSpace(())


def union_space(spaces: Iterable[HilbertSpace]) -> HilbertSpace:
    out = TRIVIAL_SPACE
    for s in spaces:
        out = out.union(s)
    return out


class Operator:
    """A square sparse complex matrix tagged with its Hilbert space."""

    __slots__ = ("space", "matrix")

    def __init__(self, space: HilbertSpace, matrix):
        matrix = sp.csr_matrix(matrix, dtype=np.complex128)
        if matrix.shape != (space.dim, space.dim):
            raise SpaceError(
                f"matrix shape {matrix.shape} does not match space dim {space.dim}")
        self.space = space
        self.matrix = matrix

    # -- constructors ----------------------------------------------------

    @classmethod
    def scalar(cls, value: Scalar) -> "Operator":
        # 0 and 1 dominate scattering matrices; operators are immutable,
        # so the two are safe to intern
        value = complex(value)
        cached = _SCALAR_CACHE.get(value)
        if cached is not None:
            return cached
        return cls(TRIVIAL_SPACE, np.array([[value]], dtype=np.complex128))

    @classmethod
    def identity(cls, space: HilbertSpace) -> "Operator":
        return cls(space, sp.identity(space.dim, dtype=np.complex128, format="csr"))

    @classmethod
    def zero(cls, space: HilbertSpace = TRIVIAL_SPACE) -> "Operator":
        if not space.modes:
            return Operator.scalar(0)
        return cls(space, sp.csr_matrix((space.dim, space.dim), dtype=np.complex128))

    # -- space handling --------------------------------------------------

    def promoted(self, space: HilbertSpace) -> "Operator":
        """Embed into a larger space, acting as identity on missing modes."""
        if space == self.space:
            return self
        if not space.contains(self.space):
            raise SpaceError(
                f"cannot promote from {self.space.labels} to {space.labels}")
        own = set(self.space.labels)
        missing = [(label, dim) for label, dim in space.modes if label not in own]
        big = sp.kron(self.matrix,
                      sp.identity(math.prod(d for _, d in missing) if missing else 1,
                                  dtype=np.complex128),
                      format="csr")
        # reorder tensor factors from (own modes, missing modes) to label order
        cur_modes = list(self.space.modes) + missing
        if cur_modes == list(space.modes):
            return Operator(space, big)
        cur_dims = [d for _, d in cur_modes]
        cur_index = {label: i for i, (label, _) in enumerate(cur_modes)}
        perm = [cur_index[label] for label in space.labels]
        flat = np.arange(space.dim)
        coords = np.unravel_index(flat, cur_dims)
        new_flat = np.ravel_multi_index([coords[p] for p in perm], space.dims)
        p_mat = sp.csr_matrix(
            (np.ones(space.dim), (new_flat, flat)), shape=(space.dim, space.dim))
        return Operator(space, p_mat @ big @ p_mat.T)

    @staticmethod
    def _unify(a: "Operator", b: "Operator"):
        space = a.space.union(b.space)
        return a.promoted(space), b.promoted(space), space

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other) -> "Operator":
        other = _coerce(other)
        a, b, space = Operator._unify(self, other)
        return Operator(space, a.matrix + b.matrix)

    __radd__ = __add__

    def __sub__(self, other) -> "Operator":
        other = _coerce(other)
        a, b, space = Operator._unify(self, other)
        return Operator(space, a.matrix - b.matrix)

    def __rsub__(self, other) -> "Operator":
        return _coerce(other) - self

    def __neg__(self) -> "Operator":
        return Operator(self.space, -self.matrix)

    def __mul__(self, other) -> "Operator":
        if isinstance(other, Operator):
            # scalar operands reduce to a matrix scaling, which is exactly
            # the promoted product (v * I) @ M entry for entry
            if not self.space.modes:
                return Operator(other.space, other.matrix * self._value())
            if not other.space.modes:
                return Operator(self.space, self.matrix * other._value())
            a, b, space = Operator._unify(self, other)
            return Operator(space, a.matrix @ b.matrix)
        return Operator(self.space, self.matrix * complex(other))

    def _value(self) -> complex:
        return self.matrix.data[0] if self.matrix.nnz else 0j

    def __rmul__(self, other) -> "Operator":
        return Operator(self.space, self.matrix * complex(other))

    def __matmul__(self, other) -> "Operator":
        return self * other

    def __truediv__(self, other) -> "Operator":
        return Operator(self.space, self.matrix / complex(other))

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T.tocsr())

    # -- queries ----------------------------------------------------------

    def norm_max(self) -> float:
        if self.matrix.nnz == 0:
            return 0.0
        return float(np.max(np.abs(self.matrix.data)))

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.norm_max() <= tol

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return (self - self.dag()).norm_max() <= tol

    def max_abs_diff(self, other: "Operator") -> float:
        return (self - other).norm_max()

    def allclose(self, other: "Operator", tol: float = 1e-12) -> bool:
        return self.max_abs_diff(other) <= tol

    def same_entries(self, other: "Operator") -> bool:
        """Exact entrywise equality after unifying spaces."""
        a, b, _ = Operator._unify(self, other)
        diff = (a.matrix - b.matrix).tocsr()
        diff.eliminate_zeros()
        return diff.nnz == 0

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def scalar_value(self) -> complex:
        if self.space is not TRIVIAL_SPACE and self.space.modes:
            raise SpaceError("operator is not scalar")
        return complex(self.matrix.toarray()[0, 0])

    def __repr__(self) -> str:
        return f"Operator(space={self.space.labels}, nnz={self.matrix.nnz})"


_SCALAR_CACHE: dict = {}
_SCALAR_CACHE[0j] = Operator(TRIVIAL_SPACE, np.zeros((1, 1), dtype=np.complex128))
_SCALAR_CACHE[1 + 0j] = Operator(TRIVIAL_SPACE, np.ones((1, 1), dtype=np.complex128))


def _coerce(value) -> Operator:
    if isinstance(value, Operator):
        return value
    return Operator.scalar(value)


def destroy(label: str, dim: int) -> Operator:
    """Truncated annihilation operator: <n|a|n+1> = sqrt(n+1)."""
    if dim < 1:
        raise SpaceError(f"mode dimension must be >= 1, got {dim}")
    space = HilbertSpace.of((label, dim))
    data = np.sqrt(np.arange(1, dim, dtype=float))
    return Operator(space, sp.diags(data, offsets=1, format="csr",
                                    dtype=np.complex128))


def create(label: str, dim: int) -> Operator:
    return destroy(label, dim).dag()


def number(label: str, dim: int) -> Operator:
    space = HilbertSpace.of((label, dim))
    return Operator(space, sp.diags(np.arange(dim, dtype=float), format="csr",
                                    dtype=np.complex128))


def imag_part(op: Operator) -> Operator:
    """Operator imaginary part (A - A^dag) / 2i; Hermitian by construction."""
    return (op - op.dag()) * (-0.5j)


def sparse_op_to_json(op: Operator, space: HilbertSpace) -> dict:
    """Serialize on the given space: 0-based entries sorted row-major."""
    mat = op.promoted(space).matrix.tocoo()
    order = np.lexsort((mat.col, mat.row))
    entries = [[int(mat.row[i]), int(mat.col[i]),
                float(mat.data[i].real), float(mat.data[i].imag)]
               for i in order if mat.data[i] != 0]
    d = space.dim
    return {"shape": [d, d], "entries": entries}


def sparse_op_from_json(obj: dict, space: HilbertSpace) -> Operator:
    d = space.dim
    shape = tuple(obj["shape"])
    if shape != (d, d):
        raise SpaceError(f"operator shape {shape} does not match space dim {d}")
    entries = obj["entries"]
    if entries:
        rows = [e[0] for e in entries]
        cols = [e[1] for e in entries]
        vals = [complex(e[2], e[3]) for e in entries]
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(d, d), dtype=np.complex128)
    else:
        mat = sp.csr_matrix((d, d), dtype=np.complex128)
    return Operator(space, mat)
