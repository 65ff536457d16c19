"""SLH triplets and the composition rules of the circuit algebra.

A component with n input/output channels is described by (S, L, H): an
n x n matrix of scattering operators, an n-vector of coupling operators
and a Hamiltonian.  Networks are built from three operations:
concatenation (parallel adjoining), the series product (all outputs of
one system feed the next) and feedback (one output routed back into one
input, removing a channel).
"""

from __future__ import annotations

import warnings
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import circuit
from .errors import EvaluationError, ModelError, SingularFeedbackError, SpaceError
from .operators import (
    HilbertSpace,
    Operator,
    TRIVIAL_SPACE,
    destroy,
    imag_part,
    sparse_op_from_json,
    sparse_op_to_json,
    union_space,
)

# residuals up to UNITARITY_TOL pass silently; up to WARN_TOL only warn,
# to tolerate truncation artifacts of modal scattering entries
UNITARITY_TOL = 1e-10
WARN_TOL = 1e-6
SINGULARITY_TOL = 1e-10


class ModelWarning(UserWarning):
    pass


def _as_operator(value) -> Operator:
    return value if isinstance(value, Operator) else Operator.scalar(value)


class SLHTriplet:
    """Immutable (S, L, H) model; invariants are checked on construction."""

    __slots__ = ("S", "L", "H")

    def __init__(self, S, L, H, *, check: bool = True):
        self.L = tuple(_as_operator(x) for x in L)
        n = len(self.L)
        rows = tuple(tuple(_as_operator(x) for x in row) for row in S)
        if len(rows) != n or any(len(row) != n for row in rows):
            raise ModelError(f"scattering matrix must be {n}x{n}")
        self.S = rows
        self.H = _as_operator(H)
        if check:
            self._check()

    @property
    def n(self) -> int:
        return len(self.L)

    @property
    def space(self) -> HilbertSpace:
        spaces = [self.H.space]
        spaces.extend(op.space for op in self.L)
        spaces.extend(op.space for row in self.S for op in row)
        return union_space(spaces)

    def unitarity_residual(self) -> float:
        n = self.n
        scalar = _scalar_matrix(self.S)
        if scalar is not None:
            eye = np.eye(n)
            return float(max(
                np.max(np.abs(scalar.conj().T @ scalar - eye)),
                np.max(np.abs(scalar @ scalar.conj().T - eye))))
        worst = 0.0
        for prod in (_op_mat_mul(_op_mat_dag(self.S), self.S),
                     _op_mat_mul(self.S, _op_mat_dag(self.S))):
            for i in range(n):
                for j in range(n):
                    expect = Operator.scalar(1 if i == j else 0)
                    worst = max(worst, prod[i][j].max_abs_diff(expect))
        return worst

    def hermiticity_residual(self) -> float:
        return (self.H - self.H.dag()).norm_max()

    def _check(self):
        if self.n:
            res_u = self.unitarity_residual()
            if res_u > WARN_TOL:
                raise ModelError(f"scattering matrix not unitary: residual {res_u:.3e}")
            if res_u > UNITARITY_TOL:
                warnings.warn(f"scattering unitarity residual {res_u:.3e}",
                              ModelWarning, stacklevel=3)
        res_h = self.hermiticity_residual()
        if res_h > WARN_TOL:
            raise ModelError(f"Hamiltonian not Hermitian: residual {res_h:.3e}")
        if res_h > UNITARITY_TOL:
            warnings.warn(f"Hamiltonian Hermiticity residual {res_h:.3e}",
                          ModelWarning, stacklevel=3)

    def max_abs_diff(self, other: "SLHTriplet") -> float:
        if self.n != other.n:
            raise ModelError("cannot compare triplets of different channel count")
        worst = self.H.max_abs_diff(other.H)
        for a, b in zip(self.L, other.L):
            worst = max(worst, a.max_abs_diff(b))
        for ra, rb in zip(self.S, other.S):
            for a, b in zip(ra, rb):
                worst = max(worst, a.max_abs_diff(b))
        return worst

    def __repr__(self) -> str:
        return f"SLHTriplet(n={self.n}, space={self.space.labels})"


# -- operator-matrix helpers -------------------------------------------------
#
# Scattering matrices are very often purely scalar (trivial-space entries);
# those take a fast path through plain numpy arrays.  The arithmetic is the
# same complex multiply-adds either way.

def _scalar_matrix(mat) -> np.ndarray | None:
    if any(op.space.modes for row in mat for op in row):
        return None
    n = len(mat)
    out = np.empty((n, n), dtype=np.complex128)
    for i in range(n):
        for j in range(n):
            m = mat[i][j].matrix
            out[i, j] = m.data[0] if m.nnz else 0.0
    return out


def _wrap_scalar_matrix(values: np.ndarray):
    return tuple(tuple(Operator.scalar(v) for v in row) for row in values)


def _op_mat_dag(mat):
    n = len(mat)
    return tuple(tuple(mat[j][i].dag() for j in range(n)) for i in range(n))


def _op_mat_mul(a, b):
    sa, sb = _scalar_matrix(a), _scalar_matrix(b)
    if sa is not None and sb is not None:
        return _wrap_scalar_matrix(sa @ sb)
    n = len(a)
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            acc = Operator.zero()
            for k in range(n):
                if a[i][k].matrix.nnz and b[k][j].matrix.nnz:
                    acc = acc + a[i][k] * b[k][j]
            row.append(acc)
        out.append(tuple(row))
    return tuple(out)


def _op_mat_vec(mat, vec):
    n = len(mat)
    out = []
    for i in range(n):
        acc = Operator.zero()
        for k in range(len(vec)):
            if mat[i][k].matrix.nnz and vec[k].matrix.nnz:
                acc = acc + mat[i][k] * vec[k]
        out.append(acc)
    return tuple(out)


# -- static systems -----------------------------------------------------------

def trivial_system() -> SLHTriplet:
    """The 0-channel system, the unit of concatenation."""
    return SLHTriplet((), (), Operator.zero())


def identity_system(n: int) -> SLHTriplet:
    if n < 1:
        raise ModelError("identity system needs >= 1 channel")
    S = tuple(tuple(Operator.scalar(1 if i == j else 0) for j in range(n))
              for i in range(n))
    return SLHTriplet(S, (Operator.zero(),) * n, Operator.zero())


def permutation_system(image: Sequence[int]) -> SLHTriplet:
    """Channel permuter: P[k][l] = 1 iff k == image[l] (1-based image tuple)."""
    image = tuple(image)
    n = len(image)
    if sorted(image) != list(range(1, n + 1)):
        raise ModelError(f"image tuple {image} is not a bijection")
    S = tuple(tuple(Operator.scalar(1 if k + 1 == image[l] else 0)
                    for l in range(n)) for k in range(n))
    return SLHTriplet(S, (Operator.zero(),) * n, Operator.zero())


# -- primitive components ------------------------------------------------------

def beamsplitter(theta: float) -> SLHTriplet:
    """Two-channel static mixer with rotation angle theta."""
    c, s = np.cos(theta), np.sin(theta)
    return SLHTriplet(((c, -s), (s, c)), (0, 0), 0)


def phase(phi: float) -> SLHTriplet:
    """Single-channel phase delay exp(i*phi)."""
    return SLHTriplet(((np.exp(1j * phi),),), (0,), 0)


def displace(alpha: complex) -> SLHTriplet:
    """Coherent displacement: a laser source of amplitude alpha."""
    return SLHTriplet(((1,),), (alpha,), 0)


def kerr_cavity(delta: float, chi: float, kappa_1: float, kappa_2: float,
                mode: str, dim: int) -> SLHTriplet:
    """Two-port ring cavity with a Kerr nonlinearity on the labeled mode."""
    if dim < 2:
        raise ModelError(f"Kerr cavity needs Fock dimension >= 2, got {dim}")
    if kappa_1 < 0 or kappa_2 < 0:
        raise ModelError("cavity decay rates must be nonnegative")
    a = destroy(mode, dim)
    ad = a.dag()
    h = delta * (ad * a) + chi * (ad * ad * a * a)
    return SLHTriplet(identity_system(2).S,
                      (np.sqrt(kappa_1) * a, np.sqrt(kappa_2) * a), h)


# -- composition rules ----------------------------------------------------------

def concatenation(q1: SLHTriplet, q2: SLHTriplet) -> SLHTriplet:
    """Parallel adjoining: block-diagonal S, stacked L, summed H."""
    q1.space.union(q2.space)  # surface label/dimension clashes early
    n1, n2 = q1.n, q2.n
    zero = Operator.zero()
    S = tuple(
        tuple((q1.S[i][j] if j < n1 else zero) for j in range(n1 + n2))
        if i < n1 else
        tuple((q2.S[i - n1][j - n1] if j >= n1 else zero) for j in range(n1 + n2))
        for i in range(n1 + n2))
    return SLHTriplet(S, q1.L + q2.L, q1.H + q2.H)


def series_product(q2: SLHTriplet, q1: SLHTriplet) -> SLHTriplet:
    """q2 <| q1: all outputs of q1 feed the corresponding inputs of q2."""
    if q1.n != q2.n:
        raise ModelError(f"series channel mismatch: {q2.n} vs {q1.n}")
    S = _op_mat_mul(q2.S, q1.S)
    L = tuple(l2 + sl1 for l2, sl1 in zip(q2.L, _op_mat_vec(q2.S, q1.L)))
    cross = Operator.zero()
    for j in range(q2.n):
        if not q2.L[j].matrix.nnz:
            continue
        for k in range(q1.n):
            if q2.S[j][k].matrix.nnz and q1.L[k].matrix.nnz:
                cross = cross + q2.L[j].dag() * q2.S[j][k] * q1.L[k]
    H = q1.H + q2.H + imag_part(cross)
    return SLHTriplet(S, L, H)


def _invert_one_minus(op: Operator) -> Operator:
    """(1 - op)^-1 by dense LU on op's own space; embedding commutes."""
    dense = np.eye(op.space.dim, dtype=np.complex128) - op.to_dense()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(dense, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.size == 0 or pivots.min() <= SINGULARITY_TOL:
        raise SingularFeedbackError(
            "feedback loop is not well posed: 1 - S_kl is singular")
    inv = scipy.linalg.lu_solve((lu, piv), np.eye(op.space.dim, dtype=np.complex128),
                                check_finite=False)
    return Operator(op.space, inv)


def feedback_reduce(q: SLHTriplet, k: int, l: int) -> SLHTriplet:
    """Feed output channel k back into input channel l (both 1-based)."""
    n = q.n
    if n < 2:
        raise ModelError("feedback requires at least 2 channels")
    if not (1 <= k <= n and 1 <= l <= n):
        raise ModelError(f"feedback indices ({k}, {l}) out of range 1..{n}")
    inv = _invert_one_minus(q.S[k - 1][l - 1])
    rows = [i for i in range(n) if i != k - 1]
    cols = [j for j in range(n) if j != l - 1]
    col_l = {i: q.S[i][l - 1] * inv for i in rows}
    S = tuple(tuple(q.S[i][j] + col_l[i] * q.S[k - 1][j] for j in cols)
              for i in rows)
    L = tuple(q.L[i] + col_l[i] * q.L[k - 1] for i in rows)
    gain = Operator.zero()
    for j in range(n):
        gain = gain + q.L[j].dag() * q.S[j][l - 1]
    H = q.H + imag_part(gain * inv * q.L[k - 1])
    return SLHTriplet(S, L, H)


def split_channels(q: SLHTriplet, k: int, hamiltonian_block: int = 0) -> tuple:
    """Split a block-diagonal system into its first k channels and the rest.

    The Hamiltonian cannot be attributed to either block from the model
    alone, so the caller chooses (0 = first block, 1 = second).
    """
    n = q.n
    if not 1 <= k < n:
        raise ModelError(f"split index {k} out of range 1..{n - 1}")
    for i in range(n):
        for j in range(n):
            if (i < k) != (j < k) and not q.S[i][j].is_zero(1e-12):
                raise ModelError(
                    f"scattering matrix is not block diagonal at ({i + 1}, {j + 1})")
    h1, h2 = (q.H, Operator.zero()) if hamiltonian_block == 0 else (Operator.zero(), q.H)
    first = SLHTriplet(tuple(row[:k] for row in q.S[:k]), q.L[:k], h1)
    second = SLHTriplet(tuple(row[k:] for row in q.S[k:]), q.L[k:], h2)
    return first, second


# -- expression evaluation -------------------------------------------------------

def evaluate(expr: circuit.CircuitExpression,
             bindings: Mapping[str, SLHTriplet]) -> SLHTriplet:
    """Fold a circuit expression into a concrete triplet.

    Component references resolve through `bindings` by instance label.
    """
    if isinstance(expr, circuit.ComponentRef):
        try:
            q = bindings[expr.label]
        except KeyError:
            raise EvaluationError(f"no binding for component '{expr.label}'") from None
        if q.n != expr.cdim:
            raise EvaluationError(
                f"binding for '{expr.label}' has {q.n} channels, expected {expr.cdim}")
        return q
    if isinstance(expr, circuit.SeriesProduct):
        return series_product(evaluate(expr.left, bindings),
                              evaluate(expr.right, bindings))
    if isinstance(expr, circuit.Concatenation):
        out = evaluate(expr.operands[0], bindings)
        for op in expr.operands[1:]:
            out = concatenation(out, evaluate(op, bindings))
        return out
    if isinstance(expr, circuit.Feedback):
        return feedback_reduce(evaluate(expr.inner, bindings),
                               expr.out_index, expr.in_index)
    if isinstance(expr, circuit.Permutation):
        return permutation_system(expr.image)
    if isinstance(expr, circuit.Identity):
        return identity_system(expr.n)
    raise EvaluationError(f"cannot evaluate node {expr!r}")


# -- compiled-model serialization ---------------------------------------------

def model_to_json(q: SLHTriplet, ports: dict | None = None) -> dict:
    """Compiled-model schema; all operators promoted to the joint space."""
    space = q.space
    doc = {
        "n": q.n,
        "space": [{"label": label, "dim": dim} for label, dim in space.modes],
        "S": [[sparse_op_to_json(op, space) for op in row] for row in q.S],
        "L": [sparse_op_to_json(op, space) for op in q.L],
        "H": sparse_op_to_json(q.H, space),
    }
    if ports is not None:
        doc["ports"] = ports
    return doc


def model_from_json(doc: dict) -> tuple[SLHTriplet, dict | None]:
    space = HilbertSpace(tuple((m["label"], int(m["dim"])) for m in doc["space"]))
    n = int(doc["n"])
    if len(doc["L"]) != n or len(doc["S"]) != n:
        raise ModelError("model file is inconsistent: channel counts disagree")
    S = tuple(tuple(sparse_op_from_json(op, space) for op in row)
              for row in doc["S"])
    L = tuple(sparse_op_from_json(op, space) for op in doc["L"])
    H = sparse_op_from_json(doc["H"], space)
    return SLHTriplet(S, L, H), doc.get("ports")
