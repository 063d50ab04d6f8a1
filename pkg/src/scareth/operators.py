"""Sparse operators tagged with the space they act on.

Storage is a canonical CSR matrix: duplicates summed, indices sorted and
entries below ``DROP_TOL`` in magnitude removed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConsistencyError, ValidationError

DROP_TOL = 1e-14
FULL = "full"
CONSTRAINED = "constrained"


def canonical(mat) -> sp.csr_matrix:
    m = sp.csr_matrix(mat, dtype=complex)
    m.sum_duplicates()
    m.data[np.abs(m.data) < DROP_TOL] = 0
    m.eliminate_zeros()
    m.sort_indices()
    return m


@dataclass(frozen=True, eq=False)
class SparseOperator:
    matrix: sp.csr_matrix
    basis_tag: str = FULL
    hermitian: bool = False

    def __post_init__(self):
        if self.basis_tag not in (FULL, CONSTRAINED):
            raise ValidationError(f"basis_tag: {self.basis_tag!r}")
        object.__setattr__(self, "matrix", canonical(self.matrix))
        if self.hermitian and not is_hermitian(self.matrix):
            raise ValidationError("operator flagged Hermitian is not conjugate-symmetric")

    @classmethod
    def build(cls, mat, basis_tag: str = FULL, hermitian: bool | None = None) -> "SparseOperator":
        m = canonical(mat)
        if hermitian is None:
            hermitian = is_hermitian(m)
        return cls(m, basis_tag, hermitian)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def dim_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim_cols(self) -> int:
        return self.matrix.shape[1]

    def entries(self) -> list[tuple[int, int, complex]]:
        coo = self.matrix.tocoo()
        return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    @property
    def H(self) -> "SparseOperator":
        return SparseOperator(self.matrix.conj().T.tocsr(), self.basis_tag, self.hermitian)

    def _check(self, other: "SparseOperator"):
        if other.basis_tag != self.basis_tag:
            raise ConsistencyError(f"cannot combine {self.basis_tag} and {other.basis_tag} operators")

    def __matmul__(self, other):
        if isinstance(other, SparseOperator):
            self._check(other)
            return SparseOperator.build(self.matrix @ other.matrix, self.basis_tag)
        return self.matrix @ other

    def __add__(self, other: "SparseOperator") -> "SparseOperator":
        self._check(other)
        return SparseOperator.build(self.matrix + other.matrix, self.basis_tag)

    def __sub__(self, other: "SparseOperator") -> "SparseOperator":
        self._check(other)
        return SparseOperator.build(self.matrix - other.matrix, self.basis_tag)

    def __mul__(self, scalar) -> "SparseOperator":
        return SparseOperator.build(self.matrix * scalar, self.basis_tag)

    __rmul__ = __mul__

    def __neg__(self) -> "SparseOperator":
        return self * -1

    def max_abs(self) -> float:
        return float(np.abs(self.matrix.data).max()) if self.matrix.nnz else 0.0

    def write_matrix_market(self, path) -> None:
        """Coordinate text dump: header, ``rows cols nnz``, then ``i j re im`` (1-based)."""
        coo = self.matrix.tocoo()
        with open(path, "w") as fh:
            fh.write("%%MatrixMarket matrix coordinate complex general\n")
            fh.write(f"% basis={self.basis_tag} hermitian={int(self.hermitian)}\n")
            fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i + 1} {j + 1} {v.real:.17g} {v.imag:.17g}\n")


def read_matrix_market(path) -> SparseOperator:
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip()]
    tag, herm = FULL, False
    for ln in lines:
        if ln.startswith("% basis="):
            parts = dict(p.split("=") for p in ln[1:].split())
            tag, herm = parts["basis"], bool(int(parts["hermitian"]))
    body = [ln for ln in lines if not ln.startswith("%")]
    nr, nc, _ = (int(x) for x in body[0].split())
    data = np.array([[float(x) for x in ln.split()] for ln in body[1:]]).reshape(-1, 4)
    mat = sp.coo_matrix(
        (data[:, 2] + 1j * data[:, 3], (data[:, 0].astype(int) - 1, data[:, 1].astype(int) - 1)),
        shape=(nr, nc),
    )
    return SparseOperator(mat, tag, herm)


def is_hermitian(m, tol: float = 1e-12) -> bool:
    if m.shape[0] != m.shape[1]:
        return False
    diff = m - m.conj().T
    return diff.nnz == 0 or float(np.abs(diff.data).max()) <= tol


# ---------------------------------------------------------------------------
# full product-space builders


def site_product(factors: dict[int, np.ndarray], n: int, d: int) -> sp.csr_matrix:
    """Tensor product with the given single-site factors and identity elsewhere.

    Site 0 is the most significant digit of the product-state index.
    """
    out = sp.identity(1, dtype=complex, format="csr")
    eye = sp.identity(d, dtype=complex, format="csr")
    for k in range(n):
        f = factors.get(k)
        out = sp.kron(out, eye if f is None else sp.csr_matrix(f), format="csr")
    return out


def local_operator(op: np.ndarray, sites: tuple[int, ...], n: int, d: int) -> sp.csr_matrix:
    """Embed a dense operator on ``len(sites)`` (not necessarily adjacent) sites."""
    op = np.asarray(op, dtype=complex)
    r = len(sites)
    if op.shape != (d**r, d**r):
        raise ValidationError(f"operator shape {op.shape} does not match {r} sites of dim {d}")
    if len(set(sites)) != r or min(sites) < 0 or max(sites) >= n:
        raise ValidationError(f"sites {sites} invalid for a chain of {n}")
    if r == 1:
        return canonical(site_product({sites[0]: op}, n, d))
    total = sp.csr_matrix((d**n, d**n), dtype=complex)
    rows, cols = np.nonzero(np.abs(op) > DROP_TOL)
    for a, b in zip(rows, cols):
        da = np.unravel_index(a, (d,) * r)
        db = np.unravel_index(b, (d,) * r)
        factors = {}
        for s, ia, ib in zip(sites, da, db):
            e = np.zeros((d, d), dtype=complex)
            e[ia, ib] = 1.0
            factors[s] = e
        total = total + op[a, b] * site_product(factors, n, d)
    return canonical(total)
