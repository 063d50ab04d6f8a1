"""Constrained product-state bases and operators acting on them."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, ConsistencyError, ValidationError
from .model import HD_PXP, ModelSpec, bond_projector
from .operators import DROP_TOL, canonical


def allowed_pairs(spec: ModelSpec) -> np.ndarray:
    """Boolean d x d matrix: ``A[a, b]`` is True when bond state |a, b> is not blockaded.

    Requires the bond projector to be diagonal in the product basis, which is
    what makes the constrained space a span of product states.
    """
    pi = bond_projector(spec)
    d = spec.local_dim
    off = pi - np.diag(np.diag(pi))
    if np.abs(off).max(initial=0.0) > 1e-12:
        raise ValidationError("bond projector must be diagonal in the product basis")
    diag = np.real(np.diag(pi))
    if np.any(np.abs(diag * (1 - diag)) > 1e-12):
        raise ValidationError("bond projector diagonal must be 0/1")
    return (diag < 0.5).reshape(d, d)


def transfer_matrix_count(spec: ModelSpec) -> int:
    """Constrained dimension from powers of the allowed-pair transfer matrix."""
    a = allowed_pairs(spec).astype(object)
    n = spec.n_logical
    d = spec.local_dim
    if n == 1:
        return d
    ones = np.ones(d, dtype=object)
    if not spec.periodic:
        v = ones.copy()
        for _ in range(n - 1):
            v = a.dot(v)
        return int(ones.dot(v))
    m = np.identity(d, dtype=object)
    for _ in range(n):
        m = m.dot(a)
    return int(np.trace(m))


def brute_force_states(spec: ModelSpec) -> list[tuple[int, ...]]:
    """All blockade-free product states by exhaustive filtering (local indices)."""
    a = allowed_pairs(spec)
    bonds = spec.bonds()
    return [
        s
        for s in itertools.product(range(spec.local_dim), repeat=spec.n_logical)
        if all(a[s[p], s[q]] for p, q in bonds)
    ]


@dataclass(eq=False)
class ConstrainedBasis:
    """Ordered product states; local index 0 is the largest m (m = j first).

    ``states`` holds local indices, ``codes`` the product-space integer index of
    each state (site 0 most significant), so lexicographic order in (m_1, ..., m_N)
    with m descending is simply ascending code order.
    """

    spec: ModelSpec
    states: np.ndarray
    tag: str = "constrained"
    codes: np.ndarray = field(init=False)

    def __post_init__(self):
        d, n = self.spec.local_dim, self.spec.n_logical
        self.states = np.asarray(self.states, dtype=np.int64).reshape(-1, n)
        self.codes = self.states @ (d ** np.arange(n - 1, -1, -1, dtype=np.int64))
        if np.any(np.diff(self.codes) <= 0):
            raise ValidationError("basis states must be strictly increasing")

    @property
    def dim(self) -> int:
        return len(self.codes)

    @property
    def n_sites(self) -> int:
        return self.spec.n_logical

    @property
    def local_dim(self) -> int:
        return self.spec.local_dim

    def __len__(self):
        return self.dim

    def site_values(self) -> np.ndarray:
        """Local labels: m values for spin chains, logical labels for hd-pxp."""
        if self.spec.family == HD_PXP:
            from .hdpxp import logical_labels

            labels = np.array(logical_labels(self.spec.j), dtype=object)
            return labels[self.states]
        m = np.array([Fraction(self.spec.j) - i for i in range(self.local_dim)], dtype=object)
        return m[self.states]

    def label(self, i: int) -> tuple:
        return tuple(self.site_values()[i])

    def index_of(self, state) -> int:
        """Index of a state given as local m values (or hd-pxp labels)."""
        idx = self._to_local(state)
        code = int(np.dot(idx, self.spec.local_dim ** np.arange(self.n_sites - 1, -1, -1)))
        pos = int(np.searchsorted(self.codes, code))
        if pos >= self.dim or self.codes[pos] != code:
            raise KeyError(f"state {tuple(state)} not in basis")
        return pos

    def _to_local(self, state) -> np.ndarray:
        state = tuple(state)
        if len(state) != self.n_sites:
            raise ValidationError(f"state has {len(state)} sites, basis has {self.n_sites}")
        if self.spec.family == HD_PXP:
            from .hdpxp import logical_labels

            labels = logical_labels(self.spec.j)
            return np.array([labels.index(s) for s in state])
        j = Fraction(self.spec.j)
        out = []
        for m in state:
            i = j - Fraction(m)
            if i.denominator != 1 or not 0 <= i < self.local_dim:
                raise ValidationError(f"m={m} is not a valid spin-{j} label")
            out.append(int(i))
        return np.array(out)

    def product_state(self, state) -> np.ndarray:
        """Normalized vector of a product state given by its m labels."""
        v = np.zeros(self.dim, dtype=complex)
        v[self.index_of(state)] = 1.0
        return v

    def locate(self, codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Positions of ``codes`` in this basis and a membership mask."""
        pos = np.searchsorted(self.codes, codes)
        pos_c = np.minimum(pos, self.dim - 1)
        ok = self.codes[pos_c] == codes
        return pos_c, ok

    def operator(self, op: np.ndarray, sites) -> sp.csr_matrix:
        """Matrix of a local operator on ``sites`` compressed to this basis (P O P)."""
        sites = tuple(int(s) for s in sites)
        d, n = self.local_dim, self.n_sites
        r = len(sites)
        op = np.asarray(op, dtype=complex)
        if op.shape != (d**r, d**r):
            raise ValidationError(f"operator shape {op.shape} does not match {r} sites")
        if len(set(sites)) != r or min(sites) < 0 or max(sites) >= n:
            raise ValidationError(f"sites {sites} outside [0, {n})")
        weights = d ** (n - 1 - np.array(sites, dtype=np.int64))
        local = self.states[:, sites] @ (d ** np.arange(r - 1, -1, -1, dtype=np.int64))
        rows, cols, vals = [], [], []
        for a in range(d**r):
            src = np.nonzero(local == a)[0]
            if src.size == 0:
                continue
            da = np.array(np.unravel_index(a, (d,) * r))
            for b in np.nonzero(np.abs(op[:, a]) > DROP_TOL)[0]:
                db = np.array(np.unravel_index(b, (d,) * r))
                target = self.codes[src] + int(np.dot(db - da, weights))
                pos, ok = self.locate(target)
                rows.append(pos[ok])
                cols.append(src[ok])
                vals.append(np.full(ok.sum(), op[b, a]))
        if not rows:
            return sp.csr_matrix((self.dim, self.dim), dtype=complex)
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.dim, self.dim),
        )
        return canonical(mat)

    def diagonal_operator(self, values_of_states: np.ndarray) -> sp.csr_matrix:
        return sp.diags(np.asarray(values_of_states, dtype=complex), format="csr")

    def embedding(self, full: "ConstrainedBasis") -> sp.csr_matrix:
        """Isometry (full.dim x self.dim) mapping this basis into a larger one."""
        if full.spec.local_dim != self.local_dim or full.n_sites != self.n_sites:
            raise ConsistencyError("bases describe different chains")
        pos, ok = full.locate(self.codes)
        if not ok.all():
            raise ConsistencyError("basis is not a subset of the target basis")
        return sp.csr_matrix(
            (np.ones(self.dim, dtype=complex), (pos, np.arange(self.dim))), shape=(full.dim, self.dim)
        )


def enumerate_basis(spec: ModelSpec, cap: int | None = None) -> ConstrainedBasis:
    """Every product state annihilated by all bond blockades, in lexicographic order."""
    cap = spec.basis_cap if cap is None else cap
    a = allowed_pairs(spec)
    d, n = spec.local_dim, spec.n_logical
    prefixes = np.arange(d, dtype=np.int64).reshape(d, 1)
    for _ in range(n - 1):
        last = prefixes[:, -1]
        blocks = []
        for b in range(d):
            keep = prefixes[a[last, b]]
            blocks.append(np.hstack([keep, np.full((len(keep), 1), b, dtype=np.int64)]))
        prefixes = np.vstack(blocks)
        if len(prefixes) > cap:
            raise CapacityError("basis enumeration", len(prefixes), cap, "raise basis_cap")
    if spec.periodic and n >= 2:
        prefixes = prefixes[a[prefixes[:, -1], prefixes[:, 0]]]
    if len(prefixes) > cap:
        raise CapacityError("basis enumeration", len(prefixes), cap, "raise basis_cap")
    codes = prefixes @ (d ** np.arange(n - 1, -1, -1, dtype=np.int64))
    return ConstrainedBasis(spec, prefixes[np.argsort(codes)])


def product_basis(spec: ModelSpec, cap: int | None = None) -> ConstrainedBasis:
    """The unconstrained product basis, same ordering conventions."""
    cap = spec.full_cap if cap is None else cap
    d, n = spec.local_dim, spec.n_logical
    if d**n > cap:
        raise CapacityError("full product space", d**n, cap, "raise full_cap or use constrained-space routines")
    codes = np.arange(d**n, dtype=np.int64)
    states = np.stack(np.unravel_index(codes, (d,) * n), axis=1) if n else codes.reshape(-1, 0)
    return ConstrainedBasis(spec, states, tag="full")
