"""High-dimensional PXP chain on logical sites.

Two physical spins (2l-1, 2l) are merged into one logical site.  Pairs with both
members above -j lie outside the intra-pair constraint and are never encoded,
leaving 4j+1 logical states::

    |m, -j>  -> b_m   (m > -j)
    |-j, m>  -> a_m   (m > -j)
    |-j, -j> -> c

Logical states are ordered like their physical pairs (lexicographic, m
descending), so the logical basis order matches the physical one.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .errors import ValidationError
from .model import HD_PXP, ModelSpec, parse_spin, spin_matrices


def logical_pairs(j) -> list[tuple[Fraction, Fraction]]:
    j = parse_spin(j)
    d = int(2 * j + 1)
    ms = [j - i for i in range(d)]
    return [(m1, m2) for m1 in ms for m2 in ms if m1 == -j or m2 == -j]


def logical_labels(j) -> list[str]:
    j = parse_spin(j)
    out = []
    for m1, m2 in logical_pairs(j):
        if m1 == -j and m2 == -j:
            out.append("c")
        elif m2 == -j:
            out.append(f"b_{m1}")
        else:
            out.append(f"a_{m2}")
    return out


def _pair_indices(j) -> np.ndarray:
    """Row indices of the logical states inside the (2j+1)^2 pair space."""
    j = parse_spin(j)
    d = int(2 * j + 1)
    return np.array([int(j - m1) * d + int(j - m2) for m1, m2 in logical_pairs(j)])


def compress_pair_operator(op_pair: np.ndarray, j) -> np.ndarray:
    """Restrict a two-physical-site operator to the logical states."""
    idx = _pair_indices(j)
    return np.asarray(op_pair)[np.ix_(idx, idx)]


def logical_local_hamiltonian(j) -> np.ndarray:
    """h_l: s^x on both members of a pair, projected onto the encoded states."""
    s = spin_matrices(j)
    d = s["x"].shape[0]
    eye = np.identity(d)
    pair = np.kron(s["x"], eye) + np.kron(eye, s["x"])
    return compress_pair_operator(pair, j).astype(complex)


def logical_bond_projector(j) -> np.ndarray:
    """Blockade between logical sites l and l+1.

    Physical sites 2l and 2l+1 may not both sit above -j, i.e. an a_m state
    (second member raised) may not be followed by a b_m' state (first member
    raised).
    """
    j = parse_spin(j)
    pairs = logical_pairs(j)
    D = len(pairs)
    diag = np.zeros(D * D)
    for p, (_, second) in enumerate(pairs):
        for q, (first, _) in enumerate(pairs):
            if second > -j and first > -j:
                diag[p * D + q] = 1.0
    return np.diag(diag).astype(complex)


def member_sz(j) -> tuple[np.ndarray, np.ndarray]:
    """s^z of the first and second physical member, as logical-site diagonals."""
    pairs = logical_pairs(j)
    first = np.diag([float(m1) for m1, _ in pairs]).astype(complex)
    second = np.diag([float(m2) for _, m2 in pairs]).astype(complex)
    return first, second


def physical_site(k: int) -> tuple[int, int]:
    """Logical site and member (0 or 1) of physical site ``k`` (0-based)."""
    return k // 2, k % 2


def hdpxp_initial_state(spec: ModelSpec) -> tuple:
    """Logical labels of |j, -j, j, -j, ...>."""
    _require(spec)
    return (f"b_{spec.j}",) * spec.n_logical


def _require(spec: ModelSpec):
    if spec.family != HD_PXP:
        raise ValidationError(f"family: expected hd-pxp, got {spec.family}")
    if spec.n_sites % 2:
        raise ValidationError("n_sites: hd-pxp needs an even number of physical sites")


def physical_constrained_count(j, n_phys: int, periodic: bool = True) -> int:
    """Brute-force count of physical states with no adjacent pair both above -j."""
    j = parse_spin(j)
    d = int(2 * j + 1)
    raised = np.array([i < d - 1 for i in range(d)])  # local index d-1 is m = -j
    count = 0
    grid = np.indices((d,) * n_phys).reshape(n_phys, -1).T
    r = raised[grid]
    ok = ~(r[:, :-1] & r[:, 1:]).any(axis=1)
    if periodic:
        ok &= ~(r[:, -1] & r[:, 0])
    count = int(ok.sum())
    return count


def build_hdpxp(spec: ModelSpec) -> dict:
    """Logical basis, constrained Hamiltonian, quasi-particle counter and channels."""
    _require(spec)
    from .basis import enumerate_basis
    from .constraint import build_constrained_hamiltonian, build_mapping_ops, build_quasiparticle_counter

    basis = enumerate_basis(spec)
    ham = build_constrained_hamiltonian(spec, basis)
    channels = build_mapping_ops(spec)
    counter = build_quasiparticle_counter(spec, basis)
    return {
        "spec": spec,
        "n_logical": spec.n_logical,
        "local_dim": spec.local_dim,
        "basis": basis,
        "H": ham,
        "N": counter,
        "channels": channels,
    }
