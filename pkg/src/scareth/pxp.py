"""Spin-1 blockade chain as a PXP chain on twice as many two-level sites.

Each spin-1 site becomes a pair of qubits::

    m = +1 -> (down, up)
    m =  0 -> (down, down)
    m = -1 -> (up, down)

Qubit local index 0 is "up", so the no-adjacent-up-up PXP constraint is a
generic bond blockade on |up, up>.
"""

from __future__ import annotations

import numpy as np

from .basis import ConstrainedBasis, enumerate_basis
from .errors import ValidationError
from .model import GENERIC, SPIN_CHAIN, ModelSpec

UP, DOWN = 0, 1
# spin-1 local index (0: m=1, 1: m=0, 2: m=-1) -> qubit pair
PAIR_OF = {0: (DOWN, UP), 1: (DOWN, DOWN), 2: (UP, DOWN)}
SPIN_OF = {v: k for k, v in PAIR_OF.items()}


def pxp_spec(n_qubits: int, boundary: str = "periodic") -> ModelSpec:
    sigma_x = np.array([[0, 1], [1, 0]], dtype=complex)
    up_up = np.zeros(4, dtype=complex)
    up_up[UP * 2 + UP] = 1
    return ModelSpec(GENERIC, n_sites=n_qubits, boundary=boundary, local_h=(sigma_x,), bond_states=(up_up,))


def spin_to_qubits(state: np.ndarray) -> np.ndarray:
    """Local spin-1 indices (..., N) -> qubit indices (..., 2N)."""
    table = np.array([PAIR_OF[i] for i in range(3)])
    state = np.asarray(state)
    return table[state].reshape(*state.shape[:-1], 2 * state.shape[-1])


def qubits_to_spin(qubits: np.ndarray) -> np.ndarray:
    """Inverse of ``spin_to_qubits``; raises on a pair with both qubits up."""
    q = np.asarray(qubits)
    pairs = q.reshape(*q.shape[:-1], q.shape[-1] // 2, 2)
    code = pairs[..., 0] * 2 + pairs[..., 1]
    inverse = np.full(4, -1)
    for s, (a, b) in PAIR_OF.items():
        inverse[a * 2 + b] = s
    out = inverse[code]
    if np.any(out < 0):
        raise ValidationError("qubit pair (up, up) has no spin-1 image")
    return out


def map_spin1_to_pxp(spec: ModelSpec) -> dict:
    """PXP spec on 2N qubits plus index maps between the two constrained bases.

    ``to_pxp[i]`` is the PXP-basis index of spin-basis state ``i``; ``to_spin``
    is its inverse.  Spin H equals H_PXP / sqrt(2) under this bijection.
    """
    if spec.family != SPIN_CHAIN or spec.j != 1:
        raise ValidationError("map_spin1_to_pxp needs a spin-chain-blockade spec with j = 1")
    spin_basis = enumerate_basis(spec)
    pspec = pxp_spec(2 * spec.n_sites, spec.boundary)
    pxp_basis = enumerate_basis(pspec)
    images = spin_to_qubits(spin_basis.states)
    codes = images @ (2 ** np.arange(images.shape[1] - 1, -1, -1, dtype=np.int64))
    pos, ok = pxp_basis.locate(codes)
    if not ok.all() or spin_basis.dim != pxp_basis.dim:
        raise ValidationError("spin-1 and PXP constrained spaces are not in bijection")
    to_spin = np.empty(pxp_basis.dim, dtype=np.int64)
    to_spin[pos] = np.arange(spin_basis.dim)
    return {
        "pxp_spec": pspec,
        "spin_basis": spin_basis,
        "pxp_basis": pxp_basis,
        "to_pxp": pos,
        "to_spin": to_spin,
    }


def pxp_hamiltonian(pxp_basis: ConstrainedBasis):
    """sum_k P X_k P on the no-up-up basis."""
    from .constraint import build_constrained_hamiltonian

    return build_constrained_hamiltonian(pxp_basis.spec, pxp_basis)
