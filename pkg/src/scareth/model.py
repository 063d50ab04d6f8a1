"""Model specifications and single-site spin algebra."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

import numpy as np

from .errors import ValidationError

SPIN_CHAIN = "spin-chain-blockade"
GENERIC = "generic-bond-blockade"
HD_PXP = "hd-pxp"
FAMILIES = (SPIN_CHAIN, GENERIC, HD_PXP)
BOUNDARIES = ("periodic", "open")

DEFAULT_BASIS_CAP = 2_000_000
DEFAULT_FULL_CAP = 600_000


def parse_spin(value: Any) -> Fraction:
    """Accept 1, 1.5, "3/2" or Fraction; return an exact half-integer."""
    try:
        if isinstance(value, str):
            j = Fraction(value.strip())
        elif isinstance(value, float):
            j = Fraction(value).limit_denominator(2)
        else:
            j = Fraction(value)
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise ValidationError(f"j: cannot parse spin value {value!r}") from exc
    if (2 * j).denominator != 1 or j <= 0:
        raise ValidationError(f"j: {value!r} is not a positive half-integer")
    return j


def spin_matrices(j) -> dict[str, np.ndarray]:
    """Spin-j operators in the s^z basis ordered m = j, j-1, ..., -j."""
    j = parse_spin(j)
    d = int(2 * j + 1)
    m = np.array([float(j) - i for i in range(d)])
    jf = float(j)
    sp = np.zeros((d, d))
    for i in range(1, d):
        # <m+1| s^+ |m> with m = m[i]
        sp[i - 1, i] = np.sqrt(jf * (jf + 1) - m[i] * (m[i] + 1))
    sx = (sp + sp.T) / 2
    sy = (sp - sp.T) / 2j
    return {"z": np.diag(m), "x": sx, "y": sy, "+": sp, "-": sp.T.copy(), "m": m}


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of one constrained chain.

    For ``hd-pxp`` the ``n_sites`` field counts physical spins; the model is
    built on ``n_sites // 2`` logical sites.
    """

    family: str
    j: Fraction = Fraction(1)
    n_sites: int = 3
    boundary: str = "periodic"
    c: float = 200.0
    # generic-bond-blockade only
    local_h: tuple = ()
    bond_states: tuple = ()
    basis_cap: int = DEFAULT_BASIS_CAP
    full_cap: int = DEFAULT_FULL_CAP

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"family: {self.family!r} not in {FAMILIES}")
        object.__setattr__(self, "j", parse_spin(self.j))
        if self.boundary not in BOUNDARIES:
            raise ValidationError(f"boundary: {self.boundary!r} not in {BOUNDARIES}")
        if int(self.n_sites) != self.n_sites or self.n_sites < 1:
            raise ValidationError(f"n_sites: must be a positive integer, got {self.n_sites!r}")
        object.__setattr__(self, "n_sites", int(self.n_sites))
        if not np.isfinite(self.c) or self.c <= 0:
            raise ValidationError(f"c: must be positive, got {self.c!r}")
        object.__setattr__(self, "c", float(self.c))
        if self.family in (SPIN_CHAIN, HD_PXP) and self.j < 1:
            raise ValidationError(f"j: family {self.family} requires j >= 1, got {self.j}")
        if self.family == HD_PXP and self.n_sites % 2:
            raise ValidationError(f"n_sites: hd-pxp needs an even number of sites, got {self.n_sites}")
        if self.family == GENERIC:
            self._check_generic()

    def _check_generic(self):
        if not self.local_h:
            raise ValidationError("local_h: generic-bond-blockade needs local Hamiltonian matrices")
        hs = [np.asarray(h, dtype=complex) for h in self.local_h]
        d = hs[0].shape[0]
        for k, h in enumerate(hs):
            if h.shape != (d, d):
                raise ValidationError(f"local_h[{k}]: expected shape {(d, d)}, got {h.shape}")
            if not np.allclose(h, h.conj().T, atol=1e-12):
                raise ValidationError(f"local_h[{k}]: not Hermitian")
        if len(hs) not in (1, self.n_sites):
            raise ValidationError(f"local_h: give 1 or n_sites={self.n_sites} matrices, got {len(hs)}")
        if not self.bond_states:
            raise ValidationError("bond_states: generic-bond-blockade needs at least one blockaded bond state")
        for k, v in enumerate(self.bond_states):
            if np.asarray(v).shape != (d * d,):
                raise ValidationError(f"bond_states[{k}]: expected length {d * d}")
        # freeze as tuples so the spec stays hashable
        object.__setattr__(self, "local_h", tuple(_freeze(h) for h in hs))
        object.__setattr__(self, "bond_states", tuple(_freeze(np.asarray(v, dtype=complex)) for v in self.bond_states))

    # ------------------------------------------------------------------
    @property
    def n_logical(self) -> int:
        return self.n_sites // 2 if self.family == HD_PXP else self.n_sites

    @property
    def local_dim(self) -> int:
        if self.family == GENERIC:
            return len(self.local_h[0])
        if self.family == HD_PXP:
            return int(4 * self.j + 1)
        return int(2 * self.j + 1)

    @property
    def full_dim(self) -> int:
        return self.local_dim ** self.n_logical

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    def bonds(self) -> list[tuple[int, int]]:
        """Nearest-neighbour bonds (0-based) on the sites the model is built on."""
        n = self.n_logical
        out = [(k, k + 1) for k in range(n - 1)]
        if self.periodic and n > 2:
            out.append((n - 1, 0))
        elif self.periodic and n == 2:
            # a two-site ring has both orientations of the same pair
            out.append((1, 0))
        return out

    def local_hamiltonians(self) -> list[np.ndarray]:
        n = self.n_logical
        if self.family == GENERIC:
            hs = [np.array(h, dtype=complex) for h in self.local_h]
            return hs * n if len(hs) == 1 else hs
        if self.family == HD_PXP:
            from .hdpxp import logical_local_hamiltonian

            h = logical_local_hamiltonian(self.j)
            return [h] * n
        return [spin_matrices(self.j)["x"].astype(complex)] * n

    def with_(self, **changes) -> "ModelSpec":
        data = self.to_dict(full=True)
        data.update(changes)
        return spec_from_dict(data)

    def to_dict(self, full: bool = False) -> dict:
        out = {
            "family": self.family,
            "j": str(self.j),
            "n_sites": self.n_sites,
            "boundary": self.boundary,
            "c": self.c,
        }
        if self.family == GENERIC:
            out["local_h"] = [_pairs(np.array(h)) for h in self.local_h]
            out["bond_states"] = [_pairs(np.array(v)) for v in self.bond_states]
        if full:
            out["basis_cap"] = self.basis_cap
            out["full_cap"] = self.full_cap
        return out

    def spec_hash(self) -> str:
        """SHA-256 of the canonical JSON form (every physical field included)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _freeze(a: np.ndarray):
    a = np.asarray(a, dtype=complex)
    if a.ndim == 1:
        return tuple(complex(x) for x in a)
    return tuple(tuple(complex(x) for x in row) for row in a)


def _pairs(a: np.ndarray):
    if a.ndim == 1:
        return [[float(x.real), float(x.imag)] for x in a]
    return [_pairs(row) for row in a]


def spec_from_dict(data: dict) -> ModelSpec:
    known = {"family", "j", "n_sites", "boundary", "c", "local_h", "bond_states", "basis_cap", "full_cap"}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"model: unknown fields {sorted(unknown)}")
    if "family" not in data:
        raise ValidationError("family: missing")
    kwargs = dict(data)
    if "local_h" in kwargs:
        kwargs["local_h"] = tuple(_complex_array(h, f"local_h[{i}]", 2) for i, h in enumerate(kwargs["local_h"]))
    if "bond_states" in kwargs:
        kwargs["bond_states"] = tuple(
            _complex_array(v, f"bond_states[{i}]", 1) for i, v in enumerate(kwargs["bond_states"])
        )
    if "n_sites" in kwargs and not isinstance(kwargs["n_sites"], int):
        raise ValidationError(f"n_sites: must be an integer, got {kwargs['n_sites']!r}")
    return ModelSpec(**kwargs)


def _complex_array(obj, name: str, ndim: int) -> np.ndarray:
    """Nested arrays of rank ``ndim`` whose leaves are numbers or [re, im] pairs."""
    try:
        raw = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name}: not a numeric array") from exc
    if raw.ndim == ndim + 1 and raw.shape[-1] == 2:
        return raw[..., 0] + 1j * raw[..., 1]
    if raw.ndim != ndim:
        raise ValidationError(f"{name}: expected a rank-{ndim} array")
    return raw.astype(complex)


def load_spec(path) -> ModelSpec:
    with open(path) as fh:
        return spec_from_dict(json.load(fh))


def bond_projector(spec: ModelSpec) -> np.ndarray:
    """Projector (d^2 x d^2) onto the forbidden configurations of one bond."""
    d = spec.local_dim
    if spec.family == SPIN_CHAIN:
        x = np.zeros(d * d, dtype=complex)
        x[0 * d + (d - 1)] = 1.0  # |j, -j>
        return np.outer(x, x.conj())
    if spec.family == HD_PXP:
        from .hdpxp import logical_bond_projector

        return logical_bond_projector(spec.j)
    vecs = np.array([np.array(v) for v in spec.bond_states]).T
    u, sv, _ = np.linalg.svd(vecs, full_matrices=False)
    u = u[:, sv > 1e-12 * max(sv.max(), 1.0)]
    return u @ u.conj().T
