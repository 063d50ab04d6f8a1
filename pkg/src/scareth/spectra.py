"""Exact diagonalization in the constrained space and per-eigenstate data."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .basis import ConstrainedBasis
from .errors import CapacityError, ConsistencyError, ValidationError
from .operators import CONSTRAINED, SparseOperator

DEFAULT_DIAG_CAP = 8000
DEGENERACY_RTOL = 1e-8
CACHE_MAGIC = b"SCARETH\x00"
CACHE_VERSION = 1


@dataclass(frozen=True, eq=False)
class EigenSystem:
    energies: np.ndarray
    vectors: np.ndarray
    basis: ConstrainedBasis
    groups: tuple = field(default=())

    @property
    def dim(self) -> int:
        return len(self.energies)

    @property
    def spectral_range(self) -> float:
        return float(self.energies[-1] - self.energies[0]) if self.dim else 0.0

    def group_of(self) -> np.ndarray:
        """Group id of every eigenstate."""
        out = np.empty(self.dim, dtype=np.int64)
        for g, idx in enumerate(self.groups):
            out[idx] = g
        return out

    def group_sizes(self) -> np.ndarray:
        return np.array([len(g) for g in self.groups])[self.group_of()]

    def nondegenerate(self) -> np.ndarray:
        return self.group_sizes() == 1


def degeneracy_groups(energies: np.ndarray, rtol: float = DEGENERACY_RTOL) -> tuple:
    """Runs of sorted energies whose neighbour spacing is below rtol * range."""
    energies = np.asarray(energies)
    if len(energies) == 0:
        return ()
    tol = rtol * max(energies[-1] - energies[0], 1e-300)
    breaks = np.nonzero(np.diff(energies) >= tol)[0] + 1
    return tuple(np.split(np.arange(len(energies)), breaks))


def diagonalize(H: SparseOperator, basis: ConstrainedBasis, cap: int = DEFAULT_DIAG_CAP) -> EigenSystem:
    """Full dense eigendecomposition of a Hermitian constrained-space operator."""
    if not H.hermitian:
        raise ValidationError("diagonalize needs a Hermitian operator")
    if H.basis_tag != CONSTRAINED:
        raise ValidationError("diagonalize works in the constrained basis")
    if H.dim_rows != basis.dim:
        raise ConsistencyError(f"operator dim {H.dim_rows} != basis dim {basis.dim}")
    if basis.dim > cap:
        raise CapacityError("dense diagonalization", basis.dim, cap, "use trajectory-only workflows")
    dense = H.toarray()
    if not np.any(dense.imag):
        dense = dense.real
    energies, vectors = np.linalg.eigh(dense)
    return EigenSystem(energies, vectors, basis, degeneracy_groups(energies))


def _check(eigsys: EigenSystem, n: int):
    if n != eigsys.basis.dim:
        raise ConsistencyError(f"dimension {n} does not match basis dim {eigsys.basis.dim}")


def group_average(eigsys: EigenSystem, values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=float)
    for g in eigsys.groups:
        if len(g) > 1:
            out[g] = out[g].mean()
    return out


def eigen_expectation(eigsys: EigenSystem, O: SparseOperator, degeneracy_policy: str = "group-average") -> np.ndarray:
    """<E_i|O|E_i>, averaged inside degenerate groups by default.

    The group average equals Tr(P_g O) / |g|, which does not depend on the
    eigenvectors chosen inside the group.
    """
    if O.basis_tag != CONSTRAINED:
        raise ConsistencyError("observable must act in the constrained basis")
    _check(eigsys, O.dim_rows)
    if not O.hermitian:
        raise ValidationError("eigen_expectation needs a Hermitian observable")
    v = eigsys.vectors
    values = np.real(np.einsum("ij,ij->j", v.conj(), O.matrix @ v))
    if degeneracy_policy == "group-average":
        return group_average(eigsys, values)
    if degeneracy_policy == "none":
        return values
    raise ValidationError(f"degeneracy_policy: {degeneracy_policy!r}")


def overlaps(eigsys: EigenSystem, state: np.ndarray) -> np.ndarray:
    """|<state|E_i>|^2 for a normalized constrained-basis vector."""
    state = np.asarray(state)
    _check(eigsys, len(state))
    if abs(np.linalg.norm(state) - 1) > 1e-8:
        raise ValidationError(f"state norm {np.linalg.norm(state):.3g} is not 1")
    return np.abs(eigsys.vectors.conj().T @ state) ** 2


def diagonal_ensemble_mean(eigsys: EigenSystem, state: np.ndarray, O: SparseOperator) -> float:
    """Infinite-time average of <O> from ``state``: sum over groups of <state|P_g O P_g|state>.

    Projecting onto whole degenerate groups keeps the result independent of
    the eigenvectors chosen inside a group.
    """
    state = np.asarray(state)
    _check(eigsys, len(state))
    amps = eigsys.vectors.conj().T @ state
    total = 0.0
    for g in eigsys.groups:
        part = eigsys.vectors[:, g] @ amps[g]
        total += float(np.real(np.vdot(part, O.matrix @ part)))
    return total / float(np.real(np.vdot(state, state)))


SCAR_POLICIES = ("gap", "local-max")


def tag_scars(
    overlap: np.ndarray,
    energies: np.ndarray | None = None,
    floor: float | None = None,
    explicit=None,
    candidates=None,
    policy: str = "gap",
    window: float = 0.3,
) -> np.ndarray:
    """Indices of high-overlap eigenstates.

    ``gap``: sort log10 overlaps above ``floor`` (default 1e-8); the largest
    gap between consecutive values splits off the tagged band.
    ``local-max``: a state is tagged when no candidate within ``window`` in
    energy has a larger overlap and its own overlap exceeds ``floor``
    (default 1/dim, the mean overlap).
    ``candidates`` (boolean mask) limits which states may be tagged;
    ``explicit`` overrides either rule.
    """
    overlap = np.asarray(overlap, dtype=float)
    if overlap.size == 0:
        raise ValidationError("tag_scars: empty spectrum")
    if explicit is not None:
        idx = np.unique(np.asarray(explicit, dtype=np.int64))
        if idx.size and (idx.min() < 0 or idx.max() >= overlap.size):
            raise ValidationError("tag_scars: explicit index out of range")
        return idx
    if policy not in SCAR_POLICIES:
        raise ValidationError(f"scar policy {policy!r} not in {SCAR_POLICIES}")
    allowed = np.ones(overlap.size, dtype=bool) if candidates is None else np.asarray(candidates, dtype=bool)
    if policy == "local-max":
        if energies is None:
            raise ValidationError("tag_scars: the local-max policy needs energies")
        if window <= 0:
            raise ValidationError("tag_scars: window must be positive")
        floor = 1.0 / overlap.size if floor is None else floor
        E = np.asarray(energies, dtype=float)
        idx = np.nonzero(allowed)[0]
        out = []
        for i in idx[overlap[idx] > floor]:
            near = idx[np.abs(E[idx] - E[i]) < window]
            if overlap[i] >= overlap[near].max():
                out.append(i)
        return np.array(out, dtype=np.int64)
    mask = allowed & (overlap > (1e-8 if floor is None else floor))
    above = np.nonzero(mask)[0]
    if above.size < 2:
        return above
    logs = np.log10(overlap[above])
    order = np.argsort(logs)
    gaps = np.diff(logs[order])
    cut = int(np.argmax(gaps))
    return np.sort(above[order[cut + 1 :]])


def density_of_states(eigsys_or_energies, bin_width: float) -> tuple[np.ndarray, np.ndarray]:
    """(counts, edges) of the energies in bins of the given width."""
    e = eigsys_or_energies.energies if isinstance(eigsys_or_energies, EigenSystem) else np.asarray(eigsys_or_energies)
    if bin_width <= 0:
        raise ValidationError("bin_width must be positive")
    lo, hi = float(e.min()), float(e.max())
    nbins = max(1, int(np.ceil((hi - lo) / bin_width)))
    centre = 0.5 * (lo + hi)
    half = 0.5 * nbins * bin_width
    edges = centre - half + bin_width * np.arange(nbins + 1)
    edges[-1] = max(edges[-1], hi)
    edges[0] = min(edges[0], lo)
    counts, _ = np.histogram(e, bins=edges)
    return counts, edges


# ---------------------------------------------------------------------------
# tables and cache


@dataclass
class EigenTable:
    energy: np.ndarray
    overlap0: np.ndarray
    n_expect: np.ndarray
    observables: dict = field(default_factory=dict)
    scar_flag: np.ndarray | None = None

    def __post_init__(self):
        if self.scar_flag is None:
            self.scar_flag = np.zeros(len(self.energy), dtype=bool)

    def __len__(self):
        return len(self.energy)

    def columns(self) -> list[str]:
        return ["index", "energy", "overlap0", "n_expect", *self.observables, "scar_flag"]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns())
            for i in range(len(self)):
                row = [i, fmt(self.energy[i]), fmt(self.overlap0[i]), fmt(self.n_expect[i])]
                row += [fmt(v[i]) for v in self.observables.values()]
                row.append(int(self.scar_flag[i]))
                w.writerow(row)


def fmt(x) -> str:
    """17 significant digits, the round-trip precision of a double."""
    return f"{float(x):.17g}"


def eigen_table(
    eigsys: EigenSystem,
    psi0: np.ndarray,
    counter: SparseOperator,
    observables: dict | None = None,
    scars=None,
    policy: str = "gap",
    window: float = 0.3,
) -> EigenTable:
    ov = overlaps(eigsys, psi0)
    n_exp = eigen_expectation(eigsys, counter)
    obs = {name: eigen_expectation(eigsys, op) for name, op in (observables or {}).items()}
    flags = np.zeros(eigsys.dim, dtype=bool)
    if scars is None:
        tagged = tag_scars(ov, eigsys.energies, candidates=eigsys.nondegenerate(), policy=policy, window=window)
    else:
        tagged = np.asarray(scars, dtype=np.int64)
    flags[tagged] = True
    return EigenTable(eigsys.energies.copy(), ov, n_exp, obs, flags)


def save_eigensystem(path, eigsys: EigenSystem, key: str = "") -> None:
    """magic, version, key, dim, is_complex, energies, vectors (row-major, little-endian f64)."""
    vec = eigsys.vectors
    is_complex = np.iscomplexobj(vec)
    keyb = key.encode().ljust(64, b"\x00")[:64]
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<I", CACHE_VERSION))
        fh.write(keyb)
        fh.write(struct.pack("<QB", eigsys.dim, int(is_complex)))
        fh.write(np.ascontiguousarray(eigsys.energies, dtype="<f8").tobytes())
        if is_complex:
            pairs = np.stack([vec.real, vec.imag], axis=-1)
            fh.write(np.ascontiguousarray(pairs, dtype="<f8").tobytes())
        else:
            fh.write(np.ascontiguousarray(vec, dtype="<f8").tobytes())


def load_eigensystem(path, basis: ConstrainedBasis, key: str = "") -> EigenSystem:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CACHE_MAGIC:
        raise ValidationError(f"{path}: not an eigendata cache")
    (version,) = struct.unpack_from("<I", blob, 8)
    if version != CACHE_VERSION:
        raise ValidationError(f"{path}: cache version {version}, expected {CACHE_VERSION}")
    stored = blob[12:76].rstrip(b"\x00").decode()
    if key and stored != key:
        raise ConsistencyError(f"{path}: cache key does not match the model spec")
    dim, is_complex = struct.unpack_from("<QB", blob, 76)
    if dim != basis.dim:
        raise ConsistencyError(f"{path}: cached dim {dim} != basis dim {basis.dim}")
    off = 85
    energies = np.frombuffer(blob, "<f8", dim, off).copy()
    off += 8 * dim
    if is_complex:
        pairs = np.frombuffer(blob, "<f8", dim * dim * 2, off).reshape(dim, dim, 2)
        vectors = pairs[..., 0] + 1j * pairs[..., 1]
    else:
        vectors = np.frombuffer(blob, "<f8", dim * dim, off).reshape(dim, dim).copy()
    return EigenSystem(energies, vectors, basis, degeneracy_groups(energies))


def scar_initial_state(basis: ConstrainedBasis) -> np.ndarray:
    """|j, j, ..., j> (spin chains) or |j, -j, j, -j, ...> (hd-pxp) in the basis."""
    from .model import HD_PXP

    spec = basis.spec
    if spec.family == HD_PXP:
        from .hdpxp import hdpxp_initial_state

        return basis.product_state(hdpxp_initial_state(spec))
    return basis.product_state((spec.j,) * basis.n_sites)


def top_overlap_state(eigsys: EigenSystem, overlap: np.ndarray, energy_window=None) -> int:
    """Nondegenerate eigenstate with the largest overlap, optionally inside (lo, hi)."""
    mask = eigsys.nondegenerate().copy()
    if energy_window is not None:
        lo, hi = energy_window
        mask &= (eigsys.energies > lo) & (eigsys.energies < hi)
    if not mask.any():
        raise ValidationError("no nondegenerate eigenstate in the requested window")
    return int(np.argmax(np.where(mask, overlap, -np.inf)))
