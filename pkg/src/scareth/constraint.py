"""Blockades, constrained and non-Hermitian Hamiltonians, engineered dissipators.

Every operator is assembled from small dense matrices on a few sites (a
"local term") which are then compressed onto a basis: the constrained basis for
spectral work, or the full product basis for dissipative dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .basis import ConstrainedBasis, enumerate_basis, product_basis
from .errors import ConsistencyError, ValidationError
from .model import GENERIC, HD_PXP, SPIN_CHAIN, ModelSpec, bond_projector, spin_matrices
from .operators import CONSTRAINED, FULL, SparseOperator, local_operator

BOND = "bond"
FRAMEWORK = "framework"
VARIANTS = ("HN", "Hplus", "HplusPrime")


@dataclass(frozen=True)
class LocalTerm:
    sites: tuple[int, ...]
    op: np.ndarray


def lift(op: np.ndarray, sites, support, d: int) -> np.ndarray:
    """Dense operator on ``sites`` re-expressed on the larger ``support``."""
    pos = tuple(support.index(s) for s in sites)
    return local_operator(op, pos, len(support), d).toarray()


def _tag(basis: ConstrainedBasis) -> str:
    return FULL if basis.tag == "full" else CONSTRAINED


def _compress(terms, basis: ConstrainedBasis) -> sp.csr_matrix:
    total = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for t in terms:
        total = total + basis.operator(t.op, t.sites)
    return total


def _check_basis(spec: ModelSpec, basis: ConstrainedBasis):
    if basis.spec != spec:
        raise ConsistencyError("basis was built for a different model spec")


# ---------------------------------------------------------------------------
# local building blocks


def bond_terms(spec: ModelSpec) -> list[LocalTerm]:
    """One blockade projector pi_k per bond."""
    pi = bond_projector(spec)
    return [LocalTerm(b, pi) for b in spec.bonds()]


def check_blockades(spec: ModelSpec) -> None:
    """Each pi is a projector and overlapping pairs of pi commute (raises otherwise)."""
    d = spec.local_dim
    pi = bond_projector(spec)
    if not np.allclose(pi @ pi, pi, atol=1e-12):
        raise ValidationError("bond blockade is not a projector")
    bonds = spec.bonds()
    for a, b in zip(bonds, bonds[1:] + bonds[:1]):
        if a == b or not set(a) & set(b):
            continue
        support = tuple(sorted(set(a) | set(b)))
        pa, pb = lift(pi, a, support, d), lift(pi, b, support, d)
        if np.abs(pa @ pb - pb @ pa).max() > 1e-12:
            raise ValidationError(f"blockades on bonds {a} and {b} do not commute")


def _site_h(spec: ModelSpec) -> list[np.ndarray]:
    return spec.local_hamiltonians()


@lru_cache(maxsize=64)
def _site_constraints(spec: ModelSpec) -> tuple:
    """(support, h_k, Pi_k) for every site, all lifted to the support."""
    d = spec.local_dim
    pi = bond_projector(spec)
    hs = _site_h(spec)
    out = []
    for k in range(spec.n_logical):
        touching = []
        for b in spec.bonds():
            if k not in b:
                continue
            sup = tuple(sorted(set(b)))
            pib = lift(pi, b, sup, d)
            hk = lift(hs[k], (k,), sup, d)
            if np.abs(pib @ hk - hk @ pib).max() > 1e-12:
                touching.append(b)
        support = tuple(sorted({k, *[s for b in touching for s in b]}))
        dim = d ** len(support)
        pk = np.identity(dim, dtype=complex)
        for b in touching:
            pk = pk @ (np.identity(dim) - lift(pi, b, support, d))
        big_pi = np.identity(dim) - pk
        out.append((support, lift(hs[k], (k,), support, d), big_pi))
    return tuple(out)


def hamiltonian_terms(spec: ModelSpec) -> list[LocalTerm]:
    return [LocalTerm((k,), h) for k, h in enumerate(_site_h(spec))]


# ---------------------------------------------------------------------------
# public builders


def build_projectors(spec: ModelSpec, basis: ConstrainedBasis | None = None) -> dict:
    """P-hat, bond blockades pi_k and local blockades Pi_k on the full product space."""
    check_blockades(spec)
    full = basis if basis is not None else product_basis(spec)
    _check_basis(spec, full)
    tag = _tag(full)
    pis = [SparseOperator.build(full.operator(t.op, t.sites), tag) for t in bond_terms(spec)]
    big = [
        SparseOperator.build(full.operator(pk, sup), tag) for sup, _, pk in _site_constraints(spec)
    ]
    # P-hat is diagonal: 1 on blockade-free product states
    cons = enumerate_basis(spec)
    _, inside = cons.locate(full.codes)
    proj = SparseOperator.build(sp.diags(inside.astype(complex), format="csr"), tag, hermitian=True)
    return {"P": proj, "pi": pis, "Pi": big}


def build_constrained_hamiltonian(spec: ModelSpec, basis: ConstrainedBasis) -> SparseOperator:
    """P H0 P in the given basis (the constrained Hamiltonian when basis is constrained)."""
    _check_basis(spec, basis)
    mat = _compress(hamiltonian_terms(spec), basis)
    if basis.tag == "full":
        inside = build_projectors(spec, basis)["P"].matrix
        mat = inside @ mat @ inside
    return SparseOperator.build(mat, _tag(basis), hermitian=True)


def build_full_hamiltonian(spec: ModelSpec, form: str = FRAMEWORK, basis: ConstrainedBasis | None = None) -> SparseOperator:
    """Product-space Hamiltonians.

    ``unconstrained``: H0 = sum h_k.
    ``framework``: sum h - Pi h - h Pi + Pi h Pi.
    ``bond`` (spin chain only): sum s^x - sqrt(j) (M_k + M_k^dag).
    """
    full = basis if basis is not None else product_basis(spec)
    _check_basis(spec, full)
    h0 = _compress(hamiltonian_terms(spec), full)
    if form == "unconstrained":
        return SparseOperator.build(h0, FULL, hermitian=True)
    if form == FRAMEWORK:
        terms = []
        for sup, hk, pk in _site_constraints(spec):
            terms.append(LocalTerm(sup, hk - pk @ hk - hk @ pk + pk @ hk @ pk))
        return SparseOperator.build(_compress(terms, full), FULL, hermitian=True)
    if form == BOND:
        if spec.family != SPIN_CHAIN:
            raise ValidationError("the bond form exists only for the spin-chain family")
        rt = np.sqrt(float(spec.j))
        m = [LocalTerm(b, -rt * (mk + mk.conj().T)) for b, mk in zip(spec.bonds(), _mapping_matrices(spec))]
        return SparseOperator.build(h0 + _compress(m, full), FULL, hermitian=True)
    raise ValidationError(f"unknown Hamiltonian form {form!r}")


def _bond_vectors(spec: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """|x> = |j,-j> and |y> = (|j,-j+1> + |j-1,-j>)/sqrt(2) on one bond."""
    d = spec.local_dim
    x = np.zeros(d * d, dtype=complex)
    y = np.zeros(d * d, dtype=complex)
    x[0 * d + (d - 1)] = 1
    y[0 * d + (d - 2)] = 1 / np.sqrt(2)
    y[1 * d + (d - 1)] = 1 / np.sqrt(2)
    return x, y


def _mapping_matrices(spec: ModelSpec) -> list[np.ndarray]:
    x, y = _bond_vectors(spec)
    return [np.outer(x, y.conj())] * len(spec.bonds())


@dataclass(frozen=True, eq=False)
class Channels:
    """Two families of engineered dissipators: rates and local jump operators."""

    recipe: str
    gamma1: float
    gamma2: float
    L1: tuple[LocalTerm, ...]
    L2: tuple[LocalTerm, ...]

    @property
    def M(self) -> tuple[LocalTerm, ...]:
        return self.L2

    @property
    def gamma_prime(self) -> float:
        return -self.gamma2


def build_mapping_ops(spec: ModelSpec, recipe: str | None = None) -> Channels:
    """Engineered dissipation channels.

    ``bond`` (spin-chain default): gamma1 = c sqrt(2j), L1 = pi_k - (i sqrt2/c) M_k;
    gamma2 = -2 sqrt(2j)/c, L2 = M_k = |x><y|.
    ``framework``: gamma1 = 2c, L1 = Pi_k - (i/c) Pi_k h_k; gamma2 = -2/c, L2 = Pi_k h_k.
    """
    c = spec.c
    if c <= 0:
        raise ValidationError(f"c: must be positive, got {c}")
    if recipe is None:
        recipe = BOND if spec.family == SPIN_CHAIN else FRAMEWORK
    if recipe == BOND:
        if spec.family != SPIN_CHAIN:
            raise ValidationError("the bond recipe exists only for the spin-chain family")
        pi = bond_projector(spec)
        twoj = 2 * float(spec.j)
        L1, L2 = [], []
        for b, mk in zip(spec.bonds(), _mapping_matrices(spec)):
            L1.append(LocalTerm(b, pi - (1j * np.sqrt(2) / c) * mk))
            L2.append(LocalTerm(b, mk))
        return Channels(BOND, c * np.sqrt(twoj), -2 * np.sqrt(twoj) / c, tuple(L1), tuple(L2))
    if recipe == FRAMEWORK:
        L1, L2 = [], []
        for sup, hk, pk in _site_constraints(spec):
            if not np.any(np.abs(pk) > 1e-14):
                continue
            L1.append(LocalTerm(sup, pk - (1j / c) * pk @ hk))
            L2.append(LocalTerm(sup, pk @ hk))
        return Channels(FRAMEWORK, 2 * c, -2 / c, tuple(L1), tuple(L2))
    raise ValidationError(f"unknown dissipator recipe {recipe!r}")


def jump_operators(channels: Channels, basis: ConstrainedBasis, which=(1, 2)) -> list[tuple[float, sp.csr_matrix]]:
    """(rate, sparse L) pairs on ``basis`` for the requested channel families."""
    out = []
    if 1 in which:
        out += [(channels.gamma1, basis.operator(t.op, t.sites)) for t in channels.L1]
    if 2 in which:
        out += [(channels.gamma2, basis.operator(t.op, t.sites)) for t in channels.L2]
    return out


def _decay_sum(terms) -> sp.csr_matrix:
    """sum_k gamma L^dag L."""
    acc = None
    for g, L in terms:
        part = g * (L.conj().T @ L)
        acc = part if acc is None else acc + part
    return acc


def build_nonhermitian(
    spec: ModelSpec,
    variant: str,
    channels: Channels | None = None,
    basis: ConstrainedBasis | None = None,
) -> SparseOperator:
    """Effective non-Hermitian Hamiltonians on the full product space.

    HN = H0 - i/2 sum_sigma,k gamma_sigma L^dag L; Hplus keeps only channel 1;
    HplusPrime = P H0 P - i/2 gamma' sum_k L2^dag L2 with gamma' = -gamma2.
    """
    if variant not in VARIANTS:
        raise ValidationError(f"variant: {variant!r} not in {VARIANTS}")
    channels = channels or build_mapping_ops(spec)
    full = basis if basis is not None else product_basis(spec)
    _check_basis(spec, full)
    if variant == "HplusPrime":
        base = build_constrained_hamiltonian(spec, full).matrix
        decay = _decay_sum([(channels.gamma_prime, L) for _, L in jump_operators(channels, full, (2,))])
    else:
        base = _compress(hamiltonian_terms(spec), full)
        which = (1, 2) if variant == "HN" else (1,)
        decay = _decay_sum(jump_operators(channels, full, which))
    return SparseOperator.build(base - 0.5j * decay, _tag(full), hermitian=False)


def build_quasiparticle_counter(
    spec: ModelSpec, basis: ConstrainedBasis | None = None, channels: Channels | None = None, site: int | None = None
) -> SparseOperator:
    """N-hat = sum_k L2^dag L2 (or a single N_k with ``site``), compressed onto ``basis``.

    Each N_k is formed as a dense local product before compression, so on a
    constrained basis this is P N P exactly.
    """
    channels = channels or build_mapping_ops(spec)
    basis = basis if basis is not None else product_basis(spec)
    _check_basis(spec, basis)
    terms = [LocalTerm(t.sites, t.op.conj().T @ t.op) for t in channels.L2]
    if site is not None:
        if not 0 <= site < len(terms):
            raise ValidationError(f"site {site + 1} outside [1, {len(terms)}]")
        terms = [terms[site]]
    return SparseOperator.build(_compress(terms, basis), _tag(basis), hermitian=True)


# ---------------------------------------------------------------------------
# observables


def _o1(spec: ModelSpec) -> np.ndarray:
    d = spec.local_dim
    diag = np.zeros(d)
    if spec.j == 1:
        diag[:2] = 1.0  # |1><1| + |0><0|
    else:
        diag[0] = 1.0  # |j><j|
    return np.diag(diag).astype(complex)


def observable_catalog(spec: ModelSpec) -> dict[str, tuple[int, np.ndarray]]:
    """name -> (site stride, dense local operator) for the built-in observables.

    Stride is the distance between the first and last site (0 for one-site).
    """
    if spec.family == HD_PXP:
        from .hdpxp import member_sz

        first, second = member_sz(spec.j)
        return {"hd-O1": (0, first), "hd-O2": (1, np.kron(first, first))}
    s = spin_matrices(spec.j) if spec.family != GENERIC else None
    cat = {}
    if s is not None:
        d = spec.local_dim
        up = np.zeros(d)
        up[0] = 1
        dn = np.zeros(d)
        dn[-1] = 1
        bell = (np.kron(up, up) - np.kron(dn, dn)) / np.sqrt(2)
        cat["O1"] = (0, _o1(spec))
        cat["O2"] = (1, np.kron(s["z"], s["z"]).astype(complex))
        cat["O3"] = (1, np.outer(bell, bell).astype(complex))
        cat["sz"] = (0, s["z"].astype(complex))
    return cat


def _hd_terms(spec: ModelSpec, name: str, k: int) -> list[LocalTerm]:
    from .hdpxp import member_sz, physical_site

    first, second = member_sz(spec.j)
    member = (first, second)
    l, m = physical_site(k)
    n = spec.n_logical
    if name == "hd-O1":
        return [LocalTerm((l,), member[m])]
    # s^z_k s^z_{k+2}: same member on neighbouring logical sites
    if l + 1 >= n and not spec.periodic:
        raise ValidationError(f"site {k + 1}: hd-O2 needs site {k + 3} on an open chain")
    return [LocalTerm((l, (l + 1) % n), np.kron(member[m], member[m]))]


def observable_terms(spec: ModelSpec, descriptor) -> list[tuple[float, LocalTerm]]:
    """Weighted local terms for an observable descriptor.

    ``descriptor`` is a name or a dict with keys ``name``, ``site`` (1-based),
    ``averaged`` (bool, default True when no site is given) and, for
    ``custom``, ``matrix``.  hd-pxp names address physical sites.
    """
    if isinstance(descriptor, str):
        descriptor = {"name": descriptor}
    name = descriptor.get("name")
    site = descriptor.get("site")
    averaged = descriptor.get("averaged", site is None)
    n_phys = spec.n_sites
    n = spec.n_logical

    if spec.family == HD_PXP and name in ("hd-O1", "hd-O2"):
        sites = range(n_phys) if averaged else [_site0(site, n_phys)]
        terms = []
        for k in sites:
            if name == "hd-O2" and not spec.periodic and k + 2 >= n_phys:
                if averaged:
                    continue
            terms += _hd_terms(spec, name, k)
        w = 1.0 / len(terms)
        return [(w if averaged else 1.0, t) for t in terms]

    if name == "N":
        ch = build_mapping_ops(spec)
        terms = [LocalTerm(t.sites, t.op.conj().T @ t.op) for t in ch.L2]
        if averaged:
            return [(1.0 / len(terms), t) for t in terms]
        return [(1.0, terms[_site0(site, len(terms))])]

    if name == "custom":
        op = np.asarray(descriptor["matrix"], dtype=complex)
        d = spec.local_dim
        if op.shape == (d, d):
            stride = 0
        elif op.shape == (d * d, d * d):
            stride = 1
        else:
            raise ValidationError(f"custom matrix shape {op.shape} is neither one- nor two-site")
    else:
        cat = observable_catalog(spec)
        if name not in cat:
            raise ValidationError(f"observable {name!r} not in {sorted(cat) + ['N', 'custom']}")
        stride, op = cat[name]

    def at(k):
        if stride == 0:
            return LocalTerm((k,), op)
        if k + 1 >= n and not spec.periodic:
            raise ValidationError(f"site {k + 1}: two-site observable runs off the open chain")
        return LocalTerm((k, (k + 1) % n), op)

    if averaged:
        ks = [k for k in range(n) if stride == 0 or spec.periodic or k + 1 < n]
        return [(1.0 / len(ks), at(k)) for k in ks]
    return [(1.0, at(_site0(site, n)))]


def _site0(site, n: int) -> int:
    if site is None:
        raise ValidationError("site: required when averaged is false")
    if int(site) != site or not 1 <= site <= n:
        raise ValidationError(f"site {site} outside [1, {n}]")
    return int(site) - 1


def build_local_observable(spec: ModelSpec, descriptor, basis: ConstrainedBasis | None = None) -> SparseOperator:
    basis = basis if basis is not None else enumerate_basis(spec)
    _check_basis(spec, basis)
    mat = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for w, t in observable_terms(spec, descriptor):
        mat = mat + w * basis.operator(t.op, t.sites)
    return SparseOperator.build(mat, _tag(basis), hermitian=True)


def observable_name(descriptor) -> str:
    if isinstance(descriptor, str):
        return descriptor
    name = descriptor.get("label") or descriptor.get("name")
    if descriptor.get("site") is not None and not descriptor.get("averaged", False):
        name = f"{name}@{descriptor['site']}"
    return name


def translation_permutation(basis: ConstrainedBasis) -> np.ndarray:
    """perm[i] = index of the state shifted by one site (periodic chains)."""
    shifted = np.roll(basis.states, 1, axis=1)
    d, n = basis.local_dim, basis.n_sites
    codes = shifted @ (d ** np.arange(n - 1, -1, -1, dtype=np.int64))
    pos, ok = basis.locate(codes)
    if not ok.all():
        raise ValidationError("basis is not translation invariant")
    return pos
