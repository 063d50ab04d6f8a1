"""Unitary, master-equation and quantum-trajectory time evolution.

Three generators are supported, all written as
    d rho/dt = -i (H_eff rho - rho H_eff^dag) + sum_k gamma_k L_k rho L_k^dag:

* Full: H_eff = HN with both channel families (one rate negative).
* Positive: H_eff = Hplus with channel 1 only.
* LindbladPrime: H_eff = HplusPrime with rate gamma' = -gamma2 on L_{k,2}.

Density matrices and trajectory states live in the full product basis.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .basis import ConstrainedBasis, enumerate_basis, product_basis
from .constraint import (
    BOND,
    build_constrained_hamiltonian,
    build_mapping_ops,
    build_nonhermitian,
    build_projectors,
    jump_operators,
)
from .errors import CapacityError, IntegrationError, ValidationError
from .model import SPIN_CHAIN, ModelSpec
from .spectra import EigenSystem, fmt

DM_CAP = 3**7
TRACE_DRIFT_LIMIT = 1e-4
BISECTION_TOL = 1e-6
MASK64 = (1 << 64) - 1
GOLDEN64 = 0x9E3779B97F4A7C15


class LiouvillianKind(str, Enum):
    FULL = "Full"
    POSITIVE = "Positive"
    LINDBLAD_PRIME = "LindbladPrime"


def parse_kind(kind) -> LiouvillianKind:
    try:
        return LiouvillianKind(kind)
    except ValueError:
        raise ValidationError(f"kind: {kind!r} not in {[k.value for k in LiouvillianKind]}") from None


# ---------------------------------------------------------------------------
# time series


@dataclass
class TimeSeries:
    times: np.ndarray
    channels: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    snapshots: list | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValidationError("times must be strictly increasing")
        for name, v in self.channels.items():
            if len(v) != len(self.times):
                raise ValidationError(f"channel {name!r} has {len(v)} values for {len(self.times)} times")

    def __getitem__(self, name) -> np.ndarray:
        return self.channels[name]

    def write_csv(self, path) -> None:
        """CSV (t, channels...) plus a JSON sidecar with the run metadata."""
        names = list(self.channels)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", *names])
            for i, t in enumerate(self.times):
                w.writerow([fmt(t), *(fmt(self.channels[n][i]) for n in names)])
        with open(str(path) + ".json", "w") as fh:
            json.dump(self.metadata, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")


def time_grid(t_max: float, step: float, t0: float = 0.0) -> np.ndarray:
    if step <= 0 or t_max <= t0:
        raise ValidationError("time grid needs a positive step and t_max > t0")
    n = int(round((t_max - t0) / step))
    return np.linspace(t0, t0 + n * step, n + 1)


def check_grid(times) -> np.ndarray:
    """Uniform, strictly increasing grid (a single point is allowed)."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValidationError("time grid must be a non-empty 1-D array")
    if times.size > 1:
        steps = np.diff(times)
        if np.any(steps <= 0):
            raise ValidationError("time grid has a non-positive step")
        if np.ptp(steps) > 1e-9 * max(1.0, abs(steps[0])):
            raise ValidationError("time grid must be uniform")
    return times


# ---------------------------------------------------------------------------
# unitary evolution in the eigenbasis


def evolve_unitary(
    eigsys: EigenSystem,
    psi0: np.ndarray,
    times,
    observables: dict | None = None,
    snapshots: bool = False,
    chunk: int = 128,
) -> TimeSeries:
    """|psi(t)> = sum_i exp(-i E_i t) <E_i|psi0> |E_i>; fidelity plus observables."""
    times = check_grid(times)
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1) > 1e-8:
        raise ValidationError("psi0 must be normalized")
    v = eigsys.vectors
    coef = v.conj().T @ psi0
    weights = np.abs(coef) ** 2
    phases = np.exp(-1j * np.outer(eigsys.energies, times))
    amp = weights @ phases
    channels = {"fidelity": np.abs(amp) ** 2}
    snaps = [] if snapshots else None
    observables = observables or {}
    obs = {name: np.empty(len(times)) for name in observables}
    if observables or snapshots:
        for lo in range(0, len(times), chunk):
            block = v @ (coef[:, None] * phases[:, lo : lo + chunk])
            for name, op in observables.items():
                mat = op.matrix if hasattr(op, "matrix") else op
                obs[name][lo : lo + chunk] = np.real(np.einsum("ij,ij->j", block.conj(), mat @ block))
            if snapshots:
                snaps.extend(block.T.copy())
    channels.update(obs)
    return TimeSeries(times, channels, {"method": "unitary", "dim": eigsys.dim}, snaps)


# ---------------------------------------------------------------------------
# generators


@dataclass(frozen=True, eq=False)
class Generator:
    kind: LiouvillianKind
    spec: ModelSpec
    basis: ConstrainedBasis
    H_eff: sp.csr_matrix
    jumps: tuple
    inside: np.ndarray  # boolean mask of constrained product states

    @property
    def dim(self) -> int:
        return self.basis.dim


def build_generator(spec: ModelSpec, kind, basis: ConstrainedBasis | None = None, recipe: str | None = None) -> Generator:
    kind = parse_kind(kind)
    basis = basis if basis is not None else product_basis(spec)
    channels = build_mapping_ops(spec, recipe)
    if kind is LiouvillianKind.FULL:
        H = build_nonhermitian(spec, "HN", channels, basis).matrix
        jumps = jump_operators(channels, basis, (1, 2))
    elif kind is LiouvillianKind.POSITIVE:
        H = build_nonhermitian(spec, "Hplus", channels, basis).matrix
        jumps = jump_operators(channels, basis, (1,))
    else:
        H = build_nonhermitian(spec, "HplusPrime", channels, basis).matrix
        jumps = [(channels.gamma_prime, L) for _, L in jump_operators(channels, basis, (2,))]
    inside = np.real(build_projectors(spec, basis)["P"].matrix.diagonal()) > 0.5
    return Generator(kind, spec, basis, H, tuple(jumps), inside)


def blockade_rate(spec: ModelSpec, recipe: str | None = None) -> float:
    """Decay rate of amplitude on blockaded states under the stiff generators."""
    if spec.family == SPIN_CHAIN and (recipe or BOND) == BOND:
        return spec.c * np.sqrt(float(spec.j) / 2)
    return spec.c


def default_dt(spec: ModelSpec, kind, recipe: str | None = None) -> float:
    """min(0.01, 0.1 / rate) for the stiff kinds; 0.01 for LindbladPrime.

    LindbladPrime carries no c-sized term, so it is not stiff.
    """
    if parse_kind(kind) is LiouvillianKind.LINDBLAD_PRIME:
        return 0.01
    return min(0.01, 0.1 / blockade_rate(spec, recipe))


def _substeps(times: np.ndarray, dt: float) -> tuple[int, float]:
    if len(times) < 2:
        return 0, dt
    delta = times[1] - times[0]
    n = max(1, int(np.ceil(delta / dt - 1e-9)))
    return n, delta / n


def _full_state(spec: ModelSpec, basis: ConstrainedBasis, state) -> np.ndarray:
    """Accept a full-basis vector, a constrained-basis vector or a tuple of m labels."""
    if isinstance(state, tuple):
        return basis.product_state(state)
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1 and len(state) != basis.dim:
        cons = enumerate_basis(spec)
        if len(state) != cons.dim:
            raise ValidationError(f"state length {len(state)} matches neither basis")
        return cons.embedding(basis) @ state
    return state


# ---------------------------------------------------------------------------
# density-matrix integration

SUPEROP_MAX_DIM = 400


def lindblad_rhs(gen: Generator):
    """Matrix-form right-hand side for Hermitian rho."""
    H = gen.H_eff

    def rhs(rho):
        a = H @ rho
        out = -1j * (a - a.conj().T)
        for g, L in gen.jumps:
            out += g * (L @ (L @ rho).conj().T)
        return out

    return rhs


def superoperator(gen: Generator) -> sp.csr_matrix:
    """Row-major vectorized generator: vec(rhs(rho)) = S @ rho.ravel()."""
    d = gen.dim
    eye = sp.identity(d, dtype=complex, format="csr")
    S = -1j * (sp.kron(gen.H_eff, eye) - sp.kron(eye, gen.H_eff.conj()))
    for g, L in gen.jumps:
        S = S + g * sp.kron(L, L.conj())
    return S.tocsr()


def diagonal_rates(gen: Generator) -> np.ndarray:
    """lambda_ab: the part of the generator that maps rho_ab onto itself.

    -i(H_aa - conj(H_bb)) + sum_k gamma_k L_aa conj(L_bb).  Every c-sized term
    of the three generators lives here, since blockades are diagonal.
    """
    h = gen.H_eff.diagonal()
    lam = -1j * (h[:, None] - h.conj()[None, :])
    for g, L in gen.jumps:
        ld = L.diagonal()
        if np.any(ld):
            lam = lam + g * np.outer(ld, ld.conj())
    return lam


class _Propagator:
    """Fixed-step RK4 ("rk4") or integrating-factor RK4 ("lawson") for rho."""

    def __init__(self, gen: Generator, integrator: str):
        if integrator not in ("rk4", "lawson"):
            raise ValidationError(f"integrator: {integrator!r} not in (rk4, lawson)")
        self.integrator = integrator
        d = gen.dim
        self.lam = diagonal_rates(gen) if integrator == "lawson" else None
        if d <= SUPEROP_MAX_DIM:
            S = superoperator(gen)
            if self.lam is not None:
                S = (S - sp.diags(self.lam.ravel())).tocsr()
            self.rhs = lambda rho: (S @ rho.ravel()).reshape(d, d)
        else:
            full = lindblad_rhs(gen)
            lam = self.lam
            self.rhs = full if lam is None else (lambda rho: full(rho) - lam * rho)
        self._h = None

    def step(self, rho, h):
        f = self.rhs
        if self.integrator == "rk4":
            k1 = f(rho)
            k2 = f(rho + 0.5 * h * k1)
            k3 = f(rho + 0.5 * h * k2)
            k4 = f(rho + h * k3)
            return rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if self._h != h:
            self._e1 = np.exp(0.5 * h * self.lam)
            self._e2 = self._e1 * self._e1
            self._h = h
        e1, e2 = self._e1, self._e2
        k1 = f(rho)
        k2 = f(e1 * (rho + 0.5 * h * k1))
        k3 = f(e1 * rho + 0.5 * h * k2)
        k4 = f(e2 * rho + h * e1 * k3)
        return e2 * rho + (h / 6) * (e2 * k1 + 2 * e1 * (k2 + k3) + k4)


def evolve_master(
    spec: ModelSpec,
    kind,
    rho0,
    times,
    dt: float | None = None,
    observables: dict | None = None,
    reference=None,
    snapshots: bool = False,
    generator: Generator | None = None,
    integrator: str = "lawson",
    cap: int = DM_CAP,
) -> TimeSeries:
    """Fixed-step integration of the chosen master equation.

    ``lawson`` (default) treats the diagonal rates exactly and runs RK4 on the
    rest; ``rk4`` is plain RK4 and defaults to the stiff step-size rule.
    Channels: fidelity <ref|rho|ref> (ref defaults to a pure rho0), leakage
    Tr(rho P), trace, and Tr(rho O) per observable (full-basis matrices).
    """
    kind = parse_kind(kind)
    times = check_grid(times)
    if spec.full_dim > cap:
        raise CapacityError("density matrix", spec.full_dim, cap, "use sample_trajectories")
    gen = generator or build_generator(spec, kind)
    if dt is None:
        dt = default_dt(spec, kind) if integrator == "rk4" else 0.01
    if dt <= 0:
        raise ValidationError("dt must be positive")
    if not isinstance(rho0, np.ndarray) or rho0.ndim == 1:
        rho0 = _full_state(spec, gen.basis, rho0)
    if rho0.ndim == 1:
        ref = rho0 if reference is None else _full_state(spec, gen.basis, reference)
        rho = np.outer(rho0, rho0.conj())
    else:
        rho = np.array(rho0, dtype=complex)
        ref = None if reference is None else _full_state(spec, gen.basis, reference)
    if rho.shape != (gen.dim, gen.dim):
        raise ValidationError(f"rho0 shape {rho.shape} != ({gen.dim}, {gen.dim})")
    if np.abs(rho - rho.conj().T).max() > 1e-12 or abs(np.trace(rho) - 1) > 1e-10:
        raise ValidationError("rho0 must be Hermitian with unit trace")

    prop = _Propagator(gen, integrator)
    nsub, h = _substeps(times, dt)
    observables = observables or {}
    out = {"fidelity": [], "leakage": [], "trace": []} if ref is not None else {"leakage": [], "trace": []}
    for name in observables:
        out[name] = []
    snaps = [] if snapshots else None

    def record(r):
        if ref is not None:
            out["fidelity"].append(float(np.real(ref.conj() @ r @ ref)))
        diag = np.real(np.diagonal(r))
        out["leakage"].append(float(diag[gen.inside].sum()))
        out["trace"].append(float(diag.sum()))
        for name, op in observables.items():
            mat = op.matrix if hasattr(op, "matrix") else op
            out[name].append(float(np.real((mat.multiply(r.T)).sum())))
        if snapshots:
            snaps.append(r.copy())

    record(rho)
    for g in range(1, len(times)):
        for _ in range(nsub):
            rho = prop.step(rho, h)
            rho = 0.5 * (rho + rho.conj().T)
        drift = abs(np.trace(rho).real - 1)
        if not np.isfinite(drift) or drift > TRACE_DRIFT_LIMIT:
            raise IntegrationError(f"trace drift {drift:.3g} at t={times[g]:.6g}; reduce dt (now {h:.3g})")
        record(rho)
    meta = {
        "method": "master",
        "integrator": integrator,
        "kind": kind.value,
        "c": spec.c,
        "dt": h,
        "spec_hash": spec.spec_hash(),
    }
    return TimeSeries(times, {k: np.array(v) for k, v in out.items()}, meta, snaps)


# ---------------------------------------------------------------------------
# no-return evolution inside the constrained space


def constrained_generator(spec: ModelSpec, kind, basis: ConstrainedBasis | None = None, recipe: str | None = None) -> sp.csr_matrix:
    """K = P H_eff P on the constrained basis: H - (i/2) sum gamma P L^dag L P."""
    kind = parse_kind(kind)
    basis = basis if basis is not None else enumerate_basis(spec)
    ch = build_mapping_ops(spec, recipe)
    H = build_constrained_hamiltonian(spec, basis).matrix
    if kind is LiouvillianKind.FULL:
        terms = [(ch.gamma1, t) for t in ch.L1] + [(ch.gamma2, t) for t in ch.L2]
    elif kind is LiouvillianKind.POSITIVE:
        terms = [(ch.gamma1, t) for t in ch.L1]
    else:
        terms = [(ch.gamma_prime, t) for t in ch.L2]
    decay = sp.csr_matrix(H.shape, dtype=complex)
    for g, t in terms:
        decay = decay + g * basis.operator(t.op.conj().T @ t.op, t.sites)
    return (H - 0.5j * decay).tocsr()


def evolve_projected(
    spec: ModelSpec,
    kind,
    psi0: np.ndarray,
    times,
    basis: ConstrainedBasis | None = None,
    observables: dict | None = None,
    generator: sp.csr_matrix | None = None,
) -> TimeSeries:
    """Evolve the no-jump component exp(-iKt) psi0 inside the constrained space.

    fidelity = |<psi0|phi(t)>|^2 and leakage = ||phi(t)||^2.  Both are exact
    for LindbladPrime, whose blockaded region is absorbing; for Positive they
    neglect population that jumps out and later returns.
    """
    kind = parse_kind(kind)
    times = check_grid(times)
    basis = basis if basis is not None else enumerate_basis(spec)
    K = generator if generator is not None else constrained_generator(spec, kind, basis)
    psi0 = np.asarray(psi0, dtype=complex)
    if len(psi0) != basis.dim:
        raise ValidationError(f"psi0 length {len(psi0)} != constrained dim {basis.dim}")
    if len(times) == 1:
        states = psi0[None, :] if times[0] == 0 else expm_multiply(-1j * times[0] * K, psi0)[None, :]
    else:
        states = expm_multiply(-1j * K, psi0, start=times[0], stop=times[-1], num=len(times), endpoint=True)
    channels = {
        "fidelity": np.abs(states @ psi0.conj()) ** 2,
        "leakage": np.real(np.einsum("ij,ij->i", states.conj(), states)),
    }
    for name, op in (observables or {}).items():
        mat = op.matrix if hasattr(op, "matrix") else op
        channels[name] = np.real(np.einsum("ij,ij->i", states.conj(), (mat @ states.T).T))
    meta = {"method": "projected", "kind": kind.value, "c": spec.c, "spec_hash": spec.spec_hash()}
    return TimeSeries(times, channels, meta)


# ---------------------------------------------------------------------------
# quantum trajectories


def splitmix64(x: int) -> int:
    z = x & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trajectory_seed(base_seed: int, index: int) -> int:
    """The (index+1)-th output of a splitmix64 stream started at base_seed."""
    return splitmix64((base_seed + (index + 1) * GOLDEN64) & MASK64)


class _Stepper:
    """Integrating-factor RK4 for d psi/dt = -i H_eff psi.

    The diagonal of -i H_eff (which holds the c-sized blockade decay) is
    integrated exactly; RK4 handles the off-diagonal remainder.
    """

    def __init__(self, H):
        A = (-1j * H).tocsr()
        self.diag = A.diagonal()
        self.A = (A - sp.diags(self.diag)).tocsr()

    def __call__(self, psi, h):
        A = self.A
        e1 = np.exp(0.5 * h * self.diag)
        e2 = e1 * e1
        k1 = A @ psi
        k2 = A @ (e1 * (psi + 0.5 * h * k1))
        k3 = A @ (e1 * psi + 0.5 * h * k2)
        k4 = A @ (e2 * psi + h * e1 * k3)
        return e2 * psi + (h / 6) * (e2 * k1 + 2 * e1 * (k2 + k3) + k4)


def _norm2(psi) -> float:
    return float(np.real(np.vdot(psi, psi)))


def _bisect_jump(step, psi, h, r):
    """Time tau in (0, h] where ||psi(tau)||^2 falls to r, and the state there."""
    lo, hi = 0.0, h
    state = step(psi, hi)
    for _ in range(60):
        n2 = _norm2(state)
        if abs(n2 - r) < BISECTION_TOL:
            break
        mid = 0.5 * (lo + hi)
        trial = step(psi, mid)
        if _norm2(trial) > r:
            lo = mid
        else:
            hi, state = mid, trial
    return hi, state


class _Trajectory:
    """One MCWF trajectory: pre-drawn threshold, bisection-refined jumps."""

    def __init__(self, gen: Generator, step: _Stepper, rng: np.random.Generator):
        self.gen = gen
        self.step = step
        self.rng = rng
        self.r = rng.random()
        self.jumps = 0

    def jump(self, psi):
        weights = np.array([g * _norm2(L @ psi) for g, L in self.gen.jumps])
        total = weights.sum()
        if total <= 0:
            raise IntegrationError("jump requested with zero total jump weight")
        k = int(np.searchsorted(np.cumsum(weights) / total, self.rng.random(), side="right"))
        k = min(k, len(weights) - 1)
        out = self.gen.jumps[k][1] @ psi
        self.r = self.rng.random()
        self.jumps += 1
        return out / np.sqrt(_norm2(out))

    def advance(self, psi, h):
        """Evolve by h, jumping as often as the norm threshold demands."""
        remaining = h
        while remaining > 0:
            trial = self.step(psi, remaining)
            if _norm2(trial) > self.r:
                return trial
            tau, at = _bisect_jump(self.step, psi, remaining, self.r)
            psi = self.jump(at)
            remaining -= tau
            if remaining <= 1e-15 * h:
                return psi
        return psi


def sample_trajectories(
    spec: ModelSpec,
    kind,
    psi0,
    times,
    n_traj: int,
    seed: int,
    dt: float | None = None,
    observables: dict | None = None,
    threads: int = 1,
    generator: Generator | None = None,
    absorbing_shortcut: bool = True,
) -> TimeSeries:
    """Monte Carlo wave-function average of fidelity, leakage and observables.

    All trajectories share the deterministic no-jump path until their own
    threshold is crossed.  With ``absorbing_shortcut`` and kind LindbladPrime,
    a trajectory that has jumped sits in the blockaded region for good, where
    fidelity and leakage vanish, so it is not propagated further (this is
    checked on the jumped state).  Observables disable the shortcut.
    """
    kind = parse_kind(kind)
    if kind is LiouvillianKind.FULL:
        raise ValidationError("kind Full has a negative rate and admits no jump unraveling")
    if n_traj < 1:
        raise ValidationError("n_traj must be at least 1")
    if seed is None or int(seed) != seed or seed < 0:
        raise ValidationError("seed: a non-negative integer seed is required")
    times = check_grid(times)
    gen = generator or build_generator(spec, kind)
    dt = 0.01 if dt is None else dt
    psi0 = _full_state(spec, gen.basis, psi0)
    psi0 = psi0 / np.sqrt(_norm2(psi0))
    step = _Stepper(gen.H_eff)
    nsub, h = _substeps(times, dt)
    G = len(times)
    observables = {k: (v.matrix if hasattr(v, "matrix") else v) for k, v in (observables or {}).items()}
    names = ["fidelity", "leakage", *observables]
    inside = gen.inside
    shortcut = absorbing_shortcut and kind is LiouvillianKind.LINDBLAD_PRIME and not observables

    def measure(psi):
        n2 = _norm2(psi)
        vals = [abs(np.vdot(psi0, psi)) ** 2 / n2, float(np.sum(np.abs(psi[inside]) ** 2)) / n2]
        vals += [float(np.real(np.vdot(psi, m @ psi))) / n2 for m in observables.values()]
        return vals

    # March the shared no-jump path once.  Every trajectory follows it until
    # the squared norm drops to its own threshold; those jump points are
    # collected on the way so the path itself is never stored.
    n_steps = (G - 1) * nsub
    trajs = [_Trajectory(gen, step, np.random.default_rng(trajectory_seed(int(seed), i))) for i in range(n_traj)]
    thresholds = np.array([t.r for t in trajs])
    order = np.argsort(-thresholds, kind="stable")  # jump order along the path
    shared = np.empty((G, len(names)))
    shared[0] = measure(psi0)
    jumped = {}  # index -> (substep, state right after the jump, time left in the substep)
    nxt = 0
    psi, n_prev = psi0, 1.0
    for s in range(n_steps):
        new = step(psi, h)
        n_new = _norm2(new)
        if n_new > n_prev + 1e-12:
            raise IntegrationError("no-jump norm increased; reduce dt")
        while nxt < n_traj and thresholds[order[nxt]] >= n_new:
            i = int(order[nxt])
            tau, at = _bisect_jump(step, psi, h, thresholds[i])
            jumped[i] = (s, trajs[i].jump(at), h - tau)
            nxt += 1
        psi, n_prev = new, n_new
        if (s + 1) % nsub == 0:
            shared[(s + 1) // nsub] = measure(psi)

    def run(index: int) -> np.ndarray:
        if index not in jumped:
            return shared
        s, psi, left = jumped[index]
        out = np.zeros((G, len(names)))
        g_done = s // nsub  # grid points 0..g_done precede the jump
        out[: g_done + 1] = shared[: g_done + 1]
        if shortcut:
            if np.sum(np.abs(psi[inside]) ** 2) > 1e-20:
                raise IntegrationError("jumped state is not in the blockaded region")
            return out  # remaining grid points stay zero
        traj = trajs[index]
        psi = traj.advance(psi, left)
        for s2 in range(s + 1, n_steps + 1):
            if s2 % nsub == 0:
                out[s2 // nsub] = measure(psi)
            if s2 < n_steps:
                psi = traj.advance(psi, h)
        return out

    results = [None] * n_traj
    if threads > 1 and n_traj > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for i, res in enumerate(pool.map(run, range(n_traj))):
                results[i] = res
    else:
        for i in range(n_traj):
            results[i] = run(i)
    mean = np.zeros((G, len(names)))
    for i in range(n_traj):  # fixed order, independent of thread count
        mean += results[i]
    mean /= n_traj
    if n_traj > 1:
        sq = np.zeros_like(mean)
        for i in range(n_traj):
            sq += (results[i] - mean) ** 2
        stderr = np.sqrt(sq / (n_traj - 1) / n_traj)
    else:
        stderr = np.zeros_like(mean)
    channels = {}
    for c, name in enumerate(names):
        channels[name] = mean[:, c]
        channels[f"{name}_stderr"] = stderr[:, c]
    meta = {
        "method": "trajectories",
        "jumped": len(jumped),
        "kind": kind.value,
        "c": spec.c,
        "dt": h,
        "n_traj": n_traj,
        "seed": int(seed),
        "spec_hash": spec.spec_hash(),
    }
    return TimeSeries(times, channels, meta)


# ---------------------------------------------------------------------------
# channel helpers


def fidelity_series(states, reference: np.ndarray) -> np.ndarray:
    """<ref|rho|ref> for density matrices or |<ref|psi>|^2/||psi||^2 for vectors."""
    ref = np.asarray(reference, dtype=complex)
    out = []
    for s in states:
        s = np.asarray(s)
        if s.shape[-1] != len(ref):
            raise ValidationError("state and reference live in different bases")
        if s.ndim == 1:
            out.append(abs(np.vdot(ref, s)) ** 2 / _norm2(s))
        else:
            out.append(float(np.real(ref.conj() @ s @ ref)))
    return np.array(out)


def leakage_series(states, projector) -> np.ndarray:
    """Tr(rho P) or <psi|P|psi>/||psi||^2 with P a diagonal mask or matrix."""
    P = projector.matrix if hasattr(projector, "matrix") else projector
    if sp.issparse(P):
        P = np.real(P.diagonal()) > 0.5
    P = np.asarray(P)
    if P.ndim == 2:
        P = np.real(np.diagonal(P)) > 0.5
    out = []
    for s in states:
        s = np.asarray(s)
        if s.shape[0] != len(P):
            raise ValidationError("state and projector live in different bases")
        if s.ndim == 1:
            out.append(float(np.sum(np.abs(s[P]) ** 2)) / _norm2(s))
        else:
            out.append(float(np.real(np.diagonal(s)[P].sum())))
    return np.array(out)
