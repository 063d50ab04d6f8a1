import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scareth.basis import enumerate_basis, product_basis
from scareth.constraint import build_constrained_hamiltonian
from scareth.dynamics import (
    build_generator,
    default_dt,
    evolve_master,
    evolve_projected,
    evolve_unitary,
    fidelity_series,
    leakage_series,
    lindblad_rhs,
    sample_trajectories,
    splitmix64,
    superoperator,
    time_grid,
    trajectory_seed,
)
from scareth.errors import CapacityError, IntegrationError, ValidationError
from scareth.spectra import diagonal_ensemble_mean, diagonalize, scar_initial_state
from scareth.constraint import build_quasiparticle_counter

from conftest import chain


@pytest.fixture(scope="module")
def n3():
    spec = chain(3)
    b = enumerate_basis(spec)
    return spec, b, diagonalize(build_constrained_hamiltonian(spec, b), b)


def test_time_grid_rules():
    assert np.allclose(time_grid(1, 0.25), [0, 0.25, 0.5, 0.75, 1])
    with pytest.raises(ValidationError):
        time_grid(1, 0)
    with pytest.raises(ValidationError):
        evolve_unitary(None, np.ones(1), [0, 1, 0.5])


def test_unitary_eigenvector_and_norm(n3):
    spec, b, es = n3
    t = time_grid(20, 0.1)
    ts = evolve_unitary(es, es.vectors[:, 5], t)
    assert np.abs(ts["fidelity"] - 1).max() < 1e-12
    ts = evolve_unitary(es, scar_initial_state(b), t, snapshots=True)
    norms = [np.linalg.norm(s) for s in ts.snapshots]
    assert np.abs(np.array(norms) - 1).max() < 1e-12
    assert np.allclose(fidelity_series(ts.snapshots, scar_initial_state(b)), ts["fidelity"], atol=1e-12)
    assert ts["fidelity"][0] == pytest.approx(1)


def test_unitary_revivals_at_n9_are_visible():
    # smaller N keeps the suite quick; the first revival already stands out
    spec = chain(7)
    b = enumerate_basis(spec)
    es = diagonalize(build_constrained_hamiltonian(spec, b), b)
    t = time_grid(60, 0.05)
    f = evolve_unitary(es, scar_initial_state(b), t)["fidelity"]
    late = f[t > 20].mean()
    first = f[(t > 2) & (t < 10)].max()
    assert first > 5 * late


def test_fidelity_and_leakage_series_edges():
    a = np.array([1, 0, 0], dtype=complex)
    bvec = np.array([0, 1, 0], dtype=complex)
    assert fidelity_series([a], a)[0] == 1
    assert fidelity_series([a], bvec)[0] == 0
    mask = np.array([False, True, True])
    assert leakage_series([a], mask)[0] == 0
    assert leakage_series([np.outer(bvec, bvec)], np.diag(mask.astype(float)))[0] == 1
    with pytest.raises(ValidationError):
        fidelity_series([a], np.ones(4))


def test_superoperator_matches_matrix_rhs(n3, rng):
    spec = n3[0]
    for kind in ("Full", "Positive", "LindbladPrime"):
        gen = build_generator(spec, kind)
        d = gen.dim
        x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        rho = x @ x.conj().T
        lhs = (superoperator(gen) @ rho.ravel()).reshape(d, d)
        assert np.abs(lhs - lindblad_rhs(gen)(rho)).max() < 1e-9 * np.abs(lhs).max()


def test_full_kind_steady_state_on_eigenstate(n3):
    spec, b, es = n3
    emb = b.embedding(product_basis(spec))
    v = emb @ es.vectors[:, 4]
    ts = evolve_master(spec, "Full", v, time_grid(2, 0.1), snapshots=True)
    rho0 = np.outer(v, v.conj())
    for r in ts.snapshots:
        assert np.abs(r - rho0).max() < 1e-9


def test_full_kind_is_jump_free_and_unitary(n3):
    spec, b, es = n3
    t = time_grid(5, 0.1)
    psi = scar_initial_state(b)
    m = evolve_master(spec, "Full", psi, t)
    u = evolve_unitary(es, psi, t)
    assert np.abs(m["fidelity"] - u["fidelity"]).max() < 1e-5
    assert np.abs(m["leakage"] - 1).max() < 1e-6
    assert np.abs(m["trace"] - 1).max() < 1e-6


@pytest.mark.parametrize("kind", ["Full", "Positive", "LindbladPrime"])
def test_trace_and_hermiticity_preserved(n3, kind):
    spec, b, _ = n3
    ts = evolve_master(spec.with_(c=50), kind, scar_initial_state(b), time_grid(3, 0.1), snapshots=True)
    assert np.abs(ts["trace"] - 1).max() < 1e-6
    for r in ts.snapshots:
        assert np.abs(r - r.conj().T).max() < 1e-9
    assert np.all(ts["leakage"] <= 1 + 1e-8)


def test_lawson_agrees_with_plain_rk4(n3):
    spec, b, _ = n3
    spec = spec.with_(c=50)
    t = time_grid(2, 0.1)
    for kind in ("Positive", "LindbladPrime"):
        a = evolve_master(spec, kind, scar_initial_state(b), t)
        r = evolve_master(spec, kind, scar_initial_state(b), t, integrator="rk4")
        assert np.abs(a["fidelity"] - r["fidelity"]).max() < 1e-6


def test_default_dt_rule():
    spec = chain(3, c=200)
    assert default_dt(spec, "Positive") == pytest.approx(min(0.01, 0.1 / (200 * np.sqrt(0.5))))
    assert default_dt(spec, "LindbladPrime") == 0.01


def test_unstable_step_reported(n3):
    spec, b, _ = n3
    with pytest.raises(IntegrationError):
        evolve_master(spec, "Positive", scar_initial_state(b), time_grid(10, 0.5), dt=0.1, integrator="rk4")


def test_capacity_guard():
    spec = chain(8)
    with pytest.raises(CapacityError):
        evolve_master(spec, "Full", (1,) * 8, time_grid(1, 0.5))


def test_state_outside_constrained_space_has_zero_leakage_channel():
    spec = chain(3)
    ts = evolve_master(spec, "LindbladPrime", (1, -1, 0), time_grid(0.2, 0.1))
    assert ts["leakage"][0] == 0


def test_lindblad_prime_initial_leak_rate(n3):
    spec = chain(3, c=50)
    b = enumerate_basis(spec)
    psi = b.product_state((1, 1, 1))
    t = time_grid(0.5, 0.01)
    h = evolve_master(spec, "LindbladPrime", psi, t)["leakage"]
    # d h / dt at t=0 equals gamma2 <N>, which vanishes on |1,1,1>; the slope is then second order
    assert abs(h[1] - 1) < 1e-6
    psi2 = b.product_state((1, 0, 0))
    N = build_quasiparticle_counter(spec, b).matrix
    rate = -2 * np.sqrt(2) / 50 * np.vdot(psi2, N @ psi2).real
    h2 = evolve_master(spec, "LindbladPrime", psi2, t)["leakage"]
    assert (h2[1] - 1) / 0.01 == pytest.approx(rate, rel=0.02)


def test_projected_matches_master_for_lindblad_prime(n3):
    spec, b, _ = n3
    t = time_grid(20, 0.5)
    psi = scar_initial_state(b)
    m = evolve_master(spec.with_(c=20), "LindbladPrime", psi, t)
    p = evolve_projected(spec.with_(c=20), "LindbladPrime", psi, t)
    assert np.abs(m["fidelity"] - p["fidelity"]).max() < 1e-6
    assert np.abs(m["leakage"] - p["leakage"]).max() < 1e-6


def test_convergence_in_c(n3):
    spec, b, es = n3
    t = time_grid(5, 0.1)
    psi = scar_initial_state(b)
    u = evolve_unitary(es, psi, t)["fidelity"]
    for kind in ("Positive", "LindbladPrime"):
        devs = [np.abs(evolve_master(spec.with_(c=c), kind, psi, t)["fidelity"] - u).max() for c in (50, 200, 800)]
        assert devs[0] > devs[1] > devs[2]


def test_splitmix_reference_values():
    # first output of the reference splitmix64 stream seeded with 0
    assert trajectory_seed(0, 0) == 0xE220A8397B1DCDAF
    assert splitmix64(0) == 0
    assert trajectory_seed(7, 0) != trajectory_seed(7, 1)


def test_trajectories_reject_full_and_bad_counts(n3):
    spec, b, _ = n3
    with pytest.raises(ValidationError):
        sample_trajectories(spec, "Full", scar_initial_state(b), time_grid(1, 0.5), 10, seed=1)
    with pytest.raises(ValidationError):
        sample_trajectories(spec, "LindbladPrime", scar_initial_state(b), time_grid(1, 0.5), 0, seed=1)


def test_single_trajectory_bit_reproducible(n3):
    spec, b, _ = n3
    args = (spec.with_(c=5), "Positive", scar_initial_state(b), time_grid(5, 0.1), 1)
    a = sample_trajectories(*args, seed=99)
    c = sample_trajectories(*args, seed=99)
    for name in a.channels:
        assert np.array_equal(a[name], c[name])


def test_thread_count_does_not_change_results(n3):
    spec, b, _ = n3
    args = (spec.with_(c=5), "Positive", scar_initial_state(b), time_grid(5, 0.1), 40)
    a = sample_trajectories(*args, seed=3, threads=1)
    c = sample_trajectories(*args, seed=3, threads=3)
    for name in a.channels:
        assert np.array_equal(a[name], c[name])


def test_absorbing_shortcut_is_exact(n3):
    spec, b, _ = n3
    args = (spec.with_(c=5), "LindbladPrime", scar_initial_state(b), time_grid(20, 0.5), 60)
    a = sample_trajectories(*args, seed=11)
    c = sample_trajectories(*args, seed=11, absorbing_shortcut=False)
    assert a.metadata["jumped"] > 0
    assert np.abs(a["fidelity"] - c["fidelity"]).max() < 1e-12
    assert np.abs(a["leakage"] - c["leakage"]).max() < 1e-12


@pytest.mark.parametrize("kind", ["Positive", "LindbladPrime"])
def test_trajectories_agree_with_density_matrix(n3, kind):
    spec, b, _ = n3
    spec = spec.with_(c=5)
    t = time_grid(10, 0.25)
    psi = scar_initial_state(b)
    dm = evolve_master(spec, kind, psi, t)
    tr = sample_trajectories(spec, kind, psi, t, 500, seed=2024)
    n = 500
    for ch in ("fidelity", "leakage"):
        dev = np.abs(tr[ch] - dm[ch])
        # 3 / n covers grid points where every trajectory agrees (zero sample variance)
        assert np.all(dev <= 3 * tr[ch + "_stderr"] + 3 / n)


def test_timeseries_csv_and_sidecar(tmp_path, n3):
    spec, b, _ = n3
    ts = sample_trajectories(spec.with_(c=5), "LindbladPrime", scar_initial_state(b), time_grid(1, 0.5), 5, seed=1)
    path = tmp_path / "ts.csv"
    ts.write_csv(path)
    head = path.read_text().splitlines()[0].split(",")
    assert head[0] == "t" and "fidelity_stderr" in head
    import json

    meta = json.loads((tmp_path / "ts.csv.json").read_text())
    assert meta["seed"] == 1 and meta["n_traj"] == 5


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(0, 10**6))
def test_trajectory_seeds_are_u64(base, index):
    s = trajectory_seed(base, index)
    assert 0 <= s < 2**64
