"""Statevector kernels, Krylov and Trotter propagation, noise trajectories, measurement."""

import itertools
from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from shadowspec.models import LatticeSpec, build_fermi_hubbard, build_heisenberg_chain
from shadowspec.pauli import PauliString, PauliSumHamiltonian
from shadowspec.rng import generator
from shadowspec.simulator import (
    GateCounter,
    KrylovConvergenceError,
    NoiseModel,
    TimeGrid,
    TrotterCircuit,
    apply_pauli_rotation,
    basis_state,
    born_probabilities,
    krylov_evolve,
    load_state,
    measure_snapshot,
    prepare_initial_state,
    save_state,
    trotter_step,
)


def random_state(n, rng):
    psi = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return psi / np.linalg.norm(psi)


def random_hamiltonian(n, n_terms, rng):
    terms = []
    for _ in range(n_terms):
        label = "".join(rng.choice(list("IXYZ"), size=n))
        terms.append((float(rng.normal()), PauliString.from_label(label)))
    return PauliSumHamiltonian.from_terms(n, terms)


@given(st.text(alphabet="IXYZ", min_size=3, max_size=3), st.floats(-7, 7), st.integers(0, 1000))
@settings(max_examples=60)
def test_rotation_matches_expm(label, angle, seed):
    p = PauliString.from_label(label)
    psi = random_state(3, np.random.default_rng(seed))
    ref = expm(-1j * angle * p.to_matrix()) @ psi
    assert np.allclose(apply_pauli_rotation(psi, p, angle), ref, atol=1e-12)


def test_rotation_acts_on_batches():
    rng = np.random.default_rng(0)
    p = PauliString.from_label("XYZ")
    rows = np.stack([random_state(3, rng) for _ in range(4)])
    out = apply_pauli_rotation(rows, p, 0.3)
    for r, o in zip(rows, out):
        assert np.allclose(apply_pauli_rotation(r, p, 0.3), o)


def test_rotation_dimension_mismatch():
    with pytest.raises(ValueError):
        apply_pauli_rotation(np.ones(4, complex), PauliString.from_label("XYZ"), 0.1)


@pytest.mark.parametrize("t", [0.0, 0.37, 5.0, -3.2, 40.0])
def test_krylov_matches_expm(t):
    rng = np.random.default_rng(1)
    ham = random_hamiltonian(5, 20, rng)
    psi = random_state(5, rng)
    ref = expm(-1j * t * ham.to_matrix()) @ psi
    out = krylov_evolve(ham, psi, t, tol=1e-11)
    assert np.linalg.norm(out - ref) < 1e-9
    assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-12)


def test_krylov_small_dimension_still_converges():
    rng = np.random.default_rng(2)
    ham = build_heisenberg_chain(6, 1.0, 1.0, seed=0)
    psi = random_state(6, rng)
    ref = expm(-4j * ham.to_matrix()) @ psi
    assert np.linalg.norm(krylov_evolve(ham, psi, 4.0, max_dim=6) - ref) < 1e-8


def test_krylov_rejects_bad_tolerance():
    ham = build_heisenberg_chain(3, 1.0, 1.0, seed=0)
    with pytest.raises(ValueError):
        krylov_evolve(ham, basis_state("000"), 1.0, tol=0.0)


def test_krylov_error_type_exists():
    assert issubclass(KrylovConvergenceError, RuntimeError)


def test_trotter_step_matches_product_of_exponentials():
    rng = np.random.default_rng(3)
    ham = random_hamiltonian(4, 10, rng)
    dt = 0.13
    ref = reduce(lambda acc, term: expm(-1j * term[0] * dt * term[1].to_matrix()) @ acc, ham.terms, np.eye(16))
    psi = random_state(4, rng)
    assert np.allclose(trotter_step(ham, psi, dt), ref @ psi, atol=1e-12)
    circ = TrotterCircuit(ham, dt)
    assert np.allclose(circ.step_matrix(), ref.T, atol=1e-12)
    rows = np.stack([psi, random_state(4, rng)])
    assert np.allclose(circ.step(rows), rows @ ref.T, atol=1e-12)


def test_trotter_error_is_second_order_per_step():
    ham = build_fermi_hubbard(LatticeSpec(1, 2))
    psi = random_state(4, np.random.default_rng(4))
    errs = []
    for dt in (0.02, 0.01):
        exact = expm(-1j * dt * ham.to_matrix()) @ psi
        errs.append(np.linalg.norm(trotter_step(ham, psi, dt) - exact))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_power_propagator_matches_repeated_steps():
    ham = build_fermi_hubbard(LatticeSpec(1, 2))
    circ = TrotterCircuit(ham, 0.3)
    psi = random_state(4, np.random.default_rng(5))
    prop = circ.power_propagator()
    ref = psi
    for k in range(1, 30):
        ref = circ.step(ref)
        if k in (1, 7, 29):
            assert np.allclose(prop(psi, k), ref, atol=1e-11)


def test_gate_counts():
    ham = build_heisenberg_chain(4, 1.0, 1.0, seed=1, boundary="open")
    per = TrotterCircuit(ham, 0.1).gates_per_step
    assert (per.single, per.multi) == (4, 9)
    counter = GateCounter()
    circ = TrotterCircuit(ham, 0.1)
    psi = basis_state("0000")
    for _ in range(3):
        psi = circ.step(psi, counter=counter)
    assert counter.total == 39
    noise = NoiseModel(two_qubit_rate=0.01, single_qubit_rate=0.002)
    assert counter.xi(noise) == pytest.approx(27 * 0.01 + 12 * 0.002)


@pytest.mark.parametrize("kw", [{"two_qubit_rate": -0.1}, {"two_qubit_rate": 0.99}, {"single_qubit_rate": 0.9}])
def test_noise_model_validation(kw):
    with pytest.raises(ValueError):
        NoiseModel(**kw)


def test_noisy_step_requires_generator():
    ham = build_heisenberg_chain(3, 1.0, 1.0, seed=0)
    with pytest.raises(ValueError):
        trotter_step(ham, basis_state("000"), 0.1, NoiseModel(0.01))


# --------------------------------------------------------------------------
# Density-matrix oracle for the depolarizing trajectories


SINGLE = {
    "I": np.eye(2),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1.0, -1.0]).astype(complex),
}


def embed(n, letters):
    return reduce(np.kron, [SINGLE[letters.get(q, "I")] for q in reversed(range(n))])


def depolarize_exact(rho, n, qubits, rate):
    """``rho -> (1 - p) rho + p/4^k sum_P P rho P`` with ``p = 4^k rate / (4^k - 1)``."""
    k = len(qubits)
    p = 4**k * rate / (4**k - 1)
    acc = np.zeros_like(rho)
    for letters in itertools.product("IXYZ", repeat=k):
        m = embed(n, dict(zip(qubits, letters)))
        acc += m @ rho @ m.conj().T
    return (1 - p) * rho + p / 4**k * acc


def noisy_density_oracle(ham, dt, psi, steps, lam2, lam1):
    n = ham.n_qubits
    rho = np.outer(psi, psi.conj())
    for _ in range(steps):
        for c, p in ham.terms:
            u = expm(-1j * c * dt * p.to_matrix())
            rho = u @ rho @ u.conj().T
            if p.locality >= 2:
                rho = depolarize_exact(rho, n, [p.support[0], p.support[-1]], lam2)
            elif p.locality == 1:
                rho = depolarize_exact(rho, n, [p.support[0]], lam1)
    return rho


@pytest.fixture(scope="module")
def noisy_setup():
    ham = build_heisenberg_chain(3, 0.8, 1.0, seed=4, boundary="open")
    psi = random_state(3, np.random.default_rng(6))
    noise = NoiseModel(two_qubit_rate=0.04, single_qubit_rate=0.02)
    exact = noisy_density_oracle(ham, 0.2, psi, 4, 0.04, 0.02)
    return ham, psi, noise, exact


def empirical_rho(rows):
    return rows.T @ rows.conj() / len(rows)


def test_step_trajectories_average_to_channel(noisy_setup):
    ham, psi, noise, exact = noisy_setup
    circ = TrotterCircuit(ham, 0.2)
    rows = np.tile(psi, (20000, 1))
    rng = generator(1, "test-noise")
    for _ in range(4):
        rows = circ.step(rows, noise, rng)
    assert np.allclose(np.linalg.norm(rows, axis=1), 1.0)
    clean = noisy_density_oracle(ham, 0.2, psi, 4, 0.0, 0.0)
    assert np.abs(clean - exact).max() > 0.05  # the test has power
    assert np.abs(empirical_rho(rows) - exact).max() < 0.02


def test_pre_drawn_trajectories_average_to_channel(noisy_setup):
    ham, psi, noise, exact = noisy_setup
    circ = TrotterCircuit(ham, 0.2)
    rows = circ.noisy_trajectories(psi, 4, 20000, noise, generator(2, "test-noise"), chunk=3)
    assert np.allclose(np.linalg.norm(rows, axis=1), 1.0)
    assert np.abs(empirical_rho(rows) - exact).max() < 0.02


def test_noiseless_trajectories_are_clean(noisy_setup):
    ham, psi, _, _ = noisy_setup
    circ = TrotterCircuit(ham, 0.2)
    off = NoiseModel(0.04, 0.02, enabled=False)
    rows = circ.noisy_trajectories(psi, 5, 3, off, generator(0, "x"))
    ref = psi
    for _ in range(5):
        ref = circ.step(ref)
    assert np.allclose(rows, ref)


# --------------------------------------------------------------------------
# measurement, initial states, dumps


def test_born_probabilities_match_rotated_projectors():
    rng = np.random.default_rng(7)
    psi = random_state(2, rng)
    # Eigenvectors of X, Y, Z with eigenvalue +1 for outcome bit 0.
    plus = {"X": np.array([1, 1]) / np.sqrt(2), "Y": np.array([1, 1j]) / np.sqrt(2), "Z": np.array([1, 0])}
    minus = {"X": np.array([1, -1]) / np.sqrt(2), "Y": np.array([1, -1j]) / np.sqrt(2), "Z": np.array([0, 1])}
    for bases in itertools.product("XYZ", repeat=2):
        probs = born_probabilities(psi, "".join(bases))
        for idx in range(4):
            b0, b1 = idx & 1, idx >> 1
            v0 = (minus if b0 else plus)[bases[0]]
            v1 = (minus if b1 else plus)[bases[1]]
            amp = np.vdot(np.kron(v1, v0), psi)
            assert probs[idx] == pytest.approx(abs(amp) ** 2, abs=1e-12)


def test_measure_snapshot_frequencies():
    psi = basis_state("10")
    rng = np.random.default_rng(8)
    assert all(list(measure_snapshot(psi, "ZZ", rng)) == [1, 0] for _ in range(20))
    bits = np.array([measure_snapshot(psi, "XZ", rng) for _ in range(4000)])
    assert bits[:, 1].sum() == 0
    assert bits[:, 0].mean() == pytest.approx(0.5, abs=0.04)


def test_measure_rejects_bad_bases():
    with pytest.raises(ValueError):
        measure_snapshot(basis_state("00"), "XQ", np.random.default_rng(0))
    with pytest.raises(ValueError):
        measure_snapshot(basis_state("00"), "XYZ", np.random.default_rng(0))


def test_basis_state_order():
    psi = basis_state("100")
    assert psi[1] == 1.0 and np.count_nonzero(psi) == 1


def test_prepare_initial_states():
    ham = build_heisenberg_chain(4, 0.5, 1.0, seed=2)
    sup = prepare_initial_state({"superposition": [[1, "0000"], [[0, 1], "1100"]]}).vector
    assert sup[0] == pytest.approx(1 / np.sqrt(2))
    assert sup[3] == pytest.approx(1j / np.sqrt(2))
    prep = prepare_initial_state({"eigenstates": [1.0, 0.0, 0.5]}, ham)
    w, v = np.linalg.eigh(ham.to_matrix())
    assert prep.eigenvalues == pytest.approx(list(w[:3]))
    overlaps = np.abs(v[:, :3].conj().T @ prep.vector) ** 2
    assert overlaps == pytest.approx([0.8, 0.0, 0.2], abs=1e-8)
    with pytest.raises(ValueError):
        prepare_initial_state({"eigenstates": [0.0]}, ham)
    with pytest.raises(ValueError):
        prepare_initial_state({"nonsense": 1})


def test_state_dump_round_trip(tmp_path):
    psi = random_state(3, np.random.default_rng(9))
    save_state(psi, tmp_path / "s.bin")
    assert np.array_equal(load_state(tmp_path / "s.bin"), psi)
    (tmp_path / "bad.bin").write_bytes(b"\x03" + b"\x00" * 7 + b"\x00" * 10)
    with pytest.raises(ValueError):
        load_state(tmp_path / "bad.bin")


def test_time_grid():
    grid = TimeGrid(100, 0.5, 4)
    assert grid.trotter_dt == 0.125
    assert grid.nyquist == pytest.approx(2 * np.pi)
    assert grid.bin_width == pytest.approx(2 * np.pi / 50)
    assert grid.times[-1] == pytest.approx(49.5)
    with pytest.raises(ValueError):
        TimeGrid(1, 0.5)
