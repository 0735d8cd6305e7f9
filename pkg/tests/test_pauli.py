"""Pauli strings, Pauli-sum Hamiltonians, model builders and the text format."""

from functools import reduce
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shadowspec.hamiltonian_io import (
    HamiltonianFormatError,
    load_hamiltonian,
    parse_hamiltonian,
    save_hamiltonian,
)
from shadowspec.models import (
    LatticeSpec,
    build_fermi_hubbard,
    build_heisenberg_chain,
    heisenberg_fields,
    number_operator,
)
from shadowspec.pauli import PauliString, PauliSumHamiltonian, enumerate_local_paulis, locality_count

SINGLE = {
    "I": np.eye(2),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1.0, -1.0]).astype(complex),
}


def kron_matrix(label: str) -> np.ndarray:
    """Reference matrix; qubit 0 is the least significant bit, so it goes last."""
    return reduce(np.kron, [SINGLE[c] for c in reversed(label)])


labels = st.integers(1, 4).flatmap(lambda n: st.text(alphabet="IXYZ", min_size=n, max_size=n))


@given(labels)
def test_matrix_matches_kronecker_product(label):
    p = PauliString.from_label(label)
    assert np.allclose(p.to_matrix(), kron_matrix(label))


@given(labels, st.integers(0, 2**31 - 1))
@settings(max_examples=50)
def test_apply_matches_dense_matrix(label, seed):
    rng = np.random.default_rng(seed)
    p = PauliString.from_label(label)
    psi = rng.normal(size=2 ** len(label)) + 1j * rng.normal(size=2 ** len(label))
    assert np.allclose(p.apply(psi), kron_matrix(label) @ psi)


@given(labels, labels)
def test_commutation_matches_matrices(a, b):
    if len(a) != len(b):
        return
    pa, pb = PauliString.from_label(a), PauliString.from_label(b)
    ma, mb = kron_matrix(a), kron_matrix(b)
    assert pa.commutes(pb) == np.allclose(ma @ mb, mb @ ma)


def test_label_round_trip_and_letters():
    p = PauliString.from_letters(5, {0: "X", 2: "Y", 4: "Z"})
    assert p.label == "XIYIZ"
    assert PauliString.from_label(p.label) == p
    assert p.support == (0, 2, 4)
    assert p.locality == 3
    assert str(p) == "X0 Y2 Z4"
    assert str(PauliString.identity(3)) == "I"


@pytest.mark.parametrize("bad", [{5: "X"}, {0: "Q"}, {-1: "Z"}])
def test_from_letters_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        PauliString.from_letters(3, bad)


def test_duplicate_qubit_rejected():
    with pytest.raises(ValueError):
        PauliString.from_letters(3, [(1, "X"), (1, "Z")])


@pytest.mark.parametrize("n,q,expected", [(14, 3, 10689), (8, 3, 1788), (12, 3, 6570), (4, 1, 12), (3, 3, 63)])
def test_locality_counts(n, q, expected):
    assert locality_count(n, q) == expected
    assert len(enumerate_local_paulis(n, q)) == expected


def test_pool_is_canonical_and_unique():
    pool = enumerate_local_paulis(5, 3)
    assert len(set(pool)) == len(pool)
    keys = [p.sort_key() for p in pool]
    assert keys == sorted(keys)
    assert [p.label for p in pool[:4]] == ["XIIII", "YIIII", "ZIIII", "IXIII"]


def test_pool_monotone_in_q():
    small, big = enumerate_local_paulis(6, 2), enumerate_local_paulis(6, 3)
    assert big[: len(small)] == small


def test_pool_rejects_bad_locality():
    with pytest.raises(ValueError):
        enumerate_local_paulis(3, 4)
    with pytest.raises(ValueError):
        enumerate_local_paulis(3, 0)


def random_hamiltonian(n, n_terms, rng):
    terms = []
    for _ in range(n_terms):
        label = "".join(rng.choice(list("IXYZ"), size=n))
        terms.append((float(rng.normal()), PauliString.from_label(label)))
    return PauliSumHamiltonian.from_terms(n, terms)


def test_sum_hamiltonian_dense_sparse_and_apply_agree():
    rng = np.random.default_rng(3)
    ham = random_hamiltonian(4, 12, rng)
    dense = sum(c * kron_matrix(p.label) for c, p in ham)
    assert np.allclose(ham.to_matrix(), dense)
    assert np.allclose(ham.to_sparse().toarray(), dense)
    psi = rng.normal(size=16) + 1j * rng.normal(size=16)
    assert np.allclose(ham.apply(psi), dense @ psi)
    batch = rng.normal(size=(3, 16)) + 0j
    assert np.allclose(ham.apply(batch), batch @ dense.T)
    psi /= np.linalg.norm(psi)
    assert ham.expectation(psi) == pytest.approx(np.vdot(psi, dense @ psi).real)


def test_terms_merge_and_cancel():
    z0 = PauliString.from_label("ZI")
    x1 = PauliString.from_label("IX")
    ham = PauliSumHamiltonian.from_terms(2, [(1.0, z0), (0.5, x1), (-1.0, z0)])
    assert ham.terms == ((0.5, x1),)


def test_rejects_mismatched_and_nonfinite_terms():
    with pytest.raises(ValueError):
        PauliSumHamiltonian.from_terms(2, [(1.0, PauliString.from_label("XXX"))])
    with pytest.raises(ValueError):
        PauliSumHamiltonian.from_terms(2, [(float("nan"), PauliString.from_label("XX"))])


# --------------------------------------------------------------------------
# Heisenberg chain


def test_heisenberg_matches_explicit_sum():
    n, J, h = 4, 0.7, 1.0
    ham = build_heisenberg_chain(n, J, h, seed=11, boundary="periodic")
    fields = heisenberg_fields(n, h, 11)
    assert np.all(np.abs(fields) <= h)
    ref = np.zeros((16, 16), dtype=complex)
    for i in range(n):
        j = (i + 1) % n
        for a in "XYZ":
            lab = ["I"] * n
            lab[i] = lab[j] = a
            ref -= J * kron_matrix("".join(lab))
        lab = ["I"] * n
        lab[i] = "Z"
        ref += fields[i] * kron_matrix("".join(lab))
    assert np.allclose(ham.to_matrix(), ref)


def test_heisenberg_open_has_fewer_bonds_and_is_seeded():
    ring = build_heisenberg_chain(5, 1.0, 1.0, seed=2, boundary="periodic")
    chain = build_heisenberg_chain(5, 1.0, 1.0, seed=2, boundary="open")
    assert len(ring) - len(chain) == 3
    assert build_heisenberg_chain(5, 1.0, 1.0, seed=2) == ring
    assert build_heisenberg_chain(5, 1.0, 1.0, seed=3) != ring


# --------------------------------------------------------------------------
# Fermi-Hubbard: compare against a Fock-space construction with explicit
# fermionic sign counting, independent of any Pauli algebra.


def annihilation(n_modes: int, p: int) -> np.ndarray:
    dim = 1 << n_modes
    a = np.zeros((dim, dim))
    for b in range(dim):
        if b >> p & 1:
            sign = (-1) ** bin(b & ((1 << p) - 1)).count("1")
            a[b ^ (1 << p), b] = sign
    return a


def fock_hubbard(spec: LatticeSpec) -> np.ndarray:
    n = spec.n_qubits
    c = [annihilation(n, p) for p in range(n)]
    num = [ci.T @ ci for ci in c]
    h = np.zeros((1 << n, 1 << n))
    for i, j in spec.bonds():
        for s in (0, 1):
            p, q = spec.mode(i, s), spec.mode(j, s)
            h -= spec.t * (c[p].T @ c[q] + c[q].T @ c[p])
    for site in range(spec.n_sites):
        h += spec.U * num[spec.mode(site, 0)] @ num[spec.mode(site, 1)]
    return h


def test_annihilators_anticommute():
    c = [annihilation(3, p) for p in range(3)]
    for p in range(3):
        for q in range(3):
            assert np.allclose(c[p] @ c[q].T + c[q].T @ c[p], np.eye(8) * (p == q))


@pytest.mark.parametrize(
    "spec",
    [LatticeSpec(1, 2, 1.0, 2.0), LatticeSpec(2, 2, 1.0, 2.0), LatticeSpec(1, 3, 0.8, 3.0, "periodic")],
    ids=["dimer", "plaquette", "ring3"],
)
def test_hubbard_matches_fock_space(spec):
    ham = build_fermi_hubbard(spec)
    assert np.allclose(ham.to_matrix(), fock_hubbard(spec))


def test_hubbard_conserves_particle_number():
    spec = LatticeSpec(2, 2)
    h = build_fermi_hubbard(spec).to_matrix()
    nop = number_operator(spec.n_qubits).to_matrix()
    assert np.allclose(h @ nop, nop @ h)
    assert np.allclose(np.diag(nop), [bin(b).count("1") for b in range(1 << spec.n_qubits)])


def test_lattice_bonds():
    assert LatticeSpec(2, 2).bonds() == [(0, 1), (0, 2), (1, 3), (2, 3)]
    assert len(LatticeSpec(3, 2).bonds()) == 7
    # Periodic 2-wide dimensions do not double the bond.
    assert LatticeSpec(2, 2, boundary="periodic").bonds() == LatticeSpec(2, 2).bonds()


# --------------------------------------------------------------------------
# Hamiltonian text format


def test_text_round_trip(tmp_path):
    ham = build_fermi_hubbard(LatticeSpec(1, 2))
    path = tmp_path / "h.txt"
    save_hamiltonian(ham, path)
    assert load_hamiltonian(path) == ham


def test_parse_comments_identity_and_merge():
    ham = parse_hamiltonian("# header\nqubits 3\n0.5 X0 Z2  # trailing\n-1.25 I\n0.25 X0 Z2\n")
    d = ham.as_dict()
    assert d[PauliString.from_label("XIZ")] == pytest.approx(0.75)
    assert d[PauliString.identity(3)] == pytest.approx(-1.25)


@pytest.mark.parametrize(
    "text,line",
    [
        ("0.5 X0\n", 1),
        ("qubits 2\n0.5 X5\n", 2),
        ("qubits 2\nabc X0\n", 2),
        ("qubits 2\n1.0 X0\n1.0 Q1\n", 3),
        ("qubits 2\n1.0 X0 Z0\n", 2),
        ("qubits two\n", 1),
    ],
)
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(HamiltonianFormatError) as err:
        parse_hamiltonian(text)
    assert err.value.line == line


def test_missing_header():
    with pytest.raises(HamiltonianFormatError):
        parse_hamiltonian("# nothing\n")


def test_binomial_identity_for_counts():
    for n in range(1, 7):
        assert locality_count(n, n) == 4**n - 1
        assert locality_count(n, 1) == 3 * n
        assert locality_count(n, 2) == 3 * n + 9 * comb(n, 2)
