"""Bit-packed Pauli strings and weighted Pauli-sum Hamiltonians.

A Pauli string on ``n`` qubits is stored as two integer masks. Bit ``j`` of
``x`` is set when the letter on qubit ``j`` is X or Y; bit ``j`` of ``z`` is
set when it is Z or Y. Qubit 0 is the least significant bit, which is also the
least significant bit of a statevector index.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

LETTERS = "XYZ"
_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}

#: Terms whose merged coefficient falls below this magnitude are dropped.
MERGE_TOLERANCE = 1e-12


def _popcount_parity(values: np.ndarray) -> np.ndarray:
    """Parity of the number of set bits of each entry (0 or 1)."""
    v = values.astype(np.uint64, copy=True)
    parity = np.zeros(v.shape, dtype=np.uint64)
    while np.any(v):
        parity ^= v & np.uint64(1)
        v >>= np.uint64(1)
    return parity.astype(np.int8)


@dataclass(frozen=True, slots=True)
class PauliString:
    """Tensor product of single-qubit Paulis, identity on unset positions."""

    n_qubits: int
    x: int = 0
    z: int = 0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be positive, got {self.n_qubits}")
        limit = 1 << self.n_qubits
        if not (0 <= self.x < limit and 0 <= self.z < limit):
            raise ValueError("Pauli masks exceed the declared qubit count")

    @classmethod
    def from_letters(cls, n_qubits: int, letters: dict[int, str] | Iterable[tuple[int, str]]):
        """Build from ``{qubit: letter}`` pairs, e.g. ``{0: "X", 2: "Z"}``."""
        items = letters.items() if isinstance(letters, dict) else letters
        x = z = 0
        for qubit, letter in items:
            if not 0 <= qubit < n_qubits:
                raise ValueError(f"qubit index {qubit} out of range for {n_qubits} qubits")
            try:
                bx, bz = _LETTER_BITS[letter.upper()]
            except KeyError:
                raise ValueError(f"unknown Pauli letter {letter!r}") from None
            if (x | z) >> qubit & 1:
                raise ValueError(f"qubit {qubit} given twice")
            x |= bx << qubit
            z |= bz << qubit
        return cls(n_qubits, x, z)

    @classmethod
    def from_label(cls, label: str):
        """Parse a dense label with qubit 0 first, e.g. ``"XIZ"``."""
        return cls.from_letters(len(label), {j: c for j, c in enumerate(label) if c != "I"})

    @classmethod
    def identity(cls, n_qubits: int):
        return cls(n_qubits, 0, 0)

    def letter(self, qubit: int) -> str:
        bx = self.x >> qubit & 1
        bz = self.z >> qubit & 1
        return "IZXY"[bx * 2 + bz]

    @property
    def support(self) -> tuple[int, ...]:
        mask = self.x | self.z
        return tuple(j for j in range(self.n_qubits) if mask >> j & 1)

    @property
    def locality(self) -> int:
        return (self.x | self.z).bit_count()

    @property
    def n_y(self) -> int:
        return (self.x & self.z).bit_count()

    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def items(self) -> list[tuple[int, str]]:
        """``[(qubit, letter), ...]`` over the support, ascending qubit."""
        return [(j, self.letter(j)) for j in self.support]

    @property
    def label(self) -> str:
        return "".join(self.letter(j) for j in range(self.n_qubits))

    def __str__(self) -> str:
        if self.is_identity():
            return "I"
        return " ".join(f"{c}{j}" for j, c in self.items())

    def sort_key(self) -> tuple:
        """Canonical order: locality, then qubit indices, then letters (X<Y<Z)."""
        items = self.items()
        return (len(items), tuple(j for j, _ in items), tuple(LETTERS.index(c) for _, c in items))

    def commutes(self, other: PauliString) -> bool:
        return ((self.x & other.z).bit_count() + (self.z & other.x).bit_count()) % 2 == 0

    def to_matrix(self) -> np.ndarray:
        """Dense ``2**n`` matrix. Only intended for small test systems."""
        dim = 1 << self.n_qubits
        out = np.zeros((dim, dim), dtype=complex)
        idx = np.arange(dim)
        out[idx ^ self.x, idx] = self.phases()
        return out

    def phases(self) -> np.ndarray:
        """Phase ``p[b]`` such that ``P|b> = p[b] |b ^ x>``."""
        dim = 1 << self.n_qubits
        idx = np.arange(dim, dtype=np.uint64)
        sign = 1 - 2 * _popcount_parity(idx & np.uint64(self.z)).astype(np.int64)
        return (1j ** self.n_y) * sign

    def apply(self, state: np.ndarray) -> np.ndarray:
        """Return ``P|state>`` (new array). The last axis indexes basis states."""
        dim = 1 << self.n_qubits
        if state.shape[-1] != dim:
            raise ValueError(f"state has dimension {state.shape[-1]}, Pauli acts on {dim}")
        perm, phase = _pauli_action(self.n_qubits, self.x, self.z)
        return phase * state[..., perm]

    def expectation(self, state: np.ndarray) -> float:
        return float(np.vdot(state, self.apply(state)).real)


_ACTION_CACHE: dict[tuple[int, int, int], tuple[np.ndarray, np.ndarray]] = {}


def _pauli_action(n_qubits: int, x: int, z: int) -> tuple[np.ndarray, np.ndarray]:
    """Gather form of a Pauli: ``(P psi)[c] = phase[c] * psi[perm[c]]``."""
    key = (n_qubits, x, z)
    hit = _ACTION_CACHE.get(key)
    if hit is not None:
        return hit
    dim = 1 << n_qubits
    idx = np.arange(dim, dtype=np.int64)
    perm = idx ^ x
    n_y = (x & z).bit_count()
    sign = 1 - 2 * _popcount_parity((perm & z).astype(np.uint64)).astype(np.int64)
    phase = (1j**n_y) * sign
    if len(_ACTION_CACHE) > 4096:
        _ACTION_CACHE.clear()
    _ACTION_CACHE[key] = (perm, phase)
    return perm, phase


def locality_count(n_qubits: int, q: int) -> int:
    """Number of Pauli strings with locality 1..q on ``n_qubits`` qubits."""
    return sum(math.comb(n_qubits, k) * 3**k for k in range(1, q + 1))


def enumerate_local_paulis(n_qubits: int, q: int) -> list[PauliString]:
    """All Pauli strings with 1 <= locality <= q in canonical order.

    Ordered by ascending locality, then by the tuple of qubit indices, then by
    letters with X < Y < Z.
    """
    if not 1 <= q <= n_qubits:
        raise ValueError(f"locality q={q} must satisfy 1 <= q <= n_qubits={n_qubits}")
    out = []
    for k in range(1, q + 1):
        for qubits in itertools.combinations(range(n_qubits), k):
            for letters in itertools.product(LETTERS, repeat=k):
                out.append(PauliString.from_letters(n_qubits, zip(qubits, letters)))
    return out


@dataclass(frozen=True)
class PauliSumHamiltonian:
    """Real-weighted sum of Pauli strings, ``H = sum_l c_l P_l``.

    Duplicate strings are merged on construction, keeping the position of the
    first occurrence; merged coefficients below :data:`MERGE_TOLERANCE` are
    dropped. Term order is meaningful for product-formula evolution.
    """

    n_qubits: int
    terms: tuple[tuple[float, PauliString], ...] = field(default=())

    def __post_init__(self):
        merged: dict[PauliString, float] = {}
        for coeff, pauli in self.terms:
            if pauli.n_qubits != self.n_qubits:
                raise ValueError(
                    f"term {pauli} acts on {pauli.n_qubits} qubits, expected {self.n_qubits}"
                )
            c = float(coeff)
            if not math.isfinite(c):
                raise ValueError(f"non-finite coefficient for term {pauli}")
            merged[pauli] = merged.get(pauli, 0.0) + c
        terms = tuple((c, p) for p, c in merged.items() if abs(c) >= MERGE_TOLERANCE)
        object.__setattr__(self, "terms", terms)

    @classmethod
    def from_terms(cls, n_qubits: int, terms: Iterable[tuple[float, PauliString]]):
        return cls(n_qubits, tuple(terms))

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self) -> Iterator[tuple[float, PauliString]]:
        return iter(self.terms)

    def __eq__(self, other):
        if not isinstance(other, PauliSumHamiltonian):
            return NotImplemented
        return self.n_qubits == other.n_qubits and self.terms == other.terms

    def __hash__(self):
        return hash((self.n_qubits, self.terms))

    def as_dict(self) -> dict[PauliString, float]:
        return {p: c for c, p in self.terms}

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    @cached_property
    def _grouped(self) -> list[tuple[np.ndarray, np.ndarray]]:
        # Terms sharing an x-mask share a permutation; their phases add up.
        groups: dict[int, np.ndarray] = {}
        for coeff, pauli in self.terms:
            perm, phase = _pauli_action(self.n_qubits, pauli.x, pauli.z)
            if pauli.x in groups:
                groups[pauli.x] = groups[pauli.x] + coeff * phase
            else:
                groups[pauli.x] = coeff * phase
        out = []
        idx = np.arange(self.dim, dtype=np.int64)
        for x, diag in sorted(groups.items()):
            out.append((idx ^ x, diag))
        return out

    def apply(self, state: np.ndarray) -> np.ndarray:
        """Matrix-free ``H|state>``; the last axis indexes basis states."""
        if state.shape[-1] != self.dim:
            raise ValueError(f"state has dimension {state.shape[-1]}, H acts on {self.dim}")
        out = np.zeros(state.shape, dtype=complex)
        for perm, diag in self._grouped:
            out += diag * state[..., perm]
        return out

    def expectation(self, state: np.ndarray) -> float:
        return float(np.vdot(state, self.apply(state)).real)

    def to_sparse(self):
        """Sparse CSR matrix of H."""
        import scipy.sparse as sp

        rows, cols, data = [], [], []
        idx = np.arange(self.dim, dtype=np.int64)
        for perm, diag in self._grouped:
            rows.append(idx)
            cols.append(perm)
            data.append(diag)
        if not rows:
            return sp.csr_matrix((self.dim, self.dim), dtype=complex)
        m = sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.dim, self.dim),
        )
        m.eliminate_zeros()
        return m

    def to_matrix(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def is_real(self) -> bool:
        """True when every term has an even number of Y letters."""
        return all(p.n_y % 2 == 0 for _, p in self.terms)

    def norm_bound(self) -> float:
        """Triangle-inequality bound on the spectral norm."""
        return float(sum(abs(c) for c, _ in self.terms))

    def scaled(self, factor: float) -> PauliSumHamiltonian:
        return PauliSumHamiltonian(self.n_qubits, tuple((factor * c, p) for c, p in self.terms))


def pauli_pool_from_labels(labels: Sequence[str]) -> list[PauliString]:
    return [PauliString.from_label(s) for s in labels]
