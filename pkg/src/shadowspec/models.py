"""Model Hamiltonians: disordered Heisenberg chain and Fermi-Hubbard lattice."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .pauli import PauliString, PauliSumHamiltonian
from .rng import generator

Boundary = Literal["open", "periodic"]


def _bonds_1d(n: int, boundary: Boundary) -> list[tuple[int, int]]:
    bonds = [(j, j + 1) for j in range(n - 1)]
    if boundary == "periodic":
        bonds.append((n - 1, 0))
    elif boundary != "open":
        raise ValueError(f"boundary must be 'open' or 'periodic', got {boundary!r}")
    return bonds


def heisenberg_fields(n: int, h: float, seed: int) -> np.ndarray:
    """Random local fields ``h_j`` drawn uniformly from ``[-h, h]``."""
    rng = generator(seed, "heisenberg-fields", n)
    return rng.uniform(-h, h, size=n)


def build_heisenberg_chain(
    n: int, J: float, h: float, seed: int, boundary: Boundary = "periodic"
) -> PauliSumHamiltonian:
    """``H = sum_j (-J sigma_j . sigma_{j+1} + h_j Z_j)`` with seeded disorder.

    Coupling terms come first (bond by bond, XX, YY, ZZ), then the fields.
    """
    if n < 2:
        raise ValueError(f"Heisenberg chain needs n >= 2, got {n}")
    terms = []
    for i, j in _bonds_1d(n, boundary):
        for letter in "XYZ":
            terms.append((-J, PauliString.from_letters(n, {i: letter, j: letter})))
    for j, hj in enumerate(heisenberg_fields(n, h, seed)):
        if hj != 0.0:
            terms.append((float(hj), PauliString.from_letters(n, {j: "Z"})))
    return PauliSumHamiltonian.from_terms(n, terms)


@dataclass(frozen=True)
class LatticeSpec:
    """Rectangular Hubbard lattice.

    Site ``(r, c)`` has index ``r * cols + c``. After Jordan-Wigner, qubit
    ``site`` holds the spin-up mode and qubit ``site + rows * cols`` the
    spin-down mode.
    """

    rows: int
    cols: int
    t: float = 1.0
    U: float = 2.0
    boundary: Boundary = "open"

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("lattice dimensions must be positive")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"boundary must be 'open' or 'periodic', got {self.boundary!r}")

    @property
    def n_sites(self) -> int:
        return self.rows * self.cols

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_sites

    def mode(self, site: int, spin: int) -> int:
        return site + spin * self.n_sites

    def bonds(self) -> list[tuple[int, int]]:
        """Nearest-neighbour site pairs ``(i, j)`` with ``i < j``, no duplicates."""
        pairs = set()
        for r in range(self.rows):
            for c in range(self.cols):
                here = r * self.cols + c
                for dr, dc in ((0, 1), (1, 0)):
                    rr, cc = r + dr, c + dc
                    if self.boundary == "periodic":
                        rr %= self.rows
                        cc %= self.cols
                    elif rr >= self.rows or cc >= self.cols:
                        continue
                    there = rr * self.cols + cc
                    if there != here:
                        pairs.add((min(here, there), max(here, there)))
        return sorted(pairs)


def hopping_strings(n_qubits: int, p: int, q: int) -> tuple[PauliString, PauliString]:
    """Jordan-Wigner images of ``c_p^dag c_q + h.c.`` are ``(XZ..ZX + YZ..ZY)/2``."""
    lo, hi = min(p, q), max(p, q)
    chain = {k: "Z" for k in range(lo + 1, hi)}
    xx = PauliString.from_letters(n_qubits, {lo: "X", hi: "X", **chain})
    yy = PauliString.from_letters(n_qubits, {lo: "Y", hi: "Y", **chain})
    return xx, yy


def build_fermi_hubbard(spec: LatticeSpec) -> PauliSumHamiltonian:
    """Jordan-Wigner encoded Fermi-Hubbard Hamiltonian.

    ``H = -t sum_<ij>,s (c_is^dag c_js + h.c.) + U sum_i n_i,up n_i,down`` with
    ``n = (I - Z) / 2``. Hopping terms come first (bond-major, spin-up then
    spin-down, XX before YY), followed by the on-site terms.
    """
    n = spec.n_qubits
    terms = []
    for i, j in spec.bonds():
        for spin in (0, 1):
            xx, yy = hopping_strings(n, spec.mode(i, spin), spec.mode(j, spin))
            terms.append((-spec.t / 2, xx))
            terms.append((-spec.t / 2, yy))
    quarter = spec.U / 4
    for site in range(spec.n_sites):
        up, down = spec.mode(site, 0), spec.mode(site, 1)
        terms.append((quarter, PauliString.identity(n)))
        terms.append((-quarter, PauliString.from_letters(n, {up: "Z"})))
        terms.append((-quarter, PauliString.from_letters(n, {down: "Z"})))
        terms.append((quarter, PauliString.from_letters(n, {up: "Z", down: "Z"})))
    return PauliSumHamiltonian.from_terms(n, terms)


def number_operator(n_qubits: int) -> PauliSumHamiltonian:
    """Total occupation ``sum_j (I - Z_j) / 2``."""
    terms = [(n_qubits / 2, PauliString.identity(n_qubits))]
    terms += [(-0.5, PauliString.from_letters(n_qubits, {j: "Z"})) for j in range(n_qubits)]
    return PauliSumHamiltonian.from_terms(n_qubits, terms)
