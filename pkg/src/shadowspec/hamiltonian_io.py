"""Plain-text Hamiltonian files.

Format::

    # comment
    qubits 4
    0.5 X0 Z1 X2
    -1.25 I

The first non-comment line declares the qubit count. Each following line is
a real coefficient and zero or more ``<letter><qubit>`` factors; ``I`` alone
denotes the identity term.
"""

from __future__ import annotations

import re
from pathlib import Path

from .pauli import PauliString, PauliSumHamiltonian

_FACTOR = re.compile(r"^([XYZ])(\d+)$")


class HamiltonianFormatError(ValueError):
    """Malformed Hamiltonian text; ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def parse_hamiltonian(text: str) -> PauliSumHamiltonian:
    n_qubits = None
    terms = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if n_qubits is None:
            if len(fields) != 2 or fields[0] != "qubits":
                raise HamiltonianFormatError("expected header 'qubits N'", lineno)
            try:
                n_qubits = int(fields[1])
            except ValueError:
                raise HamiltonianFormatError(f"bad qubit count {fields[1]!r}", lineno) from None
            if n_qubits < 1:
                raise HamiltonianFormatError("qubit count must be positive", lineno)
            continue
        try:
            coeff = float(fields[0])
        except ValueError:
            raise HamiltonianFormatError(f"bad coefficient {fields[0]!r}", lineno) from None
        factors = fields[1:]
        if factors == ["I"] or not factors:
            terms.append((coeff, PauliString.identity(n_qubits)))
            continue
        letters = {}
        for token in factors:
            m = _FACTOR.match(token)
            if m is None:
                raise HamiltonianFormatError(f"bad Pauli factor {token!r}", lineno)
            qubit = int(m.group(2))
            if qubit >= n_qubits:
                raise HamiltonianFormatError(
                    f"qubit index {qubit} out of range for {n_qubits} qubits", lineno
                )
            if qubit in letters:
                raise HamiltonianFormatError(f"qubit {qubit} repeated", lineno)
            letters[qubit] = m.group(1)
        terms.append((coeff, PauliString.from_letters(n_qubits, letters)))
    if n_qubits is None:
        raise HamiltonianFormatError("missing 'qubits N' header")
    return PauliSumHamiltonian.from_terms(n_qubits, terms)


def serialize_hamiltonian(ham: PauliSumHamiltonian) -> str:
    lines = [f"qubits {ham.n_qubits}"]
    for coeff, pauli in ham.terms:
        lines.append(f"{coeff!r} {pauli}")
    return "\n".join(lines) + "\n"


def load_hamiltonian(path: str | Path) -> PauliSumHamiltonian:
    return parse_hamiltonian(Path(path).read_text(encoding="ascii"))


def save_hamiltonian(ham: PauliSumHamiltonian, path: str | Path) -> None:
    Path(path).write_text(serialize_hamiltonian(ham), encoding="ascii")
