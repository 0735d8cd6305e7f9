"""Exact references: eigenpairs, analytic signals, intensity ranking, extrapolation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .pauli import PauliString, PauliSumHamiltonian

DENSE_LIMIT = 10  # qubits; dense diagonalization at or below this size


class EigenSolverError(RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class CoverageError(ValueError):
    """The initial state is not captured by the truncated eigenbasis."""

    def __init__(self, missing_weight: float):
        super().__init__(f"truncated eigenbasis misses weight {missing_weight:.3e} of the state")
        self.missing_weight = missing_weight


@dataclass
class EigenSolution:
    values: np.ndarray
    vectors: np.ndarray  # shape (k, 2**n), rows are eigenvectors
    residuals: np.ndarray

    def __len__(self):
        return len(self.values)

    def gap(self, k: int = 1, l: int = 0) -> float:
        return float(self.values[k] - self.values[l])


def _certify(ham, values, vectors):
    hv = ham.apply(vectors)
    res = np.linalg.norm(hv - values[:, None] * vectors, axis=1)
    return res


def lowest_eigenpairs(ham: PauliSumHamiltonian, k: int, tol: float = 1e-8) -> EigenSolution:
    """``k`` lowest eigenpairs with residual certificates ``||Hv - Ev|| <= tol``.

    Systems up to :data:`DENSE_LIMIT` qubits are diagonalized densely; larger
    ones use implicitly restarted Lanczos (ARPACK) on the matrix-free operator.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    dim = ham.dim
    if k > dim:
        raise ValueError(f"requested {k} eigenpairs of a {dim}-dimensional operator")
    if ham.n_qubits <= DENSE_LIMIT or k >= dim - 1:
        mat = ham.to_matrix()
        if ham.is_real():
            mat = mat.real
        vals, vecs = np.linalg.eigh(mat)
        values = vals[:k]
        vectors = vecs[:, :k].T.astype(complex)
    else:
        from scipy.sparse.linalg import ArpackNoConvergence, eigsh

        mat = ham.to_sparse()
        if ham.is_real():
            mat = mat.real.tocsr()
        rng = np.random.default_rng(12345)
        v0 = rng.standard_normal(dim)
        try:
            vals, vecs = eigsh(mat, k=k, which="SA", tol=1e-13, v0=v0, ncv=max(2 * k + 1, 40), maxiter=dim * 10)
        except ArpackNoConvergence as exc:
            raise EigenSolverError("Lanczos eigensolver did not converge") from exc
        order = np.argsort(vals)
        values = vals[order]
        vectors = vecs[:, order].T.astype(complex)
        # re-orthonormalize degenerate blocks
        q, _ = np.linalg.qr(vectors.T)
        vectors = q.T
        hq = ham.apply(vectors)
        small = vectors.conj() @ hq.T
        small = (small + small.conj().T) / 2
        values, rot = np.linalg.eigh(small)
        vectors = rot.T @ vectors
    residuals = _certify(ham, values, vectors)
    if np.any(residuals > tol):
        raise EigenSolverError(f"eigenpair residuals too large: max {residuals.max():.2e}", residuals)
    return EigenSolution(np.asarray(values, dtype=float), vectors, residuals)


@dataclass
class SignalModel:
    """``S(t) = offset + sum_j amplitude_j cos(frequency_j t + phase_j)``."""

    frequencies: np.ndarray
    intensities: np.ndarray
    phases: np.ndarray
    offset: float
    missing_weight: float = 0.0

    def evaluate(self, times) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        out = np.full(t.shape, self.offset, dtype=float)
        for w, a, p in zip(self.frequencies, self.intensities, self.phases):
            out += a * np.cos(w * t + p)
        return out

    def dominant(self, count: int = 1):
        order = np.argsort(-self.intensities, kind="stable")[:count]
        return [(float(self.frequencies[i]), float(self.intensities[i])) for i in order]


def exact_signal_model(
    solution: EigenSolution | PauliSumHamiltonian,
    initial_state: np.ndarray,
    observable: PauliString | np.ndarray,
    k: int = 8,
    coverage_tol: float = 1e-8,
    degeneracy_tol: float = 1e-10,
) -> SignalModel:
    """Analytic signal of ``<psi(t)|O|psi(t)>`` from a truncated eigenbasis.

    With ``c_k = <psi_k|psi>`` and ``I_kl = c_k^* c_l <psi_k|O|psi_l>`` each pair
    ``k < l`` contributes ``2|I_kl| cos((E_l - E_k) t + phi_kl)`` where
    ``I_kl = |I_kl| exp(-i phi_kl)``. Pairs closer than ``degeneracy_tol`` in
    energy are folded into the constant offset.
    """
    if isinstance(solution, PauliSumHamiltonian):
        solution = lowest_eigenpairs(solution, min(k, solution.dim))
    vecs = solution.vectors[:k]
    energies = solution.values[:k]
    c = vecs.conj() @ initial_state
    missing = max(0.0, float(np.vdot(initial_state, initial_state).real - np.sum(np.abs(c) ** 2)))
    if missing > coverage_tol:
        raise CoverageError(missing)
    if isinstance(observable, PauliString):
        o_vecs = observable.apply(vecs)
    else:
        o_vecs = vecs @ np.asarray(observable).T
    o_mat = vecs.conj() @ o_vecs.T  # <psi_k|O|psi_l>
    intens = c.conj()[:, None] * c[None, :] * o_mat
    offset = float(np.real(np.trace(intens)))
    freqs, amps, phases = [], [], []
    for a in range(len(energies)):
        for b in range(a + 1, len(energies)):
            w = energies[b] - energies[a]
            term = intens[a, b]
            if abs(w) < degeneracy_tol:
                offset += 2 * term.real
                continue
            if abs(term) == 0.0:
                continue
            if w < 0:
                w, term = -w, term.conjugate()
            freqs.append(w)
            amps.append(2 * abs(term))
            phases.append(-np.angle(term))
    return SignalModel(np.array(freqs), np.array(amps), np.array(phases), offset, missing)


def rank_transition_intensities(
    solution: EigenSolution, pool: Sequence[PauliString], k: int = 0, l: int = 1
) -> list[tuple[PauliString, float]]:
    """Pool sorted by ``|<psi_k|P|psi_l>|``, largest first; ties keep pool order."""
    if not (0 <= k < len(solution) and 0 <= l < len(solution)):
        raise ValueError("eigenstate index outside the computed solution")
    bra, ket = solution.vectors[k], solution.vectors[l]
    values = [abs(np.vdot(bra, p.apply(ket))) for p in pool]
    rounded = np.round(np.array(values), 12)
    order = sorted(range(len(pool)), key=lambda i: (-rounded[i], pool[i].sort_key()))
    return [(pool[i], float(values[i])) for i in order]


@dataclass
class ExtrapolationFit:
    delta_t: np.ndarray
    omega_peak: np.ndarray
    degree: int
    coefficients: np.ndarray  # ascending powers of delta_t
    stderr_coefficients: np.ndarray
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def gap(self) -> float:
        return float(self.coefficients[0])

    @property
    def stderr(self) -> float:
        return float(self.stderr_coefficients[0])

    def predict(self, delta_t) -> np.ndarray:
        return np.polynomial.polynomial.polyval(np.asarray(delta_t, dtype=float), self.coefficients)

    def to_record(self) -> dict:
        return {
            "gap": self.gap,
            "stderr": self.stderr,
            "degree": self.degree,
            "coefficients": self.coefficients.tolist(),
            "residuals": self.residuals.tolist(),
        }


class ExtrapolationError(ValueError):
    pass


def extrapolate_gap(samples: Sequence[tuple[float, float]], degree: int = 3) -> ExtrapolationFit:
    """Least-squares polynomial in the Trotter step; intercept estimates the gap.

    The intercept standard error comes from the residual variance
    ``RSS / (N - degree - 1)``; it is NaN for an exactly determined fit.
    """
    if degree < 0:
        raise ExtrapolationError("degree must be non-negative")
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ExtrapolationError("samples must be (delta_t, omega_peak) pairs")
    x, y = data[:, 0], data[:, 1]
    if len(x) < degree + 1:
        raise ExtrapolationError(f"need at least {degree + 1} samples for degree {degree}")
    if len(np.unique(x)) != len(x):
        raise ExtrapolationError("delta_t values must be distinct")
    design = np.vander(x, degree + 1, increasing=True)
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < degree + 1:
        raise ExtrapolationError("rank-deficient design matrix")
    resid = y - design @ coef
    dof = len(x) - degree - 1
    if dof > 0:
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(design.T @ design)
        se = np.sqrt(np.diag(cov))
    else:
        se = np.full(degree + 1, np.nan)
    return ExtrapolationFit(x, y, degree, coef, se, resid)


def snr_model(n_times: int, n_snapshots: int, mean_sq_intensity: float, n_observables: int,
              noise_variance: float = 1.0) -> float:
    """Predicted peak signal-to-noise ratio of the mean squared spectrum.

    ``SNR = N_T * I2 * sqrt(N_o) / (sqrt(2) * eps2)`` with ``eps2`` the
    per-bin noise variance (1 for standardized signals). ``n_snapshots`` does
    not enter at fixed ``eps2``; use :func:`snr_model_shots` to plan budgets.
    """
    for name, v in (("n_times", n_times), ("n_snapshots", n_snapshots),
                    ("mean_sq_intensity", mean_sq_intensity), ("n_observables", n_observables),
                    ("noise_variance", noise_variance)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    return n_times * mean_sq_intensity * math.sqrt(n_observables) / (math.sqrt(2) * noise_variance)


def snr_model_shots(n_times: int, n_snapshots: int, mean_sq_intensity: float, n_observables: int,
                    variance_per_snapshot: float = 1.0) -> float:
    """Shot-limited variant with ``eps2 = variance_per_snapshot / N_s``.

    Invariant under ``N_s -> N_s / a, N_T -> a N_T``.
    """
    eps2 = variance_per_snapshot / n_snapshots
    return snr_model(n_times, n_snapshots, mean_sq_intensity, n_observables, eps2)
