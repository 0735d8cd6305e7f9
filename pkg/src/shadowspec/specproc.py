"""Post-processing of many noisy time signals into a spectral density.

Pipeline: standardize rows, screen with the Ljung-Box test, form
``C = D^T D / N_o``, keep its dominant eigenvectors and evaluate the largest
singular value of their spectral cross-correlation matrix per frequency.
The mean squared spectrum is provided as the simpler alternative.

Transform convention: ``F[f](w_n) = sum_t f(t) exp(-2 pi i n t / N_T)`` (the
unnormalized forward sum); densities divide ``|F|^2`` by ``N_T`` so that
white noise of unit variance has a flat spectrum of mean 1.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import gammaincc

from ._json import dumps
from .pauli import PauliString

log = logging.getLogger(__name__)


class EmptySignalMatrixError(ValueError):
    pass


class SpectrumFormatError(ValueError):
    pass


@dataclass
class SignalMatrix:
    """Standardized signals: row ``k`` of ``data`` is ``(raw_k - mu_k) / sigma_k``."""

    data: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    paulis: list | None = None
    pvalues: np.ndarray | None = None
    n_dropped: int = 0
    n_rejected: int = 0

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_times(self) -> int:
        return self.data.shape[1]

    def subset(self, rows: np.ndarray) -> SignalMatrix:
        """Rows selected by a boolean mask or an index array."""
        mask = _as_mask(rows, self.n_rows)
        return replace(
            self,
            data=self.data[mask],
            mu=self.mu[mask],
            sigma=self.sigma[mask],
            paulis=None if self.paulis is None else [p for p, k in zip(self.paulis, mask) if k],
            pvalues=None if self.pvalues is None else self.pvalues[mask],
        )


def _as_mask(rows, n):
    rows = np.asarray(rows)
    if rows.dtype == bool:
        return rows
    mask = np.zeros(n, dtype=bool)
    mask[rows] = True
    return mask


def standardize(raw: np.ndarray, paulis: Sequence[PauliString] | None = None, scale: bool = True) -> SignalMatrix:
    """Center each row and divide by its standard deviation (``ddof=0``).

    Rows whose standard deviation vanishes are dropped. With ``scale=False``
    rows are only centered (sigma is still reported).
    """
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    if raw.shape[1] < 2:
        raise ValueError("need at least two time points per signal")
    mu = raw.mean(axis=1)
    centered = raw - mu[:, None]
    sigma = np.sqrt(np.mean(centered**2, axis=1))
    keep = sigma > 1e-12 * (1.0 + np.abs(mu))
    dropped = int((~keep).sum())
    if dropped:
        log.info("dropping %d zero-variance signals", dropped)
    if not keep.any():
        raise EmptySignalMatrixError("every signal has zero variance")
    data = centered[keep] / sigma[keep, None] if scale else centered[keep]
    kept_paulis = None if paulis is None else [p for p, k in zip(paulis, keep) if k]
    return SignalMatrix(data, mu[keep], sigma[keep], kept_paulis, None, dropped)


def default_lags(n_times: int) -> int:
    return max(1, min(20, n_times // 4))


def ljung_box_statistic(signals: np.ndarray, lags: int) -> np.ndarray:
    """Ljung-Box ``Q`` per row of a 2-D array (or for a 1-D signal)."""
    x = np.atleast_2d(np.asarray(signals, dtype=float))
    n = x.shape[1]
    if not 1 <= lags < n:
        raise ValueError(f"lags must satisfy 1 <= h < N_T (h={lags}, N_T={n})")
    xc = x - x.mean(axis=1, keepdims=True)
    denom = np.sum(xc**2, axis=1)
    q = np.zeros(x.shape[0])
    ok = denom > 0
    for k in range(1, lags + 1):
        rho = np.sum(xc[:, k:] * xc[:, :-k], axis=1)
        rho = np.divide(rho, denom, out=np.zeros_like(rho), where=ok)
        q += rho**2 / (n - k)
    q *= n * (n + 2)
    q[~ok] = 0.0
    return q


def ljung_box_p(signals: np.ndarray, lags: int | None = None) -> np.ndarray | float:
    """Upper tail probability of ``Q`` under ``chi^2(h)``.

    Zero-variance input yields ``p = 1``. A 1-D input returns a float.
    """
    arr = np.asarray(signals, dtype=float)
    h = default_lags(arr.shape[-1]) if lags is None else lags
    q = ljung_box_statistic(arr, h)
    p = gammaincc(h / 2.0, q / 2.0)
    p = np.clip(p, 0.0, 1.0)
    return float(p[0]) if arr.ndim == 1 else p


def screen(matrix: SignalMatrix, alpha: float = 0.05, lags: int | None = None) -> SignalMatrix:
    """Keep rows whose Ljung-Box p-value is at most ``alpha``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    p = ljung_box_p(matrix.data, lags) if matrix.n_rows else np.zeros(0)
    if np.ndim(p) == 0:
        p = np.array([p])
    keep = p <= alpha
    out = matrix.subset(keep)
    out.pvalues = p[keep]
    out.n_rejected = matrix.n_rejected + int((~keep).sum())
    return out


def compute_C(data: SignalMatrix | np.ndarray, block: int = 4096) -> np.ndarray:
    """``C = D^T D / N_o`` accumulated over fixed row blocks in order."""
    d = data.data if isinstance(data, SignalMatrix) else np.asarray(data, dtype=float)
    n_o, n_t = d.shape
    if n_o == 0:
        raise EmptySignalMatrixError("no signals")
    c = np.zeros((n_t, n_t))
    for start in range(0, n_o, block):
        chunk = d[start : start + block]
        c += chunk.T @ chunk
    c /= n_o
    return (c + c.T) / 2


def noise_edge(n_times: int, n_rows: int) -> float:
    """Upper edge of the eigenvalue bulk of ``C`` for standardized white noise."""
    return (1.0 + math.sqrt(n_times / n_rows)) ** 2


@dataclass
class SubspaceBasis:
    vectors: np.ndarray  # (c, N_T), orthonormal rows
    eigenvalues: np.ndarray  # all eigenvalues of C, descending
    threshold: float = float("nan")

    @property
    def c(self) -> int:
        return self.vectors.shape[0]


def dominant_subspace(
    C: np.ndarray,
    n_rows: int | None = None,
    c: int | None = None,
    margin: float = 0.25,
    max_c: int = 20,
) -> SubspaceBasis:
    """Leading eigenvectors of the symmetric matrix ``C``.

    Unless ``c`` is given, keeps eigenvalues above ``(1 + margin)`` times the
    white-noise bulk edge ``(1 + sqrt(N_T / N_o))**2`` (``n_rows`` is
    ``N_o``), at most ``max_c`` of them.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("C must be square")
    if not np.allclose(C, C.T, atol=1e-10 * max(1.0, np.abs(C).max())):
        raise ValueError("C must be symmetric")
    try:
        vals, vecs = np.linalg.eigh(C)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("eigensolver failed on C") from exc
    vals, vecs = vals[::-1], vecs[:, ::-1]
    thr = float("nan")
    if c is None:
        if n_rows is None:
            raise ValueError("give either c or n_rows for the selection rule")
        thr = (1 + margin) * noise_edge(C.shape[0], n_rows)
        c = int(min(max_c, np.sum(vals > thr)))
    c = max(0, min(int(c), C.shape[0]))
    return SubspaceBasis(vecs[:, :c].T.copy(), vals, thr)


@dataclass
class Spectrum:
    omega: np.ndarray
    density: np.ndarray
    method: str
    baseline_mean: float = float("nan")
    baseline_std: float = float("nan")

    @property
    def bin_width(self) -> float:
        return float(self.omega[1] - self.omega[0]) if len(self.omega) > 1 else float("nan")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="ascii") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["omega", "density"])
            for o, d in zip(self.omega, self.density):
                w.writerow([f"{o:.17g}", f"{d:.17g}"])

    @classmethod
    def from_csv(cls, path: str | Path, method: str = "unknown") -> Spectrum:
        with open(path, encoding="ascii") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["omega", "density"]:
            raise SpectrumFormatError(f"{path}:1: expected header 'omega,density'")
        values = []
        for lineno, row in enumerate(rows[1:], start=2):
            try:
                a, b = row
                values.append([float(a), float(b)])
            except ValueError:
                raise SpectrumFormatError(f"{path}:{lineno}: expected two numbers, got {row!r}") from None
        if len(values) < 2:
            raise SpectrumFormatError(f"{path}: need at least two frequency bins")
        arr = np.array(values)
        spec = cls(arr[:, 0], arr[:, 1], method)
        return with_baseline(spec)


def frequency_grid(n_times: int, dt: float) -> np.ndarray:
    return 2 * np.pi * np.arange(n_times // 2 + 1) / (n_times * dt)


def _hann(n):
    return np.hanning(n) if n > 1 else np.ones(n)


def cross_spectral_density(basis: SubspaceBasis | np.ndarray, dt: float, window: bool = False) -> Spectrum:
    """Largest singular value of the spectral cross-correlation matrix.

    For vectors ``v_1..v_c`` the lag correlations
    ``X_kl(m) = sum_n v_k(n + m) v_l(n) / N_T`` (full overlap, biased
    normalization, ``X_kl(-m) = X_lk(m)``) are Fourier transformed over the
    lag, and ``lambda(w_n)`` is the dominant singular value of the ``c x c``
    matrix ``X(w_n)``.
    """
    v = basis.vectors if isinstance(basis, SubspaceBasis) else np.atleast_2d(np.asarray(basis, float))
    n_t = v.shape[1]
    omega = frequency_grid(n_t, dt)
    if v.shape[0] == 0:
        log.warning("empty signal subspace, returning an empty spectrum")
        return Spectrum(omega, np.zeros_like(omega), "cross-spectral")
    if window:
        v = v * _hann(n_t)
    size = 2 * n_t
    fv = np.fft.fft(v, size, axis=1)
    # lag m sits at index m mod 2 N_T
    lagcorr = np.fft.ifft(fv[:, None, :] * fv[None, :, :].conj(), axis=2).real / n_t
    folded = lagcorr[:, :, :n_t].copy()
    folded[:, :, 1:] += lagcorr[:, :, n_t + 1 :]
    xw = np.fft.fft(folded, axis=2)[:, :, : n_t // 2 + 1]
    mats = np.moveaxis(xw, 2, 0)
    density = np.linalg.svd(mats, compute_uv=False)[:, 0]
    return with_baseline(Spectrum(omega, density, "cross-spectral"))


def mean_squared_spectrum(
    matrix: SignalMatrix | np.ndarray, dt: float, window: bool = False, onesided: bool = True, block: int = 2048
) -> Spectrum:
    """``MSS(w_n) = (1/N_o) sum_i |F[f_i](w_n)|^2 / N_T``.

    With ``onesided=False`` the full grid ``n = 0..N_T-1`` is returned; its
    sum equals ``(1/N_o) sum_i ||f_i||^2`` (Parseval).
    """
    d = matrix.data if isinstance(matrix, SignalMatrix) else np.atleast_2d(np.asarray(matrix, float))
    n_o, n_t = d.shape
    if n_o == 0:
        raise EmptySignalMatrixError("no signals")
    w = _hann(n_t) if window else None
    acc = None
    for start in range(0, n_o, block):
        chunk = d[start : start + block]
        if w is not None:
            chunk = chunk * w
        f = np.fft.rfft(chunk, axis=1) if onesided else np.fft.fft(chunk, axis=1)
        part = np.sum(np.abs(f) ** 2, axis=0)
        acc = part if acc is None else acc + part
    density = acc / (n_o * n_t)
    omega = frequency_grid(n_t, dt) if onesided else 2 * np.pi * np.arange(n_t) / (n_t * dt)
    spec = Spectrum(omega, density, "mean-squared")
    return with_baseline(spec) if onesided else spec


def _local_maxima(density: np.ndarray) -> np.ndarray:
    d = density
    idx = []
    for n in range(1, len(d)):
        left = d[n - 1]
        right = d[n + 1] if n + 1 < len(d) else -np.inf
        if d[n] > left and d[n] >= right:
            idx.append(n)
    return np.array(idx, dtype=int)


def baseline_statistics(density: np.ndarray, threshold: float = 5.0, guard: int = 2, iterations: int = 5):
    """Mean and std of the upper half of bins, excluding ``+-guard`` bins around peaks.

    Peaks are re-detected against the current baseline until the excluded set
    stops changing.
    """
    d = np.asarray(density, dtype=float)
    n = len(d)
    upper = np.zeros(n, dtype=bool)
    upper[max(1, n // 2) :] = True
    excluded = np.zeros(n, dtype=bool)
    mean = std = float("nan")
    for _ in range(iterations):
        use = upper & ~excluded
        if use.sum() < 3:
            use = upper.copy()
        mean = float(d[use].mean())
        std = float(d[use].std(ddof=1)) if use.sum() > 1 else 0.0
        new = np.zeros(n, dtype=bool)
        for p in _local_maxima(d):
            if d[p] > mean + threshold * std:
                new[max(0, p - guard) : p + guard + 1] = True
        if np.array_equal(new, excluded):
            break
        excluded = new
    return mean, std


def with_baseline(spec: Spectrum, threshold: float = 5.0) -> Spectrum:
    mean, std = baseline_statistics(spec.density, threshold)
    spec.baseline_mean, spec.baseline_std = mean, std
    return spec


@dataclass
class Peak:
    omega: float
    omega_interp: float
    height: float
    sigma: float
    index: int


@dataclass
class PeakList:
    peaks: list[Peak] = field(default_factory=list)

    def __len__(self):
        return len(self.peaks)

    def __iter__(self):
        return iter(self.peaks)

    def __getitem__(self, i):
        return self.peaks[i]

    def to_records(self) -> list[dict]:
        return [
            {"omega": p.omega, "omega_interp": p.omega_interp, "height": p.height, "sigma": p.sigma}
            for p in self.peaks
        ]

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(dumps(self.to_records()), encoding="ascii")

    @classmethod
    def from_json(cls, path: str | Path) -> PeakList:
        recs = json.loads(Path(path).read_text(encoding="ascii"))
        return cls([
            Peak(r["omega"], r["omega_interp"], r["height"], float("inf") if r["sigma"] is None else r["sigma"], -1)
            for r in recs
        ])


def find_peaks(spectrum: Spectrum, threshold: float = 5.0) -> PeakList:
    """Local maxima above ``baseline_mean + threshold * baseline_std``.

    The DC bin is skipped. Each peak's frequency is refined by a parabola
    through the peak bin and its two neighbours.
    """
    d = spectrum.density
    if len(d) == 0:
        raise ValueError("empty spectrum")
    mean, std = spectrum.baseline_mean, spectrum.baseline_std
    if not np.isfinite(mean):
        mean, std = baseline_statistics(d, threshold)
    width = spectrum.bin_width
    cut = mean + threshold * std
    out = []
    for n in _local_maxima(d):
        if d[n] <= cut:
            continue
        frac = 0.0
        if n + 1 < len(d):
            a, b, r = d[n - 1], d[n], d[n + 1]
            denom = a - 2 * b + r
            if denom != 0:
                frac = float(np.clip(0.5 * (a - r) / denom, -0.5, 0.5))
        sig = (d[n] - mean) / std if std > 0 else float("inf")
        out.append(Peak(float(spectrum.omega[n]), float(spectrum.omega[n] + frac * width), float(d[n]), float(sig), int(n)))
    out.sort(key=lambda p: -p.height)
    return PeakList(out)


def peak_snr(spectrum: Spectrum, omega: float | None = None) -> float:
    """``(height - baseline mean) / baseline std`` at the bin nearest ``omega``
    (the tallest non-DC bin if ``omega`` is None)."""
    d = spectrum.density
    if omega is None:
        n = 1 + int(np.argmax(d[1:]))
    else:
        n = int(np.argmin(np.abs(spectrum.omega - omega)))
    return float((d[n] - spectrum.baseline_mean) / spectrum.baseline_std)
