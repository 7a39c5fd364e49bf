"""Trajectory post-processing: structure, vibrational spectra, error tables.

The vibrational density of states is the Fourier transform of the
mass-weighted velocity autocorrelation, Hann-windowed over the lag axis and
normalized to unit peak height. Frequencies are reported in wavenumbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .md import Trajectory

# speed of light in cm/fs: converts 1/fs to wavenumbers
C_CM_PER_FS = 2.99792458e-5


@dataclass(frozen=True)
class StructuralStats:
    bond_mean: float  # Angstrom, both O-H bonds pooled
    bond_std: float
    angle_mean: float  # degrees
    angle_std: float


def structural_stats(traj: Trajectory) -> StructuralStats:
    """Time-averaged O-H bond length and H-O-H angle over a water trajectory."""
    if traj.n_frames < 1:
        raise ValueError("empty trajectory")
    pos = traj.positions
    d1 = pos[:, 1] - pos[:, 0]
    d2 = pos[:, 2] - pos[:, 0]
    r1 = np.linalg.norm(d1, axis=1)
    r2 = np.linalg.norm(d2, axis=1)
    cosang = np.clip(np.sum(d1 * d2, axis=1) / (r1 * r2), -1.0, 1.0)
    angles = np.degrees(np.arccos(cosang))
    bonds = np.concatenate([r1, r2])
    return StructuralStats(
        float(bonds.mean()), float(bonds.std()),
        float(angles.mean()), float(angles.std()),
    )


@dataclass(frozen=True)
class VdosSpectrum:
    frequencies: np.ndarray  # cm^-1, ascending
    dos: np.ndarray  # normalized to peak 1
    peaks: list[tuple[float, float]]  # (frequency cm^-1, height)


def _autocorrelation(x: np.ndarray) -> np.ndarray:
    """Unbiased linear autocorrelation for lags 0..N-1 via FFT."""
    n = len(x)
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    return acf / (n - np.arange(n))


def _find_peaks(freqs: np.ndarray, dos: np.ndarray, threshold: float = 0.1):
    """Local maxima above threshold with 3-point parabolic refinement."""
    peaks = []
    for i in range(1, len(dos) - 1):
        if dos[i] < threshold or dos[i] < dos[i - 1] or dos[i] <= dos[i + 1]:
            continue
        denom = dos[i - 1] - 2.0 * dos[i] + dos[i + 1]
        shift = 0.0 if denom == 0 else 0.5 * (dos[i - 1] - dos[i + 1]) / denom
        shift = float(np.clip(shift, -0.5, 0.5))
        df = freqs[1] - freqs[0]
        peaks.append((float(freqs[i] + shift * df), float(dos[i])))
    return peaks


def vdos(traj: Trajectory, dt: float | None = None, window: str = "hann") -> VdosSpectrum:
    """Vibrational spectrum from the mass-weighted velocity autocorrelation."""
    n = traj.n_frames
    if n < 1024:
        raise ValueError(f"need at least 1024 frames for a spectrum, got {n}")
    steps = np.diff(traj.times)
    if dt is None:
        dt = float(steps[0])
    if not np.allclose(steps, dt, rtol=1e-9, atol=1e-12):
        raise ValueError("non-uniform sampling interval")
    acf = np.zeros(n)
    for i, m in enumerate(traj.masses):
        for axis in range(3):
            acf += m * _autocorrelation(traj.velocities[:, i, axis])
    if window == "hann":
        acf = acf * np.hanning(2 * n - 1)[n - 1 :]
    elif window != "boxcar":
        raise ValueError(f"unknown window kind {window!r}")
    dos = np.abs(np.fft.rfft(acf))
    freqs = np.fft.rfftfreq(n, dt) / C_CM_PER_FS
    peak = dos.max()
    if peak > 0:
        dos = dos / peak
    else:
        dos = np.zeros_like(dos)
    return VdosSpectrum(freqs, dos, _find_peaks(freqs, dos))


def relative_errors(
    reference: Mapping[str, float], candidate: Mapping[str, float]
) -> dict[str, float]:
    """Percentage errors |candidate - reference| / reference * 100 per key."""
    out = {}
    for key, ref in reference.items():
        if key not in candidate:
            raise KeyError(f"candidate missing key {key!r}")
        if ref == 0:
            raise ValueError(f"zero reference value for key {key!r}")
        out[key] = abs(candidate[key] - ref) / abs(ref) * 100.0
    return out


def error_report(
    reference: Mapping[str, float], candidates: Mapping[str, Mapping[str, float]]
) -> str:
    """Aligned text table of values and percentage errors vs the reference."""
    keys = list(reference)
    width = max(12, max(len(k) for k in keys) + 2)
    name_w = max(len("reference"), max((len(n) for n in candidates), default=0), 10) + 2
    lines = ["".ljust(name_w) + "".join(k.rjust(width) for k in keys)]
    lines.append("reference".ljust(name_w) + "".join(f"{reference[k]:.4g}".rjust(width) for k in keys))
    for name, cand in candidates.items():
        lines.append(name.ljust(name_w) + "".join(f"{cand[k]:.4g}".rjust(width) for k in keys))
    for name, cand in candidates.items():
        errs = relative_errors(reference, cand)
        lines.append(
            f"err({name})".ljust(name_w) + "".join(f"{errs[k]:.2f}%".rjust(width) for k in keys)
        )
    return "\n".join(lines)


@dataclass(frozen=True)
class ScatterResult:
    points: np.ndarray  # (n, 2): (predicted, reference) meV/A
    rmse: float  # meV/A


def force_scatter(predicted, reference) -> ScatterResult:
    """Pair up predicted/reference force components (eV/A in, meV/A out)."""
    pred = np.asarray(predicted, dtype=float).ravel() * 1000.0
    ref = np.asarray(reference, dtype=float).ravel() * 1000.0
    if pred.shape != ref.shape:
        raise ValueError("predicted and reference lengths differ")
    rmse = float(np.sqrt(np.mean((pred - ref) ** 2))) if len(pred) else 0.0
    return ScatterResult(np.column_stack([pred, ref]), rmse)
