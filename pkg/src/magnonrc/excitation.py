"""Antenna drive synthesis and probe sampling."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .magnetics import ConfigurationError, DrivePattern, MagState, MaterialMap, SimGrid

S_MAX = 2.0
SAMPLE_PERIOD = 0.01e-9
INTERVAL = 0.3e-9
SAMPLES_PER_INTERVAL = 31


class InputRangeError(ValueError):
    pass


class DriveSaturationError(RuntimeError):
    """Drive multiplier exceeded the configured cap (usually runaway feedback)."""


@dataclass(frozen=True)
class Region:
    """Half-open cell rectangle ``[x0, x1) x [y0, y1)``."""

    x0: int
    x1: int
    y0: int
    y1: int

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ConfigurationError(f"empty region {self}")

    @property
    def slices(self):
        return slice(self.x0, self.x1), slice(self.y0, self.y1)

    @property
    def size(self):
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def inside(self, grid: SimGrid) -> bool:
        return 0 <= self.x0 and self.x1 <= grid.nx and 0 <= self.y0 and self.y1 <= grid.ny

    def overlaps(self, other: "Region") -> bool:
        return (self.x0 < other.x1 and other.x0 < self.x1
                and self.y0 < other.y1 and other.y0 < self.y1)


@dataclass(frozen=True)
class AntennaSpec:
    region: Region
    polarization: tuple = (1.0, 0.0, 0.0)
    base_amplitude: float = 1e-3
    frequency: float = 14e9

    def __post_init__(self):
        if self.base_amplitude <= 0:
            raise ConfigurationError("base_amplitude must be positive")
        p = np.asarray(self.polarization, dtype=float)
        if not np.isclose(np.linalg.norm(p), 1.0):
            raise ConfigurationError("antenna polarization must be a unit vector")

    def validate(self, grid: SimGrid, static_direction):
        if not self.region.inside(grid):
            raise ConfigurationError(f"antenna region {self.region} outside grid")
        d = np.asarray(static_direction, dtype=float)
        d = d / np.linalg.norm(d)
        if abs(float(np.dot(d, self.polarization))) > 1e-9:
            raise ConfigurationError("antenna polarization must be perpendicular to the static magnetization")

    @property
    def vector(self):
        return self.base_amplitude * np.asarray(self.polarization, dtype=float)


@dataclass(frozen=True)
class ProbeSpec:
    region: Region
    component: int = 2

    def __post_init__(self):
        if self.component not in (0, 1, 2):
            raise ConfigurationError("probe component must be 0, 1 or 2")


def _check_unit(I):
    arr = np.asarray(I, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or not np.all(np.isfinite(arr)):
        raise InputRangeError(f"input values must lie in [0, 1], got {I!r}")


def encode_amplitude(I, f, t):
    """``I * sin(2 pi f t)``."""
    _check_unit(I)
    return I * np.sin(2 * np.pi * f * np.asarray(t))


def encode_phase(I, f, t):
    """``sin(2 pi f t + pi I)``."""
    _check_unit(I)
    return np.sin(2 * np.pi * f * np.asarray(t) + np.pi * I)


ENCODERS = {"amplitude": encode_amplitude, "phase": encode_phase}


def check_drive(s, s_max=S_MAX, where=""):
    peak = float(np.max(np.abs(s))) if np.size(s) else 0.0
    if not np.isfinite(peak) or peak > s_max:
        raise DriveSaturationError(f"drive multiplier {peak:.3g} exceeds cap {s_max}{where}")


def apply_drive(antenna: AntennaSpec, s: float, out: np.ndarray, s_max: float = S_MAX) -> np.ndarray:
    """Add ``s * base_amplitude * polarization`` over the antenna region of ``out``."""
    check_drive(s, s_max)
    xs, ys = antenna.region.slices
    out[xs, ys] += s * antenna.vector
    return out


def drive_pattern(antennas: Sequence[AntennaSpec]) -> DrivePattern:
    """Sparse drive layout with one multiplier source per antenna (in order)."""
    idx, vec, src = [], [], []
    for k, ant in enumerate(antennas):
        r = ant.region
        ii, jj = np.meshgrid(np.arange(r.x0, r.x1), np.arange(r.y0, r.y1), indexing="ij")
        cells = np.column_stack([ii.ravel(), jj.ravel()])
        idx.append(cells)
        vec.append(np.tile(ant.vector, (len(cells), 1)))
        src.append(np.full(len(cells), k))
    if not antennas:
        return DrivePattern.empty()
    return DrivePattern(np.concatenate(idx).astype(np.int64), np.concatenate(vec),
                        np.concatenate(src).astype(np.int64), len(antennas))


def probe_mask(probe: ProbeSpec, material: MaterialMap) -> np.ndarray:
    xs, ys = probe.region.slices
    mask = np.zeros(material.ms_per_cell.shape, dtype=bool)
    mask[xs, ys] = True
    mask &= material.active
    if not mask.any():
        raise ConfigurationError(f"probe region {probe.region} contains no magnetic cells")
    return mask


def sample_probe(state: MagState, probe: ProbeSpec, material: MaterialMap) -> float:
    """Mean of the probed magnetization component over the active cells of the region."""
    mask = probe_mask(probe, material)
    return float(state.m[..., probe.component][mask].mean())


class ProbeSampler:
    """Precomputed index form of :func:`sample_probe` for repeated sampling."""

    def __init__(self, probes: Sequence[ProbeSpec], material: MaterialMap):
        self.probes = list(probes)
        self._idx = [np.nonzero(probe_mask(p, material)) for p in self.probes]

    def __call__(self, state: MagState) -> np.ndarray:
        return np.array([state.m[ix, iy, p.component].mean()
                         for p, (ix, iy) in zip(self.probes, self._idx)])


def spectral_peak(samples, spacing) -> float:
    """Frequency (Hz) of the largest non-DC bin of a Hann-windowed, zero-padded spectrum."""
    x = np.asarray(samples, dtype=float)
    x = (x - x.mean()) * np.hanning(len(x))
    n = 16 * len(x)
    spec = np.abs(np.fft.rfft(x, n))
    freqs = np.fft.rfftfreq(n, spacing)
    k = int(np.argmax(spec[1:])) + 1
    if 1 <= k < len(spec) - 1:
        a, b, c = np.log(spec[k - 1: k + 2] + 1e-300)
        k = k + 0.5 * (a - c) / (a - 2 * b + c)
    return float(k * (freqs[1] - freqs[0]))


def write_probe_csv(path, values, sample_period=SAMPLE_PERIOD, samples_per_interval=SAMPLES_PER_INTERVAL):
    """``values`` is (n_intervals, samples_per_interval)."""
    values = np.asarray(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["interval_index", "sample_index", "t_ns", "value"])
        for i, row in enumerate(values):
            for j, v in enumerate(row):
                t = (i * (samples_per_interval - 1) + j) * sample_period
                w.writerow([i, j, f"{t * 1e9:.6f}", repr(float(v))])
