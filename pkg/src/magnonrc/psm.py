"""Parallel input scattering model and cascades of it.

Geometry (defaults, cell units on a 500 x 20 film):

* absorbing damping ramps over the first and last 40 columns,
* a 2-cell void slit along the midline over the first 20 % of the length,
  splitting the input end into two channels,
* one input antenna per channel,
* randomly placed disks of reduced saturation magnetization in the middle
  60 % (the scattering region),
* 1-3 probes tiling the output strip in y.

Bias is out of plane, so the film carries forward-volume waves that spread
isotropically in the plane.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import excitation as ex
from .magnetics import (ConfigurationError, MaterialParams, NumericBlowupError, SimGrid, Simulation,
                        build_absorber, uniform_state)

N_SAMPLES = ex.SAMPLES_PER_INTERVAL


@dataclass
class PsmConfig:
    nx: int = 500
    ny: int = 20
    cell_size: float = 2.5e-9
    bias: float = 0.25  # tesla, along +z
    frequency: float = 6.2e9
    interval: float = 0.3e-9
    sample_period: float = 0.01e-9
    dt: float = 25e-15
    absorber_cells: int = 40
    alpha_max: float = 0.5
    slit_fraction: float = 0.2
    slit_width: int = 2
    antenna_x: int = 86
    antenna_width: int = 4
    scatter_start: float = 0.2
    scatter_end: float = 0.8
    output_x: int = 400
    output_width: int = 4
    n_output_channels: int = 1
    spot_count: int = 20
    spot_radius: float = 12.5e-9
    ms_reduction: float = 0.2
    seed: int = 0
    ring_down: int = 3
    base_amplitude: float = 1e-3
    material: MaterialParams = field(default_factory=MaterialParams)

    def __post_init__(self):
        if isinstance(self.material, dict):
            self.material = MaterialParams(**self.material)
        if self.n_output_channels not in (1, 2, 3):
            raise ConfigurationError("n_output_channels must be 1, 2 or 3")
        if int(round(self.interval / self.sample_period)) + 1 != N_SAMPLES:
            raise ConfigurationError(f"interval/sample_period + 1 must be {N_SAMPLES}")
        if not np.isclose(self.steps_per_sample * self.dt, self.sample_period, rtol=1e-9, atol=0.0):
            raise ConfigurationError("sample_period must be an integer multiple of dt")
        if not 0 < self.ms_reduction <= 0.5:
            raise ConfigurationError("ms_reduction must lie in (0, 0.5]")
        if self.ring_down < 0:
            raise ConfigurationError("ring_down must be non-negative")

    @property
    def steps_per_sample(self) -> int:
        return int(round(self.sample_period / self.dt))

    @property
    def scatter_region(self):
        return int(round(self.scatter_start * self.nx)), int(round(self.scatter_end * self.nx))


@dataclass(frozen=True)
class Spot:
    cx: float  # cell-unit coordinates of the centre
    cy: float
    radius: float  # metres
    ms_reduction: float


@dataclass
class ScatterSpots:
    spots: list
    seed: Optional[int] = None

    def to_csv(self, path, cell_size=2.5e-9):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x_cell", "y_cell", "radius_cells", "ms_reduction"])
            for s in self.spots:
                w.writerow([repr(s.cx), repr(s.cy), repr(s.radius / cell_size), repr(s.ms_reduction)])

    @classmethod
    def from_csv(cls, path, cell_size=2.5e-9):
        rows = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
        return cls([Spot(r[0], r[1], r[2] * cell_size, r[3]) for r in rows if r.size])


def random_spots(config: PsmConfig, max_tries=10000) -> ScatterSpots:
    """Uniformly placed disks, rejection-sampled to lie wholly inside the scattering region."""
    c = config
    x0, x1 = c.scatter_region
    r = c.spot_radius / c.cell_size
    if 2 * r > (x1 - x0) or 2 * r > c.ny:
        raise ConfigurationError(f"spots of radius {r:.1f} cells cannot fit the scattering region")
    rng = np.random.default_rng(c.seed)
    spots = []
    tries = 0
    while len(spots) < c.spot_count:
        tries += 1
        if tries > max_tries:
            raise ConfigurationError("could not place spots inside the scattering region")
        cx = rng.uniform(x0, x1)
        cy = rng.uniform(0, c.ny)
        if cx - r < x0 or cx + r > x1 or cy - r < 0 or cy + r > c.ny:
            continue
        spots.append(Spot(float(cx), float(cy), c.spot_radius, c.ms_reduction))
    return ScatterSpots(spots, c.seed)


def apply_spots(ms: np.ndarray, spots: ScatterSpots, ms_base: float, cell_size: float) -> np.ndarray:
    """Lower Ms inside each disk; overlapping disks take the deepest reduction."""
    nx, ny = ms.shape
    xc = np.arange(nx)[:, None] + 0.5
    yc = np.arange(ny)[None, :] + 0.5
    factor = np.ones_like(ms)
    for s in spots.spots:
        inside = (xc - s.cx) ** 2 + (yc - s.cy) ** 2 <= (s.radius / cell_size) ** 2
        factor = np.where(inside, np.minimum(factor, 1 - s.ms_reduction), factor)
    out = ms.copy()
    magnetic = ms > 0
    out[magnetic] = np.minimum(ms[magnetic], ms_base * factor[magnetic])
    return out


@dataclass(frozen=True)
class PsmGeometry:
    slit: ex.Region
    antennas: tuple
    probes: tuple
    spots: ScatterSpots
    bias: float
    frequency: float


@dataclass
class PsmDevice:
    config: PsmConfig
    geometry: PsmGeometry
    grid: SimGrid
    sim: Simulation
    sampler: ex.ProbeSampler


def output_partition(ny, n):
    """Split [0, ny) into ``n`` contiguous, near-equal y ranges."""
    edges = np.linspace(0, ny, n + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def build_psm(config: Optional[PsmConfig] = None, spots: Optional[ScatterSpots] = None, **overrides) -> PsmDevice:
    """Construct geometry and material. ``spots`` overrides the seeded random layout."""
    c = config if config is not None else PsmConfig()
    if overrides:
        c = PsmConfig(**{**asdict(c), **overrides})
    grid = SimGrid(c.nx, c.ny, 1, c.cell_size, c.material)
    ms = grid.material.ms_per_cell.copy()
    slit_len = int(round(c.slit_fraction * c.nx))
    y_mid = c.ny // 2
    slit = ex.Region(0, slit_len, y_mid - c.slit_width // 2, y_mid - c.slit_width // 2 + c.slit_width)
    ms[slit.slices] = 0.0
    spots = random_spots(c) if spots is None else spots
    x0, x1 = c.scatter_region
    r_cells = [s.radius / c.cell_size for s in spots.spots]
    for s, r in zip(spots.spots, r_cells):
        if s.cx - r < x0 - 1e-9 or s.cx + r > x1 + 1e-9 or s.cy - r < -1e-9 or s.cy + r > c.ny + 1e-9:
            raise ConfigurationError(f"spot {s} overflows the scattering region")
        if not 0 < s.ms_reduction <= 0.5:
            raise ConfigurationError("spot ms_reduction must lie in (0, 0.5]")
    ms = apply_spots(ms, spots, c.material.Ms_base, c.cell_size)
    grid.material.ms_per_cell = ms
    grid.material = build_absorber(grid, c.absorber_cells, c.alpha_max)
    if not (c.absorber_cells <= c.antenna_x and c.antenna_x + c.antenna_width <= slit_len):
        raise ConfigurationError("input antennas must sit inside the slit section, after the absorber")
    if c.output_x + c.output_width > c.nx - c.absorber_cells:
        raise ConfigurationError("output strip overlaps the absorber")
    ax = (c.antenna_x, c.antenna_x + c.antenna_width)
    antennas = (
        ex.AntennaSpec(ex.Region(*ax, 0, slit.y0), (1.0, 0.0, 0.0), c.base_amplitude, c.frequency),
        ex.AntennaSpec(ex.Region(*ax, slit.y1, c.ny), (1.0, 0.0, 0.0), c.base_amplitude, c.frequency),
    )
    for a in antennas:
        a.validate(grid, (0, 0, 1))
    probes = tuple(ex.ProbeSpec(ex.Region(c.output_x, c.output_x + c.output_width, a, b), component=0)
                   for a, b in output_partition(c.ny, c.n_output_channels))
    for p in probes:
        if any(p.region.overlaps(a.region) for a in antennas):
            raise ConfigurationError("probe overlaps an input antenna")
    sim = Simulation(grid, (0.0, 0.0, c.bias), c.dt, ex.drive_pattern(antennas))
    geom = PsmGeometry(slit, antennas, probes, spots, c.bias, c.frequency)
    return PsmDevice(c, geom, grid, sim, ex.ProbeSampler(probes, grid.material))


@dataclass
class PsmTrace:
    values: np.ndarray  # (channel, interval, sample)
    n_inputs: int
    sample_period: float = ex.SAMPLE_PERIOD

    @property
    def n_channels(self):
        return self.values.shape[0]

    @property
    def n_intervals(self):
        return self.values.shape[1]

    def to_csv_rows(self, sample_id=0):
        n = self.values.shape[2]
        for c in range(self.n_channels):
            for i in range(self.n_intervals):
                for j in range(n):
                    t = (i * (n - 1) + j) * self.sample_period * 1e9
                    yield [sample_id, c, i, j, f"{t:.6f}", repr(float(self.values[c, i, j]))]


def write_psm_traces(path, traces: Sequence[PsmTrace]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "channel", "interval", "sample", "t_ns", "value"])
        for sid, tr in enumerate(traces):
            w.writerows(tr.to_csv_rows(sid))


def run_psm(feature_pairs, device: PsmDevice, ring_down: Optional[int] = None, initial_state=None) -> PsmTrace:
    """Drive channel 1 with I1 and channel 2 with I2 (amplitude encoded), one pair per interval."""
    pairs = np.asarray(feature_pairs, dtype=float).reshape(-1, 2)
    ex._check_unit(pairs)
    c = device.config
    ring_down = c.ring_down if ring_down is None else ring_down
    sim = device.sim
    state = sim.relax(uniform_state(device.grid, (0, 0, 1))) if initial_state is None else initial_state.copy()
    n_int = len(pairs) + ring_down
    spp = c.steps_per_sample
    tau = (np.arange(spp)[:, None] + np.array([0.0, 0.5, 0.5, 1.0])[None, :]) * c.dt
    out = np.empty((len(device.geometry.probes), n_int, N_SAMPLES))
    for i in range(n_int):
        I = pairs[i] if i < len(pairs) else np.zeros(2)
        out[:, i, 0] = device.sampler(state)
        for j in range(N_SAMPLES - 1):
            carrier = np.sin(2 * np.pi * c.frequency * (j * c.sample_period + tau))
            try:
                if I.any():
                    sim.advance(state, carrier[..., None] * I[None, None, :])
                else:
                    sim.advance(state, n_steps=spp)
            except NumericBlowupError as err:
                raise NumericBlowupError(err.cell, err.t, interval=i) from None
            out[:, i, j + 1] = device.sampler(state)
    return PsmTrace(out, len(pairs), c.sample_period)


def psm_features(trace: PsmTrace) -> np.ndarray:
    """Channel-major, then interval, then sample: index (c * n_int + i) * 31 + j."""
    return trace.values.reshape(-1).copy()


def interval_envelope(trace: PsmTrace, channel=0) -> np.ndarray:
    """Peak-equivalent amplitude per interval, sqrt(2) * RMS of its samples."""
    v = trace.values[channel]
    return np.sqrt(2.0 * np.mean(v ** 2, axis=1))


def drive_rms(pairs) -> float:
    """RMS of the amplitude-encoded drive over the driven intervals, pooled over channels."""
    p = np.asarray(pairs, dtype=float)
    return float(np.sqrt(np.mean(p ** 2) / 2.0))


class CascadePsm:
    """Layers of PSMs; each downstream device takes two upstream single-channel outputs.

    ``stages[0]`` holds the input-layer devices (each fed one feature pair as a
    single interval). Every later stage halves the device count. Between stages,
    each upstream trace is reduced to its per-interval envelope, multiplied by
    the stage amplification and clipped to [0, 1] to form the per-interval inputs
    of the next device. ``amplification`` entries may be numbers or ``"auto"``:
    the gain that makes the pooled output RMS of the upstream layer equal the
    pooled drive RMS of the input layer.
    """

    def __init__(self, stages: Sequence[Sequence[PsmDevice]], amplification=None):
        stages = [list(s) for s in stages]
        if not stages or not stages[0]:
            raise ConfigurationError("cascade needs at least one device")
        for up, down in zip(stages, stages[1:]):
            if len(up) != 2 * len(down):
                raise ConfigurationError(f"fan mismatch: {len(up)} upstream devices feed {len(down)} downstream")
        for s in stages[:-1]:
            for d in s:
                if len(d.geometry.probes) != 1:
                    raise ConfigurationError("intermediate devices must have a single output channel")
        self.stages = stages
        n_links = len(stages) - 1
        if amplification is None:
            amplification = ["auto"] * n_links
        elif np.isscalar(amplification) or isinstance(amplification, str):
            amplification = [amplification] * n_links
        if len(amplification) != n_links:
            raise ConfigurationError("one amplification entry per stage link is required")
        self.amplification = list(amplification)
        self.gains: list = []

    @property
    def n_features(self):
        return 2 * len(self.stages[0])

    def run(self, features) -> list:
        """Run a batch of samples (rows of ``features``); returns the final-stage traces."""
        X = np.atleast_2d(np.asarray(features, dtype=float))
        if X.shape[1] != self.n_features:
            raise ConfigurationError(f"cascade expects {self.n_features} features, got {X.shape[1]}")
        inputs = [[X[n, 2 * k:2 * k + 2][None, :] for k in range(len(self.stages[0]))] for n in range(len(X))]
        first_rms = drive_rms(X)
        self.gains = []
        for s, devices in enumerate(self.stages):
            traces = [[run_psm(inputs[n][k], d) for k, d in enumerate(devices)] for n in range(len(X))]
            if s == len(self.stages) - 1:
                return [t[0] for t in traces] if len(devices) == 1 else traces
            amp = self.amplification[s]
            if amp == "auto":
                out_rms = np.sqrt(np.mean([np.mean(t.values ** 2) for row in traces for t in row]))
                amp = first_rms / out_rms if out_rms > 0 else 0.0
            self.gains.append(float(amp))
            inputs = []
            for row in traces:
                env = [np.clip(amp * interval_envelope(t), 0.0, 1.0) for t in row]
                inputs.append([np.column_stack([env[2 * k], env[2 * k + 1]]) for k in range(len(row) // 2)])
        raise AssertionError("unreachable")


def cascade_psm(stage_configs: Sequence[Sequence[PsmConfig]], amplification=None) -> CascadePsm:
    return CascadePsm([[build_psm(c) for c in stage] for stage in stage_configs], amplification)
