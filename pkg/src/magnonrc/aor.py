"""Auto-oscillation ring: waveguide, feedback line and frozen amplification network.

Each input value occupies one interval (default 0.3 ns). Within an interval
the drive multiplier on the input antenna is

    (1 + a_i) * encode(I_i, tau) + feedback_gain * y(t - delay)

where ``tau`` is the time since the interval started, ``a_i`` is the frozen
network's response to the previous interval's output samples and ``y`` is
the output signal (probe magnetization times ``output_scale``) held constant
between sample instants.
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
class AorConfig:
    nx: int = 500
    ny: int = 20
    cell_size: float = 2.5e-9
    bias: float = 0.2  # tesla, in-plane along +y (perpendicular to propagation)
    frequency: float = 14e9
    interval: float = 0.3e-9
    sample_period: float = 0.01e-9
    feedback_gain: float = 0.5
    feedback_delay_samples: int = 1
    encoding: str = "amplitude"
    ann_enabled: bool = True
    seed: int = 0
    dt: float = 25e-15
    absorber_cells: int = 40
    alpha_max: float = 0.5
    antenna_x: int = 100
    antenna_width: int = 4
    probe_x: int = 220
    probe_width: int = 4
    base_amplitude: float = 1e-3
    output_scale: float = 300.0
    s_max: float = ex.S_MAX
    material: MaterialParams = field(default_factory=MaterialParams)

    def __post_init__(self):
        if isinstance(self.material, dict):
            self.material = MaterialParams(**self.material)
        self.validate()

    @property
    def n_samples(self) -> int:
        return int(round(self.interval / self.sample_period)) + 1

    @property
    def steps_per_sample(self) -> int:
        return int(round(self.sample_period / self.dt))

    def validate(self):
        if self.n_samples != N_SAMPLES:
            raise ConfigurationError(f"interval/sample_period + 1 must be {N_SAMPLES}, got {self.n_samples}")
        if not np.isclose(self.steps_per_sample * self.dt, self.sample_period, rtol=1e-9, atol=0.0):
            raise ConfigurationError("sample_period must be an integer multiple of dt")
        if self.feedback_gain < 0 or self.feedback_delay_samples < 1:
            raise ConfigurationError("feedback_gain must be >= 0 and feedback_delay_samples >= 1")
        if self.encoding not in ex.ENCODERS:
            raise ConfigurationError(f"unknown encoding {self.encoding!r}")
        if self.antenna_x < self.absorber_cells or self.probe_x + self.probe_width > self.nx - self.absorber_cells:
            raise ConfigurationError("antenna and probe must sit between the absorbers")
        if self.antenna_x + self.antenna_width > self.probe_x:
            raise ConfigurationError("probe must lie downstream of the input antenna")

    def to_dict(self):
        d = asdict(self)
        return d


@dataclass(frozen=True)
class AorDevice:
    """Everything about an AOR that does not depend on the input sequence."""

    config: AorConfig
    grid: SimGrid
    sim: Simulation
    antenna: ex.AntennaSpec
    probe: ex.ProbeSpec
    sampler: ex.ProbeSampler


def build_aor(config: AorConfig) -> AorDevice:
    c = config
    grid = SimGrid(c.nx, c.ny, 1, c.cell_size, c.material)
    grid.material = build_absorber(grid, c.absorber_cells, c.alpha_max)
    antenna = ex.AntennaSpec(ex.Region(c.antenna_x, c.antenna_x + c.antenna_width, 0, c.ny),
                             (1.0, 0.0, 0.0), c.base_amplitude, c.frequency)
    antenna.validate(grid, (0, 1, 0))
    probe = ex.ProbeSpec(ex.Region(c.probe_x, c.probe_x + c.probe_width, 0, c.ny), component=2)
    if probe.region.overlaps(antenna.region):
        raise ConfigurationError("probe and antenna regions overlap")
    sim = Simulation(grid, (0.0, c.bias, 0.0), c.dt, ex.drive_pattern([antenna]))
    return AorDevice(c, grid, sim, antenna, probe, ex.ProbeSampler([probe], grid.material))


class AnnSpec:
    """Frozen 31 -> 10 -> 1 network (rectifier hidden layer, sigmoid output)."""

    def __init__(self, W1, b1, w2, b2):
        self.W1 = np.array(W1, dtype=float)
        self.b1 = np.array(b1, dtype=float)
        self.w2 = np.array(w2, dtype=float)
        self.b2 = float(b2)
        if self.W1.shape != (10, N_SAMPLES) or self.b1.shape != (10,) or self.w2.shape != (10,):
            raise ConfigurationError("ANN weights must have shapes (10, 31), (10,), (10,)")
        for a in (self.W1, self.b1, self.w2):
            a.flags.writeable = False

    @classmethod
    def from_seed(cls, seed: int = 0) -> "AnnSpec":
        rng = np.random.default_rng(seed)
        l1 = 1 / np.sqrt(N_SAMPLES)
        l2 = 1 / np.sqrt(10)
        return cls(rng.uniform(-l1, l1, (10, N_SAMPLES)), rng.uniform(-l1, l1, 10),
                   rng.uniform(-l2, l2, 10), rng.uniform(-l2, l2))

    @classmethod
    def zeros(cls):
        return cls(np.zeros((10, N_SAMPLES)), np.zeros(10), np.zeros(10), 0.0)

    @property
    def n_params(self) -> int:
        return self.W1.size + self.b1.size + self.w2.size + 1

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.w2, [self.b2]])

    @classmethod
    def from_vector(cls, v) -> "AnnSpec":
        v = np.asarray(v, dtype=float)
        n1 = 10 * N_SAMPLES
        return cls(v[:n1].reshape(10, N_SAMPLES), v[n1:n1 + 10], v[n1 + 10:n1 + 20], v[n1 + 20])


def ann_forward(ann: AnnSpec, prev_outputs) -> float:
    x = np.asarray(prev_outputs, dtype=float)
    if x.shape != (N_SAMPLES,):
        raise ConfigurationError(f"ANN expects {N_SAMPLES} inputs, got shape {x.shape}")
    hidden = np.maximum(ann.W1 @ x + ann.b1, 0.0)
    z = float(ann.w2 @ hidden + ann.b2)
    # numerically safe logistic; saturates to exactly 0.0/1.0 only for |z| > ~37
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


@dataclass
class ReservoirTrace:
    input_samples: np.ndarray
    output_samples: np.ndarray
    diff_samples: np.ndarray
    ann_gain: np.ndarray
    sample_period: float = ex.SAMPLE_PERIOD

    def __len__(self):
        return len(self.input_samples)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["interval", "sample", "t_ns", "input", "output", "diff", "ann_gain"])
            n = self.input_samples.shape[1]
            for i in range(len(self)):
                for j in range(n):
                    t = (i * (n - 1) + j) * self.sample_period * 1e9
                    w.writerow([i, j, f"{t:.6f}", repr(float(self.input_samples[i, j])),
                                repr(float(self.output_samples[i, j])), repr(float(self.diff_samples[i, j])),
                                repr(float(self.ann_gain[i]))])

    @classmethod
    def from_csv(cls, path) -> "ReservoirTrace":
        rows = np.genfromtxt(path, delimiter=",", names=True)
        n_int = int(rows["interval"].max()) + 1
        n = int(rows["sample"].max()) + 1
        shape = (n_int, n)
        return cls(rows["input"].reshape(shape), rows["output"].reshape(shape),
                   rows["diff"].reshape(shape), rows["ann_gain"].reshape(shape)[:, 0].copy())


def run_aor(inputs: Sequence[float], config: AorConfig, ann: Optional[AnnSpec] = None,
            device: Optional[AorDevice] = None, initial_state=None, reset_between_intervals=False,
            fixed_gain: Optional[float] = None) -> ReservoirTrace:
    """Drive the ring with one input value per interval and record the trace.

    ``fixed_gain`` replaces the network output by a constant (used to bypass the
    ANN). ``reset_between_intervals`` restores the initial film state at the
    start of every interval.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 1 or len(inputs) == 0:
        raise ConfigurationError("inputs must be a non-empty 1-d sequence")
    ex._check_unit(inputs)
    c = config
    dev = device if device is not None else build_aor(c)
    if ann is None and c.ann_enabled and fixed_gain is None:
        ann = AnnSpec.from_seed(c.seed)
    encode = ex.ENCODERS[c.encoding]
    sim = dev.sim
    if initial_state is None:
        state = sim.relax(uniform_state(dev.grid, (0, 1, 0)))
    else:
        state = initial_state.copy()
    start = state.copy()

    n_int = len(inputs)
    n_s = c.n_samples
    spp = c.steps_per_sample
    tau_stage = (np.arange(spp)[:, None] + np.array([0.0, 0.5, 0.5, 1.0])[None, :]) * c.dt

    in_s = np.empty((n_int, n_s))
    out_s = np.empty((n_int, n_s))
    gains = np.zeros(n_int)
    history = []  # output signal at every global sample instant
    for i, I in enumerate(inputs):
        if reset_between_intervals:
            state = start.copy()
            history = []
        if fixed_gain is not None:
            a = fixed_gain if i > 0 else 0.0
        elif c.ann_enabled and i > 0:
            a = ann_forward(ann, out_s[i - 1])
        else:
            a = 0.0
        gains[i] = a
        in_s[i] = encode(I, c.frequency, np.arange(n_s) * c.sample_period)
        y0 = c.output_scale * dev.sampler(state)[0]
        out_s[i, 0] = y0
        if not history:
            history.append(y0)
        for j in range(n_s - 1):
            k = len(history) - 1 - c.feedback_delay_samples
            fb = c.feedback_gain * history[k] if k >= 0 else 0.0
            mult = (1.0 + a) * encode(I, c.frequency, j * c.sample_period + tau_stage) + fb
            ex.check_drive(mult, c.s_max, f" in interval {i}")
            try:
                sim.advance(state, mult[..., None])
            except NumericBlowupError as err:
                raise NumericBlowupError(err.cell, err.t, interval=i) from None
            y = c.output_scale * dev.sampler(state)[0]
            out_s[i, j + 1] = y
            history.append(y)
    return ReservoirTrace(in_s, out_s, in_s - out_s, gains, c.sample_period)


def trace_features(trace: ReservoirTrace) -> np.ndarray:
    """Per-interval [input | output | input - output] rows (93 columns)."""
    return np.hstack([trace.input_samples, trace.output_samples, trace.diff_samples])
