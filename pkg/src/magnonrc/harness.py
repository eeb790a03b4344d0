"""Config-driven experiments: feature extraction, trial loop, reports and benchmarks.

Physics runs once per (dataset, physics config) and is cached on disk under a
hash of exactly the settings that influence it; readout sweeps reuse the cache.
Trial ``t`` of test split ``s`` draws its permutation and readout seed from
``base_seed ^ crc32("s:t")``, so reports do not depend on execution order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import binomtest

from . import aor as aor_mod
from . import psm as psm_mod
from .data import (DataError, Dataset, SequentialDataset, gen_dimred, load_iris, load_statlog, load_stock,
                   dataset_path, pairs, stratified_subset)
from .magnetics import ConfigurationError
from .readout import (evaluate, predict_labels, fit_ensemble, fit_linear, fit_mlp, ann_gradient_probe, target_matrix,
                      GradientProbeReport)

ARCHITECTURES = ("aor", "psm", "psm-cascade", "reference-direct")
METHODS = ("linear", "ensemble", "mlp")
DATASETS = ("stock", "iris", "statlog", "dimred")
CACHE_VERSION = 1


@dataclass
class DatasetSpec:
    kind: str = "stock"
    path: Optional[str] = None
    options: dict = field(default_factory=dict)
    subset: Optional[int] = None  # stratified subset size, drawn with subset_seed
    subset_seed: int = 0

    def __post_init__(self):
        if self.kind not in DATASETS:
            raise ConfigurationError(f"unknown dataset kind {self.kind!r}")
        if self.path is not None and not Path(self.path).exists():
            raise ConfigurationError(f"dataset file not found: {self.path}")


@dataclass
class ReadoutSpec:
    methods: list = field(default_factory=lambda: list(METHODS))
    bias: bool = False  # append a constant column for the linear and ensemble maps
    ensemble_n: int = 5
    mlp_hidden: int = 16
    mlp_epochs: int = 300
    mlp_lr: float = 1e-3

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigurationError(f"readout methods must be drawn from {METHODS}, got {self.methods}")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    architecture: str = "reference-direct"
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    encoding: str = "amplitude"
    ann_enabled: bool = True
    readout: ReadoutSpec = field(default_factory=ReadoutSpec)
    splits: list = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5])
    n_trials: int = 100
    seed: int = 0
    physics: dict = field(default_factory=dict)
    cascade_stages: int = 2

    def __post_init__(self):
        if isinstance(self.dataset, dict):
            self.dataset = DatasetSpec(**self.dataset)
        if isinstance(self.readout, dict):
            self.readout = ReadoutSpec(**self.readout)
        if self.architecture not in ARCHITECTURES:
            raise ConfigurationError(f"unknown architecture {self.architecture!r}")
        if not self.splits or any(not 0 < s < 1 for s in self.splits):
            raise ConfigurationError("splits must be fractions strictly between 0 and 1")
        if self.n_trials < 1:
            raise ConfigurationError("n_trials must be >= 1")
        if self.architecture == "psm" and self.encoding != "amplitude":
            raise ConfigurationError("the PSM takes amplitude-encoded inputs only")
        # building the physics config validates the overrides before anything runs
        self.physics_config()

    def physics_config(self):
        phys = dict(self.physics)
        try:
            if self.architecture == "aor":
                return aor_mod.AorConfig(**{"encoding": self.encoding, "ann_enabled": self.ann_enabled, **phys})
            if self.architecture in ("psm", "psm-cascade"):
                return psm_mod.PsmConfig(**phys)
        except TypeError as err:
            raise ConfigurationError(f"invalid physics override: {err}") from None
        return None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def physics_key(self) -> str:
        """Hash of everything that affects the reservoir features (not the readout or splits)."""
        phys = self.physics_config()
        payload = {
            "version": CACHE_VERSION,
            "architecture": self.architecture,
            "dataset": asdict(self.dataset),
            "physics": None if phys is None else asdict(phys),
            "cascade_stages": self.cascade_stages if self.architecture == "psm-cascade" else None,
        }
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Datasets and features
# ---------------------------------------------------------------------------

def load_dataset(spec: DatasetSpec):
    opts = dict(spec.options)
    try:
        if spec.kind == "stock":
            ds = load_stock(spec.path or dataset_path("sp500_2013.csv"), **opts)
        elif spec.kind == "iris":
            ds = load_iris(spec.path, **opts)
        elif spec.kind == "statlog":
            ds = load_statlog(spec.path, **opts)
        else:
            ds = gen_dimred(**opts)
    except TypeError as err:
        raise ConfigurationError(f"invalid dataset option: {err}") from None
    if spec.subset is not None and spec.kind != "stock":
        idx = stratified_subset(ds.targets, spec.subset, spec.subset_seed)
        if isinstance(ds, SequentialDataset):
            ds = SequentialDataset(ds.sequences[idx], ds.targets[idx], {**ds.meta, "subset": spec.subset})
        else:
            ds = Dataset(ds.features[idx], ds.targets[idx], {**ds.meta, "subset": spec.subset})
    return ds


def _input_pairs(ds) -> np.ndarray:
    """(n_samples, n_intervals, 2) PSM inputs for any pairable dataset."""
    if isinstance(ds, SequentialDataset):
        seq = ds.sequences
        if seq.ndim != 3 or seq.shape[2] != 2:
            raise ConfigurationError("PSM needs pairs of inputs per interval")
        return seq
    return pairs(ds.features)


_WORKER = {}


def _psm_worker_init(cfg):
    _WORKER["device"] = psm_mod.build_psm(cfg)


def _psm_worker(p):
    return psm_mod.run_psm(p, _WORKER["device"]).values


def _map(fn, items, threads, init=None, initargs=()):
    if threads <= 1:
        if init is not None:
            init(*initargs)
        return [fn(x) for x in items]
    with ProcessPoolExecutor(threads, initializer=init, initargs=initargs) as pool:
        return list(pool.map(fn, items))


def compute_features(config: ExperimentConfig, threads: int = 1) -> dict:
    """Reservoir features and targets; returns a dict of arrays (``X``, ``y`` and extras)."""
    ds = load_dataset(config.dataset)
    arch = config.architecture
    if arch == "reference-direct":
        X = ds.flat if isinstance(ds, SequentialDataset) else ds.features
        return {"X": np.asarray(X, dtype=float), "y": ds.targets}
    phys = config.physics_config()
    if arch == "aor":
        if config.dataset.kind != "stock":
            raise ConfigurationError("the AOR runs on a single scalar series (stock data)")
        trace = aor_mod.run_aor(ds.sequences[:, 0], phys)
        return {"X": aor_mod.trace_features(trace), "y": ds.targets,
                "trace_input": trace.input_samples, "trace_output": trace.output_samples,
                "trace_gain": trace.ann_gain}
    inputs = _input_pairs(ds)
    if arch == "psm":
        vals = _map(_psm_worker, list(inputs), threads, _psm_worker_init, (phys,))
        X = np.array([v.reshape(-1) for v in vals])
        return {"X": X, "y": ds.targets}
    # cascade: layer-1 devices are seeded phys.seed, phys.seed + 1, ...; intermediate outputs single-channel
    n_first = inputs.shape[1]
    stages, seed = [], phys.seed
    width = n_first
    for s in range(config.cascade_stages):
        stage = []
        for _ in range(width):
            channels = 1 if s < config.cascade_stages - 1 else phys.n_output_channels
            stage.append(psm_mod.PsmConfig(**{**asdict(phys), "seed": seed, "n_output_channels": channels}))
            seed += 1
        stages.append(stage)
        if width == 1 and s < config.cascade_stages - 1:
            raise ConfigurationError("too many cascade stages for the input width")
        width //= 2
    if len(stages[-1]) != 1:
        raise ConfigurationError("cascade must end in a single device")
    pipe = psm_mod.cascade_psm(stages)
    flat = inputs.reshape(len(inputs), -1)
    traces = pipe.run(flat)
    X = np.array([psm_mod.psm_features(t) for t in traces])
    return {"X": X, "y": ds.targets, "gains": np.array(pipe.gains)}


def _atomic_savez(path: Path, arrays: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cached_features(config: ExperimentConfig, cache_dir=None, threads: int = 1) -> dict:
    if cache_dir is None:
        return compute_features(config, threads)
    path = Path(cache_dir) / f"{config.architecture}-{config.dataset.kind}-{config.physics_key()}.npz"
    if path.exists():
        with np.load(path) as z:
            return {k: z[k] for k in z.files}
    feats = compute_features(config, threads)
    _atomic_savez(path, feats)
    return feats


# ---------------------------------------------------------------------------
# Trial loop and report
# ---------------------------------------------------------------------------

def trial_seed(base_seed: int, split: float, trial: int) -> int:
    return (int(base_seed) ^ zlib.crc32(f"{split:.6f}:{trial}".encode())) & 0xFFFFFFFF


def split_indices(n: int, split: float, seed: int):
    """Seeded permutation; the first ``round(split * n)`` indices are the test set."""
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(split * n))
    return perm[n_test:], perm[:n_test]


def _with_bias(X, spec: ReadoutSpec, method: str):
    return np.hstack([X, np.ones((len(X), 1))]) if spec.bias and method != "mlp" else X


def fit_readout(method: str, X, y, n_classes: int, spec: ReadoutSpec, seed: int):
    """Fit one readout; linear and ensemble maps see the constant column when ``spec.bias``."""
    if method == "mlp":
        return fit_mlp(X, y, hidden=spec.mlp_hidden, epochs=spec.mlp_epochs, lr=spec.mlp_lr, seed=seed,
                       n_classes=n_classes)
    Xb = _with_bias(X, spec, method)
    Y = target_matrix(y, n_classes)
    return fit_linear(Xb, Y) if method == "linear" else fit_ensemble(Xb, Y, spec.ensemble_n)


TRIAL_HEADER = ["method", "encoding", "ann_flag", "split", "trial", "accuracy"]
AGG_HEADER = ["method", "encoding", "ann_flag", "split", "n", "max", "mean", "std"]


@dataclass
class TrialReport:
    rows: list = field(default_factory=list)  # (method, encoding, ann_flag, split, trial, accuracy)
    name: str = ""
    architecture: str = ""
    trace: Optional[dict] = None

    def aggregates(self) -> list:
        """One row per (method, encoding, ann_flag, split) plus a pooled ``all`` row per method.

        ``std`` is the population standard deviation.
        """
        groups = {}
        for m, e, a, s, t, acc in self.rows:
            groups.setdefault((m, e, a, s), []).append(acc)
            groups.setdefault((m, e, a, "all"), []).append(acc)
        out = []
        for key in sorted(groups, key=lambda k: (k[0], k[1], str(k[2]), k[3] == "all", str(k[3]))):
            v = np.asarray(groups[key], dtype=float)
            out.append((*key, len(v), float(v.max()), float(v.mean()), float(v.std())))
        return out

    def summary(self, method) -> tuple:
        for row in self.aggregates():
            if row[0] == method and row[3] == "all":
                return row[5], row[6], row[7]
        raise KeyError(method)

    def mean(self, method) -> float:
        return self.summary(method)[1]


def run_experiment(config: ExperimentConfig, cache_dir=None, threads: int = 1, features: Optional[dict] = None,
                   seed: Optional[int] = None) -> TrialReport:
    base = config.seed if seed is None else seed
    feats = features if features is not None else cached_features(config, cache_dir, threads)
    X, y = np.asarray(feats["X"], dtype=float), np.asarray(feats["y"], dtype=int)
    n_classes = max(2, int(y.max()) + 1)
    ann_flag = config.ann_enabled if config.architecture == "aor" else False
    jobs = [(s, t) for s in config.splits for t in range(config.n_trials)]

    def one(job):
        s, t = job
        ts = trial_seed(base, s, t)
        tr, te = split_indices(len(y), s, ts)
        out = []
        for method in config.readout.methods:
            model = fit_readout(method, X[tr], y[tr], n_classes, config.readout, ts)
            acc = evaluate(model, _with_bias(X[te], config.readout, method), y[te])
            out.append((method, config.encoding, ann_flag, s, t, acc))
        return out

    rows = [r for job in jobs for r in one(job)]
    trace = None
    if "trace_input" in feats:
        trace = {"input": feats["trace_input"], "output": feats["trace_output"]}
    return TrialReport(rows, config.name, config.architecture, trace)


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def emit_report(report: TrialReport, out_dir, prefix: Optional[str] = None) -> dict:
    """Write ``<prefix>trials.csv``, ``<prefix>aggregate.csv`` and, for AOR runs, ``<prefix>overlay.csv``."""
    out = Path(out_dir)
    pre = f"{prefix}_" if prefix else (f"{report.name}_" if report.name else "")
    paths = {"trials": out / f"{pre}trials.csv", "aggregate": out / f"{pre}aggregate.csv"}
    _write_csv(paths["trials"], TRIAL_HEADER, report.rows)
    _write_csv(paths["aggregate"], AGG_HEADER, report.aggregates())
    if report.trace is not None:
        paths["overlay"] = out / f"{pre}overlay.csv"
        write_overlay(paths["overlay"], report.trace["input"], report.trace["output"])
    return paths


def write_overlay(path, inputs, outputs, sample_period=0.01e-9):
    """Input and output signal on a common time axis, output rescaled to the input's peak."""
    inputs, outputs = np.asarray(inputs), np.asarray(outputs)
    peak_in, peak_out = np.abs(inputs).max(), np.abs(outputs).max()
    scale = peak_in / peak_out if peak_out > 0 else 0.0
    n = inputs.shape[1]
    rows = []
    for i in range(len(inputs)):
        for j in range(n):
            t = (i * (n - 1) + j) * sample_period * 1e9
            rows.append((i, j, round(t, 6), float(inputs[i, j]), float(outputs[i, j]), float(scale * outputs[i, j])))
    _write_csv(Path(path), ["interval", "sample", "t_ns", "input", "output", "output_scaled"], rows)


def _parse_cell(v):
    if v in ("True", "False"):
        return v == "True"
    try:
        return float(v) if any(c in v for c in ".eE") or v in ("nan", "inf") else int(v)
    except ValueError:
        return v


def read_trials_csv(path) -> TrialReport:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != TRIAL_HEADER:
            raise DataError(f"unexpected trial CSV header {header}")
        rows = []
        for m, e, a, s, t, acc in r:
            rows.append((m, e, a == "True", float(s), int(t), float(acc)))
    return TrialReport(rows)


def read_aggregate_csv(path) -> list:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        return [tuple(_parse_cell(v) for v in row) for row in r]


# ---------------------------------------------------------------------------
# Memory and parity benchmark
# ---------------------------------------------------------------------------

@dataclass
class MemoryResult:
    j: np.ndarray
    memory: np.ndarray  # accuracy percent
    parity: np.ndarray  # nan for j = 0
    memory_p: np.ndarray  # one-sided binomial p-value against chance
    n_eval: np.ndarray

    def to_csv(self, path):
        rows = [(int(j), float(m), float(p), float(mp), int(n))
                for j, m, p, mp, n in zip(self.j, self.memory, self.parity, self.memory_p, self.n_eval)]
        _write_csv(Path(path), ["j", "memory_accuracy", "parity_accuracy", "memory_p_value", "n_eval"], rows)


def memory_targets(u, j):
    """``u[i - j]`` for memory; XOR of ``u[i-1] .. u[i-j]`` for parity (undefined at j = 0)."""
    u = np.asarray(u, dtype=int)
    mem = np.full(len(u), -1)
    mem[j:] = u[:len(u) - j]
    par = np.full(len(u), -1)
    if j >= 1:
        for i in range(j, len(u)):
            par[i] = int(np.bitwise_xor.reduce(u[i - j:i]))
    return mem, par


def _two_fold_accuracy(X, y):
    """Train on one half, test on the other, and vice versa; returns (correct, total)."""
    n = len(y)
    half = n // 2
    Xb = np.hstack([X, np.ones((n, 1))])
    correct = 0
    for tr, te in ((slice(0, half), slice(half, n)), (slice(half, n), slice(0, half))):
        model = fit_linear(Xb[tr], y[tr, None].astype(float))
        correct += int(np.sum(predict_labels(model.predict(Xb[te])) == y[te]))
    return correct, n


MEMORY_LEVELS = (0.25, 0.75)  # full-scale bits push ANN gain plus feedback past the drive cap


def memory_drive(bits, levels=MEMORY_LEVELS) -> np.ndarray:
    """Encoded input value for each bit."""
    return np.asarray(levels, dtype=float)[np.asarray(bits, dtype=int)]


def memory_benchmark(config: Optional[aor_mod.AorConfig] = None, j_max: int = 5, n_intervals: int = 200,
                     seed: int = 0, washout: int = 5, trace: Optional[aor_mod.ReservoirTrace] = None,
                     inputs=None, levels=MEMORY_LEVELS) -> MemoryResult:
    """Linear-readout recovery of past binary inputs (memory) and their parity, per delay j.

    Bit b drives the ring with input value ``levels[b]``; a precomputed
    ``trace`` must have been run on ``memory_drive(inputs, levels)``.
    """
    config = config or aor_mod.AorConfig()
    if inputs is None:
        inputs = np.random.default_rng(seed).integers(0, 2, n_intervals)
    u = np.asarray(inputs, dtype=int)
    if trace is None:
        trace = aor_mod.run_aor(memory_drive(u, levels), config)
    X = aor_mod.trace_features(trace)
    js, mem_acc, par_acc, pvals, ns = [], [], [], [], []
    for j in range(j_max + 1):
        mem, par = memory_targets(u, j)
        start = max(j, washout)
        k, n = _two_fold_accuracy(X[start:], mem[start:])
        js.append(j)
        mem_acc.append(100.0 * k / n)
        pvals.append(binomtest(k, n, 0.5, alternative="greater").pvalue)
        ns.append(n)
        if j >= 1:
            kp, npar = _two_fold_accuracy(X[start:], par[start:])
            par_acc.append(100.0 * kp / npar)
        else:
            par_acc.append(float("nan"))
    return MemoryResult(np.array(js), np.array(mem_acc), np.array(par_acc), np.array(pvals), np.array(ns))


# ---------------------------------------------------------------------------
# Gradient probe through the simulated AOR
# ---------------------------------------------------------------------------

DEFAULT_PROBE_PARAMS = "output"  # hidden biases, output weights and output bias (21 parameters)


def probe_indices(which) -> np.ndarray:
    n1 = 10 * aor_mod.N_SAMPLES
    if which == "all":
        return np.arange(n1 + 21)
    if which == "output":
        return np.arange(n1, n1 + 21)
    return np.asarray(which, dtype=int)


def aor_pipeline_loss(inputs, targets, config: aor_mod.AorConfig, ann: aor_mod.AnnSpec, fixed_gain=None):
    """Loss of ANN parameters through simulation and a linear readout frozen at the base parameters.

    The readout (with a constant column) is fitted once at ``ann``; the loss is
    the mean squared error of that frozen map on the features produced by the
    perturbed network.
    """
    device = aor_mod.build_aor(config)
    y = np.asarray(targets, dtype=float)

    def features(vec):
        trace = aor_mod.run_aor(inputs, config, aor_mod.AnnSpec.from_vector(vec), device=device,
                                fixed_gain=fixed_gain)
        X = aor_mod.trace_features(trace)
        return np.hstack([X, np.ones((len(X), 1))])

    W = fit_linear(features(ann.to_vector()), y[:, None]).W

    def loss(vec):
        r = features(vec) @ W - y[:, None]
        return float(np.mean(r ** 2))

    return loss


def gradient_probe(config: Optional[aor_mod.AorConfig] = None, n_intervals: int = 10, delta: float = 1e-3,
                   which=DEFAULT_PROBE_PARAMS, fixed_gain=None, stock_path=None) -> GradientProbeReport:
    config = config or aor_mod.AorConfig()
    ds = load_stock(stock_path or dataset_path("sp500_2013.csv"))
    inputs = ds.sequences[:n_intervals, 0]
    targets = ds.targets[:n_intervals]
    ann = aor_mod.AnnSpec.from_seed(config.seed)
    loss = aor_pipeline_loss(inputs, targets, config, ann, fixed_gain)
    return ann_gradient_probe(loss, ann.to_vector(), delta, probe_indices(which))
