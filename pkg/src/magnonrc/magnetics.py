"""Finite-difference thin-film Landau-Lifshitz-Gilbert solver.

The film is a single cell thick (``nz == 1``). Magnetization lives on a
``(nx, ny, 3)`` array of unit vectors; cells whose saturation magnetization is
zero are void and carry ``m == 0``. Fields are expressed in tesla (``mu0*H``).

The effective field is the sum of

* exchange, ``2*A/Ms * laplacian(m)`` with a 4-neighbour stencil and free
  (mirror) boundaries at the film edge and at void cells,
* a uniform Zeeman bias,
* a local thin-film demagnetizing field ``-mu0*Ms*m_z*z``,
* antenna drive fields injected on a sparse set of cells.

Time stepping is classical RK4 followed by renormalization. The inner loop is
compiled with numba; everything else is plain numpy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np

MU0 = 4e-7 * np.pi
GAMMA = 1.760859e11  # rad s^-1 T^-1

DEFAULT_DT = 25e-15
DEFAULT_CELL = 2.5e-9


class ConfigurationError(ValueError):
    """Raised for inconsistent geometry, material or drive settings."""


class NumericBlowupError(FloatingPointError):
    """Raised when the integrator produces non-finite magnetization."""

    def __init__(self, cell, t, interval=None):
        self.cell = tuple(int(c) for c in cell)
        self.t = t
        self.interval = interval
        where = "" if interval is None else f" (interval {interval})"
        super().__init__(f"non-finite magnetization at cell {self.cell}, t={t:.4e} s{where}")


@dataclass(frozen=True)
class MaterialParams:
    Ms_base: float = 140e3
    A_ex: float = 3.5e-12
    alpha: float = 2e-4
    gamma: float = GAMMA

    def __post_init__(self):
        if self.Ms_base <= 0 or self.A_ex <= 0 or self.gamma <= 0:
            raise ConfigurationError("Ms_base, A_ex and gamma must be positive")
        if not 0 < self.alpha < 1:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")


@dataclass
class MaterialMap:
    """Per-cell saturation magnetization and damping."""

    ms_per_cell: np.ndarray
    alpha_per_cell: np.ndarray

    @classmethod
    def uniform(cls, nx, ny, params: MaterialParams):
        return cls(np.full((nx, ny), params.Ms_base), np.full((nx, ny), params.alpha))

    @property
    def active(self):
        return self.ms_per_cell > 0

    def copy(self):
        return MaterialMap(self.ms_per_cell.copy(), self.alpha_per_cell.copy())


@dataclass
class SimGrid:
    nx: int
    ny: int
    nz: int = 1
    cell_size: float = DEFAULT_CELL
    params: MaterialParams = field(default_factory=MaterialParams)
    material: Optional[MaterialMap] = None

    def __post_init__(self):
        if self.nz != 1:
            raise ConfigurationError("only single-cell-thick films are supported (nz == 1)")
        if self.nx < 1 or self.ny < 1 or self.cell_size <= 0:
            raise ConfigurationError("grid dimensions and cell size must be positive")
        if self.material is None:
            self.material = MaterialMap.uniform(self.nx, self.ny, self.params)
        if self.material.ms_per_cell.shape != (self.nx, self.ny):
            raise ConfigurationError(
                f"material shape {self.material.ms_per_cell.shape} != grid {(self.nx, self.ny)}")
        if np.any(self.material.ms_per_cell < 0):
            raise ConfigurationError("saturation magnetization must be non-negative")

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def cell_volume(self):
        return self.cell_size ** 3


@dataclass
class MagState:
    m: np.ndarray
    t: float = 0.0

    def copy(self):
        return MagState(self.m.copy(), self.t)


def uniform_state(grid: SimGrid, direction) -> MagState:
    """Unit magnetization along ``direction`` in every active cell."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    m = np.zeros((grid.nx, grid.ny, 3))
    m[grid.material.active] = d
    return MagState(m, 0.0)


def _check_dims(state, grid):
    if state.m.shape != (grid.nx, grid.ny, 3):
        raise ConfigurationError(
            f"state shape {state.m.shape} does not match grid {(grid.nx, grid.ny, 3)}")


# ---------------------------------------------------------------------------
# Field terms (numpy reference implementations, used directly by callers that
# want a FieldGrid; the compiled stepper below inlines the same arithmetic).
# ---------------------------------------------------------------------------

def exchange_field(state: MagState, grid: SimGrid) -> np.ndarray:
    _check_dims(state, grid)
    ms = grid.material.ms_per_cell
    active = ms > 0
    m = state.m
    lap = np.zeros_like(m)
    # Missing or void neighbours contribute nothing (mirror boundary).
    for axis in (0, 1):
        for shift in (1, -1):
            nb = np.roll(m, shift, axis=axis)
            nb_active = np.roll(active, shift, axis=axis)
            valid = nb_active.copy()
            edge = [slice(None), slice(None)]
            edge[axis] = 0 if shift == 1 else -1
            valid[tuple(edge)] = False
            lap += np.where(valid[..., None], nb - m, 0.0)
    h = np.zeros_like(m)
    coef = np.zeros_like(ms)
    coef[active] = 2 * grid.params.A_ex / (ms[active] * grid.cell_size ** 2)
    h[active] = coef[active][:, None] * lap[active]
    return h


def zeeman_field(bias, grid: Optional[SimGrid] = None) -> np.ndarray:
    """Uniform bias field; returns a 3-vector, or a FieldGrid over active cells if ``grid`` is given."""
    b = np.asarray(bias, dtype=float).reshape(3)
    if grid is None:
        return b.copy()
    h = np.zeros((grid.nx, grid.ny, 3))
    h[grid.material.active] = b
    return h


def thin_film_demag_field(state: MagState, material: MaterialMap) -> np.ndarray:
    h = np.zeros_like(state.m)
    h[..., 2] = -MU0 * material.ms_per_cell * state.m[..., 2]
    return h


def effective_field(state, grid, bias, drive=None):
    h = exchange_field(state, grid) + zeeman_field(bias, grid) + thin_film_demag_field(state, grid.material)
    if drive is not None:
        h = h + drive * grid.material.active[..., None]
    return h


def llg_rhs(state: MagState, h_eff: np.ndarray, material: MaterialMap, gamma: float = GAMMA) -> np.ndarray:
    m = state.m
    alpha = material.alpha_per_cell[..., None]
    mxh = np.cross(m, h_eff)
    return -gamma / (1 + alpha ** 2) * (mxh + alpha * np.cross(m, mxh))


def energy(state: MagState, grid: SimGrid, bias) -> float:
    """Total Zeeman + exchange + demag energy in joules."""
    ms = grid.material.ms_per_cell
    m = state.m
    b = np.asarray(bias, dtype=float)
    e_zee = -ms * (m @ b)
    e_dem = 0.5 * MU0 * ms ** 2 * m[..., 2] ** 2
    e_ex = -0.5 * ms * np.einsum("ijk,ijk->ij", m, exchange_field(state, grid))
    return float(np.sum(e_zee + e_dem + e_ex) * grid.cell_volume)


# ---------------------------------------------------------------------------
# Absorbing boundaries
# ---------------------------------------------------------------------------

def build_absorber(grid: SimGrid, strip_cells: int, alpha_max: float = 0.5) -> MaterialMap:
    """Quadratic damping ramps of ``strip_cells`` cells at both x-ends."""
    if strip_cells < 0 or 2 * strip_cells >= grid.nx:
        raise ConfigurationError(f"absorber strip of {strip_cells} cells does not fit nx={grid.nx}")
    mat = grid.material.copy()
    base = grid.params.alpha
    alpha = np.maximum(mat.alpha_per_cell, base)
    if strip_cells:
        depth = (strip_cells - np.arange(strip_cells)) / strip_cells
        ramp = base + (alpha_max - base) * depth ** 2
        alpha[:strip_cells] = np.maximum(alpha[:strip_cells], ramp[:, None])
        alpha[-strip_cells:] = np.maximum(alpha[-strip_cells:], ramp[::-1, None])
    mat.alpha_per_cell = alpha
    return mat


# ---------------------------------------------------------------------------
# Compiled RK4 stepper
# ---------------------------------------------------------------------------

_FASTMATH = {"contract", "arcp", "reassoc", "nsz"}  # keeps NaN/Inf semantics for the blowup check


@numba.njit(cache=True, fastmath=_FASTMATH, inline="always")
def _torque(mx, my, mz, hx, hy, hz, a, gamma):
    px = my * hz - mz * hy
    py = mz * hx - mx * hz
    pz = mx * hy - my * hx
    pre = -gamma / (1.0 + a * a)
    return (pre * (px + a * (my * pz - mz * py)),
            pre * (py + a * (mz * px - mx * pz)),
            pre * (pz + a * (mx * py - my * px)))


@numba.njit(cache=True, fastmath=_FASTMATH)
def _rhs(m, ms, alpha, w, ex_coef, bias, mu0, gamma, d_idx, d_vec, d_src, s, out):
    nx, ny = ms.shape
    for i in range(nx):
        im = i - 1 if i > 0 else 0
        ip = i + 1 if i < nx - 1 else nx - 1
        for j in range(ny):
            jm = j - 1 if j > 0 else 0
            jp = j + 1 if j < ny - 1 else ny - 1
            mx = m[i, j, 0]
            my = m[i, j, 1]
            mz = m[i, j, 2]
            w0 = w[i, j, 0]
            w1 = w[i, j, 1]
            w2 = w[i, j, 2]
            w3 = w[i, j, 3]
            c = ex_coef[i, j]
            hx = c * (w0 * (m[im, j, 0] - mx) + w1 * (m[ip, j, 0] - mx)
                      + w2 * (m[i, jm, 0] - mx) + w3 * (m[i, jp, 0] - mx)) + bias[0]
            hy = c * (w0 * (m[im, j, 1] - my) + w1 * (m[ip, j, 1] - my)
                      + w2 * (m[i, jm, 1] - my) + w3 * (m[i, jp, 1] - my)) + bias[1]
            hz = c * (w0 * (m[im, j, 2] - mz) + w1 * (m[ip, j, 2] - mz)
                      + w2 * (m[i, jm, 2] - mz) + w3 * (m[i, jp, 2] - mz)) + bias[2] - mu0 * ms[i, j] * mz
            out[i, j, 0], out[i, j, 1], out[i, j, 2] = _torque(mx, my, mz, hx, hy, hz, alpha[i, j], gamma)
    # The torque is linear in h, so drive cells get their contribution added afterwards.
    for q in range(d_idx.shape[0]):
        i = d_idx[q, 0]
        j = d_idx[q, 1]
        v = s[d_src[q]]
        tx, ty, tz = _torque(m[i, j, 0], m[i, j, 1], m[i, j, 2],
                             v * d_vec[q, 0], v * d_vec[q, 1], v * d_vec[q, 2], alpha[i, j], gamma)
        out[i, j, 0] += tx
        out[i, j, 1] += ty
        out[i, j, 2] += tz


@numba.njit(cache=True, fastmath=_FASTMATH)
def _advance(m, ms, alpha, w, ex_coef, bias, mu0, gamma, d_idx, d_vec, d_src, mult, dt):
    """Advance ``m`` in place by ``mult.shape[0]`` RK4 steps.

    ``mult[n, k, :]`` holds the drive multipliers for RK stage ``k`` of step
    ``n``. Returns (-1, -1, -1) or (step, i, j) of the first non-finite cell.
    """
    nx, ny = ms.shape
    k1 = np.empty_like(m)
    k2 = np.empty_like(m)
    k3 = np.empty_like(m)
    k4 = np.empty_like(m)
    tmp = np.empty_like(m)
    mf = m.reshape(-1)
    tf = tmp.reshape(-1)
    f1 = k1.reshape(-1)
    f2 = k2.reshape(-1)
    f3 = k3.reshape(-1)
    f4 = k4.reshape(-1)
    size = mf.shape[0]
    h = dt / 6.0
    for n in range(mult.shape[0]):
        _rhs(m, ms, alpha, w, ex_coef, bias, mu0, gamma, d_idx, d_vec, d_src, mult[n, 0], k1)
        for p in range(size):
            tf[p] = mf[p] + 0.5 * dt * f1[p]
        _rhs(tmp, ms, alpha, w, ex_coef, bias, mu0, gamma, d_idx, d_vec, d_src, mult[n, 1], k2)
        for p in range(size):
            tf[p] = mf[p] + 0.5 * dt * f2[p]
        _rhs(tmp, ms, alpha, w, ex_coef, bias, mu0, gamma, d_idx, d_vec, d_src, mult[n, 2], k3)
        for p in range(size):
            tf[p] = mf[p] + dt * f3[p]
        _rhs(tmp, ms, alpha, w, ex_coef, bias, mu0, gamma, d_idx, d_vec, d_src, mult[n, 3], k4)
        for p in range(size):
            mf[p] = mf[p] + h * (f1[p] + 2.0 * f2[p] + 2.0 * f3[p] + f4[p])
        for i in range(nx):
            for j in range(ny):
                if ms[i, j] <= 0.0:
                    continue
                x = m[i, j, 0]
                y = m[i, j, 1]
                z = m[i, j, 2]
                norm = np.sqrt(x * x + y * y + z * z)
                if not np.isfinite(norm) or norm == 0.0:
                    return n, i, j
                m[i, j, 0] = x / norm
                m[i, j, 1] = y / norm
                m[i, j, 2] = z / norm
    return -1, -1, -1


@dataclass
class DrivePattern:
    """Sparse antenna field layout: ``vec[q]`` tesla at ``idx[q]`` scaled by source ``src[q]``."""

    idx: np.ndarray
    vec: np.ndarray
    src: np.ndarray
    n_sources: int

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 2), np.int64), np.zeros((0, 3)), np.zeros(0, np.int64), 0)

    @classmethod
    def from_fields(cls, fields):
        """One source per dense FieldGrid in ``fields``."""
        idx, vec, src = [], [], []
        for k, f in enumerate(fields):
            nz = np.argwhere(np.any(f != 0, axis=-1))
            idx.append(nz)
            vec.append(f[nz[:, 0], nz[:, 1]])
            src.append(np.full(len(nz), k))
        if not idx:
            return cls.empty()
        return cls(np.concatenate(idx).astype(np.int64), np.concatenate(vec),
                   np.concatenate(src).astype(np.int64), len(fields))


class Simulation:
    """A film (grid + material + bias) with precomputed stencil data.

    The simulation itself is stateless; it advances MagState objects handed to it.
    """

    def __init__(self, grid: SimGrid, bias, dt: float = DEFAULT_DT, drive: Optional[DrivePattern] = None):
        if dt <= 0:
            raise ConfigurationError("dt must be positive")
        self.grid = grid
        self.bias = np.asarray(bias, dtype=float).reshape(3)
        self.dt = float(dt)
        self.drive = drive if drive is not None else DrivePattern.empty()
        self._prepare()

    def _prepare(self):
        g = self.grid
        ms = np.ascontiguousarray(g.material.ms_per_cell, dtype=float)
        active = ms > 0
        nbr = np.zeros((g.nx, g.ny, 4), dtype=bool)
        nbr[1:, :, 0] = active[:-1, :]
        nbr[:-1, :, 1] = active[1:, :]
        nbr[:, 1:, 2] = active[:, :-1]
        nbr[:, :-1, 3] = active[:, 1:]
        nbr &= active[..., None]
        nbr = nbr.astype(float)
        ex = np.zeros_like(ms)
        ex[active] = 2 * g.params.A_ex / (ms[active] * g.cell_size ** 2)
        self._ms = ms
        self._alpha = np.ascontiguousarray(g.material.alpha_per_cell, dtype=float)
        self._nbr = nbr
        self._ex = ex

    def with_alpha(self, alpha_map):
        sim = Simulation.__new__(Simulation)
        sim.__dict__.update(self.__dict__)
        sim._alpha = np.ascontiguousarray(alpha_map, dtype=float)
        return sim

    def rhs(self, state: MagState, s=None) -> np.ndarray:
        s = np.zeros(max(self.drive.n_sources, 1)) if s is None else np.asarray(s, dtype=float)
        out = np.empty_like(state.m)
        _rhs(np.ascontiguousarray(state.m), self._ms, self._alpha, self._nbr, self._ex, self.bias,
             MU0, self.grid.params.gamma, self.drive.idx, self.drive.vec, self.drive.src, s, out)
        return out

    def advance(self, state: MagState, mult: Optional[np.ndarray] = None, n_steps: Optional[int] = None) -> MagState:
        """Advance in place. ``mult`` has shape (n_steps, 4, n_sources)."""
        if mult is None:
            mult = np.zeros((n_steps, 4, max(self.drive.n_sources, 1)))
        mult = np.ascontiguousarray(mult, dtype=float)
        if mult.ndim != 3 or mult.shape[1] != 4:
            raise ConfigurationError("drive multipliers must have shape (n_steps, 4, n_sources)")
        if self.drive.n_sources and mult.shape[2] < self.drive.n_sources:
            raise ConfigurationError("too few drive multipliers for the drive pattern")
        if not state.m.flags.c_contiguous:
            state.m = np.ascontiguousarray(state.m)
        n, i, j = _advance(state.m, self._ms, self._alpha, self._nbr, self._ex, self.bias, MU0,
                           self.grid.params.gamma, self.drive.idx, self.drive.vec, self.drive.src,
                           mult, self.dt)
        if n >= 0:
            state.t += n * self.dt
            raise NumericBlowupError((i, j), state.t)
        state.t += mult.shape[0] * self.dt
        return state

    def stage_times(self, t0: float, n_steps: int) -> np.ndarray:
        """Times at which the RK4 stages of the next ``n_steps`` steps sample the drive."""
        base = t0 + self.dt * np.arange(n_steps)
        return base[:, None] + self.dt * np.array([0.0, 0.5, 0.5, 1.0])[None, :]

    def max_torque(self, state: MagState) -> float:
        return float(np.max(np.linalg.norm(self.rhs(state), axis=-1)))

    def relax(self, state: MagState, duration: float = 1e-9, alpha: float = 0.1, tol: float = 1e-9) -> MagState:
        """Relax with damping raised to ``alpha``; the clock is left unchanged.

        Returns immediately if the largest torque is already below
        ``tol * gamma * |bias|`` (the uniform start along the bias usually is).
        """
        if self.max_torque(state) < tol * self.grid.params.gamma * max(np.linalg.norm(self.bias), 1e-3):
            return state
        damped = self.with_alpha(np.where(self.grid.material.active, np.maximum(self._alpha, alpha), self._alpha))
        n = int(round(duration / self.dt))
        chunk = 2000
        t0 = state.t
        while n > 0:
            k = min(chunk, n)
            damped.advance(state, n_steps=k)
            n -= k
        state.t = t0
        return state


def step_rk4(state: MagState, grid: SimGrid, dt: float, bias=(0.0, 0.0, 0.0),
             drive: Optional[Callable[[float], np.ndarray]] = None) -> MagState:
    """One RK4 step of ``state`` (returns a new state).

    ``drive`` maps a time to an additional FieldGrid (tesla), evaluated at the
    RK stage times.
    """
    _check_dims(state, grid)
    if drive is None:
        sim = Simulation(grid, bias, dt)
        mult = np.zeros((1, 4, 1))
    else:
        f0, f1, f2 = drive(state.t), drive(state.t + dt / 2), drive(state.t + dt)
        sim = Simulation(grid, bias, dt, DrivePattern.from_fields([f0, f1, f2]))
        mult = np.array([[[1, 0, 0], [0, 1, 0], [0, 1, 0], [0, 0, 1]]], dtype=float)
    new = state.copy()
    return sim.advance(new, mult)


def linear_frequency(k: float, bias: float, params: MaterialParams = MaterialParams(),
                     cell: float = DEFAULT_CELL, geometry: str = "out-of-plane") -> float:
    """Angular frequency of a plane wave of wavevector ``k`` in the discretized film model.

    ``geometry`` is ``"out-of-plane"`` (bias along z) or ``"in-plane"`` (bias in
    the film plane, perpendicular to k; the y-uniform mode of a strip).
    """
    d = 2 * params.A_ex / params.Ms_base
    kk = 2 * (1 - np.cos(k * cell)) / cell ** 2
    m_s = MU0 * params.Ms_base
    if geometry == "out-of-plane":
        return params.gamma * (bias - m_s + d * kk)
    if geometry == "in-plane":
        u = bias + d * kk
        return params.gamma * np.sqrt(u * (u + m_s))
    raise ConfigurationError(f"unknown geometry {geometry!r}")


def linear_wavenumber(freq: float, bias: float, params: MaterialParams = MaterialParams(),
                      cell: float = DEFAULT_CELL, geometry: str = "out-of-plane") -> float:
    """Inverse of :func:`linear_frequency` for a drive at ``freq`` Hz."""
    w = 2 * np.pi * freq / params.gamma
    d = 2 * params.A_ex / params.Ms_base
    m_s = MU0 * params.Ms_base
    if geometry == "out-of-plane":
        dk = w - (bias - m_s)
    elif geometry == "in-plane":
        u = (-m_s + np.sqrt(m_s ** 2 + 4 * w ** 2)) / 2
        dk = u - bias
    else:
        raise ConfigurationError(f"unknown geometry {geometry!r}")
    if dk <= 0:
        raise ConfigurationError(f"{freq:.3e} Hz lies below the band edge")
    kk = dk / d
    c = 1 - kk * cell ** 2 / 2
    if c < -1:
        raise ConfigurationError(f"{freq:.3e} Hz lies above the discrete band")
    return float(np.arccos(c) / cell)


def group_velocity(freq, bias, params=MaterialParams(), cell=DEFAULT_CELL, geometry="out-of-plane"):
    k = linear_wavenumber(freq, bias, params, cell, geometry)
    dk = k * 1e-6
    return float((linear_frequency(k + dk, bias, params, cell, geometry)
                  - linear_frequency(k - dk, bias, params, cell, geometry)) / (2 * dk))


def dump_state_csv(state: MagState, path, grid: Optional[SimGrid] = None):
    """Write per-cell m as CSV, rows x-major then y."""
    nx, ny, _ = state.m.shape
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    rows = np.column_stack([ii.ravel(), jj.ravel(), state.m.reshape(-1, 3)])
    header = f"t={state.t:.9e} s; rows x-major then y\nx,y,mx,my,mz"
    np.savetxt(path, rows, delimiter=",", header=header, fmt=["%d", "%d", "%.12e", "%.12e", "%.12e"])


def load_state_csv(path) -> MagState:
    with open(path) as fh:
        first = fh.readline()
    t = float(first.split("t=")[1].split()[0])
    rows = np.loadtxt(path, delimiter=",", comments="#")
    nx, ny = int(rows[:, 0].max()) + 1, int(rows[:, 1].max()) + 1
    return MagState(rows[:, 2:].reshape(nx, ny, 3).copy(), t)
