import numpy as np
import pytest
from scipy.optimize import brentq

from magnonrc.magnetics import (GAMMA, MU0, ConfigurationError, DrivePattern, MagState, MaterialParams,
                                NumericBlowupError, SimGrid, Simulation, build_absorber, dump_state_csv,
                                effective_field, energy, exchange_field, group_velocity, linear_frequency,
                                linear_wavenumber, llg_rhs, load_state_csv, step_rk4, thin_film_demag_field,
                                uniform_state, zeeman_field)

from conftest import random_state


def test_material_defaults_and_validation():
    p = MaterialParams()
    assert (p.Ms_base, p.A_ex, p.alpha, p.gamma) == (140e3, 3.5e-12, 2e-4, 1.760859e11)
    for bad in (dict(Ms_base=0), dict(A_ex=-1), dict(alpha=0), dict(alpha=1), dict(gamma=0)):
        with pytest.raises(ConfigurationError):
            MaterialParams(**bad)


def test_grid_rejects_bad_shapes():
    with pytest.raises(ConfigurationError):
        SimGrid(4, 4, nz=2)
    with pytest.raises(ConfigurationError):
        SimGrid(0, 4)


def test_exchange_tilted_centre_3x3():
    g = SimGrid(3, 3)
    st = uniform_state(g, (0, 0, 1))
    th = 0.1
    st.m[1, 1] = (np.sin(th), 0, np.cos(th))
    h = exchange_field(st, g)
    coef = 2 * 3.5e-12 / (140e3 * 2.5e-9 ** 2)
    diff = np.array([0, 0, 1.0]) - st.m[1, 1]
    np.testing.assert_allclose(h[1, 1], coef * 4 * diff, rtol=1e-12)
    for edge in ((0, 1), (2, 1), (1, 0), (1, 2)):
        np.testing.assert_allclose(h[edge], -coef * diff, rtol=1e-12)
    for corner in ((0, 0), (0, 2), (2, 0), (2, 2)):
        np.testing.assert_array_equal(h[corner], 0.0)


def test_exchange_uniform_is_zero():
    g = SimGrid(7, 5)
    assert np.all(exchange_field(uniform_state(g, (1, 2, 3)), g) == 0)


@pytest.mark.parametrize("p", [1, 3, 7])
def test_exchange_cosine_mode_discrete_eigenvalue(p):
    # cos(pi p (i + 1/2) / n) is an exact eigenvector of the mirror-boundary Laplacian
    n = 16
    g = SimGrid(n, 1)
    eps = 1e-3
    m = np.zeros((n, 1, 3))
    m[:, 0, 0] = eps * np.cos(np.pi * p * (np.arange(n) + 0.5) / n)
    m[..., 2] = 1.0
    h = exchange_field(MagState(m), g)
    coef = 2 * 3.5e-12 / (140e3 * 2.5e-9 ** 2)
    lam = 2 * np.cos(np.pi * p / n) - 2
    np.testing.assert_allclose(h[:, 0, 0], coef * lam * m[:, 0, 0], rtol=1e-9, atol=1e-18)


def test_exchange_ignores_void_neighbours():
    g = SimGrid(3, 1)
    g.material.ms_per_cell[1, 0] = 0
    st = uniform_state(g, (0, 0, 1))
    st.m[0, 0] = (1, 0, 0)
    h = exchange_field(st, g)
    assert np.all(h == 0)
    assert np.all(st.m[1] == 0)


def test_zeeman_and_demag():
    g = SimGrid(2, 2)
    np.testing.assert_array_equal(zeeman_field((0, 0.1, 0)), [0, 0.1, 0])
    assert zeeman_field((0, 0.1, 0), g).shape == (2, 2, 3)
    st = uniform_state(g, (0, 0, 1))
    h = thin_film_demag_field(st, g.material)
    np.testing.assert_allclose(h[..., 2], -MU0 * 140e3)
    np.testing.assert_array_equal(h[..., :2], 0)


def test_llg_rhs_is_perpendicular_to_m(small_grid, rng):
    st = MagState(random_state(small_grid, rng))
    h = effective_field(st, small_grid, (0.01, 0.02, 0.2))
    r = llg_rhs(st, h, small_grid.material)
    np.testing.assert_allclose(np.einsum("ijk,ijk->ij", r, st.m), 0, atol=1e-3)


def test_compiled_rhs_matches_reference(small_grid, rng):
    small_grid.material.ms_per_cell[4:6, 2:4] = 0.0
    small_grid.material.ms_per_cell[8, :] = 0.8 * 140e3
    small_grid.material = build_absorber(small_grid, 3)
    st = MagState(random_state(small_grid, rng))
    field = np.zeros((12, 6, 3))
    field[1:3, :, 0] = 1e-3
    sim = Simulation(small_grid, (0, 0, 0.25), drive=DrivePattern.from_fields([field]))
    h = effective_field(st, small_grid, (0, 0, 0.25), 0.7 * field)
    ref = llg_rhs(st, h, small_grid.material)
    np.testing.assert_allclose(sim.rhs(st, [0.7]), ref, rtol=1e-9, atol=1e-9 * np.abs(ref).max())


def test_larmor_period_returns_state():
    # single cell, m along x, bias along z: mz stays 0, so the demag field vanishes
    g = SimGrid(1, 1)
    g.material.alpha_per_cell[:] = 0.0
    period = 2 * np.pi / (GAMMA * 0.2)
    assert abs(1 / period - 5.605e9) < 1e6
    n = 4000
    sim = Simulation(g, (0, 0, 0.2), dt=period / n)
    st = uniform_state(g, (1, 0, 0))
    sim.advance(st, n_steps=n // 4)
    np.testing.assert_allclose(st.m[0, 0], [0, 1, 0], atol=1e-9)  # counter-clockwise about +z
    sim.advance(st, n_steps=3 * n // 4)
    np.testing.assert_allclose(st.m[0, 0], [1, 0, 0], atol=1e-6)


def test_norm_conservation_under_drive():
    g = SimGrid(40, 8)
    g.material = build_absorber(g, 5)
    field = np.zeros((40, 8, 3))
    field[10:12, :, 0] = 5e-3
    sim = Simulation(g, (0, 0, 0.25), drive=DrivePattern.from_fields([field]))
    st = uniform_state(g, (0, 0, 1))
    n = 10_000
    t = sim.stage_times(0.0, n)
    sim.advance(st, np.sin(2 * np.pi * 6.2e9 * t)[..., None])
    assert np.max(np.abs(np.linalg.norm(st.m, axis=-1) - 1)) <= 1e-6
    assert np.max(np.abs(st.m[..., 0])) > 1e-4


def test_equilibrium_fixed_point_with_voids():
    g = SimGrid(20, 8)
    g.material.ms_per_cell[:6, 3:5] = 0
    g.material = build_absorber(g, 4)
    for bias, d in (((0, 0, 0.25), (0, 0, 1)), ((0, 0.2, 0), (0, 1, 0))):
        sim = Simulation(g, bias)
        st = uniform_state(g, d)
        before = st.m.copy()
        assert sim.max_torque(st) == 0.0
        sim.advance(st, n_steps=1000)
        np.testing.assert_array_equal(st.m, before)


def test_energy_drift_without_damping():
    g = SimGrid(24, 8)
    g.material.alpha_per_cell[:] = 0.0
    x = (np.arange(24) + 0.5) / 24
    y = (np.arange(8) + 0.5) / 8
    m = np.zeros((24, 8, 3))
    m[..., 2] = 1.0
    m[..., 0] += 0.1 * np.cos(np.pi * x)[:, None] * np.cos(np.pi * y)[None, :]
    m[..., 1] += 0.1 * np.cos(2 * np.pi * x)[:, None]
    m /= np.linalg.norm(m, axis=-1, keepdims=True)
    st = MagState(m)
    bias = (0, 0, 0.25)
    e0 = energy(st, g, bias)
    Simulation(g, bias, dt=25e-15).advance(st, n_steps=4000)
    assert abs(energy(st, g, bias) - e0) / abs(e0) < 1e-3


def test_grid_scale_noise_dissipation_shrinks_with_dt(rng):
    # fixed-step RK4 damps the shortest waves slightly; the loss falls steeply with dt
    g = SimGrid(24, 8)
    g.material.alpha_per_cell[:] = 0.0
    m0 = random_state(g, rng, tilt=0.05)
    drift = []
    for dt in (25e-15, 10e-15):
        st = MagState(m0.copy())
        e0 = energy(st, g, (0, 0, 0.25))
        Simulation(g, (0, 0, 0.25), dt).advance(st, n_steps=int(round(1e-10 / dt)))
        drift.append(abs(energy(st, g, (0, 0, 0.25)) - e0) / abs(e0))
    assert drift[1] < drift[0] / 20


def test_damping_lowers_energy(rng):
    g = SimGrid(10, 4)
    st = MagState(random_state(g, rng, tilt=0.1))
    sim = Simulation(g, (0, 0, 0.25))
    e0 = energy(st, g, (0, 0, 0.25))
    sim.with_alpha(np.full((10, 4), 0.1)).advance(st, n_steps=2000)
    assert energy(st, g, (0, 0, 0.25)) < e0


def test_absorber_ramp():
    g = SimGrid(100, 3)
    mat = build_absorber(g, 40, 0.5)
    a = mat.alpha_per_cell[:, 0]
    assert a[0] == pytest.approx(0.5)
    assert a[-1] == pytest.approx(0.5)
    assert np.all(np.diff(a[:40]) < 0)
    assert np.all(a[40:60] == 2e-4)
    assert a[20] == pytest.approx(2e-4 + (0.5 - 2e-4) * 0.5 ** 2)
    assert np.all(a >= 2e-4)
    with pytest.raises(ConfigurationError):
        build_absorber(g, 50)


def test_step_rk4_callback_matches_multiplier_path(small_grid, rng):
    field = np.zeros((12, 6, 3))
    field[2:4, :, 0] = 2e-3
    st = MagState(random_state(small_grid, rng, tilt=0.05))
    f = 7e9
    new = step_rk4(st, small_grid, 25e-15, (0, 0, 0.25), lambda t: np.sin(2 * np.pi * f * t) * field)
    sim = Simulation(small_grid, (0, 0, 0.25), 25e-15, DrivePattern.from_fields([field]))
    ref = st.copy()
    sim.advance(ref, np.sin(2 * np.pi * f * sim.stage_times(0.0, 1))[..., None])
    np.testing.assert_allclose(new.m, ref.m, atol=1e-14)
    assert new.t == pytest.approx(25e-15)
    assert st.t == 0.0


def test_blowup_is_reported():
    g = SimGrid(6, 3)
    st = uniform_state(g, (1, 0, 0))
    sim = Simulation(g, (0, 0, 1e6), dt=1e-9)
    with pytest.raises(NumericBlowupError) as err:
        sim.advance(st, n_steps=50)
    assert len(err.value.cell) == 2


def test_relax_keeps_clock_and_equilibrium():
    g = SimGrid(8, 4)
    sim = Simulation(g, (0, 0.2, 0))
    st = uniform_state(g, (0, 1, 0))
    st.t = 1e-9
    out = sim.relax(st)
    assert out.t == 1e-9
    tilted = uniform_state(g, (0.2, 1, 0))
    sim.relax(tilted, duration=0.5e-9)
    assert np.max(np.abs(tilted.m[..., 0])) < 0.05


def test_state_csv_round_trip(tmp_path, small_grid, rng):
    st = MagState(random_state(small_grid, rng), 1.25e-10)
    dump_state_csv(st, tmp_path / "s.csv")
    back = load_state_csv(tmp_path / "s.csv")
    np.testing.assert_allclose(back.m, st.m, rtol=1e-11)
    assert back.t == pytest.approx(st.t)


def _omega(k, B, geometry):
    # independent restatement of the discrete dispersion
    D = 2 * 3.5e-12 / 140e3
    K2 = (2 - 2 * np.cos(k * 2.5e-9)) / 2.5e-9 ** 2
    if geometry == "out-of-plane":
        return GAMMA * (B - MU0 * 140e3 + D * K2)
    u = B + D * K2
    return GAMMA * np.sqrt(u * (u + MU0 * 140e3))


@pytest.mark.parametrize("f,B,geom,lam_nm", [(6.2e9, 0.25, "out-of-plane", 115.73),
                                              (14e9, 0.2, "in-plane", 94.77)])
def test_linear_wavenumber_oracle(f, B, geom, lam_nm):
    k_ref = brentq(lambda k: _omega(k, B, geom) - 2 * np.pi * f, 1e6, 1e9)
    k = linear_wavenumber(f, B, geometry=geom)
    assert k == pytest.approx(k_ref, rel=1e-9)
    assert 2 * np.pi / k * 1e9 == pytest.approx(lam_nm, abs=0.01)
    assert linear_frequency(k, B, geometry=geom) == pytest.approx(2 * np.pi * f, rel=1e-12)
    assert group_velocity(f, B, geometry=geom) > 0


def test_wavenumber_below_band_edge():
    with pytest.raises(ConfigurationError):
        linear_wavenumber(1e9, 0.25)
    with pytest.raises(ConfigurationError):
        linear_frequency(1e8, 0.2, geometry="sideways")
