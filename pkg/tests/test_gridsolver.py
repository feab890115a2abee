import numpy as np
import pytest
from hypothesis import given, strategies as st

from backaction import gridsolver
from backaction.gridsolver import Absorber, AbsorberProfile, Grid1D, ResolutionError
from backaction.propagators import PhysicalScales

GRID = Grid1D()          # dz = 0.005
SMALL = Grid1D(-15.0, 15.0, 3001)   # dz = 0.01


def test_grid_spacing():
    assert GRID.dz == pytest.approx(0.005)
    assert GRID.z[0] == -30.0 and GRID.z[-1] == 30.0
    assert GRID.node(0.0) == 6000
    with pytest.raises(ResolutionError):
        GRID.node(0.0012)
    with pytest.raises(ResolutionError):
        GRID.node(-30.0)
    with pytest.raises(ValueError):
        Grid1D(0.0, 1.0, 2)


def test_init_lorentzian():
    s = gridsolver.init_lorentzian(GRID, 2.0)
    assert abs(s.norm() - 1.0) < 1e-14
    assert abs(s.psi[GRID.node(0.0)] - np.sqrt(2.0)) < 5e-3 * np.sqrt(2.0)
    assert np.max(np.abs(s.psi - s.psi[::-1])) < 1e-13  # linspace rounding
    assert s.time == 0.0 and s.absorbed.size == 0


def test_init_rejects_unresolved_grids():
    with pytest.raises(ResolutionError):
        gridsolver.init_lorentzian(Grid1D(-30, 30, 1201), 2.0)
    with pytest.raises(ResolutionError):
        gridsolver.init_lorentzian(Grid1D(-4, 4, 1601), 2.0)


def test_absorber_validation():
    with pytest.raises(ValueError):
        Absorber(0.0, -1.0)
    with pytest.raises(ValueError):
        AbsorberProfile(convention="other")
    with pytest.raises(ValueError):
        AbsorberProfile(boundary_fraction=1.0)


@pytest.mark.parametrize("convention,factor", [("paper_literal", 1.0), ("flux_consistent", 0.5)])
def test_detector_windows_are_normalised(convention, factor):
    prof = AbsorberProfile((Absorber(0.0, 1.5), Absorber(1.0, 2.0, width=6 * SMALL.dz)), convention)
    k_point, k_wide = prof.detector_rates(SMALL)
    assert np.sum(k_point) * SMALL.dz == pytest.approx(1.5 * factor)
    assert np.sum(k_wide) * SMALL.dz == pytest.approx(2.0 * factor)
    assert np.count_nonzero(k_point) == 1 and np.count_nonzero(k_wide) == 7


def test_narrow_window_is_a_resolution_error():
    prof = AbsorberProfile((Absorber(0.0, 1.0, width=1.5 * SMALL.dz),))
    with pytest.raises(ResolutionError):
        prof.detector_rates(SMALL)


def test_boundary_ramp_shape():
    k = AbsorberProfile(boundary_fraction=0.4, boundary_strength=100.0).boundary_rate(SMALL)
    inner = np.abs(SMALL.z) <= 0.6 * 15.0
    assert np.all(k[inner] == 0)
    assert k[0] == pytest.approx(100.0) and k[-1] == pytest.approx(100.0)
    assert np.all(np.diff(k[SMALL.z > 9.0]) >= 0)


# -- stepping ------------------------------------------------------------------------

def _lossless():
    return AbsorberProfile((Absorber(0.0, 0.0),), boundary_strength=0.0)


def test_unitary_without_absorption():
    s = gridsolver.init_lorentzian(SMALL, 2.0, 1)
    solver = gridsolver.CrankNicolson(SMALL, _lossless())
    n0 = s.norm()
    for _ in range(200):
        solver.step(s, 2.5e-5)
        assert abs(s.norm() - n0) < 1e-12


def test_step_cn_returns_new_state():
    s = gridsolver.init_lorentzian(SMALL, 2.0, 1)
    prof = AbsorberProfile((Absorber(0.0, 1.0),))
    out = gridsolver.step_cn(s, prof, 2.5e-5)
    assert out is not s and s.time == 0.0 and out.time == pytest.approx(2.5e-5)
    assert s.absorbed[0] == 0.0 < out.absorbed[0]
    with pytest.raises(ValueError):
        gridsolver.step_cn(s, prof, 1e-3)
    gridsolver.step_cn(s, prof, 1e-3, strict=False)
    with pytest.raises(ValueError):
        gridsolver.step_cn(s, AbsorberProfile(), 2.5e-5)


def test_step_cn_physical_units():
    sc = PhysicalScales(hbar=2.0, mass=1.0)
    s = gridsolver.init_lorentzian(SMALL, 2.0, 1)
    prof = AbsorberProfile((Absorber(0.0, 1.0),))
    a = gridsolver.step_cn(s, prof, 1e-5, sc)
    b = gridsolver.step_cn(s, AbsorberProfile((Absorber(0.0, 0.5),), boundary_strength=50.0), 2e-5)
    assert np.allclose(a.psi, b.psi, rtol=0, atol=1e-14)


def test_norm_decrement_matches_absorption_rate():
    # trapezoid in time of 2 int kappa |psi|^2 dz over one step
    s = gridsolver.init_lorentzian(SMALL, 2.0, 1)
    prof = AbsorberProfile((Absorber(0.0, 1.0),), boundary_strength=0.0)
    solver = gridsolver.CrankNicolson(SMALL, prof)
    k = prof.detector_rates(SMALL)[0]
    dt = 2.5e-5
    for _ in range(50):
        solver.step(s, dt)
    for _ in range(20):
        before, rate0 = s.norm(), 2 * np.sum(k * np.abs(s.psi) ** 2) * SMALL.dz
        solver.step(s, dt)
        rate1 = 2 * np.sum(k * np.abs(s.psi) ** 2) * SMALL.dz
        assert abs((before - s.norm()) - 0.5 * dt * (rate0 + rate1)) < 1e-8


def test_bookkeeping_every_step():
    s = gridsolver.init_lorentzian(SMALL, 2.0, 2)
    prof = AbsorberProfile((Absorber(-0.4, 1.0), Absorber(0.4, 3.0)))
    solver = gridsolver.CrankNicolson(SMALL, prof)
    for dt, end in gridsolver.graded_schedule(SMALL.dz, 1e-3, 12.0):
        while s.time < end - 1e-12:
            solver.step(s, dt)
            s.time += dt
            assert s.bookkeeping_error() < 1e-6
    assert s.boundary_loss > 0


def test_gaussian_dispersion():
    grid = Grid1D(-30.0, 30.0, 1201)
    sigma0, dt = 1.0, 0.25 * grid.dz ** 2
    z = grid.z
    psi = np.exp(-z * z / (4 * sigma0 ** 2)).astype(complex)
    s = gridsolver.GridState(grid, psi / np.sqrt(np.sum(np.abs(psi) ** 2) * grid.dz), 0.0, np.zeros(0))
    solver = gridsolver.CrankNicolson(grid, AbsorberProfile(boundary_strength=0.0))
    for _ in range(1000):
        solver.step(s, dt)
    t = 1000 * dt
    rho = np.abs(s.psi) ** 2 * grid.dz
    var = np.sum(rho * z * z) - np.sum(rho * z) ** 2
    expect = sigma0 ** 2 * (1 + (t / (2 * sigma0 ** 2)) ** 2)
    assert abs(var - expect) < 1e-4 * expect


def test_graded_schedule_properties():
    stages = gridsolver.graded_schedule(0.005, 2.5e-4, 5.0)
    dts = [d for d, _ in stages]
    ends = [e for _, e in stages]
    assert dts[0] <= 0.25 * 0.005 ** 2 and dts[-1] == 2.5e-4
    assert all(b == 2 * a for a, b in zip(dts, dts[1:]))
    assert ends[-1] == 5.0 and all(np.diff(ends) > 0)
    assert all(abs(e / 2.5e-4 - round(e / 2.5e-4)) < 1e-9 for e in ends)
    assert gridsolver.graded_schedule(1.0, 1e-3, 2.0) == [(1e-3, 2.0)]
    with pytest.raises(ValueError):
        gridsolver.graded_schedule(0.01, 0.0, 1.0)


@given(dz=st.floats(0.002, 0.05), dt=st.floats(1e-5, 1e-2), t=st.floats(0.01, 10.0))
def test_graded_schedule_covers_interval(dz, dt, t):
    stages = gridsolver.graded_schedule(dz, dt, t)
    assert stages[-1][1] == t
    prev = 0.0
    for step, end in stages:
        assert step <= dt and end > prev
        prev = end


# -- detection runs --------------------------------------------------------------------

def test_run_detection_validation():
    s = gridsolver.init_lorentzian(SMALL, 2.0, 1)
    with pytest.raises(ValueError):
        gridsolver.run_detection(SMALL, AbsorberProfile(), s, 1.0)
    with pytest.raises(ValueError):
        gridsolver.run_detection(GRID, AbsorberProfile((Absorber(0.0, 1.0),)), s, 1.0)


def test_run_outputs(fine_run):
    assert fine_run.times[0] == 0.0 and fine_run.times[-1] == pytest.approx(5.0)
    assert fine_run.captures.shape == (1, fine_run.times.size)
    assert np.all(np.diff(fine_run.captures[0]) >= 0)
    assert fine_run.traces[0].run_id == fine_run.run_id
    assert fine_run.final_state.bookkeeping_error() < 1e-6
    assert fine_run.capture_fractions[0] == fine_run.captures[0, -1]


def test_capture_matches_analytic(fine_run):
    from backaction.validation import capture_error
    assert capture_error(fine_run, 2.0, 1.0) < 1e-3


def test_sample_every_thins_output():
    s = gridsolver.init_lorentzian(SMALL, 2.0, 1)
    prof = AbsorberProfile((Absorber(0.0, 1.0),))
    full = gridsolver.run_detection(SMALL, prof, s, 0.5, 1e-3)
    thin = gridsolver.run_detection(SMALL, prof, s, 0.5, 1e-3, sample_every=10)
    assert thin.times.size < full.times.size / 5
    assert thin.times[-1] == full.times[-1]
    assert thin.captures[0, -1] == full.captures[0, -1]


@pytest.fixture(scope="module")
def mirror_runs():
    grid = Grid1D(-30.0, 30.0, 6001)
    both = AbsorberProfile((Absorber(-0.2, 1.0), Absorber(0.2, 1.0)), "flux_consistent")
    alone = AbsorberProfile((Absorber(0.2, 1.0),), "flux_consistent")
    runs = [gridsolver.run_detection(grid, p, gridsolver.init_lorentzian(grid, 2.0, len(p.absorbers)), 5.0, 5e-4)
            for p in (both, alone)]
    return runs


def test_mirror_symmetry(mirror_runs):
    both, _ = mirror_runs
    assert np.max(np.abs(both.captures[0] - both.captures[1])) < 1e-10
    assert np.max(np.abs(both.traces[0].values - both.traces[1].values)) < 1e-10


def test_shadowing(mirror_runs):
    both, alone = mirror_runs
    assert np.all(both.capture_fractions <= alone.capture_fractions[0])
    assert np.sum(both.capture_fractions) <= 1.0


def test_strong_detector_captures_less():
    grid = Grid1D(-30.0, 30.0, 6001)
    caps = []
    for eps in (1.0, 100.0):
        prof = AbsorberProfile((Absorber(0.0, eps),))
        run = gridsolver.run_detection(grid, prof, gridsolver.init_lorentzian(grid, 2.0, 1), 2.0, 5e-4)
        caps.append(run.capture_fractions[0])
    assert caps[1] < caps[0]


def test_boundary_reflection_is_small():
    # same dz, doubled domain: differences inside the ramp-free region are
    # reflections; measured against the peak density Gamma over the run length
    prof = AbsorberProfile((Absorber(0.0, 1.0),))
    out = []
    for g in (Grid1D(-30.0, 30.0, 3001), Grid1D(-60.0, 60.0, 6001)):
        run = gridsolver.run_detection(g, prof, gridsolver.init_lorentzian(g, 2.0, 1), 5.0, 1e-3, sample_every=100)
        keep = np.abs(g.z) <= 18.0
        out.append(np.abs(run.final_state.psi[keep]) ** 2)
    assert np.max(np.abs(out[0] - out[1])) < 1e-4 * 2.0


# -- checkpoints ---------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    s = gridsolver.init_lorentzian(SMALL, 2.0, 1)
    s = gridsolver.step_cn(s, AbsorberProfile((Absorber(0.0, 1.0),)), 2.5e-5)
    path = tmp_path / "state.chk"
    gridsolver.dump_checkpoint(s, path)
    back = gridsolver.load_checkpoint(path)
    assert back.grid == s.grid and back.time == s.time
    assert np.array_equal(back.psi, s.psi)
    assert np.array_equal(back.absorbed, s.absorbed) and back.boundary_loss == s.boundary_loss
    raw = path.read_bytes()
    assert raw.startswith(b"BACKACTION-GRIDSTATE 1\n")
    assert raw[-16:] == np.asarray(s.psi[-1:], dtype="<c16").tobytes()


def test_checkpoint_rejects_bad_files(tmp_path):
    s = gridsolver.init_lorentzian(SMALL, 2.0, 1)
    path = tmp_path / "state.chk"
    gridsolver.dump_checkpoint(s, path)
    raw = path.read_bytes()
    (tmp_path / "v2.chk").write_bytes(raw.replace(b"GRIDSTATE 1", b"GRIDSTATE 2", 1))
    (tmp_path / "short.chk").write_bytes(raw[:-16])
    (tmp_path / "junk.chk").write_bytes(b"hello\n")
    for name in ("v2.chk", "short.chk", "junk.chk"):
        with pytest.raises(ValueError):
            gridsolver.load_checkpoint(tmp_path / name)
