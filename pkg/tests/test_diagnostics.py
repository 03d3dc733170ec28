import math
import types

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from phasefield_confluence.diagnostics import (
    SpuriousCrossingWarning,
    analytic_jump,
    detect_dip,
    detect_dip_samples,
    estimate_velocity,
    find_zero_crossings,
    fit_window,
    half_width,
    jump_from_track,
    track_boundaries,
)
from phasefield_confluence.model import RunConfig, build_u0
from phasefield_confluence.numerics import RadialMesh, build_mesh
from phasefield_confluence.solver import RunRecord

MESH = build_mesh(1.0, 2.0, 1e-3)


def u0_direct(r, r1, r2, eps):
    return 1.0 + math.tanh((r1 - r) / eps) + math.tanh((r - r2) / eps)


def bisect_root(f, lo, hi):
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_no_crossings_in_pure_phase():
    assert find_zero_crossings(np.ones(MESH.n_nodes), MESH) == []


def test_crossings_of_initial_profile():
    u = build_u0(MESH, 1.25, 1.75, 0.01)
    roots = find_zero_crossings(u, MESH)
    f = lambda r: u0_direct(r, 1.25, 1.75, 0.01)
    expected = [bisect_root(f, 1.2, 1.3), bisect_root(f, 1.7, 1.8)]
    assert len(roots) == 2
    np.testing.assert_allclose(roots, expected, atol=1e-6)


def test_two_node_midpoint():
    mesh = RadialMesh(1.0, 2.0, 2)
    assert find_zero_crossings(np.array([-1.0, 1.0]), mesh) == [1.5]


def test_exact_node_zero_reported_once():
    mesh = build_mesh(1.0, 2.0, 0.25)
    assert find_zero_crossings(np.array([1.0, 0.5, 0.0, -0.5, -1.0]), mesh) == [1.5]


@settings(max_examples=60, deadline=None)
@given(r1=st.floats(1.05, 1.6), width=st.floats(0.05, 0.5), eps=st.floats(0.002, 0.03),
       scale=st.floats(1e-3, 1e3))
def test_crossing_properties(r1, width, eps, scale):
    r2 = r1 + width
    assume(r2 < 1.95 and width > 6 * eps)
    u = build_u0(MESH, r1, r2, eps)
    roots = find_zero_crossings(u, MESH)
    assert len(roots) == 2
    f = lambda r: u0_direct(r, r1, r2, eps)
    mid = 0.5 * (r1 + r2)
    truth = [bisect_root(f, 1.0, mid), bisect_root(f, mid, 2.0)]
    assert np.all(np.abs(np.array(roots) - truth) <= MESH.h)
    assert find_zero_crossings(scale * u, MESH) == roots


def _synthetic_record(eps=0.005, dt=1e-3, t_end=0.25):
    times = np.arange(0.0, t_end + dt / 2, dt)
    r = MESH.nodes
    crossings = []
    for t in times:
        u = np.tanh((r - (1.3 + t)) / eps) + np.tanh(((1.7 - t) - r) / eps) - 1
        crossings.append(np.array(find_zero_crossings(u, MESH)))
    return types.SimpleNamespace(times=times, crossings=crossings)


def test_track_synthetic_fronts():
    rec = _synthetic_record()
    track = track_boundaries(rec)
    early = track.times < 0.18
    np.testing.assert_allclose(track.r1[early], 1.3 + track.times[early], atol=1e-6)
    np.testing.assert_allclose(track.r2[early], 1.7 - track.times[early], atol=1e-6)
    assert 0.19 <= track.confluence_time <= 0.2
    assert track.confluence_radius == pytest.approx(1.5, abs=1e-6)
    after = track.times >= track.confluence_time
    assert np.all(np.isnan(track.r1[after])) and np.all(np.isnan(track.r2[after]))
    ok = ~np.isnan(track.r1)
    assert np.all((1.0 < track.r1[ok]) & (track.r1[ok] < track.r2[ok]) & (track.r2[ok] < 2.0))


def test_track_static_run():
    cfg = RunConfig(t_end=1e-4)
    from conftest import cached_run

    track = track_boundaries(cached_run(cfg))
    np.testing.assert_allclose(track.r1, 1.25, atol=1e-3)
    np.testing.assert_allclose(track.r2, 1.75, atol=1e-3)
    assert track.confluence_time is None


def test_track_keeps_outermost_pair():
    rec = types.SimpleNamespace(times=np.array([0.0, 1.0]),
                                crossings=[np.array([1.2, 1.4, 1.5, 1.8]), np.array([1.3, 1.7])])
    with pytest.warns(SpuriousCrossingWarning):
        track = track_boundaries(rec)
    assert (track.r1[0], track.r2[0]) == (1.2, 1.8)


def test_velocity_of_exact_line():
    t = np.linspace(0, 0.1, 101)
    fit = estimate_velocity(t, 1.25 + 1.4 * t, (0.02, 0.07))
    assert fit.velocity == pytest.approx(1.4, abs=1e-12)
    assert fit.rms < 1e-14
    assert fit.n_samples == 51


def test_velocity_with_dither():
    rng = np.random.default_rng(7)
    t = np.linspace(0, 0.1, 10001)
    y = 1.75 - 3.2 * t + rng.uniform(-1e-6, 1e-6, t.size)
    fit = estimate_velocity(t, y, (0.0, 0.1))
    assert abs(fit.velocity + 3.2) < 1e-4


def test_velocity_needs_three_samples():
    with pytest.raises(ValueError):
        estimate_velocity([0.0, 1.0, 2.0], [0.0, 1.0, 2.0], (0.5, 2.0))


@settings(max_examples=100, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-10, 10), lo=st.floats(0, 0.8), span=st.floats(0.05, 0.2))
def test_velocity_affine_property(a, b, lo, span):
    t = np.linspace(0, 1, 1001)
    fit = estimate_velocity(t, a + b * t, (lo, lo + span))
    assert abs(fit.velocity - b) <= 1e-12 * (1 + abs(b)) * 1e2


def test_analytic_jump_examples():
    assert analytic_jump(1.4, 0.0, 1.42, 0.0) == 0.0
    assert analytic_jump(1.403, 0.8, 1.438, -3.2) == pytest.approx(-2.862, abs=1e-12)
    assert abs(analytic_jump(1.405, 0.6, 1.422, -3.2)) == pytest.approx(2.6967, abs=1e-12)
    with pytest.raises(ValueError):
        analytic_jump(0.0, 1.0, 1.0, 1.0)


@given(st.floats(0.1, 3), st.floats(-5, 5), st.floats(0.1, 3), st.floats(-5, 5))
def test_analytic_jump_antisymmetric(r1, v1, r2, v2):
    assert analytic_jump(r1, v1, r2, v2) == -analytic_jump(r2, v2, r1, v1)


def _gaussian_dip(shift=0.0):
    r = np.round(np.arange(1.35, 1.5 + 1e-9, 1e-3), 12)
    t = np.arange(0.0, 0.2 + 1e-12, 1e-4)
    T, R = np.meshgrid(t, r, indexing="ij")
    sigma = 1.0 - np.exp(-((R - 1.42) ** 2 + (T - 0.1) ** 2) / 1e-4) + shift
    return r, t, sigma


def test_gaussian_dip_detected():
    r, t, sigma = _gaussian_dip()
    rep = detect_dip_samples(r, t, sigma)
    assert rep.r_min == pytest.approx(1.42, abs=1e-9)
    assert rep.t_min == pytest.approx(0.1, abs=1e-9)
    assert rep.sigma_min == pytest.approx(0.0, abs=1e-12)
    assert rep.amplitude == pytest.approx(1.0, abs=1e-3)
    assert rep.onset_time < rep.t_min
    # full width at half depth of exp(-s^2/1e-4) is 2*sqrt(ln 2)*1e-2
    assert rep.width == pytest.approx(2 * math.sqrt(math.log(2)) * 1e-2, rel=1e-3)


def test_flat_signal_has_no_dip():
    r = np.linspace(1.35, 1.5, 16)
    t = np.linspace(0, 0.1, 50)
    sigma = np.tile(np.cos(r), (t.size, 1))
    assert detect_dip_samples(r, t, sigma) is None


def test_monotone_signal_has_no_dip():
    r = np.linspace(1.35, 1.5, 16)
    t = np.linspace(0, 0.1, 50)
    sigma = np.outer(1 - t, np.ones(r.size))
    assert detect_dip_samples(r, t, sigma) is None


@given(st.floats(-100, 100))
@settings(max_examples=25, deadline=None)
def test_dip_translation_invariant(c):
    r, t, sigma = _gaussian_dip()
    a = detect_dip_samples(r, t, sigma)
    b = detect_dip_samples(r, t, sigma + c)
    assert (a.r_min, a.t_min, a.onset_time) == (b.r_min, b.t_min, b.onset_time)
    assert b.amplitude == pytest.approx(a.amplitude, abs=1e-9)


def test_dip_windows_restrict_search():
    r, t, sigma = _gaussian_dip()
    sigma[:, 0] -= 5.0 * (t > 0.15)  # a deeper but out-of-window feature at r=1.35
    rep = detect_dip_samples(r, t, sigma, r_window=(1.36, 1.5), t_window=(0.0, 0.14))
    assert rep.r_min == pytest.approx(1.42, abs=1e-9)


def test_dip_tie_breaks_earliest_then_smallest_radius():
    r = np.array([1.0, 1.1, 1.2])
    t = np.array([0.0, 1.0, 2.0, 3.0])
    sigma = np.array([[1, 1, 1], [1, 0, 0], [1, 0, 1], [1, 1, 1]], float)
    rep = detect_dip_samples(r, t, sigma)
    assert (rep.t_min, rep.r_min) == (1.0, 1.1)


def test_detect_dip_on_record():
    r, t, sigma = _gaussian_dip()
    cfg = RunConfig()
    rec = RunRecord(config=cfg, mesh=cfg.mesh, times=t, crossings=[np.array([1.3, 1.6])] * t.size,
                    probe_radii=(), probe_sigma=np.empty((t.size, 0)), probe_u=np.empty((t.size, 0)),
                    window_r=r, window_sigma=sigma, window_u=np.zeros_like(sigma))
    rep = detect_dip(rec)
    assert rep.r_min == pytest.approx(1.42) and rep.t_min == pytest.approx(0.1)
    assert rep.confluence_time is None


def test_half_width_interpolates():
    times = np.arange(5.0)
    series = np.array([4.0, 2.0, 0.0, 2.0, 4.0])
    assert half_width(times, series, 2, 3.0) == pytest.approx(3.0)


def test_fit_window_and_jump_on_linear_fronts():
    t = np.linspace(0, 0.1, 1001)
    track = types.SimpleNamespace(times=t, r1=1.25 + 1.5 * t, r2=1.75 - 3.5 * t)
    track.gap = track.r2 - track.r1
    lo, hi = fit_window(track, 0.01, gap_factor=8.0, fraction=0.1)
    # gap = 0.5 - 5 t falls below 0.08 just after t = 0.084
    assert hi == pytest.approx(0.0841, abs=1e-12) and lo == pytest.approx(0.9 * hi)
    cmp = jump_from_track(track, 0.01, 8.0, 0.1)
    assert cmp.v1 == pytest.approx(1.5) and cmp.v2 == pytest.approx(-3.5)
    assert cmp.sigma_an == pytest.approx(abs(analytic_jump(cmp.r1, 1.5, cmp.r2, -3.5)))
