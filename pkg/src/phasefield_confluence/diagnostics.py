"""Free-boundary tracking, velocity fits, dip detection and the analytic jump."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .numerics import RadialMesh

RATE_FLOOR = 1e-6


class SpuriousCrossingWarning(RuntimeWarning):
    """More than two zero crossings of ``u`` at one time level."""


@dataclass
class BoundaryTrack:
    """Inner/outer free boundary radii per time level (NaN once merged)."""

    times: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    confluence_time: float | None = None
    confluence_radius: float | None = None

    @property
    def gap(self) -> np.ndarray:
        return self.r2 - self.r1


@dataclass(frozen=True)
class VelocityFit:
    velocity: float
    intercept: float
    rms: float
    n_samples: int

    def __float__(self) -> float:
        return self.velocity


@dataclass(frozen=True)
class DipReport:
    r_min: float
    t_min: float
    sigma_min: float
    amplitude: float
    onset_time: float
    sigma_onset: float
    width: float
    confluence_time: float | None = None

    def to_dict(self) -> dict:
        return {
            "r_min": self.r_min,
            "t_min": self.t_min,
            "sigma_min": self.sigma_min,
            "amplitude": self.amplitude,
            "onset_time": self.onset_time,
            "sigma_onset": self.sigma_onset,
            "width": self.width,
            "confluence_time": self.confluence_time,
        }


def find_zero_crossings(u: np.ndarray, mesh: RadialMesh) -> list[float]:
    """Radii where ``u`` changes sign, by linear interpolation between nodes.

    Nodes where ``u`` is exactly zero are reported as the node itself.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (mesh.n_nodes,):
        raise ValueError(f"u has shape {u.shape}, mesh has {mesh.n_nodes} nodes")
    r = mesh.nodes
    out = []
    for i in range(mesh.n_nodes - 1):
        a, b = u[i], u[i + 1]
        if a * b < 0:
            out.append(float(r[i] + mesh.h * a / (a - b)))
    out.extend(float(x) for x in r[u == 0])
    return sorted(set(out))


def track_boundaries(record) -> BoundaryTrack:
    """Pair the per-level crossings of a run into inner/outer trajectories.

    The trajectories stop at the first level with fewer than two crossings
    (the confluence); the confluence radius is the last midpoint seen
    before that.
    """
    n = len(record.crossings)
    times = np.asarray(record.times[:n], dtype=np.float64)
    r1 = np.full(n, np.nan)
    r2 = np.full(n, np.nan)
    t_star = r_star = None
    extra = 0
    for k, roots in enumerate(record.crossings):
        if len(roots) < 2:
            t_star = float(times[k])
            if k > 0:
                r_star = 0.5 * (r1[k - 1] + r2[k - 1])
            break
        if len(roots) > 2:
            extra += 1
        r1[k], r2[k] = roots[0], roots[-1]
    if extra:
        warnings.warn(
            f"{extra} time levels had more than two zero crossings; kept the outermost pair",
            SpuriousCrossingWarning,
            stacklevel=2,
        )
    return BoundaryTrack(times, r1, r2, t_star, r_star)


def estimate_velocity(times, values, fit_window: tuple[float, float]) -> VelocityFit:
    """Least-squares slope of ``values(times)`` over ``fit_window`` (inclusive)."""
    t = np.asarray(times, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    lo, hi = fit_window
    sel = (t >= lo) & (t <= hi) & np.isfinite(y)
    if sel.sum() < 3:
        raise ValueError(f"velocity fit needs >= 3 samples in [{lo}, {hi}], got {int(sel.sum())}")
    ts, ys = t[sel], y[sel]
    # centre the abscissa; keeps the normal equations well conditioned
    tc = ts - ts.mean()
    yc = ys - ys.mean()
    slope = float(np.dot(tc, yc) / np.dot(tc, tc))
    intercept = float(ys.mean() - slope * ts.mean())
    resid = ys - (intercept + slope * ts)
    return VelocityFit(slope, intercept, float(np.sqrt(np.mean(resid**2))), int(sel.sum()))


def analytic_jump(r1: float, v1: float, r2: float, v2: float) -> float:
    """Limiting temperature jump at the contact point, ``-(r1 v1 - r2 v2)/2``."""
    if not (r1 > 0 and r2 > 0):
        raise ValueError("radii must be positive")
    return -(2.0 * r1 * v1 - 2.0 * r2 * v2) / 4.0


def fit_window(track: BoundaryTrack, epsilon: float, gap_factor: float = 8.0,
               fraction: float = 0.05) -> tuple[float, float]:
    """Window for the boundary-velocity fit, just before the fronts interact.

    The window ends at the first time the gap ``r2 - r1`` drops below
    ``gap_factor * epsilon`` (tanh tails still negligible there) and spans
    ``fraction`` of that time. The fronts decelerate steadily, so a short
    late window gives the velocities at approach rather than an average
    over the whole run.
    """
    gap = track.gap
    ok = np.isfinite(gap)
    close = np.flatnonzero(ok & (gap < gap_factor * epsilon))
    if close.size:
        t_end = float(track.times[close[0]])
    else:
        last = np.flatnonzero(ok)
        if last.size == 0:
            raise ValueError("no tracked boundary samples")
        t_end = float(track.times[last[-1]])
    return (1.0 - fraction) * t_end, t_end


@dataclass(frozen=True)
class JumpComparison:
    r1: float
    v1: float
    r2: float
    v2: float
    sigma_an: float
    window: tuple[float, float]


def jump_from_track(track: BoundaryTrack, epsilon: float, gap_factor: float = 8.0,
                    fraction: float = 0.05) -> JumpComparison:
    """Fit both velocities and evaluate ``|analytic_jump|`` at the window end."""
    window = fit_window(track, epsilon, gap_factor, fraction)
    f1 = estimate_velocity(track.times, track.r1, window)
    f2 = estimate_velocity(track.times, track.r2, window)
    k = int(np.searchsorted(track.times, window[1], side="right")) - 1
    r1, r2 = float(track.r1[k]), float(track.r2[k])
    return JumpComparison(r1, f1.velocity, r2, f2.velocity,
                          abs(analytic_jump(r1, f1.velocity, r2, f2.velocity)), window)


def _rate(series: np.ndarray, times: np.ndarray) -> np.ndarray:
    return np.abs(np.diff(series)) / np.diff(times)


def detect_dip_samples(
    r: np.ndarray,
    t: np.ndarray,
    sigma: np.ndarray,
    r_window: tuple[float, float] | None = None,
    t_window: tuple[float, float] | None = None,
    fast_factor: float = 5.0,
    baseline_end: float | None = None,
) -> DipReport | None:
    """Locate the temperature dip in gridded samples ``sigma[time, radius]``.

    The minimum over the windows gives ``(r_min, t_min, sigma_min)``; ties go
    to the earliest time, then the smallest radius. The onset of the fast
    change is found on the time series at ``r_min``: starting from the
    steepest backward difference before ``t_min``, walk back while the rate
    exceeds ``fast_factor`` times the median rate over ``t <= baseline_end/2``
    (``baseline_end`` defaults to ``t_min``), but at least ``RATE_FLOOR`` times
    the steepest rate. Returns ``None`` when the
    minimum sits on the edge of the time window, i.e. there is no dip.
    """
    r = np.asarray(r, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    rsel = np.ones(r.size, bool) if r_window is None else (r >= r_window[0]) & (r <= r_window[1])
    tsel = np.ones(t.size, bool) if t_window is None else (t >= t_window[0]) & (t <= t_window[1])
    ri, ti = np.flatnonzero(rsel), np.flatnonzero(tsel)
    if ri.size == 0 or ti.size < 3:
        return None
    sub = sigma[np.ix_(ti, ri)]
    if not np.isfinite(sub).any():
        return None
    flat = np.nanargmin(sub)
    kt, kr = np.unravel_index(flat, sub.shape)
    if kt == 0 or kt == ti.size - 1:
        return None
    k = int(ti[kt])
    j = int(ri[kr])
    series = sigma[ti, j]
    times = t[ti]
    rate = _rate(series, times)
    # rate[i] is the backward difference arriving at sample i+1
    steep = int(np.argmax(rate[:kt]))
    t_base = (baseline_end if baseline_end is not None else t[k]) / 2.0
    base = rate[times[1:] <= t_base]
    if base.size == 0:
        base = rate[:kt]
    # floor keeps round-off in flat stretches from counting as change
    threshold = max(fast_factor * float(np.median(base)), RATE_FLOOR * float(rate[steep]))
    m = steep
    while m > 0 and rate[m - 1] > threshold:
        m -= 1
    onset = m
    sigma_on = float(series[onset])
    s_min = float(series[kt])
    amplitude = sigma_on - s_min
    if not amplitude > 0:
        return None
    return DipReport(
        r_min=float(r[j]),
        t_min=float(t[k]),
        sigma_min=s_min,
        amplitude=amplitude,
        onset_time=float(times[onset]),
        sigma_onset=sigma_on,
        width=half_width(times, series, kt, sigma_on - 0.5 * amplitude),
    )


def half_width(times: np.ndarray, series: np.ndarray, kmin: int, level: float) -> float:
    """Duration of the contiguous stretch around ``kmin`` with ``series <= level``.

    The crossing times are linearly interpolated, so the width is not
    quantised to the sampling step.
    """
    lo = kmin
    while lo > 0 and series[lo - 1] <= level:
        lo -= 1
    hi = kmin
    while hi < series.size - 1 and series[hi + 1] <= level:
        hi += 1

    def cross(i0, i1):
        s0, s1 = series[i0], series[i1]
        if s0 == s1:
            return times[i0]
        return times[i0] + (level - s0) * (times[i1] - times[i0]) / (s1 - s0)

    left = cross(lo - 1, lo) if lo > 0 else times[lo]
    right = cross(hi, hi + 1) if hi < series.size - 1 else times[hi]
    return float(right - left)


def detect_dip(record, search_r_window=None, search_t_window=None,
               fast_factor: float | None = None) -> DipReport | None:
    """Dip of the retained temperature window of a run (see :func:`detect_dip_samples`)."""
    cfg = record.config
    track = track_boundaries(record)
    report = detect_dip_samples(
        record.window_r,
        record.times,
        record.window_sigma,
        search_r_window,
        search_t_window,
        cfg.fast_factor if fast_factor is None else fast_factor,
        baseline_end=track.confluence_time,
    )
    if report is None:
        return None
    return DipReport(**{**report.to_dict(), "confluence_time": track.confluence_time})

