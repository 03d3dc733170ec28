"""Run configuration, field containers and initial data."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .numerics import RadialMesh, build_mesh

KAPPA = math.sqrt(2.0) / 3.0

BC_CHOICES = ("dirichlet", "neumann")
JUMP_ORIENTATIONS = ("right_minus_left", "left_minus_right")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """All physical and numerical parameters of one simulation.

    ``dip_depth=None`` selects ``s1 + s2`` (the sum of the Gibbs-Thomson
    endpoint values), which balances the two exterior slopes of the initial
    temperature. Together with the default velocities the exterior is then
    almost flat, so the temperature boundary condition hardly matters.
    """

    epsilon: float = 0.025
    kappa: float = KAPPA
    r_inner: float = 1.0
    r_outer: float = 2.0
    h: float = 1e-3
    tau: float = 1e-5
    t_end: float = 0.12
    r1_0: float = 1.25
    r2_0: float = 1.75
    v1_0: float = 2.35
    v2_0: float = -3.2
    dip_depth: float | None = None
    stefan_jump_orientation: str = "right_minus_left"
    bc_u: str = "dirichlet"
    bc_sigma: str = "dirichlet"
    probe_radii: tuple[float, ...] = (1.15, 1.42)
    snapshot_times: tuple[float, ...] = (0.0, 0.05, 0.082)
    retain_r_min: float = 1.35
    retain_r_max: float = 1.50
    fast_factor: float = 5.0
    fit_gap_factor: float = 8.0
    fit_window_fraction: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "probe_radii", tuple(float(r) for r in self.probe_radii))
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        self.validate()

    def validate(self) -> None:
        def need(cond: bool, what: str):
            if not cond:
                raise ConfigError(f"invalid configuration: {what}")

        need(self.epsilon > 0, f"epsilon > 0 (got {self.epsilon})")
        need(self.tau > 0, f"tau > 0 (got {self.tau})")
        need(self.t_end >= 0, f"t_end >= 0 (got {self.t_end})")
        need(
            self.r_inner < self.r1_0 < self.r2_0 < self.r_outer,
            f"r_inner < r1_0 < r2_0 < r_outer (got {self.r_inner}, {self.r1_0}, "
            f"{self.r2_0}, {self.r_outer})",
        )
        need(self.r_inner > 0, "r_inner > 0 (theta = sigma/r)")
        need(self.bc_u in BC_CHOICES, f"bc_u in {BC_CHOICES} (got {self.bc_u!r})")
        need(self.bc_sigma in BC_CHOICES, f"bc_sigma in {BC_CHOICES} (got {self.bc_sigma!r})")
        need(
            self.stefan_jump_orientation in JUMP_ORIENTATIONS,
            f"stefan_jump_orientation in {JUMP_ORIENTATIONS}",
        )
        need(
            all(self.r_inner <= r <= self.r_outer for r in self.probe_radii),
            "probe radii inside [r_inner, r_outer]",
        )
        need(all(t >= 0 for t in self.snapshot_times), "snapshot times >= 0")
        need(self.retain_r_min <= self.retain_r_max, "retain_r_min <= retain_r_max")
        need(self.fast_factor > 0, "fast_factor > 0")
        need(self.fit_gap_factor > 0, "fit_gap_factor > 0")
        need(0 < self.fit_window_fraction < 1, "0 < fit_window_fraction < 1")
        try:
            build_mesh(self.r_inner, self.r_outer, self.h)
        except ValueError as exc:
            raise ConfigError(f"invalid configuration: {exc}") from None

    @property
    def mesh(self) -> RadialMesh:
        return build_mesh(self.r_inner, self.r_outer, self.h)

    @property
    def under_resolved(self) -> bool:
        """Fewer than three nodes across the transition zone."""
        return self.epsilon / self.h < 3.0 - 1e-9

    @property
    def n_steps(self) -> int:
        return max(0, math.ceil(self.t_end / self.tau - 1e-9))

    def replace(self, **changes) -> "RunConfig":
        data = self.to_dict()
        data.update(changes)
        return RunConfig(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["probe_radii"] = list(self.probe_radii)
        d["snapshot_times"] = list(self.snapshot_times)
        return d

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class FieldPair:
    """Order function ``u`` and transformed temperature ``sigma = r*theta`` at one time."""

    u: np.ndarray
    sigma: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        if self.u.shape != self.sigma.shape:
            raise ValueError(f"u and sigma differ in shape: {self.u.shape} vs {self.sigma.shape}")

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.u).all() and np.isfinite(self.sigma).all())


@dataclass(frozen=True)
class TemperatureModelParams:
    """Piecewise initial temperature: linear outside ``[r1, r2]``, parabolic inside.

    ``gamma1_plus`` and ``gamma2_plus`` are the outer slopes written the way
    the model temperature writes them, i.e. ``sigma = s1 + gamma1_plus*(r1 - r)``
    for ``r < r1`` and ``sigma = s2 + gamma2_plus*(r - r2)`` for ``r > r2``.
    """

    r1: float
    r2: float
    s1: float
    s2: float
    dip_depth: float
    gamma1_plus: float
    gamma2_plus: float

    def interior(self, r):
        L = self.r2 - self.r1
        return (
            self.s1 * (self.r2 - r) / L
            + self.s2 * (r - self.r1) / L
            + self.dip_depth * (self.r1 - r) * (r - self.r2) / L
        )

    def interior_slope(self, r):
        L = self.r2 - self.r1
        return (self.s2 - self.s1) / L + self.dip_depth * (self.r1 + self.r2 - 2.0 * r) / L

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        inner = self.s1 + self.gamma1_plus * (self.r1 - r)
        outer = self.s2 + self.gamma2_plus * (r - self.r2)
        out = np.where(r < self.r1, inner, np.where(r > self.r2, outer, self.interior(r)))
        # endpoint values exactly, independent of round-off in the parabola
        out = np.where(r == self.r1, self.s1, out)
        return np.where(r == self.r2, self.s2, out)


def gibbs_thomson_values(r1: float, v1: float, r2: float, v2: float) -> tuple[float, float]:
    """``sigma`` at both free boundaries for the given radial velocities."""
    s1 = r1 * (v1 + 2.0 / r1)
    s2 = -r2 * (v2 + 2.0 / r2)
    return s1, s2


def temperature_model(
    r1_0: float,
    r2_0: float,
    v1_0: float,
    v2_0: float,
    dip_depth: float | None = None,
    orientation: str = "right_minus_left",
) -> TemperatureModelParams:
    """Initial temperature model consistent with Gibbs-Thomson and Stefan.

    The flux jump ``sigma_r(r+0) - sigma_r(r-0)`` equals ``2 r1 v1`` at the
    inner boundary and ``-2 r2 v2`` at the outer one; this orientation
    follows from integrating the heat equation across a front where ``u``
    goes from +1 to -1 (inner) or -1 to +1 (outer).
    """
    if orientation not in JUMP_ORIENTATIONS:
        raise ValueError(f"unknown stefan_jump_orientation {orientation!r}")
    s1, s2 = gibbs_thomson_values(r1_0, v1_0, r2_0, v2_0)
    A = s1 + s2 if dip_depth is None else float(dip_depth)
    sign = 1.0 if orientation == "right_minus_left" else -1.0
    probe = TemperatureModelParams(r1_0, r2_0, s1, s2, A, 0.0, 0.0)
    left_slope = probe.interior_slope(r1_0) - sign * 2.0 * r1_0 * v1_0
    right_slope = probe.interior_slope(r2_0) - sign * 2.0 * r2_0 * v2_0
    return TemperatureModelParams(r1_0, r2_0, s1, s2, A, -left_slope, right_slope)


def _check_positions(mesh: RadialMesh, r1_0: float, r2_0: float) -> None:
    if not mesh.r_inner < r1_0 < r2_0 < mesh.r_outer:
        raise ValueError(
            f"boundary radii must satisfy {mesh.r_inner} < r1_0 < r2_0 < {mesh.r_outer}, "
            f"got r1_0={r1_0}, r2_0={r2_0}"
        )


def build_u0(mesh: RadialMesh, r1_0: float, r2_0: float, epsilon: float) -> np.ndarray:
    """Two-front tanh profile: +1 outside ``[r1_0, r2_0]``, -1 inside."""
    _check_positions(mesh, r1_0, r2_0)
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    r = mesh.nodes
    return 1.0 + np.tanh((r1_0 - r) / epsilon) + np.tanh((r - r2_0) / epsilon)


def build_sigma0(
    mesh: RadialMesh,
    r1_0: float,
    r2_0: float,
    v1_0: float,
    v2_0: float,
    dip_depth: float | None = None,
    orientation: str = "right_minus_left",
) -> np.ndarray:
    _check_positions(mesh, r1_0, r2_0)
    model = temperature_model(r1_0, r2_0, v1_0, v2_0, dip_depth, orientation)
    return model(mesh.nodes)


def theta_from_sigma(sigma: np.ndarray, mesh: RadialMesh) -> np.ndarray:
    r = mesh.nodes
    if np.any(r <= 0):
        raise ValueError("theta = sigma/r needs all mesh nodes > 0")
    return np.asarray(sigma, dtype=np.float64) / r


def initial_fields(cfg: RunConfig, mesh: RadialMesh | None = None) -> FieldPair:
    mesh = mesh or cfg.mesh
    u = build_u0(mesh, cfg.r1_0, cfg.r2_0, cfg.epsilon)
    sigma = build_sigma0(
        mesh, cfg.r1_0, cfg.r2_0, cfg.v1_0, cfg.v2_0, cfg.dip_depth, cfg.stefan_jump_orientation
    )
    return FieldPair(u, sigma, 0.0)
