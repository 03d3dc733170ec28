"""Split implicit time stepping of the coupled order-function / temperature system.

Each step first advances ``u`` with the linearised implicit Allen-Cahn
scheme (temperature frozen at the old level), then advances ``sigma`` with
implicit Euler for the heat equation, driven by the fresh ``u`` increment.
Both reduce to one tridiagonal solve.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .model import FieldPair, RunConfig, initial_fields
from .numerics import RadialMesh, SingularSystemError, TridiagonalSystem, sweep_solve

logger = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 2.0


class StepFailure(RuntimeError):
    def __init__(self, step_index: int, cause: Exception):
        super().__init__(f"step {step_index} failed: {cause}")
        self.step_index = step_index
        self.cause = cause


@dataclass(frozen=True, slots=True)
class StepReport:
    step_index: int
    time: float
    max_abs_u: float
    max_abs_sigma: float
    u_linear_system_dominant: bool
    diverged: bool


def _boundary_rows(lower, diag, upper, rhs, values, bc: str) -> None:
    # dirichlet holds the endpoint values; neumann is the one-sided zero-flux row
    diag[0] = diag[-1] = 1.0
    if bc == "dirichlet":
        upper[0] = lower[-1] = 0.0
        rhs[0], rhs[-1] = values[0], values[-1]
    else:
        upper[0] = lower[-1] = -1.0
        rhs[0] = rhs[-1] = 0.0


@functools.lru_cache(maxsize=32)
def _order_coefficients(mesh: RadialMesh, eps: float, tau: float):
    # u-independent parts of the u-system; callers copy before mutating
    h, r = mesh.h, mesh.nodes[1:-1]
    lower = np.empty(mesh.n_nodes - 1)
    upper = np.empty(mesh.n_nodes - 1)
    lower[:-1] = -eps / h**2 + eps / (h * r)
    upper[1:] = -eps / h**2 - eps / (h * r)
    base = eps / tau + 2.0 * eps / h**2 - 1.0 / eps
    return lower, upper, base, 1.0 / r


@functools.lru_cache(maxsize=32)
def _temperature_coefficients(mesh: RadialMesh, tau: float):
    h = mesh.h
    off = np.full(mesh.n_nodes - 1, -1.0 / h**2)
    diag = np.full(mesh.n_nodes, 1.0 / tau + 2.0 / h**2)
    return off, diag, mesh.nodes[1:-1]


@njit(cache=True)
def _order_rows(u, sigma, inv_r, base, eps, tau, kappa, diag, rhs):
    for i in range(1, u.shape[0] - 1):
        u2 = u[i] * u[i]
        diag[i] = base + 3.0 * u2 / eps
        rhs[i] = eps * u[i] / tau + 2.0 * u2 * u[i] / eps + kappa * sigma[i] * inv_r[i - 1]


@njit(cache=True)
def _temperature_rhs(sigma, u, u_new, r, tau, rhs):
    for i in range(1, sigma.shape[0] - 1):
        rhs[i] = (sigma[i] - r[i - 1] * (u_new[i] - u[i])) / tau


def assemble_order_system(
    u_k: np.ndarray, sigma_k: np.ndarray, cfg: RunConfig, mesh: RadialMesh
) -> TridiagonalSystem:
    """Tridiagonal system for ``u_{k+1}``.

    Interior rows::

        eps (u' - u)/tau - eps D2 u' - 2 eps D1 u' / r
            = (u' - u^3 - 3 u^2 (u' - u)) / eps + kappa sigma_k / r
    """
    eps, tau = cfg.epsilon, cfg.tau
    lo, up, base, inv_r = _order_coefficients(mesh, eps, tau)
    lower, upper = lo.copy(), up.copy()
    diag = np.empty(mesh.n_nodes)
    rhs = np.empty(mesh.n_nodes)
    _order_rows(u_k, sigma_k, inv_r, base, eps, tau, cfg.kappa, diag, rhs)
    _boundary_rows(lower, diag, upper, rhs, u_k, cfg.bc_u)
    return TridiagonalSystem(lower, diag, upper, rhs)


def assemble_temperature_system(
    sigma_k: np.ndarray, u_k: np.ndarray, u_k1: np.ndarray, cfg: RunConfig, mesh: RadialMesh
) -> TridiagonalSystem:
    """Implicit Euler for ``sigma_t - sigma_rr = -r u_t`` with ``u_t`` from this step."""
    tau = cfg.tau
    lo, dg, r = _temperature_coefficients(mesh, tau)
    lower, upper, diag = lo.copy(), lo.copy(), dg.copy()
    rhs = np.empty(mesh.n_nodes)
    _temperature_rhs(sigma_k, u_k, u_k1, r, tau, rhs)
    _boundary_rows(lower, diag, upper, rhs, sigma_k, cfg.bc_sigma)
    return TridiagonalSystem(lower, diag, upper, rhs)


def step_order_function(
    u_k: np.ndarray, sigma_k: np.ndarray, cfg: RunConfig, mesh: RadialMesh
) -> np.ndarray:
    return sweep_solve(assemble_order_system(u_k, sigma_k, cfg, mesh), check_dominance=False)


def step_temperature(
    sigma_k: np.ndarray, u_k: np.ndarray, u_k1: np.ndarray, cfg: RunConfig, mesh: RadialMesh
) -> np.ndarray:
    return sweep_solve(
        assemble_temperature_system(sigma_k, u_k, u_k1, cfg, mesh), check_dominance=False
    )


def zero_crossings(u: np.ndarray, nodes: np.ndarray, h: float) -> np.ndarray:
    """Sign changes of ``u`` located by linear interpolation, ascending."""
    a, b = u[:-1], u[1:]
    idx = np.flatnonzero(a * b < 0)
    roots = nodes[idx] + h * a[idx] / (a[idx] - b[idx])
    exact = nodes[u == 0]
    if exact.size:
        roots = np.unique(np.concatenate([roots, exact]))
    return roots


@dataclass
class RunRecord:
    """Everything retained from one run.

    Full fields are kept only at the snapshot times. Per time level the
    record keeps the zero crossings of ``u``, the probe values and
    ``sigma``/``u`` on the retention window ``[retain_r_min, retain_r_max]``.
    Row ``k`` of every per-level array belongs to ``times[k]``; row 0 is the
    initial data.
    """

    config: RunConfig
    mesh: RadialMesh
    times: np.ndarray
    crossings: list[np.ndarray]
    probe_radii: tuple[float, ...]
    probe_sigma: np.ndarray
    probe_u: np.ndarray
    window_r: np.ndarray
    window_sigma: np.ndarray
    window_u: np.ndarray
    snapshots: dict[float, FieldPair] = field(default_factory=dict)
    steps: list[StepReport] = field(default_factory=list)
    diverged: bool = False
    failure: str | None = None
    non_dominant_steps: int = 0

    @property
    def n_levels(self) -> int:
        return len(self.times)

    @property
    def final_time(self) -> float:
        return float(self.times[-1])


def _probe(values: np.ndarray, nodes: np.ndarray, radii: tuple[float, ...]) -> np.ndarray:
    return np.interp(radii, nodes, values) if radii else np.empty(0)


def run_simulation(cfg: RunConfig) -> RunRecord:
    """Integrate from the initial data to ``t_end`` or until divergence.

    A diverged or failed run returns the record truncated at the last level
    reached, with ``diverged`` set.
    """
    mesh = cfg.mesh
    nodes = mesh.nodes
    h = mesh.h
    nsteps = cfg.n_steps
    init = initial_fields(cfg, mesh)
    u, sigma = init.u, init.sigma

    wsel = (nodes >= cfg.retain_r_min - 1e-9 * h) & (nodes <= cfg.retain_r_max + 1e-9 * h)
    window_r = nodes[wsel].copy()
    levels = nsteps + 1
    window_sigma = np.empty((levels, window_r.size))
    window_u = np.empty((levels, window_r.size))
    probe_sigma = np.empty((levels, len(cfg.probe_radii)))
    probe_u = np.empty((levels, len(cfg.probe_radii)))
    times = cfg.tau * np.arange(levels, dtype=np.float64)
    crossings: list[np.ndarray] = []

    pending = sorted(set(cfg.snapshot_times))
    snapshots: dict[float, FieldPair] = {}

    def retain(k: int, u: np.ndarray, sigma: np.ndarray) -> None:
        window_sigma[k] = sigma[wsel]
        window_u[k] = u[wsel]
        probe_sigma[k] = _probe(sigma, nodes, cfg.probe_radii)
        probe_u[k] = _probe(u, nodes, cfg.probe_radii)
        crossings.append(zero_crossings(u, nodes, h))
        # a snapshot is due at the first level within half a step of its time
        while pending and times[k] >= pending[0] - 0.5 * cfg.tau:
            snapshots[pending.pop(0)] = FieldPair(u.copy(), sigma.copy(), float(times[k]))

    retain(0, u, sigma)
    steps: list[StepReport] = []
    diverged = False
    failure = None
    non_dominant = 0
    last = 0
    for k in range(1, nsteps + 1):
        try:
            system = assemble_order_system(u, sigma, cfg, mesh)
            dominant = system.diagonally_dominant
            u_new = sweep_solve(system, check_dominance=False)
            sigma_new = step_temperature(sigma, u, u_new, cfg, mesh)
        except SingularSystemError as exc:
            err = StepFailure(k, exc)
            logger.warning("%s", err)
            diverged, failure = True, str(err)
            break
        if not dominant:
            non_dominant += 1
        max_u = float(np.max(np.abs(u_new)))
        max_s = float(np.max(np.abs(sigma_new)))
        bad = not (max_u <= DIVERGENCE_LIMIT and np.isfinite(max_s))
        steps.append(StepReport(k, float(times[k]), max_u, max_s, dominant, bad))
        u, sigma = u_new, sigma_new
        retain(k, u, sigma)
        last = k
        if bad:
            diverged = True
            failure = f"divergence at step {k} (t={times[k]:.6g}): max|u|={max_u:.4g}"
            logger.warning("%s", failure)
            break

    if non_dominant:
        logger.info("u-system lost diagonal dominance in %d of %d steps", non_dominant, last)
    n = last + 1
    return RunRecord(
        config=cfg,
        mesh=mesh,
        times=times[:n],
        crossings=crossings,
        probe_radii=cfg.probe_radii,
        probe_sigma=probe_sigma[:n],
        probe_u=probe_u[:n],
        window_r=window_r,
        window_sigma=window_sigma[:n],
        window_u=window_u[:n],
        snapshots=snapshots,
        steps=steps,
        diverged=diverged,
        failure=failure,
        non_dominant_steps=non_dominant,
    )
