"""Outer optimisation loop: solve, sensitivities, multiplier control, design update."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverFailure
from .fem2d import Helmholtz, Mesh, assemble_and_solve
from .orientation import OrientationState, element_angles, update_orientation
from .tensor2d import PHASE_INDEX, rotate_tensor
from .topoderiv import cached_table, element_sensitivities
from .xls import PAIRS, XlsState, smoothed_characteristic, update_levelsets

log = logging.getLogger(__name__)

CONVERGED = "Converged"
NON_CONVERGENCE = "NonConvergence"


@dataclass(frozen=True)
class MultiplierState:
    lam: float = 0.0
    Lambda: float = 0.0
    g_prev: float = 0.0


@dataclass(frozen=True)
class Gains:
    K_P: float
    K_D: float
    K_IP: float
    K_ID: float


def lagrangian(J, g, lam):
    return J + lam * g


def update_multiplier(m, g, gains):
    """PID control of the multiplier; the integral part never goes negative."""
    g_dot = g - m.g_prev
    Lambda = max(m.Lambda + gains.K_IP * g + gains.K_ID * g_dot, 0.0)
    lam = max(gains.K_P * g, 0.0) + gains.K_D * g_dot + Lambda
    return MultiplierState(lam=lam, Lambda=Lambda, g_prev=g)


@dataclass
class OptHistory:
    """Append-only per-step records."""

    J_C: list = field(default_factory=list)
    g_W: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    Lambda: list = field(default_factory=list)
    L: list = field(default_factory=list)
    max_dphi: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)

    def append(self, J_C, g_W, lam, Lambda, L, max_dphi, wall_ms):
        self.J_C.append(float(J_C))
        self.g_W.append(float(g_W))
        self.lam.append(float(lam))
        self.Lambda.append(float(Lambda))
        self.L.append(float(L))
        self.max_dphi.append(float(max_dphi))
        self.wall_ms.append(float(wall_ms))

    def __len__(self):
        return len(self.J_C)

    @property
    def steps(self):
        return list(range(len(self)))

    def rows(self):
        for k in range(len(self)):
            yield (k, self.J_C[k], self.g_W[k], self.lam[k], self.Lambda[k],
                   self.max_dphi[k], self.wall_ms[k])


def check_convergence(history, window=10, tol=1e-4, feas_tol=None, field_tol=1e-3):
    """Stationary Lagrangian, feasible constraint and settled level sets over the last ``window`` steps."""
    if window < 2:
        raise ValueError("window must be at least 2")
    if len(history) < window:
        return False
    L = np.asarray(history.L[-window:])
    ref = max(abs(L[-1]), np.finfo(float).tiny)
    if np.max(np.abs(L - L[-1])) / ref >= tol:
        return False
    if feas_tol is not None and abs(history.g_W[-1]) >= feas_tol:
        return False
    return float(np.max(history.max_dphi[-window + 1:])) < field_tol


# -- initial designs --------------------------------------------------------------


def _phase_state(mask_v, mask_i, mask_f):
    """Level sets representing pure phases (with value 0 on the irrelevant pair)."""
    mv, mi, mf = (np.asarray(m, dtype=float) for m in (mask_v, mask_i, mask_f))
    return XlsState(phi_VI=mv - mi, phi_VF=mv - mf, phi_IF=mi - mf)


def initial_design(name, mesh):
    """Preset initial designs.

    A: every level set and auxiliary variable zero. B: fibre everywhere at 0.
    C: void in the lower half, 0-degree fibre in the upper half. D: fibre
    everywhere, oriented radially about the domain centre. E: fibre/isotropic
    checkerboard of 0.25-sized squares. B-E are reconstructions of the
    published pictures, not exact reproductions.
    """
    n = mesh.n_nodes
    x, y = mesh.coords[:, 0], mesh.coords[:, 1]
    zero, one = np.zeros(n), np.ones(n)
    if name == "A":
        return XlsState.constant(n, 0.0), OrientationState.zeros(n)
    if name == "B":
        return _phase_state(zero, zero, one), OrientationState.from_angle(zero)
    if name == "C":
        upper = (y >= 0.5 * mesh.height).astype(float)
        return _phase_state(1.0 - upper, zero, upper), OrientationState(upper.copy(), zero.copy())
    if name == "D":
        theta = np.mod(np.arctan2(y - 0.5 * mesh.height, x - 0.5 * mesh.width), np.pi)
        return _phase_state(zero, zero, one), OrientationState.from_angle(theta)
    if name == "E":
        cell = 0.25
        fib = ((np.floor(x / cell) + np.floor(y / cell)) % 2 == 0).astype(float)
        return _phase_state(zero, 1.0 - fib, fib), OrientationState(fib.copy(), zero.copy())
    if str(name).endswith(".npz"):
        with np.load(name) as data:
            phi = XlsState(data["phi_VI"], data["phi_VF"], data["phi_IF"])
            orient = OrientationState(data["xi"], data["eta"])
        if phi.phi_VI.shape != (n,):
            raise ValueError("initial design file does not match the mesh")
        return phi, orient
    raise ValueError(f"unknown initial design {name!r}")


# -- state evaluation -------------------------------------------------------------


@dataclass(frozen=True)
class Evaluation:
    fractions: np.ndarray  # (3, m)
    theta: np.ndarray
    indeterminate: np.ndarray
    solve: object
    weight: float
    g: float

    @property
    def J(self):
        return self.solve.compliance


def ersatz_stiffness(catalog, fractions, theta):
    """Fraction-weighted per-element stiffness with fibre at the element angle."""
    iv, ii, if_ = PHASE_INDEX["V"], PHASE_INDEX["I"], PHASE_INDEX["F"]
    return (fractions[iv, :, None, None] * catalog.C_V
            + fractions[ii, :, None, None] * catalog.C_I
            + fractions[if_, :, None, None] * rotate_tensor(catalog.C_Fx, theta))


def design_weight(catalog, mesh, fractions):
    return float(mesh.element_area * np.sum(catalog.densities @ fractions))


class Problem:
    """Mesh, materials, table and solvers for one configuration."""

    def __init__(self, config):
        cfg = config.resolved()
        self.config = cfg
        self.mesh = Mesh(cfg.width, cfg.height, cfg.nx, cfg.ny, support=cfg.support,
                         load_segment=cfg.load_segment)
        self.catalog = cfg.catalog()
        self.table = cached_table(self.catalog, cfg.n_angles, cfg.table_cache or None)
        self.helmholtz = Helmholtz(self.mesh)
        self.gains = Gains(cfg.K_P, cfg.K_D, cfg.K_IP, cfg.K_ID)

    def evaluate(self, phi, orient):
        cfg, mesh = self.config, self.mesh
        fractions = smoothed_characteristic(phi.map(mesh.to_elements), cfg.w_m, cfg.eps_chi)
        theta, flags = element_angles(orient, mesh)
        C = ersatz_stiffness(self.catalog, fractions, theta)
        state = assemble_and_solve(mesh, C, cfg.traction)
        weight = design_weight(self.catalog, mesh, fractions)
        return Evaluation(fractions, theta, flags, state, weight, weight - cfg.W_max)


@dataclass
class RunResult:
    phi: XlsState
    orientation: OrientationState
    history: OptHistory
    status: str
    evaluation: Evaluation
    problem: Problem
    multiplier: MultiplierState
    iterations: int = 0


def descent_fields(sens):
    """Level-set driving terms for each stored pair ``(a, b)``.

    ``phi_ab > 0`` favours ``a``, so the update must lower ``phi_ab`` where
    replacing ``a`` by ``b`` lowers the Lagrangian; that is the reversed-pair
    extended derivative ``D_ba = -D_ab``.
    """
    return {pair: -sens.extended[pair] for pair in PAIRS}


def run(config, observer=None):
    """Optimise the design described by ``config``.

    ``observer(step, problem, phi, orientation, evaluation)`` is called after every
    evaluation, including the initial one at step 0.
    """
    problem = Problem(config)
    cfg, mesh, helm = problem.config, problem.mesh, problem.helmholtz
    phi, orient = initial_design(cfg.initial_design, mesh)
    history = OptHistory()
    feas_tol = cfg.feas_tol_fraction * cfg.W_max

    t0 = time.perf_counter()
    try:
        ev = problem.evaluate(phi, orient)
    except SolverFailure as exc:
        raise SolverFailure(str(exc), iteration=0) from exc
    J0 = ev.J
    if not J0 > 0:
        raise ValueError("initial compliance must be positive (is the load zero?)")
    mult = update_multiplier(MultiplierState(), ev.g, problem.gains)
    history.append(ev.J, ev.g, mult.lam, mult.Lambda, lagrangian(ev.J / J0, ev.g, mult.lam), 0.0,
                   1e3 * (time.perf_counter() - t0))
    if observer:
        observer(0, problem, phi, orient, ev)

    status = NON_CONVERGENCE
    step = 0
    for step in range(1, cfg.max_iters + 1):
        t0 = time.perf_counter()
        sens = element_sensitivities(problem.table, ev.solve.strain, ev.theta, ev.fractions,
                                     lam=mult.lam, obj_scale=1.0 / J0)
        dl = descent_fields(sens)
        alpha = {}
        for pair in PAIRS:
            peak = float(np.max(np.abs(mesh.to_nodes(dl[pair]))))
            alpha[pair] = cfg.step_levelset / peak if peak > 0 else 1.0
        chi_f = ev.fractions[PHASE_INDEX["F"]]
        new_orient = update_orientation(orient, sens.theta_star, chi_f, cfg.alpha_theta,
                                        cfg.tau_theta, helm)
        new_phi = update_levelsets(phi, dl, alpha, cfg.tau_levelset, helm)
        dphi = max(float(np.max(np.abs(new_phi.phi(*p) - phi.phi(*p)))) for p in PAIRS)
        phi, orient = new_phi, new_orient
        try:
            ev = problem.evaluate(phi, orient)
        except SolverFailure as exc:
            raise SolverFailure(str(exc), iteration=step) from exc
        mult = update_multiplier(mult, ev.g, problem.gains)
        history.append(ev.J, ev.g, mult.lam, mult.Lambda, lagrangian(ev.J / J0, ev.g, mult.lam),
                       dphi, 1e3 * (time.perf_counter() - t0))
        if observer:
            observer(step, problem, phi, orient, ev)
        log.debug("step %d J=%.6g g=%.4g lam=%.4g dphi=%.3g", step, ev.J, ev.g, mult.lam, dphi)
        if check_convergence(history, cfg.conv_window, cfg.conv_rel_tol, feas_tol, cfg.conv_field_tol):
            status = CONVERGED
            break
    return RunResult(phi=phi, orientation=orient, history=history, status=status, evaluation=ev,
                     problem=problem, multiplier=mult, iterations=step)
