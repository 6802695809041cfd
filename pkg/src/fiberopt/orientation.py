"""Relaxed Cartesian fibre-angle representation and its update.

The angle is carried by two nodal fields ``(xi, eta)`` in the unit disc and read
off as ``theta = atan2(eta, xi) / 2`` in ``[0, pi)``. Points near the origin of
the disc have no meaningful orientation and are flagged as indeterminate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INDETERMINATE_RADIUS2 = 0.05


@dataclass(frozen=True)
class OrientationState:
    xi: np.ndarray
    eta: np.ndarray
    n_sym: int = 1

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n))

    @classmethod
    def from_angle(cls, theta, magnitude=1.0):
        theta = np.asarray(theta, dtype=float)
        return cls(magnitude * np.cos(2.0 * theta), magnitude * np.sin(2.0 * theta))


def theta_from_aux(xi, eta, n_sym=1):
    """Angle in ``[0, pi / n_sym)``; the origin maps to 0."""
    t = np.arctan2(eta, xi) / (2.0 * n_sym)
    period = np.pi / n_sym
    t = np.mod(t, period)
    # mod can round a tiny negative value up to exactly the period
    return np.where(t >= period, 0.0, t)


def indeterminate(xi, eta, radius2=INDETERMINATE_RADIUS2):
    return np.asarray(xi) ** 2 + np.asarray(eta) ** 2 < radius2


def element_angles(state, mesh):
    """Per-element angle and indeterminate flag from centroid-interpolated ``(xi, eta)``."""
    xi, eta = mesh.to_elements(state.xi), mesh.to_elements(state.eta)
    return theta_from_aux(xi, eta, state.n_sym), indeterminate(xi, eta)


def project_disc(xi, eta):
    r = np.hypot(xi, eta)
    scale = np.where(r > 1.0, 1.0 / np.maximum(r, 1.0), 1.0)
    return xi * scale, eta * scale


def update_orientation(state, theta_star, chi_f, alpha, tau, helmholtz):
    """Relax ``(xi, eta)`` toward ``chi_F * (cos 2 theta*, sin 2 theta*)``.

    ``theta_star`` and ``chi_f`` are element fields; their targets are averaged to
    the nodes before the two Neumann smoothing solves.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    mesh = helmholtz.mesh
    k = 2.0 * state.n_sym
    target_xi = mesh.to_nodes(chi_f * np.cos(k * theta_star))
    target_eta = mesh.to_nodes(chi_f * np.sin(k * theta_star))
    xi = helmholtz.solve((1.0 - alpha) * state.xi + alpha * target_xi, tau)
    eta = helmholtz.solve((1.0 - alpha) * state.eta + alpha * target_eta, tau)
    xi, eta = project_disc(xi, eta)
    return OrientationState(xi, eta, state.n_sym)
