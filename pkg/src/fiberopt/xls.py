"""Extended level sets for the three phases V (void), I (isotropic) and F (fibre).

One signed field per unordered pair, ``phi_ab > 0`` meaning phase ``a`` wins
over ``b``; the reversed orientation is ``phi_ba = -phi_ab``. Phase ``a``
occupies the points where it wins against every other phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFraction
from .tensor2d import PHASES

PAIRS = (("V", "I"), ("V", "F"), ("I", "F"))


@dataclass(frozen=True)
class XlsState:
    phi_VI: np.ndarray
    phi_VF: np.ndarray
    phi_IF: np.ndarray

    def phi(self, a, b):
        if a == b:
            raise ValueError("phi is undefined for identical phases")
        key = f"phi_{a}{b}"
        if hasattr(self, key):
            return getattr(self, key)
        return -getattr(self, f"phi_{b}{a}")

    def as_matrix(self):
        """Antisymmetric array ``P[a, b] = phi_ab`` of shape (3, 3, ...)."""
        shape = np.shape(self.phi_VI)
        P = np.zeros((3, 3) + shape)
        for a, b in PAIRS:
            i, j = PHASES.index(a), PHASES.index(b)
            P[i, j] = self.phi(a, b)
            P[j, i] = -P[i, j]
        return P

    @classmethod
    def from_matrix(cls, P):
        return cls(phi_VI=P[0, 1].copy(), phi_VF=P[0, 2].copy(), phi_IF=P[1, 2].copy())

    @classmethod
    def constant(cls, n, value=0.0):
        return cls(*(np.full(n, float(value)) for _ in range(3)))

    def map(self, fn):
        return XlsState(fn(self.phi_VI), fn(self.phi_VF), fn(self.phi_IF))

    def fields(self):
        return {"phi_VI": self.phi_VI, "phi_VF": self.phi_VF, "phi_IF": self.phi_IF}


def heaviside(s):
    """Sharp Heaviside with ``H(0) = 1``."""
    return (np.asarray(s) >= 0).astype(float)


def approx_heaviside(s):
    """Quintic C1 approximation of the Heaviside function on [-1, 1]."""
    s = np.asarray(s, dtype=float)
    c = np.clip(s, -1.0, 1.0)
    return 0.5 + c * (15.0 / 16.0 - c * c * (5.0 / 8.0 - 3.0 / 16.0 * c * c))


def characteristic(state):
    """Hard indicators ``(chi_V, chi_I, chi_F)`` stacked into shape (3, ...)."""
    P = state.as_matrix()
    chi = np.ones((3,) + P.shape[2:])
    for a in range(3):
        for b in range(3):
            if a != b:
                chi[a] *= heaviside(P[a, b])
    return chi


def smoothed_characteristic(state, w_m=0.5, eps_chi=1e-3):
    """Blended phase fractions of shape (3, ...); they sum to one pointwise."""
    if not 0 < w_m < 1:
        raise ValueError("w_m must lie in (0, 1)")
    P = state.as_matrix()
    first = np.ones((3,) + P.shape[2:])
    for a in range(3):
        for b in range(3):
            if a != b:
                first[a] *= approx_heaviside(P[a, b] / w_m)
    second = first.copy()
    for a in range(3):
        rest = np.ones_like(first[0])
        for b in range(3):
            if b != a:
                rest *= 1.0 - first[b]
        second[a] += eps_chi * rest
    total = second.sum(axis=0)
    if np.any(total <= np.finfo(float).tiny):
        raise DegenerateFraction("phase fractions sum to zero; increase eps_chi")
    return second / total


def project_pairs(P, rule="winner"):
    """Constrained level sets for an antisymmetric ``(M, M, ...)`` array.

    ``rule="winner"`` scores each phase by ``psi_a = prod_b (phi_ab + 1) / 2`` (how
    strongly it beats all others) and returns ``phi_ab = psi_a - psi_b``; exactly
    one phase wins wherever the scores have no tie.

    ``rule="loser"`` is the mirrored form ``psi_a = prod_b (phi_ba + 1) / 2``,
    ``phi_ba = psi_a - psi_b``. It also partitions generic fields but ties two
    phases whenever the winning phase's rival pair is saturated, e.g. pure I with
    ``phi_VF = 1`` gives ``psi_V = psi_I = 0``.
    """
    M = P.shape[0]
    psi = np.ones((M,) + P.shape[2:])
    for a in range(M):
        for b in range(M):
            if a == b:
                continue
            if rule == "winner":
                psi[a] *= 0.5 * (P[a, b] + 1.0)
            elif rule == "loser":
                psi[a] *= 0.5 * (P[b, a] + 1.0)
            else:
                raise ValueError(f"unknown projection rule {rule!r}")
    out = np.empty_like(P)
    for a in range(M):
        for b in range(M):
            if rule == "winner":
                out[a, b] = psi[a] - psi[b]
            else:
                out[b, a] = psi[a] - psi[b]
    return out


def project_constraint(state, rule="winner"):
    return XlsState.from_matrix(project_pairs(state.as_matrix(), rule=rule))


def clamp(state):
    return state.map(lambda p: np.clip(p, -1.0, 1.0))


def update_levelsets(state, dl, alpha, tau, helmholtz, project=True, rule="winner"):
    """One reaction-diffusion step for every pair.

    ``dl`` maps each pair ``(a, b)`` in :data:`PAIRS` to an element field; it is
    averaged to the nodes, then ``(Id - tau Laplace) phi_new = phi - alpha dl``
    is solved with Neumann conditions, followed by clamping and (optionally) the
    partition projection. ``alpha`` and ``tau`` are scalars or per-pair dicts.
    """
    mesh = helmholtz.mesh
    new = {}
    for pair in PAIRS:
        a_ab = alpha[pair] if isinstance(alpha, dict) else alpha
        t_ab = tau[pair] if isinstance(tau, dict) else tau
        if a_ab <= 0 or t_ab < 0:
            raise ValueError("step sizes must be positive and regularisation nonnegative")
        rhs = state.phi(*pair) - a_ab * mesh.to_nodes(dl[pair])
        new["phi_" + "".join(pair)] = helmholtz.solve(rhs, t_ab)
    out = clamp(XlsState(**new))
    if project:
        out = project_constraint(out, rule=rule)
    return out
