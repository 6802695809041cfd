"""Plane-stress linear elasticity on a structured grid of bilinear quadrilaterals.

Node ``(ix, iy)`` has index ``iy * (nx + 1) + ix``; element ``(ix, iy)`` has index
``iy * nx + ix`` and counter-clockwise nodes starting at its lower-left corner.
Element stiffness tensors are Mandel 3x3 matrices (see ``tensor2d``), so the
strain-displacement operator carries sqrt(2) on its shear row.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverFailure
from .tensor2d import SQRT2, mandel_to_strain

_GAUSS = np.array([-1.0, 1.0]) / np.sqrt(3.0)
_XI = np.array([-1.0, 1.0, 1.0, -1.0])
_ETA = np.array([-1.0, -1.0, 1.0, 1.0])


def _shape_gradients(xi, eta, dx, dy):
    """Physical gradients (4, 2) of the bilinear shape functions on a dx-by-dy cell."""
    dN_dxi = 0.25 * _XI * (1.0 + eta * _ETA)
    dN_deta = 0.25 * _ETA * (1.0 + xi * _XI)
    return np.stack([dN_dxi * 2.0 / dx, dN_deta * 2.0 / dy], axis=1)


def _b_matrix(grad):
    """Mandel strain-displacement matrix (3, 8) for dofs ordered (u0x, u0y, u1x, ...)."""
    B = np.zeros((3, 8))
    B[0, 0::2] = grad[:, 0]
    B[1, 1::2] = grad[:, 1]
    B[2, 0::2] = grad[:, 1] / SQRT2
    B[2, 1::2] = grad[:, 0] / SQRT2
    return B


class Mesh:
    """Rectangular domain ``[0, width] x [0, height]`` split into ``nx * ny`` quads.

    ``support`` selects the fixed boundary on the left edge: ``"clamped"`` fixes
    both displacement components, ``"roller"`` fixes ``u_x`` on the edge and
    ``u_y`` at the lower-left corner, ``None`` leaves the body unconstrained.
    The traction boundary is the part of the right edge with
    ``load_segment[0] <= y <= load_segment[1]``.
    """

    def __init__(self, width=2.0, height=1.0, nx=160, ny=80, support="clamped",
                 load_segment=None):
        if nx < 2 or ny < 2:
            raise ValueError("nx and ny must be at least 2")
        if width <= 0 or height <= 0:
            raise ValueError("domain dimensions must be positive")
        self.width = float(width)
        self.height = float(height)
        self.nx = int(nx)
        self.ny = int(ny)
        self.dx = self.width / self.nx
        self.dy = self.height / self.ny
        self.support = support
        if load_segment is None:
            load_segment = (0.5 * height - 0.05, 0.5 * height + 0.05)
        self.load_segment = (float(load_segment[0]), float(load_segment[1]))

        ix, iy = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
        self.coords = np.column_stack([ix.ravel() * self.dx, iy.ravel() * self.dy])
        ex, ey = np.meshgrid(np.arange(nx), np.arange(ny))
        n0 = (ey * (nx + 1) + ex).ravel()
        self.elements = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])
        self.centroids = self.coords[self.elements].mean(axis=1)
        self.fixed_dofs = self._fixed_dofs(support)

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_elements(self):
        return self.nx * self.ny

    @property
    def element_area(self):
        return self.dx * self.dy

    @property
    def h(self):
        """Characteristic element size."""
        return max(self.dx, self.dy)

    def node_index(self, ix, iy):
        return iy * (self.nx + 1) + ix

    def _fixed_dofs(self, support):
        left = self.node_index(0, np.arange(self.ny + 1))
        if support is None:
            return np.array([], dtype=int)
        if support == "clamped":
            return np.sort(np.concatenate([2 * left, 2 * left + 1]))
        if support == "roller":
            return np.sort(np.concatenate([2 * left, [2 * left[0] + 1]]))
        raise ValueError(f"unknown support {support!r}")

    @cached_property
    def free_dofs(self):
        mask = np.ones(2 * self.n_nodes, dtype=bool)
        mask[self.fixed_dofs] = False
        return np.flatnonzero(mask)

    @cached_property
    def element_dofs(self):
        d = np.empty((self.n_elements, 8), dtype=int)
        d[:, 0::2] = 2 * self.elements
        d[:, 1::2] = 2 * self.elements + 1
        return d

    @cached_property
    def stiffness_basis(self):
        """``Kb[p, q]`` (3, 3, 8, 8): element stiffness for a Mandel tensor with a single unit entry."""
        Kb = np.zeros((3, 3, 8, 8))
        w = 0.25 * self.dx * self.dy  # 2x2 Gauss, unit weights, detJ = dx*dy/4
        for xi in _GAUSS:
            for eta in _GAUSS:
                B = _b_matrix(_shape_gradients(xi, eta, self.dx, self.dy))
                Kb += w * np.einsum("pi,qj->pqij", B, B)
        return Kb

    @cached_property
    def centroid_b(self):
        return _b_matrix(_shape_gradients(0.0, 0.0, self.dx, self.dy))

    @cached_property
    def _reduced_pattern(self):
        rows = np.repeat(self.element_dofs, 8, axis=1).ravel()
        cols = np.tile(self.element_dofs, (1, 8)).ravel()
        remap = -np.ones(2 * self.n_nodes, dtype=int)
        remap[self.free_dofs] = np.arange(self.free_dofs.size)
        keep = (remap[rows] >= 0) & (remap[cols] >= 0)
        return keep, remap[rows[keep]], remap[cols[keep]]

    @cached_property
    def element_to_node(self):
        """Area-weighted averaging operator, sparse (n_nodes, n_elements)."""
        rows = self.elements.ravel()
        cols = np.repeat(np.arange(self.n_elements), 4)
        P = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(self.n_nodes, self.n_elements))
        counts = np.asarray(P.sum(axis=1)).ravel()
        return sp.diags(1.0 / counts) @ P

    @cached_property
    def node_to_element(self):
        """Centroid interpolation operator, sparse (n_elements, n_nodes)."""
        rows = np.repeat(np.arange(self.n_elements), 4)
        return sp.csr_matrix((np.full(rows.size, 0.25), (rows, self.elements.ravel())),
                             shape=(self.n_elements, self.n_nodes))

    def to_elements(self, node_field):
        return self.node_to_element @ node_field

    def to_nodes(self, element_field):
        return self.element_to_node @ element_field

    def load_vector(self, traction):
        """Consistent nodal forces of a constant traction on the loaded right-edge segment."""
        traction = np.asarray(traction, dtype=float)
        f = np.zeros(2 * self.n_nodes)
        y0, y1 = self.load_segment
        for iy in range(self.ny):
            lo, hi = iy * self.dy, (iy + 1) * self.dy
            a, b = max(lo, y0), min(hi, y1)
            if b <= a:
                continue
            # exact integrals of the two linear edge shape functions over [a, b]
            s0, s1 = (a - lo) / self.dy, (b - lo) / self.dy
            w_top = 0.5 * (s1 * s1 - s0 * s0) * self.dy
            w_bot = (b - a) - w_top
            nb, nt = self.node_index(self.nx, iy), self.node_index(self.nx, iy + 1)
            f[2 * nb:2 * nb + 2] += w_bot * traction
            f[2 * nt:2 * nt + 2] += w_top * traction
        return f


@dataclass(frozen=True)
class SolveState:
    u: np.ndarray
    strain: np.ndarray  # (n_elements, 2, 2) at centroids
    compliance: float
    load: np.ndarray

    @property
    def strain_mandel(self):
        from .tensor2d import strain_to_mandel
        return strain_to_mandel(self.strain)


def element_matrices(mesh, C):
    """Element stiffness matrices (n_elements, 8, 8) for per-element Mandel tensors."""
    C = np.asarray(C, dtype=float)
    if C.ndim == 2:
        C = np.broadcast_to(C, (mesh.n_elements, 3, 3))
    return np.einsum("epq,pqij->eij", C, mesh.stiffness_basis, optimize=True)


def assemble(mesh, C):
    """Full (unreduced) sparse stiffness matrix."""
    Ke = element_matrices(mesh, C)
    rows = np.repeat(mesh.element_dofs, 8, axis=1).ravel()
    cols = np.tile(mesh.element_dofs, (1, 8)).ravel()
    n = 2 * mesh.n_nodes
    return sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))


def _factorize(A):
    try:
        lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise SolverFailure(f"sparse factorization failed: {exc}") from exc
    return lu


def element_strains(mesh, u):
    ue = u[mesh.element_dofs]
    e = ue @ mesh.centroid_b.T
    return mandel_to_strain(e)


def assemble_and_solve(mesh, C, traction=(0.0, -1.0)):
    """Solve static equilibrium for per-element stiffness ``C`` (Mandel, (m, 3, 3)).

    Returns displacements, centroid strains and the compliance ``f . u``.
    """
    if mesh.fixed_dofs.size == 0:
        raise ValueError("mesh has no fixed boundary: rigid-body modes are unconstrained")
    f = mesh.load_vector(traction)
    u = np.zeros(2 * mesh.n_nodes)
    if np.any(f):
        keep, r, c = mesh._reduced_pattern
        Ke = element_matrices(mesh, C)
        nf = mesh.free_dofs.size
        K = sp.csc_matrix((Ke.ravel()[keep], (r, c)), shape=(nf, nf))
        lu = _factorize(K)
        uf = lu.solve(f[mesh.free_dofs])
        if not np.all(np.isfinite(uf)):
            raise SolverFailure("linear solve produced non-finite displacements")
        u[mesh.free_dofs] = uf
    return SolveState(u=u, strain=element_strains(mesh, u), compliance=float(f @ u), load=f)


def solve_dirichlet(mesh, C, dofs, values, f=None):
    """Solve with prescribed displacements ``values`` on ``dofs`` and optional nodal forces."""
    K = assemble(mesh, C).tocsr()
    n = K.shape[0]
    dofs = np.asarray(dofs)
    u = np.zeros(n)
    u[dofs] = values
    free = np.setdiff1d(np.arange(n), dofs)
    rhs = -K[free][:, dofs] @ u[dofs]
    if f is not None:
        rhs = rhs + f[free]
    u[free] = _factorize(K[free][:, free]).solve(rhs)
    return u


def compliance(state, traction=None, mesh=None):
    """Boundary work ``int t . u`` of a solved state."""
    f = state.load if traction is None else mesh.load_vector(traction)
    return float(f @ state.u)


class Helmholtz:
    """Neumann solver for ``(Id - tau * Laplace) w = f`` with cached factorisations.

    Bilinear Laplacian with a lumped mass matrix; the lumped system is an
    M-matrix, so solutions stay within the range of ``f``.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        self._lu = {}
        Le = np.zeros((4, 4))
        for xi in _GAUSS:
            for eta in _GAUSS:
                g = _shape_gradients(xi, eta, mesh.dx, mesh.dy)
                Le += 0.25 * mesh.dx * mesh.dy * g @ g.T
        rows = np.repeat(mesh.elements, 4, axis=1).ravel()
        cols = np.tile(mesh.elements, (1, 4)).ravel()
        n = mesh.n_nodes
        self.laplacian = sp.csc_matrix((np.tile(Le.ravel(), mesh.n_elements), (rows, cols)), shape=(n, n))
        lumped = np.zeros(n)
        np.add.at(lumped, mesh.elements.ravel(), 0.25 * mesh.element_area)
        self.mass = lumped

    def _factor(self, tau):
        lu = self._lu.get(tau)
        if lu is None:
            A = sp.diags(self.mass) + tau * self.laplacian
            lu = self._lu[tau] = _factorize(A)
        return lu

    def solve(self, f, tau):
        if tau < 0:
            raise ValueError("tau must be nonnegative")
        f = np.asarray(f, dtype=float)
        if tau == 0:
            return f.copy()
        w = self._factor(float(tau)).solve(self.mass * f)
        if not np.all(np.isfinite(w)):
            raise SolverFailure("Helmholtz solve produced non-finite values")
        return w

    def mean(self, w):
        return float(self.mass @ w / self.mass.sum())


def helmholtz_solve(mesh, f, tau):
    """One-shot convenience wrapper around :class:`Helmholtz`."""
    return Helmholtz(mesh).solve(f, tau)
