"""P1 finite element assembly of the Robin form and its boundary-condition pencils.

Degrees of freedom for systems are ordered node-major: ``dof = node * m + alpha``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .coefficients import (
    DirichletLimit,
    LocalMultiplication,
    NonlocalKernel,
    SumOperator,
    Zero,
    identity_tensor,
)
from .errors import DimensionMismatch, NegativePotential, QuadratureSingularity

# Gauss-Legendre rule on [0, 1]
_G4_X, _G4_W = np.polynomial.legendre.leggauss(4)
GAUSS4_POINTS = 0.5 * (_G4_X + 1.0)
GAUSS4_WEIGHTS = 0.5 * _G4_W

# degree-4 rule on the reference triangle, barycentric coordinates, weights sum to 1
_A1, _B1, _W1 = 0.445948490915965, 0.108103018168070, 0.223381589678011
_A2, _B2, _W2 = 0.091576213509771, 0.816847572980459, 0.109951743655322
TRI_BARY = np.array([
    [_A1, _A1, _B1], [_A1, _B1, _A1], [_B1, _A1, _A1],
    [_A2, _A2, _B2], [_A2, _B2, _A2], [_B2, _A2, _A2],
])
TRI_WEIGHTS = np.array([_W1] * 3 + [_W2] * 3)


def p1_gradients(mesh):
    """Constant basis gradients per cell, shape ``(C, dim + 1, dim)``."""
    p = mesh.nodes[mesh.cells]
    if mesh.dim == 1:
        h = p[:, 1, 0] - p[:, 0, 0]
        g = np.stack([-1.0 / h, 1.0 / h], axis=1)
        return g[:, :, None]
    # gradients of barycentric coordinates: invert the affine map
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # (C, 2, 2) columns
    Jinv = np.linalg.inv(J)  # rows are grads of lambda_1, lambda_2
    g1, g2 = Jinv[:, 0, :], Jinv[:, 1, :]
    return np.stack([-g1 - g2, g1, g2], axis=1)


def _scatter(n_dofs, local_dofs, local_mats, dtype=float):
    out = np.zeros((n_dofs, n_dofs), dtype=dtype)
    k = local_dofs.shape[1]
    rows = np.repeat(local_dofs, k, axis=1).ravel()
    cols = np.tile(local_dofs, (1, k)).ravel()
    np.add.at(out, (rows, cols), local_mats.reshape(len(local_dofs), -1).ravel())
    return out


def _cell_dofs(mesh, m):
    cells = mesh.cells
    return (cells[:, :, None] * m + np.arange(m)[None, None, :]).reshape(len(cells), -1)


def assemble_stiffness(mesh, A=None, m=None):
    """Stiffness matrix with entries integral of <D phi_i, A D phi_j>.

    Parameters
    ----------
    mesh : Mesh
    A : TensorField, optional
        Defaults to the identity with ``m = 1``.
    m : int, optional
        System size; taken from ``A`` when omitted.
    """
    if A is None:
        A = identity_tensor(mesh.dim, m or 1)
    if m is not None and m != A.m:
        raise DimensionMismatch(f"tensor has m={A.m}, requested m={m}")
    if A.n != mesh.dim:
        raise DimensionMismatch(f"tensor has n={A.n}, mesh has dim {mesh.dim}")
    m = A.m
    a = A.on_cells(mesh)  # (C, m, m, n, n)
    G = p1_gradients(mesh)  # (C, k, n)
    vol = mesh.cell_measures
    # local[c, p, al, q, be] = vol * sum_jk G[c,p,j] a[c,al,be,j,k] G[c,q,k]
    local = np.einsum("c,cpj,cabjk,cqk->cpaqb", vol, G, a, G)
    kk = G.shape[1] * m
    S = _scatter(mesh.n_nodes * m, _cell_dofs(mesh, m), local.reshape(len(vol), kk, kk))
    return 0.5 * (S + S.T)


def _quadrature(mesh):
    """Cell quadrature points, weights and basis values."""
    p = mesh.nodes[mesh.cells]
    vol = mesh.cell_measures
    if mesh.dim == 1:
        bary = np.column_stack([1.0 - GAUSS4_POINTS, GAUSS4_POINTS])
        w = GAUSS4_WEIGHTS
    else:
        bary, w = TRI_BARY, TRI_WEIGHTS
    pts = np.einsum("qk,ckd->cqd", bary, p)
    weights = vol[:, None] * w[None, :]
    return pts, weights, bary


def assemble_mass(mesh, weight=None, m=1, potential=False):
    """Mass matrix with entries integral of w phi_i phi_j.

    With ``potential=True`` the weight is treated as a potential V and a
    negative quadrature value raises :class:`NegativePotential` unless the
    potential is flagged as signed.
    """
    if weight is None:
        vol = mesh.cell_measures
        k = mesh.cells.shape[1]
        ref = (np.ones((k, k)) + np.eye(k)) / ((k) * (k + 1))
        local = vol[:, None, None] * ref[None]
    else:
        pts, wq, bary = _quadrature(mesh)
        vals = np.array([[weight(x) for x in cell] for cell in pts])
        if not np.all(np.isfinite(vals)):
            raise QuadratureSingularity("weight is not finite at a quadrature point")
        if potential and not getattr(weight, "signed", False) and np.any(vals < 0):
            raise NegativePotential("potential is negative at a quadrature point")
        local = np.einsum("cq,qa,qb->cab", wq * vals, bary, bary)
    if m > 1:
        local = np.einsum("cab,xy->caxby", local, np.eye(m)).reshape(
            len(local), local.shape[1] * m, local.shape[1] * m)
    M = _scatter(mesh.n_nodes * m, _cell_dofs(mesh, m), local)
    return 0.5 * (M + M.T)


def lump(M):
    """Row-sum diagonal of a mass matrix, as a vector."""
    return np.asarray(M).sum(axis=1).real


def _facet_quadrature(mesh):
    """Quadrature points on the boundary.

    Returns points ``(Q, dim)``, weights ``(Q,)``, and a basis matrix
    ``Phi`` of shape ``(N, Q)`` with trace values of the hat functions.
    """
    pts, wts, cols = [], [], []
    if mesh.dim == 1:
        for f in mesh.facets:
            pts.append(mesh.nodes[f.nodes[0]])
            wts.append(f.measure)
            cols.append({f.nodes[0]: 1.0})
    else:
        for f in mesh.facets:
            a, b = f.nodes
            pa, pb = mesh.nodes[a], mesh.nodes[b]
            for s, w in zip(GAUSS4_POINTS, GAUSS4_WEIGHTS):
                pts.append((1 - s) * pa + s * pb)
                wts.append(w * f.measure)
                cols.append({a: 1 - s, b: s})
    Phi = np.zeros((mesh.n_nodes, len(pts)))
    for q, c in enumerate(cols):
        for i, v in c.items():
            Phi[i, q] += v
    return np.array(pts), np.array(wts), Phi


def _assemble_local(mesh, op):
    pts, wts, Phi = _facet_quadrature(mesh)
    theta = np.array([op.theta(x) for x in pts], dtype=float)
    if not np.all(np.isfinite(theta)):
        raise QuadratureSingularity("theta is not finite at a facet quadrature node")
    if op.lumped:
        return np.diag(Phi @ (wts * theta))
    return (Phi * (wts * theta)) @ Phi.T


def _assemble_nonlocal(mesh, op):
    pts, wts, Phi = _facet_quadrature(mesh)
    K = np.array([[op.k(x, y) for y in pts] for x in pts])
    if not np.all(np.isfinite(K)):
        raise QuadratureSingularity("kernel is not finite at a facet quadrature pair")
    if not np.iscomplexobj(K):
        K = K.astype(float)
    PW = Phi * wts
    B = PW @ K @ PW.T
    if op.form == "jump":
        B = np.diag(B.sum(axis=1)) - B
    return B


def assemble_boundary(mesh, theta, m=1):
    """Boundary matrix of the form <gamma u, Theta gamma v> by facet quadrature."""
    if isinstance(theta, DirichletLimit):
        raise ValueError("the Dirichlet limit has no boundary matrix")
    if isinstance(theta, Zero):
        B = np.zeros((mesh.n_nodes, mesh.n_nodes))
    elif isinstance(theta, LocalMultiplication):
        B = _assemble_local(mesh, theta)
    elif isinstance(theta, NonlocalKernel):
        B = _assemble_nonlocal(mesh, theta)
    elif isinstance(theta, SumOperator):
        B = sum((assemble_boundary(mesh, p) for p in theta.parts),
                np.zeros((mesh.n_nodes, mesh.n_nodes)))
    else:
        raise TypeError(f"unsupported boundary operator {theta!r}")
    if m > 1:
        B = np.kron(B, np.eye(m))
    return B


@dataclass(frozen=True, eq=False)
class OperatorPencil:
    """Symmetric pencil (S + B + M_V, M) with an optional Dirichlet reduction.

    All matrices are stored on the full set of degrees of freedom;
    ``free_dofs`` selects the rows and columns kept by the Dirichlet reduction.
    """

    S: np.ndarray
    M: np.ndarray
    M_lumped: np.ndarray
    B: np.ndarray
    M_V: np.ndarray
    bc: str
    dirichlet_dofs: np.ndarray
    m: int = 1
    mesh: object = None

    @property
    def n_dofs(self):
        return self.S.shape[0]

    @property
    def free_dofs(self):
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return np.flatnonzero(mask)

    @property
    def full_matrix(self):
        return self.S + self.B + self.M_V

    def reduce(self, X):
        f = self.free_dofs
        X = np.asarray(X)
        return X[np.ix_(f, f)] if X.ndim == 2 else X[f]

    @property
    def matrix(self):
        """Reduced operator matrix."""
        return self.reduce(self.full_matrix)

    @property
    def mass(self):
        return self.reduce(self.M)

    @property
    def lumped(self):
        return self.reduce(self.M_lumped)


def make_pencil(S, M, B=None, M_V=None, bc="robin", mesh=None, m=1, M_lumped=None):
    """Combine assembled matrices into an :class:`OperatorPencil`.

    ``bc`` is one of ``"neumann"``, ``"robin"`` and ``"dirichlet"``. The
    Dirichlet pencil drops the boundary degrees of freedom of ``mesh``.
    """
    S = np.asarray(S)
    M = np.asarray(M)
    n = S.shape[0]
    B = np.zeros_like(S) if B is None else np.asarray(B)
    M_V = np.zeros_like(S) if M_V is None else np.asarray(M_V)
    for name, X in (("M", M), ("B", B), ("M_V", M_V)):
        if X.shape != (n, n):
            raise DimensionMismatch(f"{name} has shape {X.shape}, expected {(n, n)}")
    if bc not in ("neumann", "robin", "dirichlet"):
        raise ValueError(f"unknown boundary condition {bc!r}")
    if bc == "dirichlet":
        if mesh is None:
            raise ValueError("a Dirichlet pencil needs the mesh to find boundary nodes")
        bn = mesh.boundary_nodes
        dd = (bn[:, None] * m + np.arange(m)[None, :]).ravel()
    else:
        dd = np.zeros(0, dtype=np.intp)
    if M_lumped is None:
        M_lumped = lump(M)
    return OperatorPencil(S, M, np.asarray(M_lumped), B, M_V, bc, dd, m, mesh)


def build_pencil(mesh, theta=None, A=None, V=None, m=None):
    """Assemble everything for one boundary regime on a mesh."""
    theta = Zero() if theta is None else theta
    S = assemble_stiffness(mesh, A, m)
    m = S.shape[0] // mesh.n_nodes
    M = assemble_mass(mesh, m=m)
    M_V = assemble_mass(mesh, V, m=m, potential=True) if V is not None else None
    if isinstance(theta, DirichletLimit):
        return make_pencil(S, M, None, M_V, "dirichlet", mesh, m)
    B = assemble_boundary(mesh, theta, m)
    bc = "neumann" if isinstance(theta, Zero) else "robin"
    return make_pencil(S, M, B, M_V, bc, mesh, m)


def coercivity_constant(p):
    """Smallest kappa with u'(S+B)u + kappa u'Mu >= (S-norm + M-norm)/6 on the pencil's space.

    Equivalent to ``1/6 - lambda_min((5/6) S + B, M)``.
    """
    Q = p.reduce(5.0 / 6.0 * p.S + p.B)
    lam = scipy.linalg.eigh(0.5 * (Q + Q.conj().T), p.mass, eigvals_only=True,
                            subset_by_index=[0, 0])[0]
    return 1.0 / 6.0 - float(lam)


@dataclass(frozen=True)
class TraceConstants:
    pairs: tuple
    slope: float


def trace_inequality_constants(mesh, eps_grid):
    """beta(eps) = max of (|gamma u|^2 - eps |Du|^2) / |u|^2 over the P1 space.

    The reported slope is the least-squares exponent of beta against 1/eps.
    """
    eps_grid = [float(e) for e in eps_grid]
    if any(e <= 0 for e in eps_grid):
        raise ValueError("eps must be positive")
    S = assemble_stiffness(mesh)
    M = assemble_mass(mesh)
    B1 = assemble_boundary(mesh, LocalMultiplication.constant(1.0))
    n = S.shape[0]
    pairs = []
    for e in eps_grid:
        beta = scipy.linalg.eigh(B1 - e * S, M, eigvals_only=True,
                                 subset_by_index=[n - 1, n - 1])[0]
        pairs.append((e, float(beta)))
    slope = float("nan")
    if len(pairs) >= 2:
        x = np.log([1.0 / e for e, _ in pairs])
        y = np.log([b for _, b in pairs])
        slope = float(np.polyfit(x, y, 1)[0])
    return TraceConstants(tuple(pairs), slope)


@dataclass(frozen=True, eq=False)
class BoundaryFunctional:
    values: np.ndarray
    boundary_dofs: np.ndarray

    def on_boundary(self):
        return self.values[self.boundary_dofs]


def weak_neumann_trace(p, u, f, lumped=False):
    """Discrete weak conormal derivative: (S + M_V) u - M f on boundary dofs.

    ``lumped=True`` uses the lumped mass for the source term, which matches
    eigenpairs computed against the lumped mass.
    """
    if p.bc == "dirichlet":
        raise ValueError("weak Neumann trace needs an unreduced pencil")
    u = np.asarray(u)
    f = np.asarray(f)
    if u.shape != (p.n_dofs,) or f.shape != (p.n_dofs,):
        raise DimensionMismatch(f"vectors must have length {p.n_dofs}")
    Mf = p.M_lumped * f if lumped else p.M @ f
    r = (p.S + p.M_V) @ u - Mf
    bn = p.mesh.boundary_nodes
    bd = (bn[:, None] * p.m + np.arange(p.m)[None, :]).ravel()
    vals = np.zeros_like(r)
    vals[bd] = r[bd]
    return BoundaryFunctional(vals, bd)


def write_coo(X, path):
    """Write nonzero entries as ``row col value`` lines."""
    X = np.asarray(X)
    r, c = np.nonzero(X)
    with open(path, "w") as fh:
        for i, j in zip(r, c):
            fh.write(f"{i} {j} {X[i, j]!r}\n")
