"""Coefficient data: the tensor A, the potential V and the boundary operator Theta.

Tensor layout is ``a[alpha, beta, j, k]`` with ``alpha, beta`` the system
indices (size ``m``) and ``j, k`` the space indices (size ``n``). The form
contribution is ``sum conj(D_j u_alpha) a[alpha, beta, j, k] D_k v_beta``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonSymmetricTensor

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TensorField:
    """Coefficient tensor, either per cell or as a point function.

    Exactly one of ``cell_values`` (shape ``(C, m, m, n, n)``) and ``func``
    (point ``x`` of shape ``(n,)`` to array ``(m, m, n, n)``) is set.
    """

    m: int
    n: int
    func: Callable | None = None
    cell_values: np.ndarray | None = None

    def __post_init__(self):
        if (self.func is None) == (self.cell_values is None):
            raise ValueError("give exactly one of func and cell_values")
        if self.cell_values is not None:
            v = np.asarray(self.cell_values, dtype=float)
            if v.ndim == 3:  # scalar systems given as (C, n, n)
                v = v[:, None, None, :, :]
            if v.shape[1:] != (self.m, self.m, self.n, self.n):
                raise ValueError(f"cell values have shape {v.shape}")
            v.setflags(write=False)
            object.__setattr__(self, "cell_values", v)

    def at_point(self, x):
        a = np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)
        return a.reshape(self.m, self.m, self.n, self.n)

    def on_cells(self, mesh):
        """Per-cell tensors, shape ``(C, m, m, n, n)``; point functions at centroids."""
        if self.cell_values is not None:
            if len(self.cell_values) != len(mesh.cells):
                raise ValueError("cell value count does not match the mesh")
            vals = self.cell_values
        else:
            centroids = mesh.nodes[mesh.cells].mean(axis=1)
            vals = np.array([self.at_point(c) for c in centroids])
        for a in vals:
            _require_symmetric(a)
        return vals

    def samples(self, samples):
        if self.cell_values is not None:
            return self.cell_values[np.asarray(samples, dtype=np.intp)]
        return np.array([self.at_point(s) for s in samples])


def identity_tensor(n, m=1):
    a = np.einsum("ab,jk->abjk", np.eye(m), np.eye(n))
    return TensorField(m, n, func=lambda x: a)


def constant_tensor(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 2:
        a = a[None, None]
    m, n = a.shape[0], a.shape[2]
    return TensorField(m, n, func=lambda x: a)


def diagonal_tensor(diag):
    return constant_tensor(np.diag(np.asarray(diag, dtype=float)))


def checkerboard_tensor(n, low=1.0, high=10.0, period=0.5):
    """Scalar isotropic coefficient alternating between two values on square tiles."""
    def a(x):
        parity = int(np.sum(np.floor(np.asarray(x) / period))) % 2
        return (high if parity else low) * np.eye(n)[None, None]

    return TensorField(1, n, func=a)


def random_cell_tensor(mesh, lo, hi, rng, m=1):
    """Symmetric per-cell tensors whose Legendre matrix has spectrum in [lo, hi]."""
    n = mesh.dim
    k = m * n
    vals = np.empty((len(mesh.cells), m, m, n, n))
    for c in range(len(mesh.cells)):
        q, _ = np.linalg.qr(rng.standard_normal((k, k)))
        mat = (q * rng.uniform(lo, hi, size=k)) @ q.T
        mat = 0.5 * (mat + mat.T)
        vals[c] = mat.reshape(m, n, m, n).transpose(0, 2, 1, 3)
    return TensorField(m, n, cell_values=vals)


def legendre_matrix(a):
    """The (mn)x(mn) matrix of the form zeta -> sum a[al,be,j,k] zeta_{al,j} zeta_{be,k}."""
    m, n = a.shape[0], a.shape[2]
    mat = np.asarray(a).transpose(0, 2, 1, 3).reshape(m * n, m * n)
    return mat


def _require_symmetric(a):
    mat = legendre_matrix(a)
    scale = max(1.0, float(np.max(np.abs(mat))))
    if np.max(np.abs(mat - mat.conj().T)) > SYMMETRY_TOL * scale:
        raise NonSymmetricTensor("a[al,be,j,k] != conj(a[be,al,k,j])")


@dataclass(frozen=True)
class EllipticityReport:
    a0: float
    a1: float
    legendre_ok: bool


def check_ellipticity(A, samples=None):
    """Extreme eigenvalues of the symmetrized Legendre form over the samples.

    Parameters
    ----------
    A : TensorField
    samples : sequence
        Points for a point-function tensor, cell indices for a per-cell one.
        Per-cell tensors default to all cells.
    """
    if samples is None:
        if A.cell_values is None:
            raise ValueError("samples are required for a point-function tensor")
        samples = np.arange(len(A.cell_values))
    vals = A.samples(samples)
    if len(vals) == 0:
        raise ValueError("samples must be nonempty")
    a0, a1 = np.inf, -np.inf
    for a in vals:
        _require_symmetric(a)
        mat = legendre_matrix(a)
        ev = np.linalg.eigvalsh(0.5 * (mat + mat.conj().T).real)
        a0 = min(a0, float(ev[0]))
        a1 = max(a1, float(ev[-1]))
    return EllipticityReport(a0, a1, a0 > 0)


@dataclass(frozen=True, eq=False)
class ScalarPotential:
    """Potential V; ``signed=True`` marks the perturbative branch W <= 0."""

    func: Callable
    signed: bool = False

    def __call__(self, x):
        return float(self.func(np.asarray(x, dtype=float)))


# boundary operators ---------------------------------------------------------


@dataclass(frozen=True)
class Zero:
    """Theta = 0, the Neumann condition."""


@dataclass(frozen=True, eq=False)
class LocalMultiplication:
    """Multiplication by a real function theta on the boundary.

    ``lumped=True`` (default) assembles the row-sum diagonal boundary mass.
    """

    theta: Callable
    lumped: bool = True

    @classmethod
    def constant(cls, value, lumped=True):
        value = float(value)
        return cls(lambda xi: value, lumped=lumped)


@dataclass(frozen=True, eq=False)
class NonlocalKernel:
    """Integral operator on the boundary with Hermitian kernel k(xi, eta).

    ``form="pairing"`` gives the plain double integral of k u(eta) conj v(xi).
    ``form="jump"`` gives (1/2) double integral of k |u(xi) - u(eta)|^2, whose
    operator is ``diag(k 1) - k``.
    """

    k: Callable
    form: str = "pairing"

    def __post_init__(self):
        if self.form not in ("pairing", "jump"):
            raise ValueError(f"unknown nonlocal form {self.form!r}")


@dataclass(frozen=True)
class DirichletLimit:
    """The formal limit theta -> infinity, realized by eliminating boundary dofs."""


@dataclass(frozen=True, eq=False)
class SumOperator:
    parts: tuple = field(default=())


def boundary_operator_kind(theta):
    for cls, name in ((Zero, "neumann"), (DirichletLimit, "dirichlet")):
        if isinstance(theta, cls):
            return name
    return "robin"


def theta_structure_check(theta, mesh):
    """Self-adjointness and nonnegativity of the assembled boundary matrix."""
    from .assembly import assemble_boundary

    if isinstance(theta, DirichletLimit):
        return {"selfadjoint": True, "nonneg": True}
    B = assemble_boundary(mesh, theta)
    scale = max(1.0, float(np.max(np.abs(B))))
    selfadjoint = bool(np.max(np.abs(B - B.conj().T)) <= SYMMETRY_TOL * scale)
    bd = mesh.boundary_nodes
    sub = B[np.ix_(bd, bd)]
    ev = np.linalg.eigvalsh(0.5 * (sub + sub.conj().T))
    return {"selfadjoint": selfadjoint, "nonneg": bool(ev[0] >= -1e-12)}


def _modulus_gap(B, u):
    # <|u|, B|u|> - <u, B u>; positive means the modulus condition is violated
    au = np.abs(u)
    return float(np.real(au @ B @ au - u.conj() @ B @ u))


def modulus_condition_witness(theta, mesh, trials=1000, seed=0, tol=1e-10):
    """Search for a real trace u with <|u|,B|u|> > <u,Bu> + tol.

    Boundary sets of at most 8 nodes are also enumerated exhaustively over
    sign patterns of a random positive magnitude vector. Returns ``None`` if
    no witness is found, otherwise the witness as a full-length vector.
    """
    from .assembly import assemble_boundary

    B = assemble_boundary(mesh, theta)
    bd = mesh.boundary_nodes
    sub = B[np.ix_(bd, bd)]
    scale = max(1.0, float(np.max(np.abs(sub))))
    rng = np.random.default_rng(seed)

    def full(v):
        out = np.zeros(mesh.n_nodes)
        out[bd] = v
        return out

    for _ in range(trials):
        u = rng.standard_normal(len(bd))
        if _modulus_gap(sub, u) > tol * scale * float(u @ u):
            return full(u)
    if len(bd) <= 8:
        mag = rng.uniform(0.5, 1.5, size=len(bd))
        for signs in itertools.product((1.0, -1.0), repeat=len(bd)):
            u = mag * np.array(signs)
            if _modulus_gap(sub, u) > tol * scale * float(u @ u):
                return full(u)
    return None


def theta_modulus_condition_check(theta, mesh, trials=1000, seed=0):
    """True iff no random (or enumerated) trace violates the modulus condition."""
    return modulus_condition_witness(theta, mesh, trials, seed) is None


# catalog --------------------------------------------------------------------


def rank_one_kernel(phi):
    return NonlocalKernel(lambda xi, eta: phi(xi) * phi(eta))


def cosine_kernel(amplitude=1.0, frequency=1.0):
    """k(xi, eta) = amplitude * cos(frequency * |xi - eta|)."""
    return NonlocalKernel(
        lambda xi, eta: amplitude * np.cos(frequency * np.linalg.norm(np.asarray(xi) - np.asarray(eta))))
