"""Spectral calculus on pencils: eigenpairs, heat and Green kernels, heat trace.

Kernels follow the lumped-mass convention: the semigroup acts on nodal
coefficients as ``E(t) f = K(t) (w * f)`` with ``w`` the lumped mass, so
kernel entries are the discrete analog of pointwise kernel values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import ShiftAtSpectrum, SingularMass

SIGN_TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Full eigendecomposition on the free degrees of freedom.

    ``eigenvectors`` are orthonormal with respect to the mass used
    (``mass_kind`` is ``"lumped"`` or ``"consistent"``).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    pencil: object
    mass_kind: str = "lumped"

    @property
    def mass_matrix(self):
        p = self.pencil
        return np.diag(p.lumped) if self.mass_kind == "lumped" else p.mass

    def embed(self, X):
        """Zero-extend free-dof rows (and columns) to all dofs."""
        p = self.pencil
        f = p.free_dofs
        X = np.asarray(X)
        if X.ndim == 1:
            out = np.zeros(p.n_dofs, dtype=X.dtype)
            out[f] = X
            return out
        if X.shape[0] == X.shape[1] == len(f):
            out = np.zeros((p.n_dofs, p.n_dofs), dtype=X.dtype)
            out[np.ix_(f, f)] = X
            return out
        out = np.zeros((p.n_dofs,) + X.shape[1:], dtype=X.dtype)
        out[f] = X
        return out


def _normalize_signs(V):
    for k in range(V.shape[1]):
        col = V[:, k]
        mag = np.abs(col)
        top = mag.max()
        first = int(np.flatnonzero(mag >= top * (1 - SIGN_TIE_RTOL))[0])
        if col[first].real < 0:
            V[:, k] = -col
    return V


def eigensolve(p, mass="lumped"):
    """Dense generalized eigendecomposition of the pencil.

    Parameters
    ----------
    p : OperatorPencil
    mass : {"lumped", "consistent"}
        Mass matrix of the pencil. The lumped mass matches the kernel
        convention and preserves the discrete maximum principle.
    """
    A = p.matrix
    A = 0.5 * (A + A.conj().T)
    if mass == "lumped":
        w = p.lumped
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise SingularMass("lumped mass has a nonpositive entry")
        s = 1.0 / np.sqrt(w)
        C = A * s[:, None] * s[None, :]
        lam, Q = scipy.linalg.eigh(0.5 * (C + C.conj().T))
        V = Q * s[:, None]
    elif mass == "consistent":
        try:
            lam, V = scipy.linalg.eigh(A, p.mass)
        except np.linalg.LinAlgError as exc:
            raise SingularMass(str(exc)) from exc
    else:
        raise ValueError(f"unknown mass kind {mass!r}")
    return SpectralDecomposition(lam, _normalize_signs(V), p, mass)


@dataclass(frozen=True, eq=False)
class KernelGrid:
    """Kernel values on the full node set.

    ``kind`` is ``"heat"`` (parameter is the time t) or ``"green"``
    (parameter is the shift lambda). ``weights`` is the lumped mass on all
    dofs; ``free`` marks dofs not eliminated by a Dirichlet condition.
    """

    kind: str
    parameter: float
    matrix: np.ndarray
    bc: str
    nodes: np.ndarray
    weights: np.ndarray
    free: np.ndarray

    @property
    def semigroup(self):
        """Action on coefficients, K diag(w)."""
        return self.matrix * self.weights[None, :]

    def distances(self):
        diff = self.nodes[:, None, :] - self.nodes[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))


def _kernel_grid(d, kind, param, values):
    p = d.pencil
    V = d.eigenvectors
    K = (V * values[None, :]) @ V.conj().T
    K = 0.5 * (K + K.conj().T)
    if not np.iscomplexobj(p.matrix):
        K = K.real
    free = np.zeros(p.n_dofs, dtype=bool)
    free[p.free_dofs] = True
    nodes = p.mesh.nodes if p.mesh is not None else np.arange(p.n_dofs, dtype=float)[:, None]
    if p.m > 1:
        nodes = np.repeat(nodes, p.m, axis=0)
    return KernelGrid(kind, float(param), d.embed(K), p.bc, nodes, np.asarray(p.M_lumped), free)


def heat_kernel(d, t):
    """K(t) = V diag(exp(-t lambda)) V^T, zero-extended over Dirichlet dofs."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return _kernel_grid(d, "heat", t, np.exp(-t * d.eigenvalues))


def semigroup_matrix(d, t):
    """E(t) acting on free coefficients, V diag(exp(-t lambda)) V^T M."""
    V = d.eigenvectors
    return (V * np.exp(-t * d.eigenvalues)[None, :]) @ V.conj().T @ d.mass_matrix


def green_kernel(d, shift):
    """G = V diag(1 / (lambda + shift)) V^T, the resolvent kernel."""
    lam0 = d.eigenvalues[0]
    if shift <= -lam0 + 1e-12 * (1 + abs(lam0)):
        raise ShiftAtSpectrum(f"shift {shift} does not exceed -lambda_0 = {-lam0}")
    return _kernel_grid(d, "green", shift, 1.0 / (d.eigenvalues + shift))


def heat_trace(d, t):
    if not t > 0:
        raise ValueError("t must be positive")
    return float(np.sum(np.exp(-t * d.eigenvalues)))


@dataclass(frozen=True, eq=False)
class GroundState:
    eigenvalue: float
    vector: np.ndarray
    simple: bool
    one_signed: bool
    gap: float


def ground_state(d):
    """Lowest eigenpair, its simplicity and strict one-signedness on free dofs."""
    lam = d.eigenvalues
    gap = float(lam[1] - lam[0]) if len(lam) > 1 else float("inf")
    simple = gap > 1e-8 * (1 + abs(lam[0]))
    phi = d.eigenvectors[:, 0].real
    one_signed = bool(np.all(phi > 0))
    return GroundState(float(lam[0]), d.embed(phi), bool(simple), one_signed, gap)


def trotter_kato(pA, Bv, t, m):
    """The product (E_A(t/m) exp(-t Bv / m))^m on free coefficients.

    ``Bv`` is the diagonal (vector or diagonal matrix) of the bounded part,
    acting pointwise on nodal values.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    Bv = np.asarray(Bv, dtype=float)
    b = np.diag(Bv) if Bv.ndim == 2 else Bv
    b = pA.reduce(b) if len(b) == pA.n_dofs else b
    d = eigensolve(pA)
    step = semigroup_matrix(d, t / m) * np.exp(-t * b / m)[None, :]
    return np.linalg.matrix_power(step, m)


def summed_semigroup(pA, Bv, t):
    """Exact exp(-t(A + Bv)) for the pencil A and the nodal multiplier Bv.

    The multiplier enters the form through the lumped mass, so the summed
    operator is exactly ``M_L^{-1} A + diag(Bv)`` on free coefficients.
    """
    Bv = np.asarray(Bv, dtype=float)
    b = np.diag(Bv) if Bv.ndim == 2 else Bv
    b = pA.reduce(b) if len(b) == pA.n_dofs else b
    full_b = np.zeros(pA.n_dofs)
    full_b[pA.free_dofs] = b * pA.lumped
    p2 = replace(pA, M_V=pA.M_V + np.diag(full_b))
    return semigroup_matrix(eigensolve(p2), t)


def weighted_norm(X, w):
    """Operator norm of X on L^2 with diagonal weights w."""
    s = np.sqrt(w)
    return float(np.linalg.norm(s[:, None] * X / s[None, :], 2))


def trotter_error(pA, Bv, t, m):
    P = trotter_kato(pA, Bv, t, m)
    E = summed_semigroup(pA, Bv, t)
    return weighted_norm(P - E, pA.lumped)


# export ---------------------------------------------------------------------


def write_kernel_csv(grid, path):
    with open(path, "w") as fh:
        dim = grid.nodes.shape[1]
        head = [f"x{k}" for k in range(dim)] + [f"y{k}" for k in range(dim)] + ["value"]
        fh.write(",".join(head) + "\n")
        n = len(grid.nodes)
        for i in range(n):
            xi = ",".join(f"{c:.17g}" for c in grid.nodes[i])
            for j in range(n):
                xj = ",".join(f"{c:.17g}" for c in grid.nodes[j])
                fh.write(f"{xi},{xj},{grid.matrix[i, j]:.17g}\n")


_HEADER = struct.Struct("<IId")


def write_kernel_binary(grid, path):
    """16-byte header (rows, cols as uint32, parameter as float64), then row-major float64."""
    K = np.ascontiguousarray(grid.matrix.real, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(K.shape[0], K.shape[1], grid.parameter))
        fh.write(K.tobytes())


def read_kernel_binary(path):
    with open(path, "rb") as fh:
        rows, cols, param = _HEADER.unpack(fh.read(_HEADER.size))
        data = np.frombuffer(fh.read(), dtype="<f8")
    return param, data.reshape(rows, cols)
