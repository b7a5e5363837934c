import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from oracles import interval_dirichlet_green, robin_interval_roots, symmetric_robin_root
from robinheat.assembly import build_pencil, make_pencil
from robinheat.coefficients import DirichletLimit, LocalMultiplication, Zero
from robinheat.errors import ShiftAtSpectrum, SingularMass
from robinheat.geometry import Interval, build_mesh, disjoint_union, unit_square
from robinheat.spectral import (
    eigensolve,
    green_kernel,
    ground_state,
    heat_kernel,
    heat_trace,
    read_kernel_binary,
    semigroup_matrix,
    summed_semigroup,
    trotter_error,
    trotter_kato,
    write_kernel_binary,
    write_kernel_csv,
)


@pytest.fixture(scope="module")
def fine_interval():
    return build_mesh(Interval(0, 1), 1 / 512)


@pytest.fixture(scope="module")
def interval():
    return build_mesh(Interval(0, 1), 1 / 32)


def test_dirichlet_interval_spectrum(fine_interval):
    lam = eigensolve(build_pencil(fine_interval, DirichletLimit())).eigenvalues[:5]
    exact = (np.arange(1, 6) * math.pi) ** 2
    np.testing.assert_allclose(lam, exact, rtol=1e-3)


def test_neumann_ground_state(interval):
    d = eigensolve(build_pencil(interval))
    assert abs(d.eigenvalues[0]) < 1e-10
    v = d.eigenvectors[:, 0]
    np.testing.assert_allclose(v, v[0], rtol=1e-10)
    g = ground_state(d)
    assert g.simple and g.one_signed and g.eigenvalue == pytest.approx(0, abs=1e-10)


def test_robin_ground_eigenvalue(fine_interval):
    lam0 = eigensolve(build_pencil(fine_interval, LocalMultiplication.constant(1.0))).eigenvalues[0]
    assert lam0 == pytest.approx(symmetric_robin_root(1.0) ** 2, rel=1e-4)


def test_robin_first_five(fine_interval):
    lam = eigensolve(build_pencil(fine_interval, LocalMultiplication.constant(1.0))).eigenvalues
    np.testing.assert_allclose(lam[:5], robin_interval_roots(1.0, 5) ** 2, rtol=1e-4)


@pytest.mark.parametrize("mass", ["lumped", "consistent"])
def test_mass_orthonormality_and_residual(mass):
    mesh = build_mesh(unit_square(), 0.2)
    p = build_pencil(mesh, LocalMultiplication.constant(2.0))
    d = eigensolve(p, mass)
    V = d.eigenvectors
    M = d.mass_matrix
    assert np.max(np.abs(V.T @ M @ V - np.eye(V.shape[1]))) <= 1e-10
    R = p.matrix @ V - M @ V * d.eigenvalues
    for k in range(V.shape[1]):
        assert np.linalg.norm(R[:, k]) <= 1e-9 * (1 + abs(d.eigenvalues[k])) * np.linalg.norm(V[:, k])
    assert np.all(np.diff(d.eigenvalues) >= 0)


def test_singular_mass():
    p = make_pencil(np.eye(2), np.array([[1.0, -1.0], [-1.0, 1.0]]))
    with pytest.raises(SingularMass):
        eigensolve(p)


def test_heat_at_zero_is_identity(interval):
    d = eigensolve(build_pencil(interval, LocalMultiplication.constant(1.0)))
    E = heat_kernel(d, 0.0).semigroup
    assert np.max(np.abs(E - np.eye(E.shape[0]))) <= 1e-12


def test_neumann_long_time(interval):
    K = heat_kernel(eigensolve(build_pencil(interval)), 1e3).matrix
    np.testing.assert_allclose(K, 1.0, atol=1e-10)


def test_semigroup_law(interval):
    d = eigensolve(build_pencil(interval, LocalMultiplication.constant(3.0)))
    E = lambda t: semigroup_matrix(d, t)  # noqa: E731
    assert np.max(np.abs(E(0.1) @ E(0.2) - E(0.3))) <= 1e-11


def test_heat_kernel_symmetric_and_dominated(interval):
    d = eigensolve(build_pencil(interval, LocalMultiplication.constant(1.0)))
    K = heat_kernel(d, 0.3).matrix
    assert np.max(np.abs(K - K.T)) <= 1e-10 * np.max(np.abs(K))
    assert np.all(np.exp(-0.3 * d.eigenvalues) <= np.exp(-0.3 * d.eigenvalues[0]) + 1e-15)


def test_dirichlet_green_interval(fine_interval):
    G = green_kernel(eigensolve(build_pencil(fine_interval, DirichletLimit())), 0.0).matrix
    x = fine_interval.nodes[:, 0]
    ref = np.minimum.outer(x, x) * (1 - np.maximum.outer(x, x))
    assert np.max(np.abs(G - ref)) <= 1e-3
    assert G[100, 300] == pytest.approx(interval_dirichlet_green(x[100], x[300]), abs=1e-3)


def test_green_as_laplace_transform():
    mesh = build_mesh(Interval(0, 1), 1 / 16)
    d = eigensolve(build_pencil(mesh, LocalMultiplication.constant(1.0)))
    xg, wg = np.polynomial.legendre.leggauss(64)
    edges = [0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0, 40.0]
    acc = np.zeros((mesh.n_nodes, mesh.n_nodes))
    for a, b in zip(edges, edges[1:]):
        for x, w in zip(xg, wg):
            t = 0.5 * (b - a) * x + 0.5 * (a + b)
            acc += 0.5 * (b - a) * w * math.exp(-t) * heat_kernel(d, t).semigroup
    acc = acc / heat_kernel(d, 0.0).weights[None, :]
    assert np.max(np.abs(green_kernel(d, 1.0).matrix - acc)) <= 1e-6


def test_neumann_green_series(interval):
    p = build_pencil(interval)
    # independent eigensolve against the lumped mass, summed by hand
    lam, V = scipy.linalg.eigh(p.matrix, np.diag(p.lumped))
    series = sum(V[0, k] ** 2 / (lam[k] + 1.0) for k in range(len(lam)))
    G = green_kernel(eigensolve(p), 1.0).matrix
    assert G[0, 0] == pytest.approx(series, rel=1e-10)


def test_green_inverts_pencil():
    mesh = build_mesh(unit_square(), 0.2)
    p = build_pencil(mesh, LocalMultiplication.constant(1.0))
    G = green_kernel(eigensolve(p), 2.0)
    X = G.semigroup @ (np.diag(1 / p.lumped) @ p.matrix + 2.0 * np.eye(p.n_dofs))
    assert np.max(np.abs(X - np.eye(p.n_dofs))) <= 1e-8


def test_shift_at_spectrum(interval):
    d = eigensolve(build_pencil(interval))
    with pytest.raises(ShiftAtSpectrum):
        green_kernel(d, 0.0)
    d = eigensolve(build_pencil(interval, LocalMultiplication.constant(-1.0)))
    with pytest.raises(ShiftAtSpectrum):
        green_kernel(d, -d.eigenvalues[0] - 0.1)


def test_heat_trace_limits():
    d = eigensolve(build_pencil(build_mesh(Interval(0, 1), 1 / 1024)))
    t = 1e-3
    assert math.sqrt(t) * heat_trace(d, t) == pytest.approx(1 / math.sqrt(4 * math.pi), rel=0.1)
    # lambda_0 is zero only up to roundoff of size eps * lambda_max
    assert heat_trace(d, 10.0) == pytest.approx(1.0, abs=1e-6)


def test_dirichlet_trace_below_neumann(interval):
    dN = eigensolve(build_pencil(interval))
    dD = eigensolve(build_pencil(interval, DirichletLimit()))
    for t in np.geomspace(1e-4, 10, 20):
        assert heat_trace(dD, t) <= heat_trace(dN, t)


def test_heat_trace_decreasing_convex(interval):
    d = eigensolve(build_pencil(interval, LocalMultiplication.constant(1.0)))
    ts = np.linspace(0.01, 2, 50)
    tr = np.array([heat_trace(d, t) for t in ts])
    assert np.all(np.diff(tr) < 0)
    assert np.all(np.diff(tr, 2) > 0)


def test_eigenvalue_monotonicity_in_theta():
    mesh = build_mesh(unit_square(), 0.2)
    lams = [eigensolve(build_pencil(mesh, th)).eigenvalues
            for th in (Zero(), LocalMultiplication.constant(1.0), LocalMultiplication.constant(4.0))]
    lamD = eigensolve(build_pencil(mesh, DirichletLimit())).eigenvalues
    k = len(lamD)
    for a, b in zip(lams, lams[1:]):
        assert np.all(a <= b + 1e-12 * (1 + np.abs(b)))
    assert np.all(lams[-1][:k] <= lamD + 1e-12 * (1 + lamD))


def test_trotter_trivial_bounded_part(interval):
    p = build_pencil(interval)
    d = eigensolve(p)
    for m in (1, 3, 7):
        P = trotter_kato(p, np.zeros(interval.n_nodes), 0.4, m)
        assert np.max(np.abs(P - semigroup_matrix(d, 0.4))) <= 1e-12


def test_trotter_commuting_factors():
    a = np.array([0.0, 1.0, 2.0, 5.0])
    b = np.array([0.5, 0.1, 3.0, 0.0])
    p = make_pencil(np.diag(a), np.eye(4))
    exact = np.diag(np.exp(-0.7 * (a + b)))
    for m in (1, 2, 5):
        assert np.max(np.abs(trotter_kato(p, b, 0.7, m) - exact)) <= 1e-13
    assert np.max(np.abs(summed_semigroup(p, b, 0.7) - exact)) <= 1e-13


def test_trotter_first_order():
    mesh = build_mesh(Interval(0, 1), 1 / 128)
    p = build_pencil(mesh)
    V = mesh.nodes[:, 0] ** 2
    ratio = trotter_error(p, V, 0.5, 20) / trotter_error(p, V, 0.5, 10)
    assert 0.4 <= ratio <= 0.6


def test_dirichlet_ground_state(interval):
    g = ground_state(eigensolve(build_pencil(interval, DirichletLimit())))
    x = interval.nodes[:, 0]
    shape = np.sin(math.pi * x)
    phi = g.vector / g.vector.max()
    assert g.simple and g.one_signed
    assert np.all(phi[1:-1] > 0)
    np.testing.assert_allclose(phi, shape / shape.max(), atol=1e-3)


def test_two_components_not_simple():
    mesh = disjoint_union(build_mesh(Interval(0, 1), 0.1), build_mesh(Interval(2, 3), 0.1))
    d = eigensolve(build_pencil(mesh))
    g = ground_state(d)
    assert not g.simple
    assert abs(d.eigenvalues[1]) < 1e-10


def test_sign_normalization(interval):
    d = eigensolve(build_pencil(interval, LocalMultiplication.constant(1.0)))
    V = d.eigenvectors
    for k in range(V.shape[1]):
        i = int(np.argmax(np.abs(V[:, k]) >= np.abs(V[:, k]).max() * (1 - 1e-12)))
        assert V[i, k] > 0


def test_kernel_exports(tmp_path, interval):
    g = heat_kernel(eigensolve(build_pencil(interval)), 0.1)
    write_kernel_binary(g, tmp_path / "k.bin")
    assert (tmp_path / "k.bin").stat().st_size == 16 + 8 * g.matrix.size
    t, K = read_kernel_binary(tmp_path / "k.bin")
    assert t == 0.1
    np.testing.assert_array_equal(K, g.matrix)
    write_kernel_csv(g, tmp_path / "k.csv")
    assert len((tmp_path / "k.csv").read_text().splitlines()) == 1 + g.matrix.size


@settings(max_examples=15, deadline=None)
@given(theta=st.floats(0, 20), t=st.floats(0.01, 2))
def test_robin_kernel_bracketed(theta, t):
    mesh = build_mesh(Interval(0, 1), 1 / 16)
    K = heat_kernel(eigensolve(build_pencil(mesh, LocalMultiplication.constant(theta))), t).matrix
    KN = heat_kernel(eigensolve(build_pencil(mesh)), t).matrix
    KD = heat_kernel(eigensolve(build_pencil(mesh, DirichletLimit())), t).matrix
    assert np.min(K - KD) >= -1e-10
    assert np.min(KN - K) >= -1e-10
