"""Positivity algebra on finite measure spaces and the kernel-chain drivers.

A kernel operator on a weighted point set acts by ``(Kf)_i = sum_j K_ij w_j f_j``.
Every check returns an :class:`OrderReport` carrying its worst violation, so
tolerances stay auditable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .assembly import build_pencil
from .coefficients import DirichletLimit, LocalMultiplication, Zero
from .errors import GridMismatch, PreconditionUnmet, SpaceMismatch
from .spectral import eigensolve, green_kernel, heat_kernel, weighted_norm

DEFAULT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DiscreteMeasureSpace:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be a positive finite vector")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def counting(cls, n):
        return cls(np.ones(n))

    def __len__(self):
        return len(self.weights)

    def inner(self, f, g):
        return np.sum(self.weights * np.conj(f) * g)

    def same_as(self, other):
        return len(self) == len(other) and np.array_equal(self.weights, other.weights)


@dataclass(frozen=True, eq=False)
class KernelOperator:
    space: DiscreteMeasureSpace
    kernel: np.ndarray

    def __post_init__(self):
        K = np.asarray(self.kernel)
        if K.shape != (len(self.space), len(self.space)):
            raise ValueError(f"kernel shape {K.shape} does not fit the space")
        if not np.all(np.isfinite(K)):
            raise ValueError("kernel has non-finite entries")
        object.__setattr__(self, "kernel", K)

    def apply(self, f):
        return self.kernel @ (self.space.weights * np.asarray(f))

    @property
    def matrix(self):
        """Matrix of the action on coefficient vectors."""
        return self.kernel * self.space.weights[None, :]

    def adjoint(self):
        return KernelOperator(self.space, self.kernel.conj().T)

    def compose(self, other):
        """Kernel of self after other: sum_k A_ik w_k B_kj."""
        _same_space(self, other)
        return KernelOperator(self.space, self.kernel @ (self.space.weights[:, None] * other.kernel))

    def symmetric_form(self):
        """W^{1/2} K W^{1/2}, unitarily equivalent to the operator on L^2(w)."""
        s = np.sqrt(self.space.weights)
        return s[:, None] * self.kernel * s[None, :]

    def singular_values(self):
        return scipy.linalg.svdvals(self.symmetric_form())

    def trace(self):
        return float(np.real(np.sum(np.diag(self.kernel) * self.space.weights)))


def kernel_operator(grid):
    """Wrap a :class:`KernelGrid` on the lumped-mass measure."""
    return KernelOperator(DiscreteMeasureSpace(grid.weights), grid.matrix)


@dataclass(frozen=True)
class OrderReport:
    relation: str
    tolerance: float
    worst_violation: float
    witness: tuple = ()
    verdict: bool = True
    details: dict = field(default_factory=dict)

    def __bool__(self):
        return self.verdict

    def to_dict(self):
        return {
            "relation": self.relation,
            "tolerance": self.tolerance,
            "worst_violation": self.worst_violation,
            "witness_indices": [int(i) if isinstance(i, (int, np.integer)) else i
                                for i in self.witness],
            "verdict": "pass" if self.verdict else "fail",
            **({"details": self.details} if self.details else {}),
        }

    def to_text(self):
        return json.dumps(self.to_dict(), sort_keys=True, default=float)


def _report(relation, values, tol, **details):
    """Report on the condition ``values >= -tol`` entrywise."""
    values = np.real(np.asarray(values))
    idx = np.unravel_index(int(np.argmin(values)), values.shape)
    worst = float(values[idx])
    return OrderReport(relation, float(tol), worst, tuple(int(i) for i in idx),
                       worst >= -tol, details)


def _same_space(a, b):
    if not a.space.same_as(b.space):
        raise SpaceMismatch("operators live on different measure spaces")


def is_positivity_preserving(op, tol=DEFAULT_TOL):
    return _report("positivity_preserving", op.kernel, tol)


def is_positivity_improving(op, tol=DEFAULT_TOL):
    """Strict variant: every entry exceeds ``tol``."""
    K = np.real(op.kernel)
    idx = np.unravel_index(int(np.argmin(K)), K.shape)
    worst = float(K[idx])
    return OrderReport("positivity_improving", float(tol), worst,
                       tuple(int(i) for i in idx), worst > tol)


def indicator_action_check(op):
    """Evaluate K on every nonzero 0/1 vector; pass iff all results are nonneg.

    This is the action-level side of the kernel criterion, practical for
    spaces of at most about 12 points.
    """
    n = len(op.space)
    bits = (np.arange(1, 2 ** n)[:, None] >> np.arange(n)[None, :]) & 1
    out = np.real(op.kernel @ (op.space.weights[:, None] * bits.T))
    j = np.unravel_index(int(np.argmin(out)), out.shape)
    return OrderReport("indicator_action", 0.0, float(out[j]), (int(j[0]), int(j[1]) + 1),
                       bool(out[j] >= 0))


def dominates(a, b, tol=DEFAULT_TOL):
    """0 <= K_B <= K_A entrywise."""
    _same_space(a, b)
    Ka, Kb = np.real(a.kernel), np.real(b.kernel)
    vals = np.minimum(Kb, Ka - Kb)
    return _report("dominates", vals, tol)


def pointwise_dominates(a, b, tol=DEFAULT_TOL):
    """|K_B| <= K_A entrywise, the matrix form of |Bf| <= A|f|."""
    _same_space(a, b)
    return _report("pointwise_dominates", np.real(a.kernel) - np.abs(b.kernel), tol)


def operator_norm(op):
    return float(op.singular_values()[0])


def schatten_norm(op, p):
    s = op.singular_values()
    return float(np.sum(s ** p) ** (1.0 / p))


def schatten_domination_check(a, b, two_n=2, tol=DEFAULT_TOL, trace=False):
    """||A||_{2n} >= ||B||_{2n} for a dominated pair; optionally tr A >= tr B.

    Raises
    ------
    PreconditionUnmet
        If ``a`` does not dominate ``b``.
    """
    if not dominates(a, b, tol):
        raise PreconditionUnmet("schatten comparison needs 0 <= B <= A")
    if two_n < 2 or two_n % 2:
        raise ValueError("two_n must be an even count")
    na, nb = schatten_norm(a, two_n), schatten_norm(b, two_n)
    gap = na - nb
    details = {"norm_a": na, "norm_b": nb}
    if trace:
        ta, tb = a.trace(), b.trace()
        gap = min(gap, ta - tb)
        details.update(trace_a=ta, trace_b=tb)
    return OrderReport(f"schatten_{two_n}", tol, float(gap), (), gap >= -tol, details)


def is_sub_markovian(op, tol=DEFAULT_TOL):
    """Nonnegative kernel with (K diag(w)) 1 <= 1 + tol."""
    pos = is_positivity_preserving(op, tol)
    rows = op.matrix.sum(axis=1).real
    i = int(np.argmax(rows))
    slack = float(1.0 - rows[i])
    worst = min(pos.worst_violation, slack)
    witness = pos.witness if pos.worst_violation < slack else (i,)
    return OrderReport("sub_markovian", tol, worst, witness, bool(pos) and slack >= -tol,
                       {"max_row_sum": float(rows[i]), "min_row_sum": float(rows.min())})


def linf_contraction_transfer(a, b, tol=DEFAULT_TOL):
    """If |B| <= A pointwise and A is L-infinity contractive, so is B."""
    pd = pointwise_dominates(a, b, tol)
    rows_a = np.abs(a.matrix).sum(axis=1)
    rows_b = np.abs(b.matrix).sum(axis=1)
    details = {"dominated": bool(pd), "a_norm": float(rows_a.max()), "b_norm": float(rows_b.max())}
    ok = (not pd) or rows_a.max() > 1 + tol or rows_b.max() <= 1 + tol
    return OrderReport("linf_transfer", tol, float(1 + tol - rows_b.max()), (), bool(ok), details)


# pencil-level checks ---------------------------------------------------------


def _pencil_semigroup(p, t):
    return heat_kernel(eigensolve(p), t)


def _entrywise_ge(X, Y, tol):
    return float(np.min(X - Y)) >= -tol, float(np.min(X - Y))


def semigroup_equivalences_check(h1, h2, t_grid, lam_grid, tol=DEFAULT_TOL):
    """Compare the three discrete forms of H1 <= H2 in the positivity sense.

    (i) exp(-t H1) >= exp(-t H2) entrywise, (ii) the same for resolvents,
    (iv) the form of H2 - H1 is nonnegative on every pair of nonnegative
    vectors, which for matrices is entrywise nonnegativity of H2 - H1. The
    check passes when the verdicts agree at every grid point; a form failure
    is witnessed by the indicator pair (i, j) of the most negative entry.
    """
    if h1.n_dofs != h2.n_dofs or not np.array_equal(h1.free_dofs, h2.free_dofs):
        raise SpaceMismatch("pencils must share degrees of freedom")
    d1, d2 = eigensolve(h1), eigensolve(h2)
    diff = h2.matrix - h1.matrix
    scale = max(1.0, float(np.max(np.abs(h1.matrix))))
    fi, fj = np.unravel_index(int(np.argmin(diff)), diff.shape)
    form_ok = float(diff[fi, fj]) >= -tol * scale
    verdicts, worst, where = [], np.inf, ()
    for t in t_grid:
        ok, v = _entrywise_ge(heat_kernel(d1, t).matrix, heat_kernel(d2, t).matrix, tol)
        verdicts.append(("semigroup", float(t), ok))
        if v < worst:
            worst, where = v, ("t", float(t))
    for lam in lam_grid:
        ok, v = _entrywise_ge(green_kernel(d1, lam).matrix, green_kernel(d2, lam).matrix, tol)
        verdicts.append(("resolvent", float(lam), ok))
        if v < worst:
            worst, where = v, ("lambda", float(lam))
    agree = all(ok == form_ok for _, _, ok in verdicts)
    details = {
        "form_ok": form_ok,
        "form_min_entry": float(diff[fi, fj]),
        "form_witness": [int(fi), int(fj)],
        "kernel_verdicts": [list(v) for v in verdicts],
    }
    return OrderReport("semigroup_equivalences", tol, float(worst), where, agree, details)


def domination_chain_check(kD, k2, k1, kN, tol=DEFAULT_TOL):
    """0 <= K_D <= K_{Theta2} <= K_{Theta1} <= K_N entrywise (heat or Green grids)."""
    rep = kernel_chain_check((kD, k2, k1, kN), ("D", "theta2", "theta1", "N"), tol)
    return OrderReport("domination_chain", rep.tolerance, rep.worst_violation, rep.witness,
                       rep.verdict, rep.details)


def improving_equivalence_check(p, t_probe, t_others, tol=0.0):
    """Strict positivity at t_probe implies strict positivity at the other times.

    On a disconnected node graph the check fails with the indicator of one
    component as witness, an invariant subspace of the semigroup.
    """
    from scipy.sparse.csgraph import connected_components

    A = p.matrix
    _, labels = connected_components(np.abs(A) > 0, directed=False)
    if labels.max() > 0:
        indicator = (labels == labels[0]).astype(float)
        return OrderReport("improving_equivalence", tol, 0.0,
                           tuple(int(i) for i in np.flatnonzero(indicator)),
                           False, {"components": int(labels.max() + 1),
                                   "witness": "component indicator"})
    d = eigensolve(p)
    f = p.free_dofs

    def strict(t):
        K = heat_kernel(d, t).matrix[np.ix_(f, f)]
        return float(K.min())

    probe = strict(t_probe)
    others = {float(t): strict(t) for t in t_others}
    ok = probe <= tol or all(v > tol for v in others.values())
    worst = min([probe, *others.values()])
    return OrderReport("improving_equivalence", tol, worst, (), bool(ok),
                       {"probe_min": probe, "others_min": others})


@dataclass(frozen=True)
class DirichletLimitReport:
    thetas: tuple
    deltas: tuple
    decreasing: bool
    slope: float

    def to_dict(self):
        return {"thetas": list(self.thetas), "deltas": list(self.deltas),
                "decreasing": self.decreasing, "slope": self.slope}


def dirichlet_limit_driver(mesh, theta_grid, lam=1.0, A=None):
    """Distance of Robin resolvents (constant theta) to the Dirichlet resolvent.

    delta(theta) is the operator norm on L^2(w) of
    (L_theta + lam)^{-1} - (L_D + lam)^{-1}, the latter zero-extended.
    """
    theta_grid = [float(v) for v in theta_grid]
    if any(b <= a for a, b in zip(theta_grid, theta_grid[1:])):
        raise ValueError("theta grid must be strictly increasing")
    if lam <= 0:
        raise ValueError("lam must be positive")

    def resolvent(theta):
        p = build_pencil(mesh, theta, A)
        return green_kernel(eigensolve(p), lam)

    RD = resolvent(DirichletLimit())
    w = RD.weights
    deltas = []
    for th in theta_grid:
        op = Zero() if th == 0 else LocalMultiplication.constant(th)
        deltas.append(weighted_norm(resolvent(op).semigroup - RD.semigroup, w))
    decreasing = all(b < a for a, b in zip(deltas, deltas[1:]))
    pos = [(t, d) for t, d in zip(theta_grid, deltas) if t > 0]
    slope = float("nan")
    if len(pos) >= 2:
        slope = float(np.polyfit(np.log([t for t, _ in pos]), np.log([d for _, d in pos]), 1)[0])
    return DirichletLimitReport(tuple(theta_grid), tuple(deltas), decreasing, slope)


def kernel_chain_check(grids, names, tol=DEFAULT_TOL):
    """0 <= grids[0] <= grids[1] <= ... entrywise, for any chain length."""
    if len(grids) != len(names) or len(grids) < 1:
        raise ValueError("need one name per grid")
    ref = grids[0]
    for g in grids[1:]:
        if (g.matrix.shape != ref.matrix.shape or g.kind != ref.kind
                or g.parameter != ref.parameter or not np.array_equal(g.nodes, ref.nodes)):
            raise GridMismatch("kernel grids differ in mesh, kind or parameter")
    links = [(f"0<={names[0]}", ref.matrix)]
    for lo, hi, nlo, nhi in zip(grids, grids[1:], names, names[1:]):
        links.append((f"{nlo}<={nhi}", hi.matrix - lo.matrix))
    worst, witness, per_link = np.inf, (), {}
    for name, X in links:
        i, j = np.unravel_index(int(np.argmin(X)), X.shape)
        v = float(X[i, j])
        per_link[name] = v
        if v < worst:
            worst, witness = v, (name, int(i), int(j))
    neg = ref.matrix[ref.matrix < -tol]
    details = {"parameter": ref.parameter, "links": per_link,
               "negative_entries_first": int(neg.size),
               "most_negative_first": float(neg.min()) if neg.size else 0.0}
    return OrderReport("kernel_chain", tol, worst, witness, worst >= -tol, details)


@dataclass(frozen=True)
class SuiteResult:
    trials: int
    seed: int
    failures: dict

    @property
    def verdict(self):
        return all(v == 0 for v in self.failures.values())

    def to_dict(self):
        return {"trials": self.trials, "seed": self.seed, "failures": dict(self.failures),
                "verdict": "pass" if self.verdict else "fail"}


def random_property_suite(trials=1000, seed=0, size=8, tol=DEFAULT_TOL):
    """Randomized checks of the positivity algebra on ``size``-point spaces.

    Relations: kernel criterion against indicator action, closure under
    composition and adjoints, Schatten ordering (2n = 2, 4) and trace
    ordering for dominated pairs, and norm ordering under pointwise
    domination. Returns failure counts per relation.
    """
    rng = np.random.default_rng(seed)
    fails = {"kernel_vs_indicators": 0, "closure": 0, "schatten_2": 0, "schatten_4": 0,
             "trace_psd": 0, "pointwise_norm": 0}

    def space():
        return DiscreteMeasureSpace(rng.uniform(0.2, 2.0, size))

    for _ in range(trials):
        # kernel criterion: nonnegative kernels, or ones with a clearly negative entry
        sp = space()
        K = rng.exponential(size=(size, size)) * (rng.random((size, size)) < 0.7)
        if rng.random() < 0.5:
            K[rng.integers(size), rng.integers(size)] = -rng.uniform(1e-3, 1.0)
        op = KernelOperator(sp, K)
        if bool(is_positivity_preserving(op, tol)) != bool(indicator_action_check(op)):
            fails["kernel_vs_indicators"] += 1

        # closure of the positive cone
        a = KernelOperator(sp, rng.exponential(size=(size, size)))
        b = KernelOperator(sp, rng.exponential(size=(size, size)))
        if not (is_positivity_preserving(a.compose(b), tol)
                and is_positivity_preserving(a.adjoint(), tol)):
            fails["closure"] += 1

        # Schatten ordering for 0 <= B <= A
        Kb = rng.exponential(size=(size, size)) * (rng.random((size, size)) < 0.6)
        Ka = Kb + rng.exponential(size=(size, size)) * (rng.random((size, size)) < 0.6)
        A, B = KernelOperator(sp, Ka), KernelOperator(sp, Kb)
        for two_n in (2, 4):
            if not schatten_domination_check(A, B, two_n, tol):
                fails[f"schatten_{two_n}"] += 1

        # trace ordering on positive semidefinite dominated pairs
        X = rng.exponential(size=(size, 3))
        Y = rng.exponential(size=(size, 3))
        Kb = X @ X.T
        A, B = KernelOperator(sp, Kb + Y @ Y.T), KernelOperator(sp, Kb)
        if not schatten_domination_check(A, B, 2, tol, trace=True):
            fails["trace_psd"] += 1

        # operator norms under pointwise domination |B| <= A
        Ka = rng.exponential(size=(size, size))
        Kb = Ka * rng.uniform(-1.0, 1.0, (size, size))
        A, B = KernelOperator(sp, Ka), KernelOperator(sp, Kb)
        if not pointwise_dominates(A, B, tol) or operator_norm(B) > operator_norm(A) + tol:
            fails["pointwise_norm"] += 1
    return SuiteResult(trials, seed, fails)
