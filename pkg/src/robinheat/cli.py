"""Command-line driver: problem spec in, reports and plot data out.

Exit status is 0 when every check passes, 1 when a check fails (the report
is still written) and 2 for spec or I/O errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .errors import SpecError

SCHEMA = "robinheat/1"
COMMANDS = ("mesh", "spectrum", "heat", "green", "verify-chain", "verify-order-props",
            "verify-bounds", "dirichlet-limit", "report")

DEFAULTS = {
    "h": 0.1,
    "require_non_obtuse": True,
    "coefficient": {"name": "identity"},
    "potential": None,
    "boundary": [{"type": "dirichlet"}, {"type": "robin", "theta": 5.0},
                 {"type": "robin", "theta": 1.0}, {"type": "neumann"}],
    "t_grid": [0.05, 0.2, 1.0],
    "lambda_grid": [1.0],
    "theta_grid": [1.0, 10.0, 100.0, 1000.0, 10000.0],
    "gamma": 0.5,
    "tol": 1e-10,
    "seed": 0,
    "trials": 1000,
    "n_eigs": 20,
}


def load_spec(path):
    """Read and validate a JSON problem spec, filling in defaults."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise SpecError(f"cannot read spec: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecError(f"spec is not valid JSON: {exc}") from exc
    return normalize_spec(raw)


def normalize_spec(raw):
    if not isinstance(raw, dict):
        raise SpecError("spec must be a JSON object")
    if raw.get("schema") != SCHEMA:
        raise SpecError(f"schema must be {SCHEMA!r}")
    if "domain" not in raw:
        raise SpecError("spec needs a domain")
    unknown = set(raw) - set(DEFAULTS) - {"schema", "domain"}
    if unknown:
        raise SpecError(f"unknown fields: {sorted(unknown)}")
    spec = {**DEFAULTS, **raw}
    for key in ("t_grid", "lambda_grid", "theta_grid"):
        vals = spec[key]
        if not isinstance(vals, list) or not vals or any(
                not isinstance(v, (int, float)) or not v > 0 for v in vals):
            raise SpecError(f"{key} must be a nonempty list of positive numbers")
    if not isinstance(spec["h"], (int, float)) or not spec["h"] > 0:
        raise SpecError("h must be positive")
    for b in spec["boundary"]:
        if b.get("type") not in ("dirichlet", "neumann", "robin", "nonlocal"):
            raise SpecError(f"unknown boundary type in {b}")
        if b["type"] == "nonlocal" and b.get("kernel") not in ("rank_one", "cosine", "constant"):
            raise SpecError(f"unknown nonlocal kernel in {b}")
    if spec["coefficient"].get("name") not in ("identity", "diagonal", "checkerboard", "constant"):
        raise SpecError(f"unknown coefficient {spec['coefficient']}")
    pot = spec["potential"]
    if pot is not None and pot.get("name") not in ("constant", "x_squared"):
        raise SpecError(f"unknown potential {pot}")
    return spec


def spec_hash(spec):
    canon = json.dumps(spec, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


# builders -------------------------------------------------------------------


def build_domain(d):
    from . import geometry as g

    kind = d.get("type")
    if kind == "interval":
        return g.Interval(float(d.get("a", 0.0)), float(d.get("b", 1.0)))
    if kind == "unit_square":
        return g.unit_square()
    if kind == "l_shape":
        return g.l_shape()
    if kind == "polygon":
        return g.Polygon(tuple(tuple(v) for v in d["vertices"]))
    raise SpecError(f"unknown domain type {kind!r}")


def build_mesh_from_spec(spec):
    from . import geometry as g

    d = spec["domain"]
    if d.get("type") == "union":
        parts = [g.build_mesh(build_domain(p), spec["h"], spec["require_non_obtuse"])
                 for p in d["parts"]]
        return g.disjoint_union(*parts)
    return g.build_mesh(build_domain(d), spec["h"], spec["require_non_obtuse"])


def build_coefficient(c, n):
    from . import coefficients as co

    name = c["name"]
    if name == "identity":
        return co.identity_tensor(n)
    if name == "diagonal":
        return co.diagonal_tensor(c["values"])
    if name == "constant":
        return co.constant_tensor(c["matrix"])
    return co.checkerboard_tensor(n, c.get("low", 1.0), c.get("high", 10.0), c.get("period", 0.5))


def build_potential(p):
    from .coefficients import ScalarPotential

    if p is None:
        return None
    if p["name"] == "constant":
        v = float(p["value"])
        return ScalarPotential(lambda x: v)
    return ScalarPotential(lambda x: float(x[0]) ** 2)


def build_theta(b):
    from . import coefficients as co

    kind = b["type"]
    if kind == "dirichlet":
        return co.DirichletLimit()
    if kind == "neumann":
        return co.Zero()
    if kind == "robin":
        return co.LocalMultiplication.constant(b["theta"])
    amp = float(b.get("amplitude", 1.0))
    form = b.get("form", "jump")
    if b["kernel"] == "rank_one":
        k = lambda x, y: amp * (1.0 + x[0]) * (1.0 + y[0])  # noqa: E731
    elif b["kernel"] == "cosine":
        freq = float(b.get("frequency", 1.0))
        k = lambda x, y: amp * math.cos(freq * float(np.linalg.norm(x - y)))  # noqa: E731
    else:
        k = lambda x, y: amp  # noqa: E731
    return co.NonlocalKernel(k, form=form)


def regime_name(b):
    if b["type"] == "robin":
        return f"robin_{b['theta']:g}"
    if b["type"] == "nonlocal":
        return f"nonlocal_{b['kernel']}"
    return b["type"]


class Pipeline:
    """Lazily assembled pencils and decompositions for one spec."""

    def __init__(self, spec):
        self.spec = spec
        self.mesh = build_mesh_from_spec(spec)
        self.A = build_coefficient(spec["coefficient"], self.mesh.dim)
        self.V = build_potential(spec["potential"])
        self._dec = {}

    def decomposition(self, b):
        from .assembly import build_pencil
        from .spectral import eigensolve

        key = json.dumps(b, sort_keys=True)
        if key not in self._dec:
            p = build_pencil(self.mesh, build_theta(b), self.A, self.V)
            self._dec[key] = eigensolve(p)
        return self._dec[key]

    def ordered_regimes(self):
        """Boundary regimes sorted from Dirichlet through Robin (large theta first) to Neumann."""
        def rank(b):
            if b["type"] == "dirichlet":
                return (0, 0.0)
            if b["type"] == "robin":
                return (1, -float(b["theta"]))
            if b["type"] == "neumann":
                return (3, 0.0)
            return (2, 0.0)
        return sorted((b for b in self.spec["boundary"] if b["type"] != "nonlocal"), key=rank)


# output ---------------------------------------------------------------------


def atomic_write(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_plotdata(grid, axis="diagonal", node=None):
    """CSV text for plotting a kernel grid.

    ``axis`` is ``"diagonal"`` (x, K_ii), ``"slice"`` (x, K_node,j) through
    ``node`` or ``"distance"`` (d_ij, K_ij) over off-diagonal pairs.
    """
    X = grid.nodes
    K = grid.matrix
    lines = []
    if axis == "diagonal":
        lines.append(",".join([f"x{k}" for k in range(X.shape[1])] + ["value"]))
        for i in range(len(X)):
            lines.append(",".join(f"{c:.17g}" for c in X[i]) + f",{K[i, i]:.17g}")
    elif axis == "slice":
        if node is None:
            node = int(np.argmin(np.linalg.norm(X - X.mean(axis=0), axis=1)))
        lines.append(",".join([f"x{k}" for k in range(X.shape[1])] + ["value"]))
        for j in range(len(X)):
            lines.append(",".join(f"{c:.17g}" for c in X[j]) + f",{K[node, j]:.17g}")
    elif axis == "distance":
        D = grid.distances()
        lines.append("distance,value")
        n = len(X)
        for i in range(n):
            for j in range(n):
                if i != j:
                    lines.append(f"{D[i, j]:.17g},{K[i, j]:.17g}")
    else:
        raise ValueError(f"unknown axis {axis!r}")
    return "\n".join(lines) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# commands -------------------------------------------------------------------


def cmd_mesh(pl, out, args):
    from .geometry import mesh_quality, write_mesh

    path = out / "mesh.txt"
    fd, tmp = tempfile.mkstemp(dir=out, prefix=".tmp-")
    os.close(fd)
    write_mesh(pl.mesh, tmp)
    os.replace(tmp, path)
    q = mesh_quality(pl.mesh)
    return [{"check": "mesh", "nodes": pl.mesh.n_nodes, "cells": len(pl.mesh.cells),
             "boundary_measure": pl.mesh.boundary_measure,
             "non_obtuse": q.non_obtuse, "verdict": "pass"}]


def cmd_spectrum(pl, out, args):
    rows = ["regime,k,eigenvalue"]
    checks = []
    for b in pl.spec["boundary"]:
        d = pl.decomposition(b)
        lam = d.eigenvalues[: pl.spec["n_eigs"]]
        for k, v in enumerate(lam):
            rows.append(f"{regime_name(b)},{k},{v:.17g}")
        checks.append({"check": "spectrum", "regime": regime_name(b),
                       "eigenvalues": lam.tolist(), "verdict": "pass"})
    atomic_write(out / "eigenvalues.csv", "\n".join(rows) + "\n")
    return checks


def cmd_heat(pl, out, args):
    from .order import is_sub_markovian, kernel_operator
    from .spectral import heat_kernel, write_kernel_binary

    checks = []
    for b in pl.spec["boundary"]:
        d = pl.decomposition(b)
        for t in pl.spec["t_grid"]:
            g = heat_kernel(d, t)
            tag = f"heat_{regime_name(b)}_t{t:g}"
            atomic_write(out / f"{tag}_diagonal.csv", emit_plotdata(g, "diagonal"))
            fd, tmp = tempfile.mkstemp(dir=out, prefix=".tmp-")
            os.close(fd)
            write_kernel_binary(g, tmp)
            os.replace(tmp, out / f"{tag}.bin")
            rep = is_sub_markovian(kernel_operator(g), args.tol)
            checks.append({"check": "sub_markovian", "regime": regime_name(b), "t": t,
                           **rep.to_dict()})
    return checks


def cmd_green(pl, out, args):
    from .spectral import green_kernel

    checks = []
    for b in pl.spec["boundary"]:
        d = pl.decomposition(b)
        for lam in pl.spec["lambda_grid"]:
            g = green_kernel(d, lam)
            tag = f"green_{regime_name(b)}_lambda{lam:g}"
            atomic_write(out / f"{tag}_distance.csv", emit_plotdata(g, "distance"))
            checks.append({"check": "green", "regime": regime_name(b), "lambda": lam,
                           "max": float(g.matrix.max()), "verdict": "pass"})
    return checks


def cmd_verify_chain(pl, out, args):
    from .coefficients import theta_structure_check
    from .order import kernel_chain_check
    from .spectral import green_kernel, heat_kernel

    regs = pl.ordered_regimes()
    names = [regime_name(b) for b in regs]
    checks = []
    for b in regs:
        if b["type"] == "robin":
            s = theta_structure_check(build_theta(b), pl.mesh)
            checks.append({"check": "theta_structure", "regime": regime_name(b), **s,
                           "verdict": "pass" if s["selfadjoint"] and s["nonneg"] else "fail"})
    decs = [pl.decomposition(b) for b in regs]
    for t in pl.spec["t_grid"]:
        rep = kernel_chain_check([heat_kernel(d, t) for d in decs], names, args.tol)
        checks.append({"check": "heat_chain", "t": t, **rep.to_dict()})
    for lam in pl.spec["lambda_grid"]:
        rep = kernel_chain_check([green_kernel(d, lam) for d in decs], names, args.tol)
        checks.append({"check": "green_chain", "lambda": lam, **rep.to_dict()})
    return checks


def cmd_verify_order_props(pl, out, args):
    from .order import random_property_suite

    res = random_property_suite(pl.spec["trials"], args.seed, tol=args.tol)
    return [{"check": "order_properties", **res.to_dict()}]


def cmd_verify_bounds(pl, out, args):
    from .bessel import bessel_k
    from .bounds import (
        bessel_bound_check,
        gaussian_envelope_fit,
        green_envelope_fit,
        laplace_transform_identity_check,
    )
    from .spectral import green_kernel, heat_kernel

    checks = []
    for nu, a, b in ((0.0, 1.0, 1.0), (0.5, 2.0, 0.5), (1.0, 1.0, 3.0)):
        r = laplace_transform_identity_check(nu, a, b)
        checks.append({"check": "laplace_identity", "nu": nu, "a": a, "b": b, "residual": r,
                       "verdict": "pass" if r <= 1e-8 else "fail"})
    xs = np.geomspace(0.1, 50.0, 200)
    err = max(abs(bessel_k(0.5, x).value / (math.sqrt(math.pi / (2 * x)) * math.exp(-x)) - 1)
              for x in xs)
    checks.append({"check": "bessel_half_closed_form", "max_rel_error": err,
                   "verdict": "pass" if err <= 1e-12 else "fail"})
    for nu in (0.0, 0.5, 1.0):
        r = bessel_bound_check(nu, np.geomspace(1e-4, 100.0, 200))
        checks.append({"check": "bessel_bound", "nu": nu, "C": r.C, "argmax": r.argmax,
                       "verdict": "pass" if r.finite else "fail"})
    n = pl.mesh.dim
    gamma = pl.spec["gamma"]
    a1 = 1.0
    for b in pl.spec["boundary"]:
        d = pl.decomposition(b)
        fit = gaussian_envelope_fit([heat_kernel(d, t) for t in pl.spec["t_grid"]], a1, gamma, n)
        checks.append({"check": "gaussian_envelope", "regime": regime_name(b),
                       **json.loads(fit.to_text()),
                       "verdict": "pass" if math.isfinite(fit.C) else "fail"})
        if n <= 2:
            for lam in pl.spec["lambda_grid"]:
                g = green_envelope_fit(green_kernel(d, lam), lam, n)
                checks.append({"check": "green_envelope", "regime": regime_name(b),
                               **json.loads(g.to_text()),
                               "verdict": "pass" if math.isfinite(g.C) else "fail"})
    return checks


def cmd_dirichlet_limit(pl, out, args):
    from .order import dirichlet_limit_driver

    lam = pl.spec["lambda_grid"][0]
    rep = dirichlet_limit_driver(pl.mesh, pl.spec["theta_grid"], lam, pl.A)
    rows = ["theta,delta"] + [f"{t:.17g},{d:.17g}" for t, d in zip(rep.thetas, rep.deltas)]
    atomic_write(out / "dirichlet_limit.csv", "\n".join(rows) + "\n")
    return [{"check": "dirichlet_limit", "lambda": lam, **rep.to_dict(),
             "verdict": "pass" if rep.decreasing else "fail"}]


HANDLERS = {
    "mesh": cmd_mesh,
    "spectrum": cmd_spectrum,
    "heat": cmd_heat,
    "green": cmd_green,
    "verify-chain": cmd_verify_chain,
    "verify-order-props": cmd_verify_order_props,
    "verify-bounds": cmd_verify_bounds,
    "dirichlet-limit": cmd_dirichlet_limit,
}


def run(command, spec_path, out_dir="out", seed=None, tol=None, allow_obtuse=False, threads=None):
    """Run one command; returns ``(exit_status, report_path or None)``."""
    from .errors import RobinHeatError
    from .geometry import mesh_quality

    args = argparse.Namespace()
    try:
        spec = load_spec(spec_path)
        if seed is not None:
            spec["seed"] = int(seed)
        if tol is not None:
            spec["tol"] = float(tol)
        if allow_obtuse:
            spec["require_non_obtuse"] = False
        args.seed, args.tol = spec["seed"], spec["tol"]
        out = Path(out_dir) / spec_hash(spec)
        out.mkdir(parents=True, exist_ok=True)
        pl = Pipeline(spec)
        names = [c for c in COMMANDS if c != "report"] if command == "report" else [command]
        checks = []
        for name in names:
            checks.extend(HANDLERS[name](pl, out, args))
    except (SpecError, OSError, KeyError, TypeError, RobinHeatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2, None
    q = mesh_quality(pl.mesh)
    verdict = all(c.get("verdict") == "pass" for c in checks)
    report = {
        "command": command,
        "provenance": {"spec_hash": spec_hash(spec), "seed": spec["seed"],
                       "threads": threads,
                       "mesh_quality": {"h_max": q.h_max, "max_angle": q.max_angle,
                                        "non_obtuse": q.non_obtuse}},
        "checks": checks,
        "verdict": "pass" if verdict else "fail",
    }
    path = out / "report.json"
    atomic_write(path, json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    return (0 if verdict else 1), path


def main(argv=None):
    parser = argparse.ArgumentParser(prog="robinheat", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--spec", required=True, help="problem spec (JSON)")
    parser.add_argument("--out", default="out", help="output root directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--tol", type=float, default=None)
    parser.add_argument("--allow-obtuse", action="store_true")
    parser.add_argument("--threads", type=int, default=None,
                        help="BLAS thread count (effective only before numpy loads)")
    args = parser.parse_args(argv)
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    status, path = run(args.command, args.spec, args.out, args.seed, args.tol,
                       args.allow_obtuse, args.threads)
    if path is not None:
        print(path)
    return status


if __name__ == "__main__":
    sys.exit(main())
