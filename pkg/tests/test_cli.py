import csv
import io
import json
import math
from pathlib import Path

import numpy as np
import pytest

from robinheat.assembly import build_pencil
from robinheat.cli import emit_plotdata, load_spec, main, normalize_spec, run, spec_hash
from robinheat.coefficients import LocalMultiplication, Zero
from robinheat.errors import SpecError
from robinheat.geometry import Interval, build_mesh, unit_square
from robinheat.spectral import eigensolve, green_kernel, heat_kernel

SPECS = Path(__file__).resolve().parents[1] / "specs"


def write_spec(tmp_path, name="spec.json", **fields):
    spec = {"schema": "robinheat/1", "domain": {"type": "interval"}, "h": 0.0625, **fields}
    path = tmp_path / name
    path.write_text(json.dumps(spec))
    return path


def report(path):
    return json.loads(Path(path).read_text())


def test_spectrum_interval_dirichlet(tmp_path):
    status, path = run("spectrum", SPECS / "interval_dirichlet.json", tmp_path)
    assert status == 0
    rows = list(csv.DictReader(open(path.parent / "eigenvalues.csv")))
    lam = [float(r["eigenvalue"]) for r in rows[:5]]
    np.testing.assert_allclose(lam, (np.arange(1, 6) * math.pi) ** 2, rtol=1e-3)


def test_verify_chain_square(tmp_path):
    status, path = run("verify-chain", SPECS / "unit_square_chain.json", tmp_path)
    assert status == 0
    rep = report(path)
    assert rep["verdict"] == "pass"
    heat = [c for c in rep["checks"] if c["check"] == "heat_chain"]
    assert [c["t"] for c in heat] == [0.05, 0.2, 1.0]
    assert rep["provenance"]["mesh_quality"]["non_obtuse"]


def test_obtuse_mesh_refused_then_counter_run(tmp_path):
    spec = SPECS / "obtuse_triangle.json"
    assert run("verify-chain", spec, tmp_path)[0] == 2
    status, path = run("verify-chain", spec, tmp_path, allow_obtuse=True)
    assert status == 1
    rep = report(path)
    bad = [c for c in rep["checks"] if c.get("verdict") == "fail"]
    assert bad
    assert any(c["details"]["negative_entries_first"] > 0 for c in bad)
    assert all(len(c["witness_indices"]) == 3 for c in bad)


def test_exit_two_on_bad_spec(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert run("mesh", missing, tmp_path) == (2, None)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("mesh", bad, tmp_path) == (2, None)
    assert run("mesh", write_spec(tmp_path, t_grid=[-1.0]), tmp_path) == (2, None)
    assert "error" in capsys.readouterr().err


@pytest.mark.parametrize("raw", [
    [],
    {"schema": "other", "domain": {"type": "interval"}},
    {"schema": "robinheat/1"},
    {"schema": "robinheat/1", "domain": {"type": "interval"}, "colour": 1},
    {"schema": "robinheat/1", "domain": {"type": "interval"}, "boundary": [{"type": "periodic"}]},
    {"schema": "robinheat/1", "domain": {"type": "interval"}, "coefficient": {"name": "magic"}},
    {"schema": "robinheat/1", "domain": {"type": "interval"}, "h": 0},
])
def test_spec_validation(raw):
    with pytest.raises(SpecError):
        normalize_spec(raw)


def test_spec_hash_tracks_fields(tmp_path):
    base = load_spec(write_spec(tmp_path))
    assert spec_hash(base) == spec_hash(load_spec(write_spec(tmp_path, "b.json")))
    for change in ({"h": 0.03125}, {"seed": 1}, {"t_grid": [0.1]}, {"domain": {"type": "interval", "b": 2.0}}):
        assert spec_hash(load_spec(write_spec(tmp_path, "c.json", **change))) != spec_hash(base)


def test_replay_byte_identical(tmp_path):
    spec = write_spec(tmp_path, trials=50)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        assert run("report", spec, out, seed=3)[0] == 0
    files1 = sorted(p.relative_to(out1) for p in out1.rglob("*") if p.is_file())
    files2 = sorted(p.relative_to(out2) for p in out2.rglob("*") if p.is_file())
    assert files1 == files2 and files1
    for f in files1:
        assert (out1 / f).read_bytes() == (out2 / f).read_bytes()


def test_seed_changes_output_directory(tmp_path):
    spec = write_spec(tmp_path, trials=20)
    _, p1 = run("verify-order-props", spec, tmp_path, seed=1)
    _, p2 = run("verify-order-props", spec, tmp_path, seed=2)
    assert p1.parent != p2.parent
    assert report(p1)["provenance"]["seed"] == 1


def test_dirichlet_limit_command(tmp_path):
    status, path = run("dirichlet-limit", SPECS / "interval_limit.json", tmp_path)
    assert status == 0
    rep = report(path)["checks"][0]
    assert rep["decreasing"]
    assert -1.3 <= rep["slope"] <= -0.7


def test_heat_and_green_artifacts(tmp_path):
    status, path = run("report", write_spec(tmp_path, trials=20), tmp_path)
    assert status == 0
    names = {p.name for p in path.parent.iterdir()}
    assert "mesh.txt" in names
    assert "heat_neumann_t0.2_diagonal.csv" in names
    assert "heat_neumann_t0.2.bin" in names
    assert "green_dirichlet_lambda1_distance.csv" in names
    assert not any(n.startswith(".tmp-") for n in names)


def test_main_entry(tmp_path, capsys):
    spec = write_spec(tmp_path)
    assert main(["mesh", "--spec", str(spec), "--out", str(tmp_path)]) == 0
    printed = capsys.readouterr().out.strip()
    assert printed.endswith("report.json")
    with pytest.raises(SystemExit):
        main(["bogus", "--spec", str(spec)])


# plot data -----------------------------------------------------------------------


def parse(text):
    return list(csv.reader(io.StringIO(text)))


def test_plot_diagonal():
    mesh = build_mesh(Interval(0, 1), 0.125)
    g = heat_kernel(eigensolve(build_pencil(mesh)), 0.1)
    rows = parse(emit_plotdata(g, "diagonal"))
    assert rows[0] == ["x0", "value"]
    assert len(rows) == 1 + mesh.n_nodes
    for i, (x, v) in enumerate(rows[1:]):
        assert float(x) == mesh.nodes[i, 0]
        assert float(v) == g.matrix[i, i]


def test_plot_distance_count():
    mesh = build_mesh(unit_square(), 0.25)
    g = green_kernel(eigensolve(build_pencil(mesh)), 1.0)
    rows = parse(emit_plotdata(g, "distance"))
    n = mesh.n_nodes
    assert len(rows) - 1 == n * (n - 1)
    assert all(float(d) > 0 for d, _ in rows[1:])


@pytest.mark.parametrize("theta", [Zero(), LocalMultiplication.constant(1.0), LocalMultiplication.constant(5.0)])
def test_plot_slice_sub_markov(theta):
    mesh = build_mesh(unit_square(), 0.1, require_non_obtuse=True)
    g = heat_kernel(eigensolve(build_pencil(mesh, theta)), 0.2)
    rows = parse(emit_plotdata(g, "slice"))
    vals = np.array([float(r[-1]) for r in rows[1:]])
    total = float(vals @ g.weights)
    assert 0 <= total <= 1 + 1e-10


def test_plot_unknown_axis():
    mesh = build_mesh(Interval(0, 1), 0.5)
    with pytest.raises(ValueError):
        emit_plotdata(heat_kernel(eigensolve(build_pencil(mesh)), 0.1), "spiral")
