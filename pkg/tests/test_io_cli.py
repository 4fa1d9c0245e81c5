import os
import textwrap

import numpy as np
import pytest

from slidemesh import __version__
from slidemesh.cli import main
from slidemesh.errors import ConfigurationError, OutputError
from slidemesh.harness import ErrorReport, fit_rate
from slidemesh.io import (cut_records_csv_text, build_cut_from_spec, parse_config_text,
                          read_csv_report, read_vtk, report_csv_text, write_csv_report, write_vtk)
from slidemesh.mesh import build_structured_quad_mesh
from slidemesh.solver import SolutionState

MINIMAL = """\
case:
  name: tg-steady
material:
  model: newtonian
  eta: 0.1
"""


def test_minimal_config_applies_defaults():
    pc = parse_config_text(MINIMAL)
    assert pc.stabilization.alpha == 30.0
    assert pc.levels == 1
    cfg = pc.run_config(1)
    assert cfg.stabilization.alpha == 30.0
    assert cfg.tol_rel == 1e-8 and cfg.max_iter == 25
    echo = pc.echo()
    assert "alpha: 30.0" in echo and "max_iter: 25" in echo


def test_alpha_override_is_honored():
    pc = parse_config_text(MINIMAL + "stabilization:\n  alpha: 10\n")
    assert pc.run_config(2).stabilization.alpha == 10.0


def test_missing_material_is_reported():
    with pytest.raises(ConfigurationError, match="^material: required$"):
        parse_config_text("case:\n  name: tg-steady\n")


@pytest.mark.parametrize("extra, key, line", [
    ("physics:\n  rho: 1.0\n  viscosity: 2\n", "physics.viscosity", 8),
    ("solver:\n  max_iter: -3\n", "solver.max_iter", 7),
    ("colour: red\n", "colour", 6),
    ("time:\n  dt: 0\n", "time.dt", 7),
])
def test_config_errors_name_key_and_line(extra, key, line):
    with pytest.raises(ConfigurationError) as exc:
        parse_config_text(MINIMAL + extra)
    msg = str(exc.value)
    assert msg.startswith(key) and f"(line {line})" in msg


def test_unknown_material_model():
    with pytest.raises(ConfigurationError, match="material.model"):
        parse_config_text(MINIMAL.replace("newtonian", "bingham"))


def _state(meshes, seed=0):
    rng = np.random.default_rng(seed)
    return SolutionState([rng.normal(size=(m.n_nodes, 2)) for m in meshes],
                         [rng.normal(size=m.n_nodes) for m in meshes],
                         [rng.normal(size=m.n_nodes) for m in meshes])


def test_vtk_single_element_with_standard_reader(tmp_path):
    meshio = pytest.importorskip("meshio")
    m = build_structured_quad_mesh((0, 0, 1, 1), 1, 1)
    paths = write_vtk(_state([m]), [m], tmp_path / "one.vtk")
    assert [os.path.basename(p) for p in paths] == ["one_0.vtk", "one.vtk"]
    mesh = meshio.read(paths[0])
    assert mesh.points.shape == (4, 3)
    assert len(mesh.cells) == 1 and mesh.cells[0].type == "quad"
    assert set(mesh.point_data) == {"velocity", "pressure", "temperature", "viscosity"}


def test_vtk_round_trip_is_bitwise(tmp_path):
    m = build_structured_quad_mesh((0, 0, 1, 1), 3, 2)
    st = _state([m], 4)
    path = write_vtk(st, [m], tmp_path / "f.vtk")[0]
    data = read_vtk(path)
    assert np.array_equal(data["points"][:, :2], m.nodes)
    assert np.array_equal(data["velocity"][:, :2], st.u[0])
    assert np.array_equal(data["pressure"], st.p[0])
    assert np.array_equal(data["temperature"], st.T[0])
    assert np.array_equal(data["cells"], m.elements)
    assert np.all(data["cell_types"] == 9)


def test_vtk_combined_file_concatenates_parts(tmp_path):
    a = build_structured_quad_mesh((0, 0, 1, 1), 3, 2)
    b = build_structured_quad_mesh((1, 0, 2, 1), 2, 2, 1)
    paths = write_vtk(_state([a, b]), [a, b], tmp_path / "two.vtk")
    parts = [read_vtk(p) for p in paths]
    assert len(parts[2]["cells"]) == len(parts[0]["cells"]) + len(parts[1]["cells"])
    assert parts[2]["cells"].max() == a.n_nodes + b.n_nodes - 1


def test_vtk_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    m = build_structured_quad_mesh((0, 0, 1, 1), 1, 1)
    with pytest.raises(OutputError):
        write_vtk(_state([m]), [m], blocker / "sub" / "x.vtk")


def _report(levels=5):
    h = 0.25 * 0.5 ** np.arange(levels)
    return ErrorReport("demo", rows=[(x, 3 * x ** 2, x, 2 * x ** 2.1, 0.7 * x)
                                     for x in h])


def test_csv_report_layout_and_rates(tmp_path):
    path = write_csv_report(_report(), tmp_path / "r.csv")
    lines = open(path).read().splitlines()
    assert lines[0] == "level,h,err_u_L2,err_p_L2,jump_u_L2,jump_p_L2"
    assert len(lines) == 7 and lines[-1].startswith("# rate_u=")
    header, rows, rates = read_csv_report(path)
    assert rows.shape == (5, 6)
    for name, col in (("rate_u", 2), ("rate_p", 3), ("rate_ju", 4), ("rate_jp", 5)):
        assert rates[name] == pytest.approx(fit_rate(rows[:, 1], rows[:, col])[0], abs=1e-12)
    assert rates["rate_ju"] == pytest.approx(2.1, abs=1e-12)


def test_csv_empty_report_and_precision():
    assert report_csv_text(ErrorReport("x")) == "level,h,err_u_L2,err_p_L2,jump_u_L2,jump_p_L2\n"
    text = report_csv_text(ErrorReport("x", rows=[(0.1, 1 / 3, 2 / 3, 0.5, 1e-20)]))
    assert "0.33333333333333331" in text
    row = text.splitlines()[1].split(",")
    assert float(row[2]) == 1 / 3


def test_csv_unwritable(tmp_path):
    with pytest.raises(OutputError):
        write_csv_report(_report(), tmp_path / "missing" / "r.csv")


# --- command line -----------------------------------------------------------

def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return str(p)


def test_run_twice_gives_identical_csv(tmp_path, capsys):
    cfg = _write(tmp_path, "c.yaml", MINIMAL + "output:\n  vtk: false\n")
    out = []
    for k in range(2):
        d = tmp_path / f"o{k}"
        assert main(["--out", str(d), "run", cfg]) == 0
        out.append((d / "tg-steady.csv").read_bytes())
    assert out[0] == out[1]
    assert b"err_u_L2" in out[0]
    text = capsys.readouterr().out
    assert "alpha: 30.0" in text and "step 0" in text


def test_run_writes_vtk(tmp_path):
    cfg = _write(tmp_path, "c.yaml", MINIMAL)
    assert main(["--out", str(tmp_path / "o"), "run", cfg]) == 0
    names = sorted(os.listdir(tmp_path / "o"))
    assert "tg-steady_level1.vtk" in names and "tg-steady_level1_3.vtk" in names


def test_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path, "bad.yaml", "case:\n  name: tg-steady\n")
    assert main(["--out", str(tmp_path), "run", bad]) == 2
    assert "material: required" in capsys.readouterr().err
    assert main(["--out", str(tmp_path), "run", str(tmp_path / "none.yaml")]) == 2
    div = _write(tmp_path, "div.yaml", MINIMAL + "solver:\n  max_iter: 1\n  tol_abs: 1.0e-300\n"
                                                 "  tol_rel: 1.0e-300\n")
    assert main(["--out", str(tmp_path), "run", div]) == 3
    geo = _write(tmp_path, "geo.yaml", """\
        interface: {kind: line, origin: [0.5, 0.0], direction: [0.0, 1.0]}
        side_a: {rect: [0, 0, 0.5, 1], nx: 2, ny: 2, edge: right}
        side_b: {rect: [0.6, 0, 1, 1], nx: 2, ny: 2, edge: left}
        """)
    assert main(["--out", str(tmp_path), "cut-test", geo]) == 4
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["--out", str(blocker / "x"), "run", _write(tmp_path, "ok.yaml", MINIMAL)]) == 5
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code != 0
    assert "usage" in capsys.readouterr().err


def test_cut_test_writes_records(tmp_path, capsys):
    spec = _write(tmp_path, "cut.yaml", """\
        interface: {kind: line, origin: [0.5, 0.0], direction: [0.0, 1.0]}
        order: 2
        side_a: {rect: [0, 0, 0.5, 1], nx: 4, ny: 4, edge: right}
        side_b: {rect: [0.5, 0.2, 1, 1.2], nx: 3, ny: 3, edge: left}
        """)
    assert main(["--out", str(tmp_path / "o"), "cut-test", spec]) == 0
    lines = (tmp_path / "o" / "cuts.csv").read_text().splitlines()
    assert lines[0] == "facetA,facetB,measure,x,y,weight"
    w = np.array([float(r.split(",")[5]) for r in lines[1:]])
    assert w.sum() == pytest.approx(0.8, abs=1e-12)
    assert "cuts, wrote" in capsys.readouterr().out


def test_convergence_command(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "convergence", "--case", "conduction",
                 "--levels", "2"]) == 0
    header, rows, rates = read_csv_report(tmp_path / "conduction.csv")
    assert header == ["level", "h", "err_T_L2", "jump_T_L2"] and rows.shape == (2, 4)
    assert set(rates) == {"rate_err_T_L2", "rate_jump_T_L2"}
    assert "rate=" in capsys.readouterr().out
    assert main(["--out", str(tmp_path), "convergence", "--case", "conduction",
                 "--levels", "0"]) == 2


def test_version(capsys):
    assert main(["version"]) == 0
    assert capsys.readouterr().out.strip() == f"slidemesh {__version__}"
