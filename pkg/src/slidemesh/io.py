"""Run configuration files and result writers (VTK fields, CSV tables).

Configuration files are YAML with these top-level sections::

    case:           # required
      name: tg-steady         # tg-steady | tg-convective | tg-reference | conduction | channel | annulus
      levels: 3               # refinement levels 1..levels (default 1)
      options: {}             # extra keyword arguments of the case builder
    material:       # required
      model: newtonian        # newtonian | carreau | cross_wlf
      eta: 0.1
    physics:        rho, cp, kappa, body_force ([bx, by])
    stabilization:  alpha (30), tau_variant, include_recovery, quad_order, interface_order
    time:           dt, n_steps
    solver:         tol_abs, tol_rel, max_iter
    output:         vtk (true), csv (true)

Unknown keys are rejected; every error names the key and its line.
"""

from __future__ import annotations

import csv
import io as _io
import os
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .cut import (CircleParameterization, InterfaceSide, LineParameterization,
                  build_interface_quadrature)
from .errors import ConfigurationError, OutputError
from .forms import StabilizationConfig
from .harness import (CASES, annulus_config, channel_config, conduction_config,
                      fit_rate, taylor_green_config)
from .material import Newtonian, PhysicalParams, model_from_dict, shear_rate, viscosity
from .mesh import REF_NODES, build_annulus_mesh, build_structured_quad_mesh

SCHEMA = {
    "case": {"name", "levels", "options"},
    "material": None,            # validated by the model constructor
    "physics": {"rho", "cp", "kappa", "body_force"},
    "stabilization": {"alpha", "tau_variant", "include_recovery", "quad_order",
                      "interface_order", "c_inv"},
    "time": {"dt", "n_steps"},
    "solver": {"tol_abs", "tol_rel", "max_iter"},
    "output": {"vtk", "csv"},
}

SOLVER_DEFAULTS = {"tol_abs": 1e-9, "tol_rel": 1e-8, "max_iter": 25}


@dataclass
class ParsedConfig:
    """Validated file contents; ``run_config(level)`` builds the solver input."""

    case: str
    levels: int = 1
    options: dict = field(default_factory=dict)
    material: object = None
    physics: dict = field(default_factory=dict)
    stabilization: StabilizationConfig = field(default_factory=StabilizationConfig)
    time: dict = field(default_factory=dict)
    solver: dict = field(default_factory=lambda: dict(SOLVER_DEFAULTS))
    output: dict = field(default_factory=lambda: {"vtk": True, "csv": True})
    source: str | None = None

    def echo(self):
        """Effective settings, defaults included, as YAML text."""
        data = {"case": {"name": self.case, "levels": self.levels, "options": self.options},
                "material": repr(self.material), "physics": self.physics,
                "stabilization": self.stabilization.__dict__, "time": self.time,
                "solver": self.solver, "output": self.output}
        return yaml.safe_dump(data, sort_keys=True)

    def run_config(self, level=1):
        stab = self.stabilization
        opts = dict(self.options)
        if self.case.startswith("tg-"):
            eta = self.material.eta if isinstance(self.material, Newtonian) else None
            cfg = taylor_green_config(level, convective=self.case == "tg-convective",
                                      reference=self.case == "tg-reference", alpha=stab.alpha,
                                      eta=eta, **opts)
            # the steady forcing / exact data depend on eta only through the builder
        elif self.case == "conduction":
            cfg, _ = conduction_config(level, alpha=stab.alpha, **opts)
        elif self.case == "channel":
            cfg = channel_config(level, alpha=stab.alpha, **opts)
        elif self.case == "annulus":
            cfg = annulus_config(level, alpha=stab.alpha, **opts)
        else:
            raise ConfigurationError(f"case.name: unknown case {self.case!r}")
        upd = {"stabilization": replace(cfg.stabilization, **{
            k: getattr(stab, k) for k in ("alpha", "tau_variant", "quad_order",
                                          "interface_order", "c_inv")})}
        if self._explicit_recovery is not None:
            upd["stabilization"] = replace(upd["stabilization"],
                                           include_recovery=self._explicit_recovery)
        if self.material is not None and self.case not in ("conduction",):
            upd["material"] = self.material
        if self.physics:
            phys = {k: v for k, v in self.physics.items() if k != "body_force"}
            if "body_force" in self.physics:
                phys["b"] = tuple(self.physics["body_force"])
            upd["params"] = replace(cfg.params, **phys)
        if "dt" in self.time:
            upd["dt"] = float(self.time["dt"])
        if "n_steps" in self.time:
            upd["n_steps"] = int(self.time["n_steps"])
        upd.update({k: self.solver[k] for k in SOLVER_DEFAULTS})
        return replace(cfg, **upd)

    _explicit_recovery: bool | None = None


def _line(node):
    return node.start_mark.line + 1 if node is not None else "?"


def _key_nodes(mapping_node):
    """Map key -> (key node, value node) for a YAML mapping node."""
    out = {}
    for k, v in mapping_node.value:
        out[k.value] = (k, v)
    return out


def _fail(path, node, msg):
    raise ConfigurationError(f"{path}: {msg} (line {_line(node)})")


def parse_config(path):
    """Read and validate a YAML run configuration."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, source=str(path))


def parse_config_text(text, source=None):
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config is not valid YAML: {exc}") from None
    if root is None or not isinstance(data, dict):
        raise ConfigurationError("config: expected a mapping of sections (line 1)")
    nodes = _key_nodes(root)
    for key in data:
        if key not in SCHEMA:
            _fail(key, nodes[key][0], f"unknown section; expected one of {sorted(SCHEMA)}")
    for req in ("case", "material"):
        if req not in data:
            raise ConfigurationError(f"{req}: required")
    for sec, allowed in SCHEMA.items():
        if sec not in data or allowed is None:
            continue
        if not isinstance(data[sec], dict):
            _fail(sec, nodes[sec][1], "expected a mapping")
        sub = _key_nodes(nodes[sec][1])
        for key in data[sec]:
            if key not in allowed:
                _fail(f"{sec}.{key}", sub[key][0], f"unknown key; expected one of {sorted(allowed)}")

    def value_node(sec, key):
        return _key_nodes(nodes[sec][1])[key][1]

    case = data["case"]
    if "name" not in case:
        _fail("case.name", nodes["case"][1], "required")
    if case["name"] not in CASES:
        _fail("case.name", value_node("case", "name"),
              f"unknown case {case['name']!r}; expected one of {list(CASES)}")
    levels = case.get("levels", 1)
    if not isinstance(levels, int) or isinstance(levels, bool) or levels < 1:
        _fail("case.levels", value_node("case", "levels"), "must be a positive integer")
    options = case.get("options") or {}
    if not isinstance(options, dict):
        _fail("case.options", value_node("case", "options"), "expected a mapping")

    mat = data["material"]
    if not isinstance(mat, dict):
        _fail("material", nodes["material"][1], "expected a mapping")
    try:
        material = model_from_dict(mat)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{exc} (line {_line(nodes['material'][1])})") from None

    physics = dict(data.get("physics") or {})
    for key, v in physics.items():
        ok = (isinstance(v, list) and len(v) == 2) if key == "body_force" else \
            isinstance(v, (int, float)) and not isinstance(v, bool)
        if not ok:
            _fail(f"physics.{key}", value_node("physics", key), f"invalid value {v!r}")
    try:
        PhysicalParams(**{k: v for k, v in physics.items() if k != "body_force"})
    except ConfigurationError as exc:
        _fail("physics", nodes["physics"][1], str(exc))

    stab_d = dict(data.get("stabilization") or {})
    recovery = stab_d.get("include_recovery")
    try:
        stab = StabilizationConfig(**stab_d)
    except (ValueError, TypeError) as exc:
        bad = next(iter(stab_d), None)
        node = value_node("stabilization", bad) if bad else nodes["stabilization"][1]
        _fail("stabilization", node, str(exc))

    tm = dict(data.get("time") or {})
    if "dt" in tm and not (isinstance(tm["dt"], (int, float)) and tm["dt"] > 0):
        _fail("time.dt", value_node("time", "dt"), "must be positive")
    if "n_steps" in tm and not (isinstance(tm["n_steps"], int) and tm["n_steps"] >= 0):
        _fail("time.n_steps", value_node("time", "n_steps"), "must be a non-negative integer")

    solver = dict(SOLVER_DEFAULTS)
    for key, v in (data.get("solver") or {}).items():
        if not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0:
            _fail(f"solver.{key}", value_node("solver", key), f"invalid value {v!r}")
        solver[key] = int(v) if key == "max_iter" else float(v)

    output = {"vtk": True, "csv": True}
    for key, v in (data.get("output") or {}).items():
        if not isinstance(v, bool):
            _fail(f"output.{key}", value_node("output", key), "must be true or false")
        output[key] = v

    pc = ParsedConfig(case=case["name"], levels=levels, options=options, material=material,
                      physics=physics, stabilization=stab, time=tm, solver=solver,
                      output=output, source=source)
    pc._explicit_recovery = recovery
    return pc


# ---------------------------------------------------------------------------
# VTK
# ---------------------------------------------------------------------------

def _fmt(v):
    return repr(float(v))


def _vtk_text(blocks):
    """Legacy ASCII unstructured grid for a list of (nodes, elements, u, p, T, eta)."""
    nodes = np.concatenate([b[0] for b in blocks])
    offs = np.cumsum([0] + [len(b[0]) for b in blocks])
    cells = np.concatenate([b[1] + o for b, o in zip(blocks, offs)])
    u = np.concatenate([b[2] for b in blocks])
    out = _io.StringIO()
    w = out.write
    w("# vtk DataFile Version 3.0\nslidemesh solution\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    w(f"POINTS {len(nodes)} double\n")
    for x, y in nodes:
        w(f"{_fmt(x)} {_fmt(y)} 0.0\n")
    w(f"CELLS {len(cells)} {5 * len(cells)}\n")
    for c in cells:
        w("4 " + " ".join(str(int(i)) for i in c) + "\n")
    w(f"CELL_TYPES {len(cells)}\n")
    w("9\n" * len(cells))
    w(f"POINT_DATA {len(nodes)}\nVECTORS velocity double\n")
    for a, b in u:
        w(f"{_fmt(a)} {_fmt(b)} 0.0\n")
    for name, k in (("pressure", 3), ("temperature", 4), ("viscosity", 5)):
        w(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        for v in np.concatenate([b[k] for b in blocks]):
            w(_fmt(v) + "\n")
    return out.getvalue()


def nodal_viscosity(mesh, u, T, model):
    """Viscosity at nodes from the shear rate averaged over adjacent element corners."""
    el = mesh.elements
    xi = np.broadcast_to(REF_NODES, (len(el), 4, 2))
    _, _, dN, _, _ = mesh.geometry(np.repeat(np.arange(len(el)), 4).reshape(-1, 4), xi)
    grad = np.einsum("mqaj,mai->mqij", dN, u[el])
    gd = np.zeros(mesh.n_nodes)
    cnt = np.zeros(mesh.n_nodes)
    np.add.at(gd, el, shear_rate(grad))
    np.add.at(cnt, el, 1.0)
    return np.asarray(viscosity(model, gd / np.maximum(cnt, 1), T), float) * np.ones(mesh.n_nodes)


def write_vtk(state, meshes, path, materials=None):
    """Write one file per subdomain (``<stem>_<k>.vtk``) and a combined ``path``.

    Returns the list of written paths, combined file last.
    """
    path = os.fspath(path)
    stem = path[:-4] if path.endswith(".vtk") else path
    blocks = []
    for k, m in enumerate(meshes):
        if materials is None:
            eta = np.full(m.n_nodes, np.nan)
        else:
            eta = nodal_viscosity(m, state.u[k], state.T[k], materials[k])
        blocks.append((m.nodes, m.elements, state.u[k], state.p[k], state.T[k], eta))
    written = []
    try:
        for k, b in enumerate(blocks):
            p = f"{stem}_{k}.vtk"
            with open(p, "w", encoding="ascii") as fh:
                fh.write(_vtk_text([b]))
            written.append(p)
        combined = stem + ".vtk"
        with open(combined, "w", encoding="ascii") as fh:
            fh.write(_vtk_text(blocks))
        written.append(combined)
    except OSError as exc:
        raise OutputError(f"cannot write VTK output {path}: {exc}") from None
    return written


def read_vtk(path):
    """Minimal reader for files produced by :func:`write_vtk`."""
    with open(path, encoding="ascii") as fh:
        lines = fh.read().split("\n")
    out = {}
    i = 0
    while i < len(lines):
        tok = lines[i].split()
        if not tok:
            i += 1
            continue
        if tok[0] == "POINTS":
            n = int(tok[1])
            out["points"] = np.array([[float(v) for v in ln.split()] for ln in lines[i + 1:i + 1 + n]])
            i += n + 1
        elif tok[0] == "CELLS":
            n = int(tok[1])
            out["cells"] = np.array([[int(v) for v in ln.split()[1:]] for ln in lines[i + 1:i + 1 + n]])
            i += n + 1
        elif tok[0] == "CELL_TYPES":
            n = int(tok[1])
            out["cell_types"] = np.array([int(v) for v in lines[i + 1:i + 1 + n]])
            i += n + 1
        elif tok[0] == "POINT_DATA":
            npts = int(tok[1])
            i += 1
        elif tok[0] == "VECTORS":
            out[tok[1]] = np.array([[float(v) for v in ln.split()] for ln in lines[i + 1:i + 1 + npts]])
            i += npts + 1
        elif tok[0] == "SCALARS":
            out[tok[1]] = np.array([float(v) for v in lines[i + 2:i + 2 + npts]])
            i += npts + 2
        else:
            i += 1
    return out


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

CSV_HEADER = ("level", "h", "err_u_L2", "err_p_L2", "jump_u_L2", "jump_p_L2")
RATE_NAMES = (("rate_u", "err_u_L2"), ("rate_p", "err_p_L2"), ("rate_ju", "jump_u_L2"),
              ("rate_jp", "jump_p_L2"))


def _g17(v):
    return format(float(v), ".17g")


def report_csv_text(report):
    cols = tuple(report.columns)
    header = ("level",) + cols
    buf = _io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for lv, row in enumerate(report.rows, start=1):
        wr.writerow([lv] + [_g17(v) for v in row])
    if report.rows:
        if cols == CSV_HEADER[1:]:
            names = RATE_NAMES
        else:
            names = tuple((f"rate_{c}", c) for c in cols[1:])
        parts = [f"{label}={_g17(report.rate(col)[0])}" for label, col in names]
        buf.write("# " + ",".join(parts) + "\n")
    return buf.getvalue()


def write_csv_report(report, path):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(report_csv_text(report))
    except OSError as exc:
        raise OutputError(f"cannot write CSV report {path}: {exc}") from None
    return path


def read_csv_report(path):
    """Rows (as float arrays) and the footer rates of a written report."""
    rows, rates = [], {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            if line.startswith("#"):
                for part in line[1:].strip().split(","):
                    k, v = part.split("=")
                    rates[k] = float(v)
            elif line.strip():
                rows.append([float(v) for v in line.strip().split(",")])
    return header, np.array(rows), rates


def fit_rate_from_rows(rows, column):
    return fit_rate(rows[:, 1], rows[:, column])[0]


# ---------------------------------------------------------------------------
# cut-test geometry specs
# ---------------------------------------------------------------------------

def parse_cut_spec(path):
    """Geometry spec for ``cut-test``: two meshes and a shared interface.

    Example::

        interface: {kind: line, origin: [0.5, 0.0], direction: [0.0, 1.0]}
        order: 3
        side_a: {rect: [0, 0, 0.5, 1], nx: 4, ny: 4, edge: right}
        side_b: {rect: [0.5, 0.2, 1, 1.2], nx: 3, ny: 3, edge: left}

    or for a circle::

        interface: {kind: circle, center: [0, 0], radius: 0.75}
        side_a: {annulus: [0.5, 0.75], n_theta: 24, n_r: 2, edge: outer, theta0: 0.1}
        side_b: {annulus: [0.75, 1.0], n_theta: 32, n_r: 2, edge: inner}
    """
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read cut spec {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cut spec is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError("cut spec: expected a mapping")
    for req in ("interface", "side_a", "side_b"):
        if req not in data:
            raise ConfigurationError(f"{req}: required")
    return data


def build_cut_from_spec(data):
    itf = data["interface"]
    kind = itf.get("kind", "line")
    if kind == "line":
        param = LineParameterization(tuple(itf["origin"]), tuple(itf["direction"]))
    elif kind == "circle":
        param = CircleParameterization(tuple(itf.get("center", (0.0, 0.0))), float(itf["radius"]))
    else:
        raise ConfigurationError(f"interface.kind: unknown kind {kind!r}")

    sides = []
    for k, name in enumerate(("side_a", "side_b")):
        s = data[name]
        edge = s.get("edge")
        if "rect" in s:
            m = build_structured_quad_mesh(tuple(s["rect"]), int(s["nx"]), int(s["ny"]), k,
                                           lambda side, mid, e=edge: "iface" if side == e else "other")
        elif "annulus" in s:
            r0, r1 = s["annulus"]
            m = build_annulus_mesh(r0, r1, int(s["n_theta"]), int(s.get("n_r", 1)), k,
                                   center=tuple(itf.get("center", (0.0, 0.0))),
                                   theta0=float(s.get("theta0", 0.0)),
                                   tag_rules={edge: "iface"})
        else:
            raise ConfigurationError(f"{name}: needs 'rect' or 'annulus'")
        fids = m.facets_with_tag("iface")
        if len(fids) == 0:
            raise ConfigurationError(f"{name}.edge: no facets tagged by {edge!r}")
        sides.append(InterfaceSide(m, fids, "iface"))
    return build_interface_quadrature(sides[0], sides[1], param, int(data.get("order", 3)))


def cut_records_csv_text(interface):
    buf = _io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["facetA", "facetB", "measure", "x", "y", "weight"])
    for c in interface.cuts:
        for x, wgt in zip(c.x, c.weights):
            wr.writerow([c.facet_a, c.facet_b, _g17(c.measure), _g17(x[0]), _g17(x[1]), _g17(wgt)])
    return buf.getvalue()
