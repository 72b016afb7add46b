"""Feeder JSON documents, result CSVs, Y-Bus triplet export and bundled fixtures.

Feeder document (schema version 1), all electrical values in per unit::

    {
      "schema_version": 1,
      "name": "example",
      "base": {"mva": 1.0, "kv_ll": {"primary": 4.16}},
      "slack": {"bus": "src", "voltage": [[1, 0], [1, -120], [1, 120]]},
      "buses": [
        {"id": "src", "connection": "slack", "phases": "abc"},
        {"id": "2", "connection": "wye", "phases": "abc",
         "loads": [{"s": {"a": [0.1, 0.05]}, "i": {}, "y": {}}],
         "capacitors": [{"b": {"a": 0.02}}]}
      ],
      "edges": [
        {"id": "L1", "kind": "line", "from": "src", "to": "2", "phases": "abc",
         "z": {"re": [[...]], "im": [[...]]}, "y_shunt": {"re": [[...]], "im": [[...]]}},
        {"id": "T1", "kind": "transformer", "from": "2", "to": "3", "phases": "abc",
         "connection": "d-d", "z_t": [0.01, 0.06]},
        {"id": "R1", "kind": "regulator", "from": "3", "to": "4", "phases": "abc",
         "configuration": "open-delta", "type": "B", "taps": {"ab": 7, "cb": 4},
         "z_r": {"ab": [0, 0.01], "cb": [0, 0.01]},
         "line": {"phases": "abc", "z": {...}, "y_shunt": {...}}}
      ]
    }

Complex scalars are ``[re, im]`` pairs (a bare number means a real value),
complex matrices are ``{"re": ..., "im": ...}``. Slack voltages are
``[magnitude, angle in degrees]``. Load keys are phases for wye loads and
the pairs ``ab``, ``bc``, ``ca`` for delta loads; a load or capacitor may
override the bus connection with its own ``"connection"``. A capacitor
entry ``b`` is a shunt susceptance and becomes a constant-impedance load
``y = jb``.
"""

from __future__ import annotations

import csv
import io
import json
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .elements import LineSpec, RegulatorSpec, TransformerSpec
from .errors import FeederError, ParseError
from .loads import DELTA_PAIRS, ZipDeltaLoad, ZipWyeLoad
from .topology import Bus, Edge, Feeder, natural_sorted, phase_set

SCHEMA_VERSION = 1
FIXTURES = ("ieee37", "ieee123")


# ------------------------------------------------------------ value codecs


def _complex(value: Any, what: str) -> complex:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise FeederError(f"{what}: expected a number or [re, im], got {value!r}")


def _encode_complex(value: complex) -> list[float]:
    value = complex(value)
    return [float(value.real), float(value.imag)]


def _matrix(value: Any, what: str) -> np.ndarray:
    if not isinstance(value, dict) or "re" not in value:
        raise FeederError(f"{what}: expected {{'re': [[...]], 'im': [[...]]}}")
    re = np.asarray(value["re"], dtype=float)
    im = np.asarray(value.get("im", np.zeros_like(re)), dtype=float)
    if re.shape != im.shape or re.ndim != 2:
        raise FeederError(f"{what}: real and imaginary parts must be matching 2-D arrays")
    return re + 1j * im


def _encode_matrix(m: np.ndarray) -> dict[str, list]:
    return {"re": np.real(m).tolist(), "im": np.imag(m).tolist()}


def _polar(value: Any, what: str) -> complex:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise FeederError(f"{what}: expected [magnitude, angle_deg]")
    mag, ang = float(value[0]), float(value[1])
    return mag * np.exp(1j * np.deg2rad(ang))


# ----------------------------------------------------------------- parsing


def _load_from_record(rec: dict, bus_connection: str, phases, what: str) -> ZipWyeLoad | ZipDeltaLoad:
    conn = rec.get("connection", "wye" if bus_connection == "slack" else bus_connection)
    keys = tuple(phases) if conn == "wye" else DELTA_PAIRS
    if conn not in ("wye", "delta"):
        raise FeederError(f"{what}: load connection must be wye or delta, got {conn!r}")
    values = {}
    for part in ("s", "i", "y"):
        entries = rec.get(part, {}) or {}
        unknown = set(entries) - set(keys)
        if unknown:
            raise FeederError(f"{what}: {part} keys {sorted(unknown)} not valid for a {conn} load on {''.join(phases)!r}")
        values[part] = np.array([_complex(entries[k], f"{what} {part}[{k}]") if k in entries else 0j for k in keys])
    cls = ZipWyeLoad if conn == "wye" else ZipDeltaLoad
    return cls(phases=phases, fixed_current_phase=bool(rec.get("fixed_current_phase", False)), **values)


def _capacitor_from_record(rec: dict, bus_connection: str, phases, what: str) -> ZipWyeLoad | ZipDeltaLoad:
    conn = rec.get("connection", bus_connection)
    susceptance = rec.get("b", {})
    return _load_from_record(
        {"connection": conn, "y": {k: [0.0, float(b)] for k, b in susceptance.items()}},
        bus_connection, phases, what,
    )


def _bus_from_record(rec: dict) -> Bus:
    phases = phase_set(rec["phases"])
    conn = rec.get("connection", "wye")
    loads = [
        _load_from_record(l, conn, phases, f"load {k}") for k, l in enumerate(rec.get("loads", []))
    ]
    loads += [
        _capacitor_from_record(c, conn, phases, f"capacitor {k}")
        for k, c in enumerate(rec.get("capacitors", []))
    ]
    return Bus(id=str(rec["id"]), connection=conn, phases=phases, loads=tuple(loads))


def _line_from_record(rec: dict, phases) -> LineSpec:
    z = _matrix(rec["z"], "z")
    ys = _matrix(rec["y_shunt"], "y_shunt") if rec.get("y_shunt") is not None else None
    return LineSpec(phases=phases, z=z, y_shunt=ys)


def _edge_from_record(rec: dict) -> Edge:
    kind = rec["kind"]
    phases = phase_set(rec["phases"])
    if kind == "line":
        element = _line_from_record(rec, phases)
    elif kind == "transformer":
        z_t = _complex(rec["z_t"], "z_t")
        if z_t == 0:
            raise FeederError("z_t must be nonzero")
        element = TransformerSpec(
            connection=rec["connection"],
            y_t=1 / z_t,
            eps_self=_complex(rec.get("eps_self", 0), "eps_self"),
            eps_mutual=_complex(rec.get("eps_mutual", 0), "eps_mutual"),
        )
    elif kind == "regulator":
        line_rec = rec["line"]
        element = RegulatorSpec(
            configuration=rec["configuration"],
            phases=phases,
            taps={str(k): v for k, v in rec["taps"].items()},
            z_r={str(k): _complex(v, f"z_r[{k}]") for k, v in rec.get("z_r", {}).items()},
            svr_type=rec.get("type", "B"),
            line=_line_from_record(line_rec, phase_set(line_rec.get("phases", phases))),
        )
    else:
        raise FeederError(f"unknown edge kind {kind!r}")
    return Edge(id=str(rec["id"]), from_bus=str(rec["from"]), to_bus=str(rec["to"]), phases=phases, element=element)


def _record_error(section: str, k: int, rec: Any, exc: Exception) -> ParseError:
    ident = rec.get("id") if isinstance(rec, dict) else None
    label = f"{section}[{k}]" + (f" (id {ident!r})" if ident is not None else "")
    msg = f"missing field {exc}" if isinstance(exc, KeyError) else str(exc)
    return ParseError(f"{label}: {msg}")


def feeder_from_dict(doc: dict) -> Feeder:
    """Validate a decoded feeder document and build the ``Feeder``."""
    if not isinstance(doc, dict):
        raise ParseError("feeder document must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
    buses, edges = [], []
    for section, target, builder in (("buses", buses, _bus_from_record), ("edges", edges, _edge_from_record)):
        records = doc.get(section)
        if not isinstance(records, list):
            raise ParseError(f"'{section}' must be a list")
        for k, rec in enumerate(records):
            try:
                target.append(builder(rec))
            except (FeederError, KeyError, TypeError, ValueError) as exc:
                raise _record_error(section, k, rec, exc) from exc
    slack = doc.get("slack", {})
    try:
        if "voltage" in slack:
            v_s = np.array([_polar(x, "slack voltage") for x in slack["voltage"]])
        else:
            v_s = np.exp(-2j * np.pi / 3 * np.arange(3))
        declared = slack.get("bus")
        if declared is not None and not any(b.id == declared and b.is_slack for b in buses):
            raise FeederError(f"slack record names bus {declared!r}, which is not the slack bus")
        return Feeder(
            buses=tuple(buses), edges=tuple(edges), slack_voltage=v_s,
            name=str(doc.get("name", "")), base=dict(doc.get("base", {})),
        )
    except (FeederError, TypeError, ValueError) as exc:
        raise ParseError(f"feeder: {exc}") from exc


def parse_feeder(path: str | Path) -> Feeder:
    """Read and validate a feeder JSON file (or a bundled fixture name)."""
    path = resolve_feeder_path(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        return feeder_from_dict(doc)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from exc


# ----------------------------------------------------------- serializing


def _load_to_record(load: ZipWyeLoad | ZipDeltaLoad) -> dict:
    keys = load.labels
    rec: dict[str, Any] = {"connection": load.connection}
    for part in ("s", "i", "y"):
        vec = getattr(load, part)
        entries = {k: _encode_complex(x) for k, x in zip(keys, vec) if x != 0}
        if entries:
            rec[part] = entries
    if load.fixed_current_phase:
        rec["fixed_current_phase"] = True
    return rec


def _line_to_record(line: LineSpec) -> dict:
    rec = {"phases": "".join(line.phases), "z": _encode_matrix(line.z)}
    if np.any(line.y_shunt):
        rec["y_shunt"] = _encode_matrix(line.y_shunt)
    return rec


def _edge_to_record(edge: Edge) -> dict:
    rec: dict[str, Any] = {
        "id": edge.id, "kind": edge.kind, "from": edge.from_bus, "to": edge.to_bus,
        "phases": "".join(edge.phases),
    }
    el = edge.element
    if isinstance(el, LineSpec):
        line = _line_to_record(el)
        line.pop("phases")
        rec.update(line)
    elif isinstance(el, TransformerSpec):
        rec["connection"] = el.connection
        rec["z_t"] = _encode_complex(1 / el.y_t)
        if el.eps_self:
            rec["eps_self"] = _encode_complex(el.eps_self)
        if el.eps_mutual:
            rec["eps_mutual"] = _encode_complex(el.eps_mutual)
    else:
        rec["configuration"] = el.configuration
        rec["type"] = el.svr_type
        rec["taps"] = dict(el.taps)
        rec["z_r"] = {k: _encode_complex(v) for k, v in el.z_r.items() if v}
        rec["line"] = _line_to_record(el.line)
    return rec


def feeder_to_dict(feeder: Feeder) -> dict:
    """Serialise a ``Feeder`` to the version-1 document layout."""
    v_s = feeder.slack_voltage
    buses = []
    for bus in feeder.buses:
        rec: dict[str, Any] = {"id": bus.id, "connection": bus.connection, "phases": "".join(bus.phases)}
        if bus.loads:
            rec["loads"] = [_load_to_record(l) for l in bus.loads]
        buses.append(rec)
    return {
        "schema_version": SCHEMA_VERSION,
        "name": feeder.name,
        "base": feeder.base,
        "slack": {
            "bus": feeder.slack.id,
            "voltage": [[float(abs(x)), float(np.degrees(np.angle(x)))] for x in v_s],
        },
        "buses": buses,
        "edges": [_edge_to_record(e) for e in feeder.edges],
    }


def dump_feeder(feeder: Feeder, path: str | Path) -> None:
    Path(path).write_text(json.dumps(feeder_to_dict(feeder), indent=1) + "\n")


# --------------------------------------------------------------- fixtures


def fixture_path(name: str) -> Path:
    """Path of a bundled file, e.g. ``ieee37.json`` or ``ieee123_benchmark.csv``."""
    return Path(str(resources.files("zbusflow") / "data" / name))


def resolve_feeder_path(value: str | Path) -> Path:
    """Accept a path or the bare name of a bundled feeder (``ieee37``, ``ieee123``)."""
    text = str(value)
    if text in FIXTURES:
        return fixture_path(f"{text}.json")
    return Path(text)


def load_fixture(name: str) -> Feeder:
    return parse_feeder(fixture_path(f"{name}.json"))


def load_benchmark(path_or_name: str | Path) -> dict[tuple[str, str], complex]:
    """Benchmark voltages keyed by (bus, phase) from a ``bus,phase,v_mag_pu,v_angle_deg`` CSV."""
    text = str(path_or_name)
    path = fixture_path(f"{text}_benchmark.csv") if text in FIXTURES else Path(text)
    out: dict[tuple[str, str], complex] = {}
    with open(path, newline="") as fh:
        rows = csv.DictReader(line for line in fh if not line.startswith("#"))
        for row in rows:
            mag = float(row["v_mag_pu"])
            ang = np.deg2rad(float(row["v_angle_deg"]))
            out[(row["bus"], row["phase"])] = mag * np.exp(1j * ang)
    return out


# ---------------------------------------------------------------- outputs


def result_rows(result) -> list[tuple[str, str, str, complex]]:
    """(bus, phase, kind, voltage) rows: slack and buses by natural id order, then regulator internals."""
    from .solver import recover_regulator_internal_voltages

    index = result.index
    rows = []
    for bus_id in natural_sorted(index.bus_phases):
        kind = "slack" if bus_id == index.slack_id else "bus"
        v = result.bus_voltage(bus_id)
        for phase, value in zip(index.bus_phases[bus_id], v):
            rows.append((bus_id, phase, kind, complex(value)))
    internal = recover_regulator_internal_voltages(result)
    edges = {e.id: e for e in result.network.feeder.edges}
    for edge_id in natural_sorted(internal):
        for phase, value in zip(edges[edge_id].element.phases, internal[edge_id]):
            rows.append((edge_id, phase, "regulator", complex(value)))
    return rows


def results_csv(result) -> str:
    buf = io.StringIO()
    net = result.network
    eps = "none" if net.epsilon is None else f"{net.epsilon:g}"
    buf.write(f"# feeder={net.feeder.name or 'unnamed'} iterations={result.iterations} "
              f"residual_inf={result.residual_inf:.3e} converged={str(result.converged).lower()} "
              f"epsilon={eps} epsilon_mode={net.epsilon_mode} tol={result.tol:g}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bus", "phase", "kind", "v_mag_pu", "v_angle_deg"])
    for bus, phase, kind, v in result_rows(result):
        angle = np.degrees(np.angle(v))
        if round(angle, 6) == -180.0:
            angle = 180.0
        writer.writerow([bus, phase, kind, f"{abs(v):.6f}", f"{angle + 0.0:.6f}"])
    return buf.getvalue()


def emit_results(result, path: str | Path | None = None, format: str = "csv") -> str:
    """Write the voltage table (and return it). ``path=None`` only returns the text."""
    if format != "csv":
        raise ValueError(f"unsupported result format {format!r}")
    text = results_csv(result)
    if path is not None:
        Path(path).write_text(text)
    return text


def ybus_triplets(partition, one_based: bool = True) -> str:
    """Nonzeros of Y as ``row col re im`` lines, preceded by the index map as comments."""
    shift = 1 if one_based else 0
    buf = io.StringIO()
    buf.write(f"# Y-Bus triplets, J={partition.index.size}, indices {'1' if one_based else '0'}-based\n")
    for j, (bus, phase) in enumerate(partition.index.inverse):
        buf.write(f"# index {j + shift} {bus} {phase}\n")
    coo = partition.Y.tocoo()
    order = np.lexsort((coo.col, coo.row))
    for k in order:
        val = coo.data[k]
        buf.write(f"{coo.row[k] + shift} {coo.col[k] + shift} {val.real:.17g} {val.imag:.17g}\n")
    return buf.getvalue()


def sweep_csv(points) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epsilon_rel", "max_abs_v_change_pu", "iterations", "residual_inf", "converged"])
    for p in points:
        change = "" if p.max_change is None else f"{p.max_change:.6e}"
        writer.writerow([f"{p.epsilon:.3e}", change, p.iterations, f"{p.residual_inf:.3e}", int(p.converged)])
    return buf.getvalue()
