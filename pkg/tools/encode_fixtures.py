"""Encode the bundled IEEE 37-bus and 123-bus fixtures and their benchmark CSVs.

Development tool, not part of the installed package. It needs
``opendssdirect.py`` (OpenDSS) in the running interpreter:

    python tools/encode_fixtures.py --ieee123-dir <dir with IEEE123Master.dss> --out src/zbusflow/data

For each feeder the same circuit is compiled in OpenDSS, its element data are
converted to per unit and written as a feeder JSON, and OpenDSS's own load
flow (taps fixed, controls off) is written as the benchmark CSV.

Per-unit conventions:
  * S_base is three-phase (1 MVA), S_1ph = S_base / 3, voltage base line-to-neutral.
  * Z_base = kV_LL^2 / MVA per voltage region.
  * Transformers: z_sys = z_own * S_base / S_rated.
  * Loads: s = S / S_1ph per wye phase or delta pair. Constant impedance
    y = conj(s) / |V_nom|^2, constant current i = conj(s) / |V_nom|, with
    V_nom the load's rated voltage in pu of the line-to-neutral base
    (sqrt(3) for a delta load rated at the line-to-line base).
  * Capacitors: y = +jQ / |V_nom|^2.
  * Regulators: type B, tap ratio a = 1 - 0.00625 tap; OpenDSS receives the
    equivalent winding-2 tap 1/a.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import re
from pathlib import Path

import numpy as np
import opendssdirect as dss

S_BASE_MVA = 1.0
OMEGA = 2 * math.pi * 60
PHASE_OF_NODE = {1: "a", 2: "b", 3: "c"}
PAIR_OF_NODES = {(1, 2): "ab", (2, 1): "ab", (2, 3): "bc", (3, 2): "bc", (3, 1): "ca", (1, 3): "ca"}


def type_b_ratio(tap: int) -> float:
    return 1 - 0.00625 * tap


# ----------------------------------------------------------- IEEE 37 data

# Impedance (ohm/mile) upper triangle aa ab ac bb bc cc, shunt susceptance (uS/mile).
IEEE37_CONFIGS = {
    "721": ((0.2926 + 0.1973j, 0.0673 - 0.0368j, 0.0337 - 0.0417j,
             0.2646 + 0.1900j, 0.0673 - 0.0368j, 0.2926 + 0.1973j), 159.7919),
    "722": ((0.4751 + 0.2973j, 0.1629 - 0.0326j, 0.1234 - 0.0607j,
             0.4488 + 0.2678j, 0.1629 - 0.0326j, 0.4751 + 0.2973j), 127.8306),
    "723": ((1.2936 + 0.6713j, 0.4871 + 0.2111j, 0.4585 + 0.1521j,
             1.3022 + 0.6326j, 0.4871 + 0.2111j, 1.2936 + 0.6713j), 74.8405),
    "724": ((2.0952 + 0.7758j, 0.5204 + 0.2738j, 0.4926 + 0.2123j,
             2.1068 + 0.7398j, 0.5204 + 0.2738j, 2.0952 + 0.7758j), 60.2483),
}

IEEE37_SEGMENTS = [
    ("701", "702", 960, "722"), ("702", "705", 400, "724"), ("702", "713", 360, "723"),
    ("702", "703", 1320, "722"), ("703", "727", 240, "724"), ("703", "730", 600, "723"),
    ("704", "714", 80, "724"), ("704", "720", 800, "723"), ("705", "742", 320, "724"),
    ("705", "712", 240, "724"), ("706", "725", 280, "724"), ("707", "724", 760, "724"),
    ("707", "722", 120, "724"), ("708", "733", 320, "723"), ("708", "732", 320, "724"),
    ("709", "731", 600, "723"), ("709", "708", 320, "723"), ("710", "735", 200, "724"),
    ("710", "736", 1280, "724"), ("711", "741", 400, "723"), ("711", "740", 200, "724"),
    ("713", "704", 520, "723"), ("714", "718", 520, "724"), ("720", "707", 920, "724"),
    ("720", "706", 600, "723"), ("727", "744", 280, "723"), ("730", "709", 200, "723"),
    ("733", "734", 560, "723"), ("734", "737", 640, "723"), ("734", "710", 520, "724"),
    ("737", "738", 400, "723"), ("738", "711", 400, "723"), ("744", "728", 200, "724"),
    ("744", "729", 280, "724"),
]

# Delta spot loads: bus -> (model, {pair: (kW, kvar)}); OpenDSS models 1 PQ, 2 Z, 5 I.
IEEE37_LOADS = {
    "701": (1, {"ab": (140, 70), "bc": (140, 70), "ca": (350, 175)}),
    "712": (1, {"ca": (85, 40)}),
    "713": (1, {"ca": (85, 40)}),
    "714": (5, {"ab": (17, 8), "bc": (21, 10)}),
    "718": (2, {"ab": (85, 40)}),
    "720": (1, {"ca": (85, 40)}),
    "722": (5, {"bc": (140, 70), "ca": (21, 10)}),
    "724": (2, {"bc": (42, 21)}),
    "725": (1, {"bc": (42, 21)}),
    "727": (1, {"ca": (42, 21)}),
    "728": (1, {"ab": (42, 21), "bc": (42, 21), "ca": (42, 21)}),
    "729": (5, {"ab": (42, 21)}),
    "730": (2, {"ca": (85, 40)}),
    "731": (2, {"bc": (85, 40)}),
    "732": (1, {"ca": (42, 21)}),
    "733": (5, {"ab": (85, 40)}),
    "734": (1, {"ca": (42, 21)}),
    "735": (1, {"ca": (85, 40)}),
    "736": (2, {"bc": (42, 21)}),
    "737": (5, {"ab": (140, 70)}),
    "738": (1, {"ab": (126, 62)}),
    "740": (1, {"ca": (85, 40)}),
    "741": (5, {"ca": (42, 21)}),
    "742": (2, {"ab": (8, 4), "bc": (85, 40)}),
    "744": (1, {"ab": (42, 21)}),
}

IEEE37_TAPS = {"ab": 7, "cb": 4}
PAIR_NODES = {"ab": "1.2", "bc": "2.3", "ca": "3.1"}


def ieee37_script() -> list[str]:
    cmds = [
        "clear",
        "new circuit.ieee37 basekv=230 pu=1.0 angle=0 phases=3 bus1=sourcebus "
        "r1=1e-6 x1=1e-6 r0=1e-6 x0=1e-6",
        "new transformer.sub phases=3 windings=2 buses=[sourcebus 799] conns=[delta delta] "
        "kvs=[230 4.8] kvas=[2500 2500] %rs=[1 1] xhl=8",
    ]
    for name, (tri, b_us) in IEEE37_CONFIGS.items():
        aa, ab, ac, bb, bc, cc = tri
        r = f"[{aa.real} | {ab.real} {bb.real} | {ac.real} {bc.real} {cc.real}]"
        x = f"[{aa.imag} | {ab.imag} {bb.imag} | {ac.imag} {bc.imag} {cc.imag}]"
        c_nf = b_us / OMEGA * 1e3
        c = f"[{c_nf} | 0 {c_nf} | 0 0 {c_nf}]"
        cmds.append(f"new linecode.{name} nphases=3 rmatrix={r} xmatrix={x} cmatrix={c}")
    for k, (a, b, feet, code) in enumerate(IEEE37_SEGMENTS):
        cmds.append(f"new line.l{a}_{b} phases=3 bus1={a} bus2={b} linecode={code} length={feet / 5280!r}")
    cmds.append(f"new line.l799r_701 phases=3 bus1=799r bus2=701 linecode=721 length={1850 / 5280!r}")
    # Open-delta type-B regulator: arms across ab and cb, phase b passes straight through.
    for arm, nodes in (("ab", "1.2"), ("cb", "3.2")):
        tap = 1 / type_b_ratio(IEEE37_TAPS[arm])
        cmds.append(
            f"new transformer.reg_{arm} phases=1 windings=2 buses=[799.{nodes} 799r.{nodes}] "
            f"kvs=[4.8 4.8] kvas=[1666 1666] xhl=1 %loadloss=0 taps=[1 {tap!r}]"
        )
    cmds.append("new line.reg_b_through phases=1 bus1=799.2 bus2=799r.2 r1=1e-6 x1=0 c1=0 r0=1e-6 x0=0 c0=0 length=1")
    cmds.append(
        "new transformer.xfm1 phases=3 windings=2 buses=[709 775] conns=[delta delta] "
        "kvs=[4.8 0.48] kvas=[500 500] %rs=[0.045 0.045] xhl=1.81"
    )
    for bus, (model, pairs) in IEEE37_LOADS.items():
        for pair, (kw, kvar) in pairs.items():
            cmds.append(
                f"new load.s{bus}{pair} bus1={bus}.{PAIR_NODES[pair]} phases=1 conn=delta model={model} "
                f"kv=4.8 kw={kw} kvar={kvar} vminpu=0.5 vmaxpu=1.5"
            )
    cmds += ["set voltagebases=[230 4.8 0.48]", "calcvoltagebases"]
    return cmds


IEEE123_TAPS = {"reg1a": 7, "reg2a": -1, "reg3a": 0, "reg3c": -1, "reg4a": 8, "reg4b": 1, "reg4c": 5}


def run(cmds: list[str]) -> None:
    for c in cmds:
        dss.Text.Command(c)
        err = dss.Error.Description()
        if err:
            raise RuntimeError(f"{c!r}: {err}")


# -------------------------------------------------------------- extraction


def bus_and_nodes(spec: str, default_nodes: int) -> tuple[str, list[int]]:
    parts = spec.split(".")
    nodes = [int(p) for p in parts[1:] if p] or list(range(1, default_nodes + 1))
    return parts[0].lower(), nodes


def cmat(matrix: np.ndarray) -> dict:
    return {"re": np.real(matrix).tolist(), "im": np.imag(matrix).tolist()}


def line_data(name: str, merge: dict[str, str]):
    dss.Lines.Name(name)
    n = dss.Lines.Phases()
    bus1, nodes1 = bus_and_nodes(dss.Lines.Bus1(), n)
    bus2, nodes2 = bus_and_nodes(dss.Lines.Bus2(), n)
    nodes1, nodes2 = nodes1[:n], nodes2[:n]
    if nodes1 != nodes2:
        raise ValueError(f"line {name}: node mismatch {nodes1} {nodes2}")
    length = dss.Lines.Length()
    r = np.array(dss.Lines.RMatrix()).reshape(n, n)
    x = np.array(dss.Lines.XMatrix()).reshape(n, n)
    c = np.array(dss.Lines.CMatrix()).reshape(n, n)
    z = (r + 1j * x) * length
    y = 1j * OMEGA * c * 1e-9 * length
    order = np.argsort(nodes1)
    z = z[np.ix_(order, order)]
    y = y[np.ix_(order, order)]
    phases = "".join(PHASE_OF_NODE[nodes1[k]] for k in order)
    dss.Circuit.SetActiveBus(bus1)
    kv_ll = dss.Bus.kVBase() * math.sqrt(3)
    z_base = kv_ll**2 / S_BASE_MVA
    return merge.get(bus1, bus1), merge.get(bus2, bus2), phases, z / z_base, y * z_base


def load_records(bus_kv_ln: dict[str, float], merge: dict[str, str]) -> dict[str, list[dict]]:
    s_1ph_kva = S_BASE_MVA * 1e3 / 3
    out: dict[str, list[dict]] = {}
    for name in dss.Loads.AllNames():
        dss.Loads.Name(name)
        n = dss.Loads.Phases()
        bus, nodes = bus_and_nodes(dss.CktElement.BusNames()[0], 3)
        bus = merge.get(bus, bus)
        delta = bool(dss.Loads.IsDelta())
        model = dss.Loads.Model()
        kv = dss.Loads.kV()
        s_total = complex(dss.Loads.kW(), dss.Loads.kvar())
        if delta:
            if n == 1:
                keys = [PAIR_OF_NODES[(nodes[0], nodes[1])]]
            else:
                keys = ["ab", "bc", "ca"]
            v_nom = kv / bus_kv_ln[bus]
        else:
            keys = [PHASE_OF_NODE[k] for k in nodes[:n]]
            v_nom = (kv if n == 1 else kv / math.sqrt(3)) / bus_kv_ln[bus]
        s = s_total / len(keys) / s_1ph_kva
        if model == 1:
            field, value = "s", s
        elif model == 2:
            field, value = "y", s.conjugate() / v_nom**2
        elif model == 5:
            field, value = "i", s.conjugate() / v_nom
        else:
            raise ValueError(f"load {name}: unsupported model {model}")
        rec = {"connection": "delta" if delta else "wye",
               field: {key: [value.real, value.imag] for key in keys}}
        out.setdefault(bus, []).append(rec)
    return out


def capacitor_records(bus_kv_ln: dict[str, float], merge: dict[str, str]) -> dict[str, list[dict]]:
    s_1ph_kvar = S_BASE_MVA * 1e3 / 3
    out: dict[str, list[dict]] = {}
    for name in dss.Capacitors.AllNames():
        dss.Capacitors.Name(name)
        n = dss.CktElement.NumPhases()
        bus, nodes = bus_and_nodes(dss.CktElement.BusNames()[0], 3)
        bus = merge.get(bus, bus)
        if dss.Capacitors.IsDelta():
            raise ValueError("delta capacitors are not used by the bundled feeders")
        kv = dss.Capacitors.kV()
        v_nom = (kv if n == 1 else kv / math.sqrt(3)) / bus_kv_ln[bus]
        q = dss.Capacitors.kvar() / n / s_1ph_kvar
        b = q / v_nom**2
        out.setdefault(bus, []).append(
            {"connection": "wye", "b": {PHASE_OF_NODE[k]: b for k in nodes[:n]}}
        )
    return out


def node_voltages() -> dict[tuple[str, str], complex]:
    out = {}
    for bus in dss.Circuit.AllBusNames():
        dss.Circuit.SetActiveBus(bus)
        vals = dss.Bus.puVmagAngle()
        for node, k in zip(dss.Bus.Nodes(), range(0, len(vals), 2)):
            if node in PHASE_OF_NODE:
                out[(bus.lower(), PHASE_OF_NODE[node])] = vals[k] * np.exp(1j * math.radians(vals[k + 1]))
    return out


def bus_phases() -> dict[str, str]:
    out = {}
    for bus in dss.Circuit.AllBusNames():
        dss.Circuit.SetActiveBus(bus)
        out[bus.lower()] = "".join(PHASE_OF_NODE[n] for n in sorted(dss.Bus.Nodes()) if n in PHASE_OF_NODE)
    return out


def bus_bases() -> dict[str, float]:
    out = {}
    for bus in dss.Circuit.AllBusNames():
        dss.Circuit.SetActiveBus(bus)
        out[bus.lower()] = dss.Bus.kVBase()
    return out


def write_benchmark(path: Path, volts: dict, keep: set[str], note: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {note}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bus", "phase", "v_mag_pu", "v_angle_deg"])
        for (bus, phase), v in sorted(volts.items(), key=lambda kv: (natural(kv[0][0]), kv[0][1])):
            if bus in keep:
                w.writerow([bus, phase, f"{abs(v):.6f}", f"{math.degrees(np.angle(v)):.6f}"])


def natural(label: str):
    return tuple((0, int(p)) if p.isdigit() else (1, p) for p in re.split(r"(\d+)", label) if p)


def polar_slack() -> list[list[float]]:
    return [[1.0, 0.0], [1.0, -120.0], [1.0, 120.0]]


# ------------------------------------------------------------------ feeders


def encode_ieee37(out_dir: Path) -> None:
    run(ieee37_script())
    phases = bus_phases()
    kv_ln = bus_bases()
    merge: dict[str, str] = {}
    loads = load_records(kv_ln, merge)
    edges = []
    for name in dss.Lines.AllNames():
        if name in ("l799r_701", "reg_b_through"):
            continue
        a, b, ph, z, y = line_data(name, merge)
        edges.append({"id": name.upper(), "kind": "line", "from": a, "to": b,
                      "phases": ph, "z": cmat(z), "y_shunt": cmat(y)})
    _, _, ph, z, y = line_data("l799r_701", merge)
    z_base = 4.8**2 / S_BASE_MVA
    z_arm = 1j * 0.01 * 4.8**2 / 1.666 / z_base
    edges.insert(0, {
        "id": "799r", "kind": "regulator", "from": "799", "to": "701", "phases": "abc",
        "configuration": "open-delta", "type": "B", "taps": dict(IEEE37_TAPS),
        "z_r": {"ab": [0.0, z_arm.imag], "cb": [0.0, z_arm.imag]},
        "line": {"phases": ph, "z": cmat(z), "y_shunt": cmat(y)},
    })
    z_sub = (0.02 + 0.08j) * S_BASE_MVA / 2.5
    z_xfm = (0.0009 + 0.0181j) * S_BASE_MVA / 0.5
    edges.insert(0, {"id": "SUB", "kind": "transformer", "from": "sourcebus", "to": "799",
                     "phases": "abc", "connection": "d-d", "z_t": [z_sub.real, z_sub.imag]})
    edges.append({"id": "XFM1", "kind": "transformer", "from": "709", "to": "775",
                  "phases": "abc", "connection": "d-d", "z_t": [z_xfm.real, z_xfm.imag]})
    buses = [{"id": "sourcebus", "connection": "slack", "phases": "abc"}]
    for bus in sorted((b for b in phases if b not in ("sourcebus", "799r")), key=natural):
        rec = {"id": bus, "connection": "delta", "phases": phases[bus]}
        if bus in loads:
            rec["loads"] = loads[bus]
        buses.append(rec)
    doc = {
        "schema_version": 1,
        "name": "ieee37",
        "base": {"mva": S_BASE_MVA, "kv_ll": {"source": 230.0, "primary": 4.8, "secondary": 0.48}},
        "slack": {"bus": "sourcebus", "voltage": polar_slack()},
        "buses": buses,
        "edges": edges,
    }
    (out_dir / "ieee37.json").write_text(json.dumps(doc, indent=1) + "\n")

    run(["set controlmode=off", "set maxiterations=200", "set tolerance=1e-10", "solve"])
    if not dss.Solution.Converged():
        raise RuntimeError("OpenDSS did not converge on the 37-bus feeder")
    keep = {b for b in phases if b != "sourcebus"}
    write_benchmark(out_dir / "ieee37_benchmark.csv", node_voltages(), keep,
                    "IEEE 37-bus, OpenDSS snapshot, open-delta regulator taps ab=7 cb=4 (type B), "
                    "regulator arms xhl=1%; bus 799r is the regulator internal node")


IEEE123_MERGE = {"152": "13", "135": "18", "160": "60", "197": "97", "61s": "61", "149": "150r"}
IEEE123_REGULATORS = {
    # internal node: (upstream bus, downstream line, phases, arms)
    "150r": ("150", "l115", "abc", {"a": "reg1a", "b": "reg1a", "c": "reg1a"}),
    "9r": ("9", "l11", "a", {"a": "reg2a"}),
    "25r": ("25", "l25", "ac", {"a": "reg3a", "c": "reg3c"}),
    "160r": ("60", "l117", "abc", {"a": "reg4a", "b": "reg4b", "c": "reg4c"}),
}
IEEE123_SKIP_LINES = {"sw1", "sw2", "sw3", "sw4", "sw5", "sw6", "sw7", "sw8"}


def encode_ieee123(directory: Path, out_dir: Path) -> None:
    run(["clear", f"compile [{directory / 'IEEE123Master.dss'}]"])
    run([
        "set controlmode=off",
        "transformer.xfm1.wdg=1", "transformer.xfm1.conn=delta",
        "transformer.xfm1.wdg=2", "transformer.xfm1.conn=delta",
        "open line.sw7", "open line.sw8",
        "batchedit load..* vminpu=0.5 vmaxpu=1.5",
        "set voltagebases=[4.16 0.48]", "calcvoltagebases",
    ])
    for name, tap in IEEE123_TAPS.items():
        run([f"transformer.{name}.wdg=2", f"transformer.{name}.tap={1 / type_b_ratio(tap)!r}"])
    phases = bus_phases()
    kv_ln = bus_bases()
    merge = dict(IEEE123_MERGE)
    loads = load_records(kv_ln, merge)
    for bus, caps in capacitor_records(kv_ln, merge).items():
        for cap in caps:
            loads.setdefault(bus, []).append({"capacitor": cap})
    regulator_lines = {spec[1] for spec in IEEE123_REGULATORS.values()}
    edges = []
    for name in dss.Lines.AllNames():
        if name in IEEE123_SKIP_LINES or name in regulator_lines:
            continue
        a, b, ph, z, y = line_data(name, merge)
        edges.append({"id": name.upper(), "kind": "line", "from": a, "to": b, "phases": ph,
                      "z": cmat(z), "y_shunt": cmat(y)})
    for internal, (upstream, line, ph_reg, arms) in IEEE123_REGULATORS.items():
        a, b, ph, z, y = line_data(line, {})
        if a != internal and not (internal == "150r" and a == "149"):
            raise ValueError(f"regulator line {line} starts at {a}, expected {internal}")
        edges.append({
            "id": internal, "kind": "regulator", "from": upstream, "to": b, "phases": ph_reg,
            "configuration": "wye", "type": "B",
            "taps": {p: IEEE123_TAPS[reg] for p, reg in arms.items()},
            "line": {"phases": ph, "z": cmat(z), "y_shunt": cmat(y)},
        })
    z_xfm = (0.0127 + 0.0272j) * S_BASE_MVA / 0.150
    edges.append({"id": "XFM1", "kind": "transformer", "from": "61", "to": "610", "phases": "abc",
                  "connection": "d-d", "z_t": [z_xfm.real, z_xfm.imag]})
    used = {e["from"] for e in edges} | {e["to"] for e in edges}
    buses = [{"id": "150", "connection": "slack", "phases": "abc"}]
    for bus in sorted((b for b in used if b != "150"), key=natural):
        recs = loads.get(bus, [])
        conns = {r.get("connection") for r in recs if "capacitor" not in r}
        rec = {"id": bus, "connection": "delta" if conns == {"delta"} else "wye", "phases": phases[bus]}
        plain = [r for r in recs if "capacitor" not in r]
        caps = [r["capacitor"] for r in recs if "capacitor" in r]
        if plain:
            rec["loads"] = plain
        if caps:
            rec["capacitors"] = caps
        buses.append(rec)
    doc = {
        "schema_version": 1,
        "name": "ieee123",
        "base": {"mva": S_BASE_MVA, "kv_ll": {"primary": 4.16, "secondary": 0.48}},
        "slack": {"bus": "150", "voltage": polar_slack()},
        "buses": buses,
        "edges": edges,
    }
    (out_dir / "ieee123.json").write_text(json.dumps(doc, indent=1) + "\n")

    run(["set controlmode=off", "set maxiterations=200", "set tolerance=1e-10", "solve"])
    if not dss.Solution.Converged():
        raise RuntimeError("OpenDSS did not converge on the 123-bus feeder")
    volts = node_voltages()
    keep = (used | set(IEEE123_REGULATORS)) - {"150"}
    write_benchmark(out_dir / "ieee123_benchmark.csv", volts, keep,
                    "IEEE 123-bus, OpenDSS snapshot, fixed type-B taps, XFM1 delta-delta, "
                    "normally open switches open; rows 150r 9r 25r 160r are regulator internal nodes")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--ieee123-dir", type=Path, required=True)
    ap.add_argument("--out", type=Path, default=Path("src/zbusflow/data"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    encode_ieee37(args.out)
    encode_ieee123(args.ieee123_dir, args.out)


if __name__ == "__main__":
    main()
