from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import BALANCED, archetype, random_feeder, simple_line
from zbusflow import Bus, Edge, Feeder, TransformerSpec, assemble, build_index, check_invertibility, regularize
from zbusflow.elements import edge_blocks
from zbusflow.ybus import assumption_ledger


def test_two_bus_line_partition():
    line = simple_line()
    feeder = Feeder(
        (Bus("s", "slack", "abc"), Bus("1", "wye", "abc")), (Edge("L1", "s", "1", "abc", line),), BALANCED
    )
    part = assemble(feeder)
    zinv = np.linalg.inv(line.z)
    assert np.allclose(part.dense(), zinv)
    assert np.allclose(part.Y_NS, -zinv)
    assert np.allclose(part.Y_SN, -zinv)
    assert np.allclose(part.Y_SS, zinv)


def _edge_current_sum(feeder, index, v_full):
    """KCL by direct summation of every edge's terminal currents."""
    out = {b: np.zeros(len(index.bus_phases[b]), dtype=complex) for b in index.bus_phases}
    for edge in feeder.edges:
        blocks = edge_blocks(edge.element, edge.phases).embedded(
            index.bus_phases[edge.from_bus], index.bus_phases[edge.to_bus]
        )
        v_n, v_m = v_full[edge.from_bus], v_full[edge.to_bus]
        out[edge.from_bus] += blocks.self_n @ v_n - blocks.mutual_nm @ v_m
        out[edge.to_bus] += blocks.self_m @ v_m - blocks.mutual_mn @ v_n
    return out


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 25))
def test_assembled_matrix_matches_edge_summation(seed, n):
    rng = np.random.default_rng(seed)
    feeder = regularize(random_feeder(rng, n), 1e-3)
    index = build_index(feeder)
    part = assemble(feeder, index)
    v = rng.normal(size=index.J) + 1j * rng.normal(size=index.J)
    v_s = rng.normal(size=3) + 1j * rng.normal(size=3)
    full = part.network_matrix() @ np.concatenate([v, v_s])
    v_full = {b: v[index.bus_slices[b]] for b in index.bus_slices}
    v_full[index.slack_id] = v_s
    direct = _edge_current_sum(feeder, index, v_full)
    expected = np.concatenate([direct[b] for b in index.bus_slices] + [direct[index.slack_id]])
    assert np.allclose(full, expected, rtol=1e-10, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 30))
def test_random_feeder_ybus_symmetric_and_definite(seed, n):
    feeder = random_feeder(np.random.default_rng(seed), n)
    part = assemble(regularize(feeder, 1e-6))
    y = part.dense()
    assert np.abs(y - y.T).max() < 1e-12
    assert np.linalg.eigvalsh(0.5 * (y.real + y.real.T)).min() > 0


@pytest.mark.parametrize("name", ["yg-d", "oy-od", "d-d"])
def test_delta_archetypes_singular_without_regularization(name):
    feeder = archetype(name)
    diag = check_invertibility(assemble(feeder))
    assert diag.condition_ratio < 1e-10
    assert not diag.passed
    assert check_invertibility(assemble(regularize(feeder, 1e-6))).passed


def test_diagnostics_report_lists_every_assumption():
    text = check_invertibility(assemble(regularize(archetype("d-d"), 1e-6))).report()
    for name in ("A1", "A2", "A3", "A4", "A4'"):
        assert f"  {name} " in text
    assert text.strip().endswith("PASS")


def _by_name(checks):
    return {c.name: c for c in checks}


def test_ledger_flags_unregularized_transformer():
    checks = _by_name(assumption_ledger(archetype("yg-d")))
    assert not checks["A1"].holds and checks["A1"].status == "FAIL"


def test_ledger_flags_stranded_phase_and_optional_three_phase():
    buses = (Bus("s", "slack", "abc"), Bus("1", "wye", "abc"), Bus("2", "wye", "abc"))
    edges = (Edge("L1", "s", "1", "abc", simple_line()), Edge("L2", "1", "2", "ab", simple_line("ab")))
    checks = _by_name(assumption_ledger(Feeder(buses, edges, BALANCED)))
    assert checks["A4'"].status == "FAIL"
    assert checks["A4"].status == "n/a"


def test_ledger_flags_capacitive_leakage_in_reactive_mode():
    buses = (Bus("s", "slack", "abc"), Bus("1", "wye", "abc"))
    spec = TransformerSpec("yg-yg", 1 / (0.01 - 0.05j))
    checks = _by_name(assumption_ledger(Feeder(buses, (Edge("T", "s", "1", "abc", spec),), BALANCED), "reactive"))
    assert checks["A3''"].status == "FAIL"


def test_ledger_flags_line_shunt_in_reactive_mode():
    rng = np.random.default_rng(2)
    feeder = regularize(random_feeder(rng, 6, categories=("line",)), 1e-6, "reactive")
    checks = _by_name(assumption_ledger(feeder, "reactive"))
    assert "shunt" in checks["A1''"].detail and not checks["A1''"].holds


def test_reactive_mode_definiteness():
    rng = np.random.default_rng(11)
    feeder = regularize(random_feeder(rng, 20, reactive=True), 1e-6, "reactive")
    diag = check_invertibility(assemble(feeder), mode="reactive")
    assert diag.definiteness < 0 and diag.passed


def test_diagnostics_handle_non_finite_matrix():
    feeder = regularize(archetype("d-d"), 1e-6)
    part = assemble(feeder)
    bad = np.full((part.index.J, part.index.J), np.nan)
    diag = check_invertibility(part, bad)
    assert not diag.passed
