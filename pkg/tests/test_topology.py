from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import BALANCED, random_feeder, simple_line
from zbusflow import Bus, Edge, Feeder, TransformerSpec, build_index, check_phase_connectivity, embed_block
from zbusflow.errors import FeederError
from zbusflow.topology import is_connected, natural_sorted, phase_set

PHASE_SUBSETS = ["a", "b", "c", "ab", "ac", "bc", "abc"]


@pytest.mark.parametrize("given_,expected", [("cab", ("a", "b", "c")), ("b", ("b",)), (["c", "a"], ("a", "c"))])
def test_phase_set_is_canonical(given_, expected):
    assert phase_set(given_) == expected


@pytest.mark.parametrize("bad", ["", "abd", "aab"])
def test_phase_set_rejects_bad_input(bad):
    with pytest.raises(FeederError):
        phase_set(bad)


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(PHASE_SUBSETS),
    st.sampled_from(PHASE_SUBSETS),
    st.integers(0, 2**32 - 1),
)
def test_embed_preserves_entries_and_norm(sub_rows, sub_cols, seed):
    rng = np.random.default_rng(seed)
    block = rng.normal(size=(len(sub_rows), len(sub_cols))) + 1j * rng.normal(size=(len(sub_rows), len(sub_cols)))
    full = embed_block(block, ("a", "b", "c"), ("a", "b", "c"), phase_set(sub_rows), phase_set(sub_cols))
    assert full.shape == (3, 3)
    assert np.isclose(np.linalg.norm(full), np.linalg.norm(block))
    for i, p in enumerate(sub_rows):
        for j, q in enumerate(sub_cols):
            assert full["abc".index(p), "abc".index(q)] == block[i, j]


def test_embed_rejects_shape_mismatch():
    with pytest.raises(FeederError):
        embed_block(np.eye(2), ("a", "b", "c"), ("a", "b", "c"), ("a", "b", "c"))


def test_embed_into_partial_bus():
    out = embed_block(np.array([[5.0]]), ("a", "c"), ("a", "c"), ("c",))
    assert np.array_equal(out, [[0, 0], [0, 5]])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 30))
def test_index_map_is_a_bijection(seed, n):
    feeder = random_feeder(np.random.default_rng(seed), n)
    index = build_index(feeder)
    expected = sum(len(b.phases) for b in feeder.network_buses)
    assert index.J == expected
    assert sorted(index.forward.values()) == list(range(expected))
    for k, key in enumerate(index.inverse):
        assert index[key] == k
    assert all(key[0] != feeder.slack.id for key in index.inverse)


def test_index_orders_phases_within_bus():
    buses = (Bus("s", "slack", "abc"), Bus("1", "wye", "ca"), Bus("2", "wye", "b"))
    edges = (Edge("L1", "s", "1", "ac", simple_line("ac")), Edge("L2", "s", "2", "b", simple_line("b")))
    index = build_index(Feeder(buses, edges, BALANCED))
    assert index.inverse == (("1", "a"), ("1", "c"), ("2", "b"))
    assert list(index.indices("1")) == [0, 1]


def _two_bus(**overrides):
    parts = dict(
        buses=(Bus("s", "slack", "abc"), Bus("1", "wye", "abc")),
        edges=(Edge("L1", "s", "1", "abc", simple_line()),),
    )
    parts.update(overrides)
    return Feeder(parts["buses"], parts["edges"], BALANCED)


@pytest.mark.parametrize(
    "overrides,message",
    [
        (dict(buses=(Bus("s", "slack", "abc"), Bus("s", "wye", "abc"))), "duplicate bus"),
        (dict(buses=(Bus("s", "wye", "abc"), Bus("1", "wye", "abc"))), "slack"),
        (dict(edges=(Edge("L1", "s", "9", "abc", simple_line()),)), "unknown bus"),
        (dict(buses=(Bus("s", "slack", "abc"), Bus("1", "wye", "ab"))), "not available"),
        (
            dict(edges=(Edge("L1", "s", "1", "abc", simple_line()), Edge("L1", "s", "1", "abc", simple_line()))),
            "duplicate edge",
        ),
    ],
)
def test_feeder_validation(overrides, message):
    with pytest.raises(FeederError, match=message):
        _two_bus(**overrides)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(id="x", connection="delta", phases="a"),
        dict(id="x", connection="slack", phases="ab"),
        dict(id="x", connection="star", phases="abc"),
    ],
)
def test_bus_validation(kwargs):
    with pytest.raises(FeederError):
        Bus(**kwargs)


def test_edge_rejects_self_loop():
    with pytest.raises(FeederError):
        Edge("L", "1", "1", "abc", simple_line())


def test_phase_connectivity_reports_stranded_phase():
    # Bus 2 claims phase c but is only reached by an a-b line.
    buses = (Bus("s", "slack", "abc"), Bus("1", "wye", "abc"), Bus("2", "wye", "abc"))
    edges = (Edge("L1", "s", "1", "abc", simple_line()), Edge("L2", "1", "2", "ab", simple_line("ab")))
    result = check_phase_connectivity(Feeder(buses, edges, BALANCED))
    assert result[("2", "a")] and result[("2", "b")]
    assert not result[("2", "c")]


def test_open_wye_primary_reaches_all_secondary_phases():
    buses = (Bus("s", "slack", "abc"), Bus("1", "wye", "abc"))
    edges = (Edge("T1", "s", "1", "ab", TransformerSpec("oy-od", 10 - 30j)),)
    result = check_phase_connectivity(Feeder(buses, edges, BALANCED))
    # The delta secondary energises phase c although the primary lacks it.
    assert all(result[("1", p)] for p in "abc")


def test_disconnected_graph_detected():
    buses = (Bus("s", "slack", "abc"), Bus("1", "wye", "abc"), Bus("2", "wye", "abc"))
    feeder = Feeder(buses, (Edge("L1", "s", "1", "abc", simple_line()),), BALANCED)
    assert not is_connected(feeder)


def test_natural_sort():
    assert natural_sorted(["10", "2", "1a", "1", "799r", "799"]) == ["1", "1a", "2", "10", "799", "799r"]
