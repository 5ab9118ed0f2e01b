import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from drrgossip.topology import (
    ConstructionError, GraphError, GraphKind, InputFormatError, build_chord, build_complete,
    build_d_regular, chord_hops, greedy_path, load_adjacency, parse_topology, route_to_random,
    validate_graph,
)


def test_complete_single_node():
    g = build_complete(1)
    assert g.n == 1
    assert g.edge_count == 0


def test_complete_neighbors_of_zero():
    g = build_complete(4)
    assert g.neighbors(0).tolist() == [1, 2, 3]


def test_complete_degrees():
    assert set(build_complete(1024).degrees().tolist()) == {1023}


def test_complete_rejects_zero():
    with pytest.raises(GraphError):
        build_complete(0)


@pytest.mark.parametrize("seed", [0, 1, 2, 99])
def test_d_regular_k4(seed):
    g = build_d_regular(4, 3, seed)
    assert [a.tolist() for a in g.adjacency] == [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]


def test_d_regular_cycle_degrees():
    g = build_d_regular(8, 2, 7)
    assert g.degrees().tolist() == [2] * 8
    assert validate_graph(g) == []


def test_d_regular_large():
    g = build_d_regular(1024, 8, 1)
    assert validate_graph(g) == []
    vals, counts = np.unique(g.degrees(), return_counts=True)
    assert dict(zip(vals.tolist(), counts.tolist())) == {8: 1024}


def test_d_regular_deterministic():
    a = build_d_regular(200, 6, 5)
    b = build_d_regular(200, 6, 5)
    assert all(np.array_equal(x, y) for x, y in zip(a.adjacency, b.adjacency))
    c = build_d_regular(200, 6, 6)
    assert not all(np.array_equal(x, y) for x, y in zip(a.adjacency, c.adjacency))


@pytest.mark.parametrize("n,d", [(5, 3), (4, 4), (4, 0), (3, 5)])
def test_d_regular_bad_args(n, d):
    with pytest.raises(GraphError):
        build_d_regular(n, d, 0)


def test_construction_error_carries_retries():
    err = ConstructionError("nope", 17)
    assert err.retries == 17


@given(st.integers(3, 60), st.integers(1, 8), st.integers(0, 2**32))
def test_d_regular_always_simple(n, d, seed):
    if d >= n or (n * d) % 2:
        return
    g = build_d_regular(n, d, seed)
    assert validate_graph(g) == []
    assert g.degrees().tolist() == [d] * n


def test_chord_one_bit():
    g = build_chord(1)
    assert g.n == 2
    assert g.fingers.tolist() == [[1], [0]]
    assert g.neighbors(0).tolist() == [1]


def test_chord_three_bits_fingers():
    g = build_chord(3)
    assert g.fingers[0].tolist() == [1, 2, 4]


def test_chord_ten_bits_degrees():
    g = build_chord(10)
    assert g.fingers.shape == (1024, 10)
    # independent enumeration of the in/out finger union
    n = 1024
    for i in (0, 1, 513, 1023):
        nb = {(i + (1 << k)) % n for k in range(10)} | {(i - (1 << k)) % n for k in range(10)}
        nb.discard(i)
        assert g.neighbors(i).tolist() == sorted(nb)
    assert g.degrees().max() <= 20
    assert validate_graph(g) == []


@pytest.mark.parametrize("bits", [0, 25])
def test_chord_bad_bits(bits):
    with pytest.raises(GraphError):
        build_chord(bits)


def write(tmp_path, text):
    p = tmp_path / "g.txt"
    p.write_text(text)
    return p


def test_load_single_edge(tmp_path):
    g = load_adjacency(write(tmp_path, "0 1\n"))
    assert g.n == 2 and g.edge_count == 1
    assert g.kind is GraphKind.CUSTOM


def test_load_dedups(tmp_path):
    g = load_adjacency(write(tmp_path, "0 1\n1 0\n"))
    assert g.edge_count == 1


def test_load_path(tmp_path):
    g = load_adjacency(write(tmp_path, "# path\n0 1\n1 2\n"))
    assert g.neighbors(1).tolist() == [0, 2]


@pytest.mark.parametrize("text,line", [("0 1\n1 x\n", 2), ("0 -1\n", 1), ("2 2\n", 1), ("0 1 2\n", 1)])
def test_load_errors_name_line(tmp_path, text, line):
    with pytest.raises(InputFormatError) as info:
        load_adjacency(write(tmp_path, text))
    assert info.value.lineno == line


def test_greedy_hand_trace():
    g = build_chord(3)
    assert greedy_path(g, 0, 7) == [0, 4, 6, 7]
    assert greedy_path(g, 0, 0) == [0]


class FixedDraw:
    def __init__(self, value):
        self.value = value

    def integers(self, *args, **kw):
        return self.value


def test_route_to_self_and_far():
    g = build_chord(3)
    r = route_to_random(g, 0, FixedDraw(0))
    assert (r.destination, r.hops, r.messages_used) == (0, 0, 0)
    r = route_to_random(g, 0, FixedDraw(7))
    assert (r.destination, r.hops) == (7, 3)


def test_route_complete_is_one_hop(rng):
    assert route_to_random(build_complete(10), 3, rng).hops == 1


def test_route_rejects_regular(rng):
    with pytest.raises(GraphError):
        route_to_random(build_d_regular(10, 3, 0), 0, rng)


def test_route_uniform_destinations(rng):
    g = build_chord(10)
    dests, hops = [], []
    for _ in range(10_000):
        r = route_to_random(g, 5, rng)
        dests.append(r.destination)
        hops.append(r.hops)
    assert max(hops) <= 10
    assert np.mean(hops) <= 10
    counts = np.bincount(dests, minlength=1024)
    assert stats.chisquare(counts).pvalue > 0.01


@given(st.integers(1, 12), st.data())
def test_chord_hops_match_greedy_path(bits, data):
    g = build_chord(bits)
    src = data.draw(st.integers(0, g.n - 1))
    dst = data.draw(st.integers(0, g.n - 1))
    path = greedy_path(g, src, dst)
    assert path[-1] == dst
    assert len(path) - 1 == int(chord_hops(g.n, src, dst)) <= bits


def test_parse_topology_kinds(tmp_path):
    assert parse_topology("complete:5").kind is GraphKind.COMPLETE
    assert parse_topology("dregular:10,3", seed=1).kind is GraphKind.DREGULAR
    assert parse_topology("chord:4").n == 16
    assert parse_topology(f"file:{write(tmp_path, '0 1')}").n == 2
    for bad in ("ring:4", "complete:x", "dregular:10"):
        with pytest.raises(GraphError):
            parse_topology(bad)


def test_summary_record():
    assert build_chord(2).summary() == {"kind": "chord", "n": 4, "edges": 6, "degree_min": 3, "degree_max": 3}
