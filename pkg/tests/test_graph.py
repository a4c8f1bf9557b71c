import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csne.graph import (ParseError, RawRecord, SignedGraph, components, is_connected,
                        largest_connected_component, load_graph, parse_edge_list, parse_wiki_rfa,
                        stats, to_undirected, triangle_census, write_edges)
from csne.features import polarities

from conftest import brute_census, make_graph, random_graph


def test_parse_sign_line():
    res = parse_edge_list("1 2 -1\n")
    assert res.records == [RawRecord("1", "2", -1)]


def test_parse_weight_reduced_by_sign():
    res = parse_edge_list("7 9 10\n")
    assert res.records == [RawRecord("7", "9", 1)]


def test_parse_skips_comments_and_counts_zero_weights():
    res = parse_edge_list("# comment\n% other\n1,2,0\n3,4,-3,1289001600\n")
    assert res.records == [RawRecord("3", "4", -1)]
    assert res.dropped_zero == 1


def test_parse_plus_minus_tokens_and_header():
    res = parse_edge_list("source,target,type\nharry,ron,+\nharry,draco,-\n", header=True)
    assert [r.sign for r in res.records] == [1, -1]


@pytest.mark.parametrize("text,lineno", [("1 2 1\n1 2\n", 2), ("1 2 x\n", 1)])
def test_parse_errors_carry_line_number(text, lineno):
    with pytest.raises(ParseError) as exc:
        parse_edge_list(text)
    assert exc.value.lineno == lineno
    assert f"line {lineno}" in str(exc.value)


def test_parse_strict_signs_rejects_weights():
    with pytest.raises(ParseError):
        parse_edge_list("1 2 5\n", weighted=False)


def test_parse_empty_input():
    with pytest.raises(ParseError):
        parse_edge_list("# only a comment\n")


def test_wiki_rfa_blocks():
    text = ("SRC:alice\nTGT:bob\nVOT:1\nRES:1\n\n"
            "SRC:carol\nTGT:bob\nVOT:-1\nRES:1\n\n"
            "SRC:dave\nTGT:bob\nVOT:0\nRES:1\n\n"
            "SRC:\nTGT:bob\nVOT:1\n")
    res = parse_wiki_rfa(text)
    assert res.records == [RawRecord("alice", "bob", 1), RawRecord("carol", "bob", -1)]
    assert res.dropped_zero == 2


def test_undirected_merges_duplicates():
    g = to_undirected([RawRecord("1", "2", 1), RawRecord("2", "1", 1)])
    assert g.m == 1 and g.signs.tolist() == [1]


def test_undirected_zero_sum_pair_dropped():
    g = to_undirected([RawRecord("1", "2", 1), RawRecord("2", "1", -1), RawRecord("2", "3", 1)])
    assert g.m == 1
    assert [g.labels[i] for i in g.edges[0]] == ["2", "3"]


def test_undirected_removes_self_loops():
    g = to_undirected([RawRecord("3", "3", 1), RawRecord("3", "4", -1)])
    assert g.m == 1 and g.n == 2


def test_undirected_policies():
    recs = [RawRecord("a", "b", -1), RawRecord("b", "a", 1), RawRecord("a", "b", 1)]
    assert to_undirected(recs, "sum").signs.tolist() == [1]
    assert to_undirected(recs, "first").signs.tolist() == [-1]
    assert to_undirected(recs + [RawRecord("b", "c", 1)], "drop").m == 1
    with pytest.raises(ValueError):
        to_undirected(recs, "vote")


def test_numeric_labels_sorted_numerically():
    g = to_undirected([RawRecord("10", "9", 1), RawRecord("9", "100", -1)])
    assert g.labels == ("9", "10", "100")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_undirected_idempotent(seed):
    g = random_graph(np.random.default_rng(seed), 12, 0.3)
    recs = [RawRecord(g.labels[i], g.labels[j], int(s)) for (i, j), s in zip(g.edges, g.signs)]
    h = to_undirected(recs)
    again = to_undirected([RawRecord(h.labels[i], h.labels[j], int(s)) for (i, j), s in zip(h.edges, h.signs)])
    assert h == again
    # isolated nodes vanish, nothing else changes
    assert h.m == g.m


def test_graph_invariants_enforced():
    with pytest.raises(ValueError):
        SignedGraph(3, [[0, 0]], [1])
    with pytest.raises(ValueError):
        SignedGraph(3, [[0, 1], [1, 0]], [1, 1])
    with pytest.raises(ValueError):
        SignedGraph(3, [[0, 1]], [2])


def test_adjacency_consistent_with_edges():
    g = random_graph(np.random.default_rng(0), 15, 0.4)
    seen = 0
    for i in range(g.n):
        nbrs, sg = g.adjacency(i)
        assert np.all(np.diff(nbrs) > 0)
        for j, s in zip(nbrs, sg):
            assert g.sign_of(j, i) == s
            seen += 1
    assert seen == 2 * g.m


def test_lcc_tie_goes_to_smallest_label():
    recs = [RawRecord(u, v, 1) for u, v in [("5", "6"), ("6", "7"), ("5", "7"),
                                             ("2", "3"), ("3", "4"), ("2", "4")]]
    g = largest_connected_component(to_undirected(recs))
    assert g.labels == ("2", "3", "4")


def test_lcc_drops_isolated_part():
    recs = [RawRecord("1", "2", 1), RawRecord("2", "3", -1), RawRecord("4", "5", 1)]
    g = largest_connected_component(to_undirected(recs))
    assert g.labels == ("1", "2", "3") and g.m == 2


def test_lcc_identity_on_connected(ppm_triangle):
    assert largest_connected_component(ppm_triangle) == ppm_triangle


def test_lcc_empty_graph_errors():
    with pytest.raises(ValueError):
        largest_connected_component(SignedGraph(0, np.zeros((0, 2)), []))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_lcc_is_connected_and_largest(seed):
    g = random_graph(np.random.default_rng(seed), 25, 0.08)
    if g.m == 0:
        return
    h = largest_connected_component(g)
    assert is_connected(h)
    _, comp = components(g)
    sizes = np.bincount(comp)
    assert h.n == sizes.max()


def test_census_single_triangles(ppm_triangle, ppp_triangle):
    c = triangle_census(ppm_triangle)
    assert (c.t_ppp, c.t_ppm, c.t_pmm, c.t_mmm) == (0, 1, 0, 0)
    assert (triangle_census(ppp_triangle).t_ppp, triangle_census(ppp_triangle).t_total) == (1, 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 50), st.floats(0.05, 0.6))
def test_census_matches_brute_force(seed, n, p):
    g = random_graph(np.random.default_rng(seed), n, p, p_pos=0.5)
    c = triangle_census(g)
    assert (c.t_ppp, c.t_ppm, c.t_pmm, c.t_mmm) == brute_census(g)
    assert c.t_total == sum(brute_census(g))


def test_stats_examples(alt_square):
    st_ = stats(make_graph([(0, 1, 1)]))
    assert st_.positive_fraction == 1.0 and st_.balanced_fraction is None
    st_ = stats(alt_square)
    assert st_.positive_fraction == 0.5 and st_.census.t_total == 0
    assert st_.density == 1.0


def test_polarity_sum_identity():
    g = random_graph(np.random.default_rng(3), 30, 0.2)
    assert polarities(g).sum() == 2 * (np.sum(g.signs > 0) - np.sum(g.signs < 0))


def test_load_and_write_roundtrip(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("# src,dst,rating,time\n1,2,5,0\n2,1,3,0\n2,3,-10,0\n3,3,1,0\n8,9,1,0\n")
    g = load_graph(path)
    assert g.labels == ("1", "2", "3") and g.signs.tolist() == [1, -1]
    buf = io.StringIO()
    write_edges(g, buf)
    assert buf.getvalue() == "1\t2\t1\n2\t3\t-1\n"


def test_load_gzip(tmp_path):
    import gzip
    path = tmp_path / "g.txt.gz"
    with gzip.open(path, "wt") as fh:
        fh.write("# FromNodeId\tToNodeId\tSign\n0\t1\t1\n1\t2\t-1\n")
    g = load_graph(path)
    assert g.m == 2 and g.signs.tolist() == [1, -1]
