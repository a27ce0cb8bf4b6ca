import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dsep_by_paths, random_dag
from selbias import fixtures
from selbias.errors import (
    CycleError,
    DuplicateNodeError,
    GraphParseError,
    MultipleTreatmentsError,
    OverlapError,
    UnknownEndpointError,
    UnknownNodeError,
)
from selbias.graph import (
    NodeRole,
    ancestors,
    build_graph,
    d_separated,
    descendants,
    format_graph,
    open_paths,
    parse_graph,
    proper_backdoor_graph,
    proper_causal_paths,
    read_graph,
    remove_outgoing,
    to_swig,
)

T, O, S, P, C = "treatment", "outcome", "selection", "post", "covariate"


class TestBuild:
    def test_case1(self, case1):
        assert case1.nodes == {"A", "Y", "L", "S"}
        assert case1.edges == {("A", "Y"), ("A", "L"), ("Y", "L"), ("L", "S")}
        assert case1.treatment == "A" and case1.selection == "S"

    def test_two_cycle(self):
        with pytest.raises(CycleError):
            build_graph([("A", T), ("Y", O)], [("A", "Y"), ("Y", "A")])

    def test_longer_cycle_reports_members(self):
        with pytest.raises(CycleError) as err:
            build_graph([("A", T), ("B", C), ("Y", O)], [("A", "B"), ("B", "Y"), ("Y", "A")])
        assert set(err.value.cycle) >= {"A", "B", "Y"}

    def test_dangling_edge(self):
        with pytest.raises(UnknownEndpointError):
            build_graph([("A", T)], [("A", "Z")])

    def test_duplicate_node(self):
        with pytest.raises(DuplicateNodeError):
            build_graph([("A", T), ("A", O)], [])

    def test_unknown_role(self):
        with pytest.raises(ValueError):
            build_graph([("A", "exposure")], [])


class TestTextFormat:
    def test_round_trip_fixtures(self):
        for make in fixtures.FIXTURES.values():
            g = make()
            assert parse_graph(format_graph(g)) == g

    def test_shipped_files_match_fixtures(self, graph_dir):
        for name, make in fixtures.FIXTURES.items():
            assert read_graph(graph_dir / f"{name}.txt") == make()

    def test_comments_and_blank_lines(self):
        text = "# header\nnode A treatment\n\nnode Y outcome  # trailing\nedge A Y\n"
        g = parse_graph(text)
        assert g.edges == {("A", "Y")}

    @pytest.mark.parametrize("text, line", [
        ("node A treatment\nnode Y\n", 2),
        ("node A treatment\nedge A Z\n", 2),
        ("node A treatment\nnode A outcome\n", 2),
        ("node A wizard\n", 1),
        ("vertex A treatment\n", 1),
    ])
    def test_errors_carry_line_numbers(self, text, line):
        with pytest.raises(GraphParseError) as err:
            parse_graph(text)
        assert err.value.line == line


class TestSwig:
    def test_case1(self, case1):
        sw = to_swig(case1)
        assert sw.nodes == {"A", "a", "Y(a)", "L(a)", "S(a)"}
        assert sw.edges == {("a", "Y(a)"), ("a", "L(a)"), ("Y(a)", "L(a)"), ("L(a)", "S(a)")}

    def test_case2(self, case2):
        sw = to_swig(case2)
        assert sw.edges == {("a", "Y(a)"), ("a", "L(a)"), ("L(a)", "Y(a)"), ("L(a)", "S(a)")}

    def test_extended_keeps_pre_treatment_labels(self):
        sw = to_swig(fixtures.case1_extended())
        for v in ("X1", "X2", "X3", "U"):
            assert sw.label(v) == v
        assert sw.label("L") == "L(a)"
        assert ("X1", "A") in sw.edges

    def test_split_invariants(self):
        for make in fixtures.FIXTURES.values():
            g = make()
            sw = to_swig(g)
            assert len(sw.nodes) == len(g.nodes) + 1
            assert len(sw.edges) == len(g.edges)
            assert not sw.graph.parents(sw.fixed)
            assert not sw.graph.children(sw.random)

    def test_multiple_treatments_rejected(self):
        g = build_graph([("A", T), ("B", T), ("Y", O), ("S", S)], [("A", "Y"), ("B", "Y")])
        with pytest.raises(MultipleTreatmentsError):
            to_swig(g)


class TestStructure:
    def test_descendants(self, case1):
        assert descendants(case1, ["A"]) == {"A", "Y", "L", "S"}
        assert descendants(case1, ["Y"]) == {"Y", "L", "S"}

    def test_ancestors(self, case2):
        assert ancestors(case2, ["S"]) == {"S", "L", "A"}

    def test_unknown_node(self, case1):
        with pytest.raises(UnknownNodeError):
            descendants(case1, ["Q"])

    def test_proper_causal_paths(self, case1, case2):
        assert proper_causal_paths(case2, "A", "Y") == [("A", "L", "Y"), ("A", "Y")]
        assert proper_causal_paths(case1, "A", "Y") == [("A", "Y")]

    def test_proper_backdoor_graph(self, case2):
        g = proper_backdoor_graph(case2, "A", "Y")
        assert g.edges == case2.edges - {("A", "Y"), ("A", "L")}

    def test_remove_outgoing(self, case1):
        assert remove_outgoing(case1, "A").edges == {("Y", "L"), ("L", "S")}


class TestDSeparation:
    def test_examples(self, case1):
        assert d_separated(case1, {"Y"}, {"S"}, {"L"})
        assert not d_separated(case1, {"A"}, {"Y"}, {"L"})
        assert d_separated(to_swig(case1), {"Y(a)"}, {"S(a)"}, {"L(a)"})

    def test_fixed_node_is_conditioned_on(self, case1):
        sw = to_swig(case1)
        # without the fixed node, Y(a) <- a -> L(a) -> S(a) would be open
        assert not d_separated(sw, {"Y(a)"}, {"S(a)"})
        assert d_separated(sw, {"Y(a)"}, {"A"})

    def test_overlap(self, case1):
        with pytest.raises(OverlapError):
            d_separated(case1, {"A"}, {"A", "Y"})
        with pytest.raises(OverlapError):
            d_separated(case1, {"A"}, {"Y"}, {"Y"})

    def test_unknown(self, case1):
        with pytest.raises(UnknownNodeError):
            d_separated(case1, {"A"}, {"Q"})

    def test_empty_sets_separated(self, case1):
        assert d_separated(case1, set(), {"Y"})

    def test_witness_paths_sorted(self, case1):
        paths = open_paths(case1, {"A"}, {"Y"}, {"L"})
        assert paths == sorted(paths)
        assert ("A", "L", "Y") in paths and ("A", "Y") in paths


@st.composite
def dag_query(draw, max_nodes=8):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    k = draw(st.integers(2, max_nodes))
    nodes, edges = random_dag(rng, k)
    labels = rng.integers(0, 4, size=k)  # 0: X, 1: Y, 2: Z, 3: free
    labels[0], labels[-1] = 0, 1
    xs = [v for v, l in zip(nodes, labels) if l == 0]
    ys = [v for v, l in zip(nodes, labels) if l == 1]
    zs = [v for v, l in zip(nodes, labels) if l == 2]
    g = build_graph([(v, C) for v in nodes], edges)
    return g, nodes, edges, xs, ys, zs


@settings(max_examples=300, deadline=None)
@given(dag_query())
def test_dsep_symmetric(q):
    g, _, _, xs, ys, zs = q
    assert d_separated(g, xs, ys, zs) == d_separated(g, ys, xs, zs)


@settings(max_examples=300, deadline=None)
@given(dag_query(max_nodes=7))
def test_dsep_matches_path_enumeration(q):
    g, nodes, edges, xs, ys, zs = q
    assert d_separated(g, xs, ys, zs) == dsep_by_paths(nodes, edges, xs, ys, zs)


@settings(max_examples=200, deadline=None)
@given(dag_query(), st.data())
def test_descendants_extensive_and_monotone(q, data):
    g, nodes, *_ = q
    a = data.draw(st.sets(st.sampled_from(nodes)))
    b = data.draw(st.sets(st.sampled_from(nodes)))
    assert descendants(g, a) >= a
    assert descendants(g, a) <= descendants(g, a | b)
    assert ancestors(g, a) >= a


def test_role_parse():
    assert NodeRole.parse(" Post ") is NodeRole.POST
