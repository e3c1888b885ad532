import json
import random

import networkx as nx
import pytest

from h2memory.llm import Gateway, MockBackend, scripted
from h2memory.memory import ConstructionError, RelationKind, build_log_graph, connected_components, window_layout
from h2memory.memory.bank import LogRelation
from h2memory.memory.graph import ordered_map, parse_relations
from oracles import random_relations, uf_components


def test_components_match_union_find():
    rng = random.Random(0)
    for _ in range(500):
        n = rng.randint(1, 200)
        edges = random_relations(rng, n)
        assert connected_components(n, edges) == uf_components(n, edges)


def test_components_match_networkx():
    rng = random.Random(1)
    for _ in range(50):
        n = rng.randint(1, 80)
        edges = random_relations(rng, n)
        g = nx.Graph()
        g.add_nodes_from(range(n))
        g.add_edges_from(edges)
        ref = sorted((sorted(c) for c in nx.connected_components(g)), key=lambda c: c[0])
        assert connected_components(n, edges) == ref


def test_window_layout_25():
    w = window_layout(25)
    assert [x.span for x in w] == [tuple(range(0, 10)), tuple(range(10, 20)), tuple(range(20, 25))]
    assert [x.context for x in w] == [(), tuple(range(0, 10)), tuple(range(10, 20))]
    assert [x.label() for x in w] == ["log_0 - log_9", "log_10 - log_19", "log_20 - log_24"]


@pytest.mark.parametrize("n,chunk,ctx", [(1, 10, 10), (10, 10, 10), (37, 7, 3), (100, 10, 10)])
def test_window_layout_covers_once(n, chunk, ctx):
    w = window_layout(n, chunk, ctx)
    assert [i for x in w for i in x.span] == list(range(n))
    assert all(len(x.context) <= ctx and all(c < x.span[0] for c in x.context) for x in w)


def test_caused_by_wins_over_follows():
    parsed = {"log_3": {"caused_by": ["log_1"], "follows": ["log_1", "log_2"]}}
    rels = parse_relations(parsed)
    assert rels == [LogRelation(1, 3, RelationKind.CAUSED_BY), LogRelation(2, 3, RelationKind.FOLLOWS)]


def test_relation_must_point_backward():
    with pytest.raises(ValueError):
        LogRelation(4, 4, RelationKind.FOLLOWS)


def test_fixture_graph_partitions_logs(corpus):
    logs = corpus.sessions[0].logs
    relations, subgraphs = build_log_graph(logs, Gateway(MockBackend()))
    assert sorted(i for g in subgraphs for i in g) == list(range(len(logs)))
    assert subgraphs == uf_components(len(logs), [(r.from_log, r.to_log) for r in relations])
    assert all(r.from_log < r.to_log for r in relations)


def test_workers_do_not_change_graph(corpus):
    logs = corpus.sessions[1].logs
    one = build_log_graph(logs, Gateway(MockBackend()), workers=1, chunk=4, context=4)
    four = build_log_graph(logs, Gateway(MockBackend()), workers=4, chunk=4, context=4)
    assert one == four


def test_window_failure_names_window(corpus):
    logs = corpus.sessions[0].logs[:12]
    bad = json.dumps({"log_0": {"caused_by": [], "follows": []}})
    gw = Gateway(MockBackend(overrides={"mem.log_relations": scripted(bad)}), retry_budget=2)
    with pytest.raises(ConstructionError, match="log_0 - log_9"):
        build_log_graph(logs, gw)


def test_out_of_order_logs_rejected(corpus):
    logs = list(corpus.sessions[0].logs[:3])
    with pytest.raises(ConstructionError):
        build_log_graph([logs[2], logs[0]], Gateway(MockBackend()))


def test_ordered_map_keeps_order():
    assert ordered_map(lambda x: x * x, list(range(20)), workers=4) == [x * x for x in range(20)]
