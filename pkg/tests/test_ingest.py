import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import dfs_reach, random_graph, rng
from policygen.ingest import (
    AppGraph,
    MethodNode,
    PermissionMap,
    compute_reach,
    derive_spec,
    dump_specs,
    iter_app_graphs,
    load_app_graph,
    load_permission_map,
    load_specs,
    match_contexts,
)
from policygen.model import Context, FormatError, Label, Property, Resource, ResourceKind

API, PERM = ResourceKind.API, ResourceKind.PERMISSION


def graph_json(methods, app_id="app"):
    return json.dumps({"app_id": app_id, "label": "benign", "methods": methods})


def test_recorder_loads(recorder):
    assert len(recorder.methods) == 3
    assert {m.component_kind for m in recorder.methods.values()} == {"activity"}
    assert recorder.methods["onClick"].callees == {"startRecording"}


def test_empty_methods():
    g = load_app_graph(graph_json([]))
    assert g.methods == {}


def test_dangling_callee_named():
    text = graph_json([{"id": "a", "calls": ["missing"]}])
    with pytest.raises(FormatError, match="missing") as err:
        load_app_graph(text)
    assert err.value.where == "a"


def test_duplicate_method_id():
    with pytest.raises(FormatError, match="duplicate"):
        load_app_graph(graph_json([{"id": "a"}, {"id": "a"}]))


def test_callback_without_entry_point():
    text = graph_json([{"id": "a", "callbacks": ["oncreate"], "entry_point": False}])
    with pytest.raises(FormatError, match="entry_point") as err:
        load_app_graph(text)
    assert err.value.where == "a"


def test_malformed_json():
    with pytest.raises(FormatError, match="malformed JSON"):
        load_app_graph(b"{not json")


def test_unknown_component_becomes_other():
    g = load_app_graph(graph_json([{"id": "a", "component": "provider"}]))
    assert g.methods["a"].component_kind == "other"


def test_jsonl_stream():
    lines = graph_json([], "one") + "\n\n" + graph_json([{"id": "x"}], "two") + "\n"
    assert [g.app_id for g in iter_app_graphs(lines)] == ["one", "two"]


def test_permission_map_basic():
    pm = load_permission_map(b"setAudioSource\tRECORD_AUDIO\n")
    assert pm["setAudioSource"] == {"RECORD_AUDIO"}
    assert pm["unmapped"] == frozenset()


def test_permission_map_empty_and_comments():
    assert len(load_permission_map(b"")) == 0
    assert len(load_permission_map("# only a comment\n\n")) == 0


def test_permission_map_merges_duplicates():
    pm = load_permission_map("a\tP1\na\tP2\n")
    assert pm["a"] == {"P1", "P2"}
    assert len(pm) == 1


def test_permission_map_short_line():
    with pytest.raises(FormatError, match="line 2"):
        load_permission_map("a\tP1\njust-one-field\n")


def test_reach_recorder(recorder):
    reach = compute_reach(recorder)
    assert reach["onClick"] == {"setOutputFile", "start"}
    assert reach["startRecording"] == {"setOutputFile", "start"}
    assert reach["onCreate"] == {"MediaRecorder.<init>", "setAudioSource"}


def test_reach_isolated_method():
    g = AppGraph("g", Label.UNKNOWN, {"a": MethodNode("a")})
    assert compute_reach(g) == {"a": frozenset()}


def test_reach_two_cycle():
    g = AppGraph("g", Label.UNKNOWN, {
        "a": MethodNode("a", callees=frozenset({"b"})),
        "b": MethodNode("b", callees=frozenset({"a"}), direct_apis=frozenset({"x"})),
    })
    assert compute_reach(g) == {"a": {"x"}, "b": {"x"}}


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 12))
def test_reach_matches_dfs(seed, n):
    g = random_graph(rng(seed), n, edge_p=0.25)
    assert compute_reach(g) == dfs_reach(g)


def test_match_contexts_recorder(recorder):
    assert match_contexts(recorder.methods["onCreate"]) == {
        Context.ACTIVITY, Context.ONCREATE, Context.ENTRY_POINT}
    assert match_contexts(recorder.methods["startRecording"]) == {Context.ACTIVITY}


def test_match_contexts_plain():
    assert match_contexts(MethodNode("m")) == set()


def test_match_contexts_service_handler():
    m = MethodNode("m", "service", handlers=frozenset({"onclick"}), is_entry_point=True)
    assert match_contexts(m) == {Context.SERVICE, Context.ONCLICK_HANDLER, Context.ENTRY_POINT}


def rows(spec):
    return {(p.context.value, p.resource.identifier) for p in spec.properties}


def test_derive_recorder_api_mode(recorder, recorder_pmap):
    s = derive_spec(recorder, recorder_pmap, API)
    assert rows(s) == {
        ("oncreate", "setAudioSource"), ("onclick_handler", "setOutputFile"),
        ("activity", "setAudioSource"), ("activity", "setOutputFile"),
        ("entry_point", "setAudioSource"), ("entry_point", "setOutputFile"),
    }
    assert s.resource_kind is API


def test_derive_recorder_permission_mode(recorder, recorder_pmap):
    s = derive_spec(recorder, recorder_pmap, PERM)
    assert {("oncreate", "RECORD_AUDIO"), ("activity", "RECORD_AUDIO"),
            ("activity", "WRITE_EXTERNAL_STORAGE"),
            ("onclick_handler", "WRITE_EXTERNAL_STORAGE")} <= rows(s)


def test_derive_counts_unmapped(recorder, recorder_pmap):
    stats = {}
    derive_spec(recorder, recorder_pmap, API, stats)
    assert stats["unmapped_apis"] == 2  # MediaRecorder.<init>, start


def test_derive_nothing_mapped(recorder):
    assert derive_spec(recorder, PermissionMap(), PERM).properties == frozenset()


def test_spec_jsonl_roundtrip(recorder, recorder_pmap):
    specs = [derive_spec(recorder, recorder_pmap, m) for m in (PERM, API)]
    text = dump_specs(specs)
    assert load_specs(text) == specs
    first = json.loads(text.splitlines()[0])
    assert first["properties"][0] == ["entry_point", "RECORD_AUDIO"]


def test_load_specs_reports_line():
    bad = '{"app_id":"a","label":"benign","resource_kind":"permission","properties":[["x","P"]]}'
    with pytest.raises(FormatError, match="line 1"):
        load_specs(bad)


PMAP = PermissionMap({"api0": {"P0"}, "api1": {"P0", "P1"}, "api2": {"P2"}})


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_derive_is_monotone(seed):
    r = rng(seed)
    g = random_graph(r, 8)
    base = derive_spec(g, PMAP, PERM).properties
    methods = dict(g.methods)
    a, b = sorted(methods)[int(r.integers(8))], sorted(methods)[int(r.integers(8))]
    methods[a] = MethodNode(**{**methods[a].__dict__,
                               "callees": methods[a].callees | {b},
                               "direct_apis": methods[a].direct_apis | {"api2"}})
    grown = derive_spec(AppGraph(g.app_id, g.label, methods), PMAP, PERM).properties
    assert base <= grown


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cross_mode_consistency(seed):
    g = random_graph(rng(seed), 8)
    api_spec = derive_spec(g, PMAP, API)
    perm_spec = derive_spec(g, PMAP, PERM)
    expected = {Property(p.context, Resource.permission(perm))
                for p in api_spec.properties for perm in PMAP[p.resource.identifier]}
    assert perm_spec.properties == expected


def test_derive_deterministic(recorder, recorder_pmap):
    a = dump_specs([derive_spec(recorder, recorder_pmap, PERM)])
    b = dump_specs([derive_spec(recorder, recorder_pmap, PERM)])
    assert a == b
