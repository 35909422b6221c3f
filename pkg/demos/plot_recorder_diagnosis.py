"""
Abstracting an app and explaining a violation
=============================================

A tiny audio recorder: ``onCreate`` sets up the microphone and a click
handler starts recording through a helper method.
"""

from pathlib import Path

from policygen import (Context, Policy, Property, Resource, ResourceKind, derive_spec,
                       explain, load_app_graph, load_permission_map)

data = Path(__file__).resolve().parent.parent / "tests" / "data"
graph = load_app_graph((data / "recorder.json").read_bytes())
pmap = load_permission_map((data / "recorder_pmap.tsv").read_text())

# the same graph seen through apis, then through permissions
for kind in (ResourceKind.API, ResourceKind.PERMISSION):
    spec = derive_spec(graph, pmap, kind)
    print(kind.value)
    for prop in sorted(spec.properties):
        print("   ", prop.to_token())

###############################################################################
# A policy that forbids writing storage from click handlers.  ``explain``
# returns the shortest call chain that reaches the offending api.

rule = Property(Context.ONCLICK_HANDLER, Resource.permission("WRITE_EXTERNAL_STORAGE"))
for v in explain(Policy(ResourceKind.PERMISSION, (rule,)), graph, pmap):
    print(v.rule.to_token(), "via", " -> ".join(v.witness))
