"""Infer deny-rule policies from labeled application abstractions."""
from .encode import MaxSatInstance, build_instance, export_wcnf, score
from .evalkit import EvalReport, GenProfile, evaluate, gen_corpus, split_corpus
from .ingest import (
    AppGraph,
    MethodNode,
    PermissionMap,
    compute_reach,
    derive_spec,
    load_app_graph,
    load_permission_map,
    match_contexts,
)
from .model import (
    AppSpec,
    Context,
    FormatError,
    Label,
    Property,
    Resource,
    ResourceKind,
    property_order,
)
from .policy import (
    Policy,
    Violation,
    check,
    explain,
    parse_policy,
    policy_from_solution,
    serialize_policy,
)
from .solver import SolveResult, solve_brute, solve_exact, solve_greedy

__version__ = "0.1.0"
