"""Graph passes and executor for matrix re-parameterized ranking inference."""

from ._core import (
    Graph,
    InputError,
    InvalidArgument,
    IoError,
    MariError,
    ParseError,
    PreconditionError,
    __version__,
    attention_flops,
    attention_fixture,
    check_equivalence,
    colors,
    fragment,
    gca,
    mari_flops,
    plan_reorg,
    random_inputs,
    ranking_fixture,
    reorg,
    rewrite,
    run,
    single_site_graph,
    table2,
)

__all__ = [
    "Graph",
    "InputError",
    "InvalidArgument",
    "IoError",
    "MariError",
    "ParseError",
    "PreconditionError",
    "__version__",
    "attention_flops",
    "attention_fixture",
    "check_equivalence",
    "colors",
    "fragment",
    "gca",
    "mari_flops",
    "plan_reorg",
    "random_inputs",
    "ranking_fixture",
    "reorg",
    "rewrite",
    "run",
    "single_site_graph",
    "table2",
]
