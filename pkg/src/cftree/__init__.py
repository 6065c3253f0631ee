"""Exact minimum-cost counterfactuals for hard-decision classification trees.

The package answers one question: given a tree, an instance, and a cost over
feature edits, what is the cheapest feasible instance the tree classifies as
the target class? Leaves are enumerated, each leaf region contributes one
convex (or mixed-integer, with categorical features) subproblem, and the
cheapest verified solution wins. Solvers are in-repo and emit checkable
optimality certificates.
"""

from .constraints import (ConstraintSet, TargetSpec, UserConstraints,
                          check_feasible_point, compile_constraints,
                          target_from_document, target_to_document,
                          user_constraints_from_document,
                          user_constraints_to_document)
from .cost import (CostFunction, cost_from_document, cost_to_document,
                   eval_cost, grid_coupling_matrix)
from .engine import (CounterfactualResult, Query, dataset_search, explain,
                     explain_diverse, explain_margin)
from .errors import (CFTreeError, InputError, SolverError)
from .program import (ProgramInstance, SolveOutcome, check_kkt,
                      program_from_document, program_to_document)
from .schema import (FeatureDecl, FeatureSchema, decode, encode,
                     schema_from_document, schema_to_document, validate_raw)
from .tree import (DecisionNode, LeafNode, LeafRegion, TreeModel, leaf_region,
                   parse_tree, predict, prune_redundant, serialize_tree,
                   target_leaves)

__version__ = "0.1.0"

__all__ = [
    "CFTreeError",
    "ConstraintSet",
    "CostFunction",
    "CounterfactualResult",
    "DecisionNode",
    "FeatureDecl",
    "FeatureSchema",
    "InputError",
    "LeafNode",
    "LeafRegion",
    "ProgramInstance",
    "Query",
    "SolveOutcome",
    "SolverError",
    "TargetSpec",
    "TreeModel",
    "UserConstraints",
    "check_feasible_point",
    "check_kkt",
    "compile_constraints",
    "cost_from_document",
    "cost_to_document",
    "dataset_search",
    "decode",
    "encode",
    "eval_cost",
    "explain",
    "explain_diverse",
    "explain_margin",
    "grid_coupling_matrix",
    "leaf_region",
    "parse_tree",
    "predict",
    "program_from_document",
    "program_to_document",
    "prune_redundant",
    "schema_from_document",
    "schema_to_document",
    "serialize_tree",
    "target_leaves",
    "target_from_document",
    "target_to_document",
    "user_constraints_from_document",
    "user_constraints_to_document",
    "validate_raw",
    "__version__",
]
