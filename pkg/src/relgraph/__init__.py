"""relgraph: declarative relational learning over factor graphs.

Typed horn-clause programs are compiled and grounded against flat-file data
into factor graphs of binary decision variables, weighted neural potentials
and hard linear constraints.  MAP inference runs as an exact branch-and-bound
ILP or an approximate local search, and the potentials train under local,
joint-inference, structured-hinge and pooled-CRF objectives.
"""

from .datastore import Datastore, FeatureStore, GroundAtomTable, load_data
from .dsl import (
    AbstractProgram,
    ArithmeticConstraint,
    Atom,
    CheckedProgram,
    Const,
    EntityType,
    Guard,
    Literal,
    RelationSchema,
    RuleTemplate,
    SumVar,
    Var,
    compile_program,
    parse_program,
    pretty_print,
    to_disjunctive_form,
    validate,
)
from .grounding import (
    DecisionVariable,
    FactorGraph,
    GroundRule,
    LinearConstraint,
    dump_factor_graph,
    expand_summation,
    ground,
    rule_to_inequality,
)
from .inference import (
    Assignment,
    SolutionPool,
    check_feasible,
    dump_lp,
    k_best,
    objective_value,
    solve_approx,
    solve_exact,
    solve_loss_augmented,
)
from .learning import (
    PartitionEstimate,
    TrainConfig,
    crf_loss_value,
    evaluate,
    hinge_loss_value,
    partition_estimate,
    predict_joint,
    predict_local,
    predict_map,
    train_global_crf,
    train_global_hinge,
    train_local,
)
from .scorers import (
    NetworkConfig,
    ScorerGraph,
    apply_checkpoint,
    build_scorers,
    load_checkpoint,
    save_checkpoint,
    score_graph,
    score_rule,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
