"""Decoy selection planning on AND/OR attack graphs of ATT&CK techniques."""

from .errors import (
    BlockedSetError,
    DecoyPlanError,
    DegenerateConfigError,
    EmptyProfileError,
    GraphFormatError,
    InfeasibleAndNodeError,
    InfeasibleError,
    NoCompatibleGroupError,
    NotEnoughCandidatesError,
    NotEnoughEligibleTargetsError,
    TooManyCandidatesError,
    TruncatedProfileError,
    UnknownNodeError,
    ValidationError,
)
from .graph import (
    AttackGraph,
    GateType,
    Node,
    NodeKind,
    Scenario,
    is_separated,
    load_graph,
    load_scenario,
    parse_graph,
    parse_scenario,
    save_graph,
    save_scenario,
    serialize_graph,
    serialize_scenario,
    validate_scenario,
)
from .paths import (
    CLOSURE_MODES,
    DEFAULT_PATH_CAP,
    AttackPath,
    ThreatProfile,
    and_closure,
    attack_paths,
    build_threat_profile,
    load_profile,
    save_profile,
    serialize_profile,
    simple_paths,
    support_closure,
)
from .separator import (
    CostModel,
    DecoySelection,
    Partition,
    SolverOptions,
    ZeroOneLinearModel,
    assignment_for_blocked,
    brute_force_min_separator,
    build_model,
    load_selection,
    save_selection,
    solve_optimal,
)
from .schemes import (
    GroupCatalog,
    GroupParams,
    compatible_groups,
    load_catalog,
    select_group,
    select_optimal,
    select_predecessor,
    select_random,
)
from .metrics import (
    MetricsReport,
    and_interception,
    evaluate,
    interception_ratio,
    prevented_outcomes,
    unmitigated_ratio,
)
from .experiments import (
    ExperimentConfig,
    ExperimentResult,
    GeneratorConfig,
    SchemeSpec,
    generate_graph,
    instance_seed,
    load_experiment_config,
    run_experiment,
    sample_scenario,
)

__version__ = "0.1.0"
