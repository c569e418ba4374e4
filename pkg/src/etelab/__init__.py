"""Decoding-scheduler laboratory for masked diffusion models.

Confidence-based parallel-decoding baselines and the explore-then-exploit
sampler run against exact desk-scale probability oracles, with full
information accounting (bits decoded per round, approximation error, and the
rounds lower bound) verified on every run.
"""

from .baseline import (
    SelectionRule,
    run_block_diffusion,
    select_dynamic_threshold,
    select_fixed_k,
    select_static_threshold,
    vanilla_any_order_run,
)
from .core import (
    Commit,
    DecodeState,
    DecodeTrace,
    MaskedSequence,
    RoundRecord,
    TRACE_SCHEMA,
    Vocabulary,
    make_initial_state,
    nats_to_bits,
    partition_blocks,
)
from .ete import (
    EteConfig,
    Hypothesis,
    explore_candidates,
    exploit,
    feasible_set,
    frontier_window,
    implicit_explore,
    run_ete,
    score_hypothesis,
    targeted_explore,
    trigger_exploration,
)
from .infotool import (
    ConfidenceRuleReport,
    BoundReport,
    EfficiencyReport,
    EpsilonReport,
    annotate_exact_joints,
    bound_report,
    check_confidence_rule,
    decompose_efficiency,
    epsilon_total,
    frechet_round_check,
    round_marginal_nats,
    sequential_rescore,
    rounds_lower_bound,
)
from .oracles import (
    MarginalReport,
    MarkovOracle,
    OracleModel,
    ProfileOracle,
    RemoteOracle,
    TabularJointOracle,
    TemplateOracle,
    build_profile_oracle,
    build_template_oracle,
    load_oracle,
    markov_conditionals,
)

__version__ = "0.1.0"
