"""Information accounting over decode traces: per-round nats, approximation
error, confidence-rule compliance, the rounds lower bound, per-round joint
probability floors, and the exploration/exploitation efficiency decomposition.

Two accounting scopes exist everywhere a bound is evaluated:

* "exploit"  — only rounds selected purely by the confidence rule; this is the
  scope in which the lower bound is provable, and the one the pass flag uses;
* "all"      — every round, reported for context (implicit-exploration rounds
  intentionally break the confidence assumption, so this scope can undershoot
  the bound legitimately).
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from .core import (
    EXPLOITATION_KINDS,
    EXPLORATION_KINDS,
    DecodeTrace,
    RoundRecord,
    make_initial_state,
)
from .errors import ConfigError, ContractViolation, UnsupportedCapability
from .oracles.base import OracleModel

PASS_TOL = 1e-9


def round_marginal_nats(record: RoundRecord) -> float:
    """Sum of -ln(confidence) over the round's commits. Zero for empty rounds."""
    return record.nats_marginal


def replay_states(trace: DecodeTrace):
    """Yield (state before round, round) pairs by replaying the trace."""
    prompt = list(trace.final_tokens[: trace.prompt_len])
    state = make_initial_state(
        prompt, trace.gen_len, trace.block_len, mask_id=_free_mask_id(trace)
    )
    for r in trace.rounds:
        yield state, r
        for c in r.committed:
            state.commit(c.position, c.token)


def _free_mask_id(trace: DecodeTrace) -> int:
    mask_id = -1
    while mask_id in trace.final_tokens:
        mask_id -= 1
    return mask_id


def annotate_exact_joints(trace: DecodeTrace, oracle: OracleModel) -> DecodeTrace:
    """Fill nats_joint / epsilon_r on every round using the oracle's exact joint.

    Uses the identity  -ln p(A_r | C_r) = surprisal(C_r + A_r) - surprisal(C_r)
    so the whole trace costs R+1 partial-joint evaluations.
    """
    if not oracle.supports_exact_joint:
        raise UnsupportedCapability("per-round joints need an exact-joint oracle")
    evidence = {i: int(trace.final_tokens[i]) for i in range(trace.prompt_len)}
    surprisal = oracle.partial_joint_nats(evidence)
    new_rounds = []
    for r in trace.rounds:
        for c in r.committed:
            evidence[c.position] = c.token
        nxt = oracle.partial_joint_nats(evidence)
        nats_joint = nxt - surprisal
        epsilon_r = abs(nats_joint - r.nats_marginal)
        new_rounds.append(dataclasses.replace(r, nats_joint=nats_joint, epsilon_r=epsilon_r))
        surprisal = nxt
    return trace.with_rounds(new_rounds)


def _ensure_joints(trace: DecodeTrace, oracle: OracleModel | None) -> DecodeTrace:
    if all(r.nats_joint is not None for r in trace.rounds):
        return trace
    if oracle is None:
        raise ContractViolation("trace lacks exact joints and no oracle was given")
    return annotate_exact_joints(trace, oracle)


@dataclass(frozen=True)
class EpsilonReport:
    """Total approximation error of a completed trace, with per-round detail."""

    total: float                      # | -ln p(x) - sum of marginal nats |
    per_round: tuple[float, ...]      # epsilon_r
    nats_joint_total: float           # -ln p(generated | prompt)
    nats_marginal_total: float
    triangle_ok: bool                 # total <= sum(per_round) within tolerance


def epsilon_total(trace: DecodeTrace, oracle: OracleModel) -> EpsilonReport:
    """Exact total approximation error (and per-round errors) of a trace."""
    annotated = _ensure_joints(trace, oracle)
    joints = [r.nats_joint for r in annotated.rounds]
    eps_r = tuple(r.epsilon_r for r in annotated.rounds)
    joint_total = float(sum(joints))
    marginal_total = float(sum(r.nats_marginal for r in annotated.rounds))
    total = abs(joint_total - marginal_total)
    triangle_ok = total <= sum(eps_r) + PASS_TOL
    return EpsilonReport(total, eps_r, joint_total, marginal_total, triangle_ok)


@dataclass(frozen=True)
class ConfidenceRuleReport:
    """Per-round compliance with the dynamic-threshold confidence rule."""

    compliant: tuple[bool, ...]       # exploit rounds only; exempt rounds -> True
    exempt: tuple[bool, ...]          # True for implicit/targeted/cleanup/vanilla rounds
    worst: tuple[float, ...]          # max (1+|A_r|)(1-c) per round, 0.0 when empty
    max_violation: float              # worst exploit-round excess over the factor, >= 0

    def all_exploit_compliant(self) -> bool:
        return all(c for c, e in zip(self.compliant, self.exempt) if not e)


def check_confidence_rule(trace: DecodeTrace, factor: float) -> ConfidenceRuleReport:
    """Evaluate (1+|A_r|)(1-confidence) <= factor for every exploit round."""
    compliant, exempt, worst = [], [], []
    max_violation = 0.0
    for r in trace.rounds:
        is_exempt = r.kind not in ("exploit",)
        size = len(r.committed)
        w = max(((1 + size) * (1.0 - c.confidence) for c in r.committed), default=0.0)
        ok = w <= factor + PASS_TOL
        if not is_exempt and not ok:
            max_violation = max(max_violation, w - factor)
        compliant.append(ok if not is_exempt else True)
        exempt.append(is_exempt)
        worst.append(w)
    return ConfidenceRuleReport(tuple(compliant), tuple(exempt), tuple(worst), max_violation)


def rounds_lower_bound(
    total_nats: float, epsilon: float, n: int, factor: float
) -> tuple[float, float, float, bool]:
    """Lower-bound terms on the number of rounds.

    Returns (term_entropy, term_budget, bound, applicable). The entropy term is
    total_nats / ln((n+1) / ((1-factor) n + 1)); the budget term is
    max(0, total_nats - epsilon) / factor. The bound only applies for
    factor in (0, 1]; outside that range the terms are NaN and applicable is
    False.
    """
    if n < 1:
        raise ConfigError(f"sequence length must be >= 1, got {n}")
    if total_nats < 0 or epsilon < 0:
        raise ConfigError("nats and epsilon must be non-negative")
    if not (0.0 < factor <= 1.0):
        return math.nan, math.nan, math.nan, False
    denom = math.log((n + 1) / ((1.0 - factor) * n + 1))
    term_entropy = total_nats / denom if denom > 0 else math.inf
    term_budget = max(0.0, total_nats - epsilon) / factor
    return term_entropy, term_budget, max(term_entropy, term_budget), True


@dataclass(frozen=True)
class BoundReport:
    """Evaluated lower-bound terms and measured rounds for one trace."""

    scope: str                 # "exploit" or "all"
    factor: float
    n: int
    total_nats: float          # exact joint nats in scope
    epsilon: float             # |joint - marginal| in scope
    term_entropy: float
    term_budget: float
    bound: float
    rounds_exploit: int
    rounds_total: int
    margin: float              # measured rounds (per scope) - bound
    passed: bool | None        # None when the bound does not apply (factor > 1)
    applicable: bool

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def bound_report(
    trace: DecodeTrace,
    oracle: OracleModel | None,
    factor: float,
    scope: str = "exploit",
) -> BoundReport:
    """Evaluate the rounds lower bound against a completed trace.

    scope="exploit" restricts information, error, and measured rounds to
    rounds selected purely by the confidence rule (the provable regime);
    scope="all" uses the whole trace.
    """
    if scope not in ("exploit", "all"):
        raise ConfigError(f"unknown bound scope {scope!r}")
    annotated = _ensure_joints(trace, oracle)
    if scope == "exploit":
        in_scope = [r for r in annotated.rounds if r.kind == "exploit"]
    else:
        in_scope = list(annotated.rounds)
    joint = float(sum(r.nats_joint for r in in_scope))
    marginal = float(sum(r.nats_marginal for r in in_scope))
    epsilon = abs(joint - marginal)
    rounds_exploit = sum(1 for r in annotated.rounds if r.kind == "exploit")
    measured = rounds_exploit if scope == "exploit" else annotated.total_rounds
    n = annotated.gen_len
    term_entropy, term_budget, bound, applicable = rounds_lower_bound(
        joint, epsilon, n, factor
    )
    margin = measured - bound if applicable else math.nan
    passed = (margin >= -PASS_TOL) if applicable else None
    return BoundReport(
        scope=scope,
        factor=factor,
        n=n,
        total_nats=joint,
        epsilon=epsilon,
        term_entropy=term_entropy,
        term_budget=term_budget,
        bound=bound,
        rounds_exploit=rounds_exploit,
        rounds_total=annotated.total_rounds,
        margin=margin,
        passed=passed,
        applicable=applicable,
    )


@dataclass(frozen=True)
class FrechetReport:
    """Per-exploit-round floor on the joint conditional probability."""

    margins: tuple[float, ...]   # p(A_r | C_r) - (1 - f |A_r| / (1 + |A_r|))
    min_margin: float


def frechet_round_check(
    trace: DecodeTrace, oracle: OracleModel | None, factor: float
) -> FrechetReport:
    """Verify p(A_r | C_r) >= 1 - factor |A_r| / (1 + |A_r|) on exploit rounds."""
    annotated = _ensure_joints(trace, oracle)
    margins = []
    for r in annotated.rounds:
        if r.kind != "exploit" or not r.committed:
            continue
        size = len(r.committed)
        floor = 1.0 - factor * size / (1 + size)
        margins.append(math.exp(-r.nats_joint) - floor)
    return FrechetReport(tuple(margins), min(margins, default=math.inf))


def per_round_cap_check(trace: DecodeTrace, factor: float) -> tuple[float, ...]:
    """Headroom of each exploit round's marginal nats under the per-round cap
    ln((1+|A_r|)/(1+(1-factor)|A_r|)) + epsilon_r. Non-negative when sound."""
    head = []
    for r in trace.rounds:
        if r.kind != "exploit" or not r.committed:
            continue
        if r.epsilon_r is None:
            raise ContractViolation("per-round caps need annotated epsilon_r")
        size = len(r.committed)
        cap = math.log((1 + size) / (1 + (1.0 - factor) * size)) + r.epsilon_r
        head.append(cap - r.nats_marginal)
    return tuple(head)


def sequential_rescore(
    oracle: OracleModel, tokens, prompt_len: int = 0
) -> float:
    """Left-to-right chain surprisal: sum of -ln p(x_i | prompt, x_<i) in nats.

    Equals the exact joint surprisal on exact oracles. Zero-probability
    prefixes surface as math.inf.
    """
    toks = [int(t) for t in tokens]
    if len(toks) != oracle.seq_len:
        raise ContractViolation(f"expected {oracle.seq_len} tokens, got {len(toks)}")
    gen_len = len(toks) - prompt_len
    state = make_initial_state(toks[:prompt_len], gen_len, gen_len,
                               mask_id=oracle.vocabulary.mask_id)
    total = 0.0
    for i in range(prompt_len, len(toks)):
        report = oracle.conditional_marginals(state, [i])
        p = report.prob_of(i, toks[i])
        if p <= 0.0:
            return math.inf
        total += -math.log(p)
        state.commit(i, toks[i])
    return total


@dataclass(frozen=True)
class CategoryShare:
    rounds_pct: float
    nats_pct: float | None
    ratio: float | None       # nats_pct / rounds_pct; None when undefined


@dataclass(frozen=True)
class EfficiencyReport:
    """Exploration vs exploitation shares of rounds and information."""

    exploration: CategoryShare
    exploitation: CategoryShare
    n_traces: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def decompose_efficiency(traces) -> EfficiencyReport:
    """Average per-trace category shares and compute bits-per-round ratios.

    Exploration covers implicit, targeted, and order-random rounds;
    exploitation covers confidence-rule and forced clean-up rounds. A trace
    contributes to information shares only if it carries any information;
    ratios are absent when no trace does.
    """
    traces = list(traces)
    if not traces:
        raise ConfigError("at least one trace is required")
    rounds_shares = {"exploration": [], "exploitation": []}
    nats_shares = {"exploration": [], "exploitation": []}
    for t in traces:
        counts = {"exploration": 0, "exploitation": 0}
        nats = {"exploration": 0.0, "exploitation": 0.0}
        for r in t.rounds:
            cat = "exploration" if r.kind in EXPLORATION_KINDS else "exploitation"
            counts[cat] += 1
            nats[cat] += r.nats_marginal
        total_rounds = counts["exploration"] + counts["exploitation"]
        total_nats = nats["exploration"] + nats["exploitation"]
        if total_rounds > 0:
            for cat in counts:
                rounds_shares[cat].append(100.0 * counts[cat] / total_rounds)
        if total_nats > 0:
            for cat in nats:
                nats_shares[cat].append(100.0 * nats[cat] / total_nats)

    def mean(xs):
        return sum(xs) / len(xs) if xs else None

    shares = {}
    for cat in ("exploration", "exploitation"):
        r_pct = mean(rounds_shares[cat])
        n_pct = mean(nats_shares[cat])
        ratio = (n_pct / r_pct) if (n_pct is not None and r_pct and r_pct > 0) else None
        shares[cat] = CategoryShare(rounds_pct=r_pct, nats_pct=n_pct, ratio=ratio)
    return EfficiencyReport(shares["exploration"], shares["exploitation"], len(traces))
