"""Explore-Then-Exploit sampling: fast block diffusion with cross-block
exploitation, per-block implicit exploration, an information-poverty trigger,
targeted beam-search exploration, and a bounded clean-up phase.

One scheduler iteration runs a single forward pass over the feasible window
(masked positions of the current and all earlier blocks), commits every
prediction above the exploit threshold, and guarantees progress by committing
the best remaining prediction per active block. When the decoding frontier
looks information-poor, a batched look-ahead pass pins medium-confidence
candidates and commits whichever hypothesis unlocks the largest cascade of
newly confident tokens.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Mapping

from .core import Commit, DecodeState, DecodeTrace, RoundRecord
from .errors import ConfigError, ContractViolation, OracleError
from .oracles.base import MarginalReport, OracleModel

SCORE_FLOOR = 1e-12  # replaces log 0 so hypothesis scores stay totally ordered

Cache = dict[int, tuple[int, float]]  # position -> (argmax token, confidence)


@dataclass(frozen=True)
class EteConfig:
    """Hyperparameters of the explore-then-exploit sampler.

    ``block_budget`` and ``explore_min_masked`` default to half and a quarter
    of the block length; call :meth:`resolve` to pin them for a geometry.
    """

    conf_threshold: float = 0.9        # exploit commits strictly above this
    block_budget: int | None = None    # scheduler steps allotted per block
    cleanup_rounds: int = 8            # extra exploit rounds after the last block
    trigger_conf: float = 0.5          # frontier mean confidence below this fires exploration
    explore_min_masked: int | None = None  # block must have more masks than this to explore
    info_level: float = 0.2            # preferred candidate confidence
    position_bias: float = 0.01        # later in-block positions get a small bonus
    quality_weight: float = 0.5        # weight of the candidate's own confidence in the score
    beam_size: int = 4                 # hypotheses per targeted exploration
    explore_budget: int = 4            # targeted explorations allowed per block

    def __post_init__(self) -> None:
        if not (0.0 < self.conf_threshold < 1.0):
            raise ConfigError("conf_threshold must lie in (0, 1)")
        if not (0.0 <= self.trigger_conf < 1.0):
            raise ConfigError("trigger_conf must lie in [0, 1)")
        if not (0.0 < self.info_level < 1.0):
            raise ConfigError("info_level must lie in (0, 1)")
        if self.position_bias < 0.0:
            raise ConfigError("position_bias must be >= 0")
        if self.quality_weight <= 0.0:
            raise ConfigError("quality_weight must be > 0")
        if self.beam_size < 1:
            raise ConfigError("beam_size must be >= 1")
        if self.cleanup_rounds < 0:
            raise ConfigError("cleanup_rounds must be >= 0")
        if self.explore_budget < 0:
            raise ConfigError("explore_budget must be >= 0")
        if self.block_budget is not None and self.block_budget < 1:
            raise ConfigError("block_budget must be a positive integer")
        if self.explore_min_masked is not None and self.explore_min_masked < 0:
            raise ConfigError("explore_min_masked must be >= 0")

    def resolve(self, block_len: int) -> "EteConfig":
        budget = self.block_budget if self.block_budget is not None else max(1, block_len // 2)
        min_masked = (
            self.explore_min_masked
            if self.explore_min_masked is not None
            else block_len // 4
        )
        return dataclasses.replace(self, block_budget=budget, explore_min_masked=min_masked)

    def describe(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "EteConfig":
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - fields
        if unknown:
            raise ConfigError(f"unknown ete config keys {sorted(unknown)}")
        return cls(**dict(d))


@dataclass
class Hypothesis:
    """One look-ahead branch: a candidate position pinned to its greedy token."""

    position: int
    token: int
    state: DecodeState
    report: MarginalReport | None = None
    score: float = 0.0


def feasible_set(state: DecodeState) -> list[int]:
    """Masked generated positions in the current and all earlier blocks."""
    limit = state.seq.prompt_len + state.active_block * state.seq.block_len
    return sorted(p for p in state.masked_set if p < limit)


def exploit(
    oracle: OracleModel, state: DecodeState, conf_threshold: float
) -> tuple[tuple[Commit, ...], Cache]:
    """One forward pass over the feasible window; commit everything confident.

    Returns the commits and the full prediction cache (argmax token and
    confidence for every feasible position, conditioned on the pre-commit
    state) for reuse by implicit exploration and the trigger.
    """
    feasible = feasible_set(state)
    if not feasible:
        raise ContractViolation("exploit requires a non-empty feasible set")
    report = oracle.conditional_marginals(state, feasible)
    cache: Cache = report.top_map()
    commits = tuple(
        Commit(p, cache[p][0], cache[p][1])
        for p in feasible
        if cache[p][1] > conf_threshold
    )
    for c in commits:
        state.commit(c.position, c.token)
    return commits, cache


def _implicit_block(state: DecodeState, cache: Cache, block: int) -> Commit | None:
    remaining = state.masked_in_block(block)
    if not remaining:
        return None
    for p in remaining:
        if p not in cache:
            raise ContractViolation(
                f"masked position {p} missing from the exploit cache (stale cache?)"
            )
    best = min(remaining, key=lambda p: (-cache[p][1], p))
    token, conf = cache[best]
    state.commit(best, token)
    return Commit(best, token, conf)


def implicit_explore(
    state: DecodeState, cache: Cache, up_to_block: int
) -> tuple[Commit, ...]:
    """Commit the single highest-confidence cached token per unfinished block.

    Reuses the immediately preceding exploit pass; consumes no forward passes.
    Blocks already fully handled by the exploit are skipped.
    """
    commits = []
    for block in range(1, up_to_block + 1):
        c = _implicit_block(state, cache, block)
        if c is not None:
            commits.append(c)
    return tuple(commits)


def frontier_window(state: DecodeState) -> tuple[int, list[int]]:
    """(frontier index, masked frontier positions) of the active block.

    Indices are 1-based relative to the generation window: the frontier ends
    half a block past the last unmasked position, clipped to the active block,
    and the window is every masked position in (block start, frontier].
    """
    seq = state.seq
    b = state.active_block
    nb = seq.block_len
    n0 = seq.prompt_len
    unmasked_rel = [
        i - n0 + 1
        for i in range(n0, seq.total_len)
        if int(seq.tokens[i]) != seq.mask_id
    ]
    last_unmasked = max(unmasked_rel, default=0)
    frontier = min(b * nb, max((b - 1) * nb, last_unmasked) + nb // 2)
    window = sorted(
        p for p in state.masked_set if (b - 1) * nb < (p - n0 + 1) <= frontier
    )
    return frontier, window


def trigger_exploration(
    state: DecodeState, cache: Cache, config: EteConfig, explored: int = 0
) -> bool:
    """Fire targeted exploration when the frontier is information-poor.

    Fires when the mean cached confidence over the frontier window falls below
    the trigger threshold, the block still has more than ``explore_min_masked``
    masks, and the per-block exploration budget is not exhausted.
    """
    if config.explore_min_masked is None or config.block_budget is None:
        raise ConfigError("config must be resolved against the block length first")
    if explored >= config.explore_budget:
        return False
    _, window = frontier_window(state)
    if not window:
        return False
    for p in window:
        if p not in cache:
            raise ContractViolation(f"frontier position {p} missing from the exploit cache")
    mean_conf = sum(cache[p][1] for p in window) / len(window)
    remaining_in_block = len(state.masked_in_block(state.active_block))
    return mean_conf < config.trigger_conf and remaining_in_block > config.explore_min_masked


def explore_candidates(state: DecodeState, cache: Cache, config: EteConfig) -> list[int]:
    """Top-k masked in-block positions nearest the target information level.

    Score: -(|confidence - info_level|) + position_bias * in-block offset,
    so medium-confidence positions win and later positions break near-ties.
    """
    b = state.active_block
    in_block = state.masked_in_block(b)
    if not in_block:
        raise ContractViolation("current block has no masked positions to explore")
    n0 = state.seq.prompt_len
    nb = state.seq.block_len

    def score(p: int) -> float:
        offset = (p - n0 + 1) - (b - 1) * nb
        return -abs(cache[p][1] - config.info_level) + config.position_bias * offset

    ranked = sorted(in_block, key=lambda p: (-score(p), p))
    return ranked[: min(config.beam_size, len(ranked))]


def score_hypothesis(cache: Cache, hypothesis: Hypothesis, config: EteConfig) -> float:
    """quality_weight * ln(candidate confidence) + ln(sum of induced confident mass)."""
    c_j = cache[hypothesis.position][1]
    induced = 0.0
    if hypothesis.report is not None:
        for p in hypothesis.report.positions:
            if p == hypothesis.position:
                continue
            c = hypothesis.report.confidence(p)
            if c >= config.conf_threshold:
                induced += c
    return config.quality_weight * math.log(c_j) + math.log(max(induced, SCORE_FLOOR))


def targeted_explore(
    oracle: OracleModel, state: DecodeState, cache: Cache, config: EteConfig
) -> tuple[Commit, ...]:
    """Beam-search one exploration commit plus its confident cascade.

    Builds hypotheses by pinning each candidate to its cached greedy token,
    scores all of them with ONE batched forward pass, then commits the winning
    candidate and every hypothesis position whose induced confidence clears
    the exploit threshold — reusing the batched pass, no extra inference.
    """
    candidates = explore_candidates(state, cache, config)
    hypotheses = []
    for j in candidates:
        hyp_state = state.copy()
        hyp_state.commit(j, cache[j][0])
        hypotheses.append(Hypothesis(position=j, token=cache[j][0], state=hyp_state))
    query_sets = [feasible_set(h.state) for h in hypotheses]
    reports = oracle.batch_conditional_marginals(
        [h.state for h in hypotheses], query_sets
    )
    for h, rep in zip(hypotheses, reports):
        h.report = rep
        h.score = score_hypothesis(cache, h, config)
    winner = min(hypotheses, key=lambda h: (-h.score, h.position))
    commits = [Commit(winner.position, winner.token, cache[winner.position][1])]
    assert winner.report is not None
    for p in winner.report.positions:
        tok, conf = winner.report.top(p)
        if conf > config.conf_threshold:
            commits.append(Commit(p, tok, conf))
    for c in commits:
        state.commit(c.position, c.token)
    return tuple(commits)


def _pass_kind(exploit_commits: tuple, implicit_commits: tuple) -> str:
    if exploit_commits or not implicit_commits:
        return "exploit"
    return "implicit_explore"


def run_ete(oracle: OracleModel, state: DecodeState, config: EteConfig) -> DecodeTrace:
    """Full explore-then-exploit run over a fresh state."""
    if state.step != 0 or len(state.masked_set) != state.seq.gen_len:
        raise ContractViolation("scheduler requires a fresh, fully masked state")
    cfg = config.resolve(state.seq.block_len)
    batch_limit = getattr(oracle, "batch_limit", None)
    if batch_limit is not None and cfg.beam_size > batch_limit:
        raise ConfigError(
            f"beam_size {cfg.beam_size} exceeds the oracle batch limit {batch_limit}"
        )
    rounds: list[RoundRecord] = []
    blocks = state.seq.block_count

    for b in range(1, blocks + 1):
        state.active_block = b
        explored = 0
        block_start_step = state.step
        while state.step - block_start_step <= cfg.block_budget and state.masked_set:
            if not feasible_set(state):
                break  # budget left but nothing reachable: open the next block
            exploit_commits, cache = exploit(oracle, state, cfg.conf_threshold)
            if trigger_exploration(state, cache, cfg, explored):
                implicit_commits = implicit_explore(state, cache, b - 1)
                first = RoundRecord(
                    _pass_kind(exploit_commits, implicit_commits),
                    exploit_commits + implicit_commits,
                )
                try:
                    targeted_commits = targeted_explore(oracle, state, cache, cfg)
                except OracleError:
                    # batch failed: behave like a plain round, explore the
                    # current block implicitly instead
                    extra = _implicit_block(state, cache, b)
                    all_commits = first.committed + ((extra,) if extra else ())
                    rounds.append(
                        RoundRecord(_pass_kind(exploit_commits, all_commits), all_commits)
                    )
                    state.advance_step(1)
                    continue
                rounds.append(first)
                rounds.append(RoundRecord("targeted_explore", targeted_commits))
                state.advance_step(2)
                explored += 1
            else:
                implicit_commits = implicit_explore(state, cache, b)
                rounds.append(
                    RoundRecord(
                        _pass_kind(exploit_commits, implicit_commits),
                        exploit_commits + implicit_commits,
                    )
                )
                state.advance_step(1)
        if not state.masked_set:
            break

    # clean-up: bounded extra exploit rounds over everything still masked
    state.active_block = blocks
    for _ in range(cfg.cleanup_rounds):
        if not state.masked_set:
            break
        exploit_commits, cache = exploit(oracle, state, cfg.conf_threshold)
        implicit_commits = implicit_explore(state, cache, blocks)
        rounds.append(
            RoundRecord(
                _pass_kind(exploit_commits, implicit_commits),
                exploit_commits + implicit_commits,
            )
        )
        state.advance_step(1)
    if state.masked_set:
        # force-commit every remaining argmax in one final pass
        remaining = sorted(state.masked_set)
        report = oracle.conditional_marginals(state, remaining)
        commits = tuple(Commit(p, *report.top(p)) for p in remaining)
        for c in commits:
            state.commit(c.position, c.token)
        rounds.append(RoundRecord("cleanup", commits))
        state.advance_step(1)

    return DecodeTrace(
        rounds=tuple(rounds),
        final_tokens=tuple(int(t) for t in state.seq.tokens),
        prompt_len=state.seq.prompt_len,
        block_len=state.seq.block_len,
        config={"scheduler": "ete", "ete": cfg.describe(), "seed": state.rng_seed},
        total_steps=state.step,
    )
