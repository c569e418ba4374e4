"""Reference decoders: the vanilla any-order one-token sampler and
confidence-based block-diffusion decoding with the three selection rules
(fixed-k, static threshold, dynamic threshold) plus the implicit-exploration
fallback that keeps every round making progress.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    Commit,
    DecodeState,
    DecodeTrace,
    RoundRecord,
    make_initial_state,
)
from .errors import ConfigError, ContractViolation
from .oracles.base import MarginalReport, OracleModel

Candidates = dict[int, tuple[int, float]]  # position -> (argmax token, confidence)


def select_fixed_k(confidences: Candidates, k: int) -> list[int]:
    """Top-k positions by confidence; ties broken by lower position index."""
    if not confidences:
        raise ContractViolation("candidate map is empty")
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    ranked = sorted(confidences, key=lambda p: (-confidences[p][1], p))
    return ranked[: min(k, len(ranked))]


def select_static_threshold(confidences: Candidates, threshold: float) -> list[int]:
    """All positions with confidence strictly above the threshold. May be empty."""
    return sorted(p for p, (_, c) in confidences.items() if c > threshold)


def select_dynamic_threshold(confidences: Candidates, factor: float) -> list[int]:
    """Largest k with (k+1) * (1 - c_(k)) < factor over descending confidences.

    (k+1)(1 - c_(k)) is non-decreasing in k, so the admissible set is a prefix.
    k may be 0, in which case the commit set is empty. Values within 1e-12 of
    the factor count as equal (not less), so round-decimal boundaries behave
    the way they read.
    """
    if not confidences:
        raise ContractViolation("candidate map is empty")
    ranked = sorted(confidences, key=lambda p: (-confidences[p][1], p))
    k = 0
    for i, pos in enumerate(ranked, start=1):
        if (i + 1) * (1.0 - confidences[pos][1]) < factor - 1e-12:
            k = i
        else:
            break
    return ranked[:k]


@dataclass(frozen=True)
class SelectionRule:
    """Commit-set selection for one decoding round of the block decoder."""

    variant: str  # "fixed_k" | "static_threshold" | "dynamic_threshold"
    k: int | None = None
    threshold: float | None = None
    factor: float | None = None

    def __post_init__(self) -> None:
        if self.variant == "fixed_k":
            if self.k is None or self.k < 1:
                raise ConfigError("fixed_k rule needs k >= 1")
        elif self.variant == "static_threshold":
            if self.threshold is None or not (0.0 < self.threshold < 1.0):
                raise ConfigError("static threshold must lie in (0, 1)")
        elif self.variant == "dynamic_threshold":
            if self.factor is None or not (0.0 < self.factor <= 1.2):
                raise ConfigError("dynamic factor must lie in (0, 1.2]")
        else:
            raise ConfigError(f"unknown selection rule {self.variant!r}")

    @classmethod
    def fixed_k(cls, k: int) -> "SelectionRule":
        return cls("fixed_k", k=k)

    @classmethod
    def static(cls, threshold: float) -> "SelectionRule":
        return cls("static_threshold", threshold=threshold)

    @classmethod
    def dynamic(cls, factor: float) -> "SelectionRule":
        return cls("dynamic_threshold", factor=factor)

    def select(self, confidences: Candidates) -> list[int]:
        if self.variant == "fixed_k":
            return select_fixed_k(confidences, self.k)
        if self.variant == "static_threshold":
            return select_static_threshold(confidences, self.threshold)
        return select_dynamic_threshold(confidences, self.factor)

    def describe(self) -> dict:
        out: dict = {"variant": self.variant}
        if self.k is not None:
            out["k"] = self.k
        if self.threshold is not None:
            out["threshold"] = self.threshold
        if self.factor is not None:
            out["factor"] = self.factor
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionRule":
        known = {"variant", "k", "threshold", "factor"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown selection-rule keys {sorted(unknown)}")
        return cls(d["variant"], k=d.get("k"), threshold=d.get("threshold"),
                   factor=d.get("factor"))


def greedy_candidates(report: MarginalReport, positions: list[int]) -> Candidates:
    top = report.top_map()
    return {p: top[p] for p in positions}


def _require_fresh(state: DecodeState) -> None:
    if state.step != 0 or len(state.masked_set) != state.seq.gen_len:
        raise ContractViolation("scheduler requires a fresh, fully masked state")


def vanilla_any_order_run(
    oracle: OracleModel, state: DecodeState, mode: str = "greedy"
) -> DecodeTrace:
    """One token per round in a uniformly random order drawn from the state seed."""
    if mode not in ("greedy", "sample"):
        raise ConfigError(f"unknown decode mode {mode!r}")
    _require_fresh(state)
    rng = np.random.default_rng(state.rng_seed)
    positions = list(range(state.seq.prompt_len, state.seq.total_len))
    order = [positions[i] for i in rng.permutation(len(positions))]
    rounds: list[RoundRecord] = []
    for pos in order:
        report = oracle.conditional_marginals(state, [pos])
        if mode == "greedy":
            token, conf = report.top(pos)
        else:
            probs = report.probs(pos)
            token = int(rng.choice(len(probs), p=probs / probs.sum()))
            conf = float(probs[token])
        state.commit(pos, token)
        state.advance_step()
        rounds.append(RoundRecord("vanilla", (Commit(pos, token, conf),)))
    return DecodeTrace(
        rounds=tuple(rounds),
        final_tokens=tuple(int(t) for t in state.seq.tokens),
        prompt_len=state.seq.prompt_len,
        block_len=state.seq.block_len,
        config={"scheduler": "vanilla", "mode": mode, "seed": state.rng_seed},
        total_steps=state.step,
    )


def run_block_diffusion(
    oracle: OracleModel, state: DecodeState, rule: SelectionRule
) -> DecodeTrace:
    """Confidence-based parallel decoding over left-to-right blocks.

    Per round: greedy predictions over the masked positions of the current
    block, commit per the selection rule; when the rule selects nothing, the
    single highest-confidence token is committed anyway and the round is
    tagged implicit_explore. Block b+1 opens only once block b is fully
    unmasked.
    """
    _require_fresh(state)
    rounds: list[RoundRecord] = []
    for block in range(1, state.seq.block_count + 1):
        state.active_block = block
        while True:
            in_block = state.masked_in_block(block)
            if not in_block:
                break
            report = oracle.conditional_marginals(state, in_block)
            cands = greedy_candidates(report, in_block)
            chosen = rule.select(cands)
            if chosen:
                kind = "exploit"
            else:
                # decoding would stall: unmask the top-confidence token anyway
                best = min(cands, key=lambda p: (-cands[p][1], p))
                chosen = [best]
                kind = "implicit_explore"
            commits = tuple(Commit(p, cands[p][0], cands[p][1]) for p in sorted(chosen))
            for c in commits:
                state.commit(c.position, c.token)
            state.advance_step()
            rounds.append(RoundRecord(kind, commits))
    return DecodeTrace(
        rounds=tuple(rounds),
        final_tokens=tuple(int(t) for t in state.seq.tokens),
        prompt_len=state.seq.prompt_len,
        block_len=state.seq.block_len,
        config={"scheduler": "alg1", "rule": rule.describe(), "seed": state.rng_seed},
        total_steps=state.step,
    )
