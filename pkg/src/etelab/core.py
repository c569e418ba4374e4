"""Core decoding-state types: vocabulary, masked sequences, block geometry,
decode state, and the round-by-round trace that every scheduler emits.

Conventions used throughout the package:

* positions are absolute indices into the full token array, prompt included;
* information is tracked in nats (natural log) — use :func:`nats_to_bits`
  only at the display boundary;
* confidences are probabilities in (0, 1]; a stored confidence of exactly 0
  signals an oracle bug and is rejected.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, ContractViolation

TRACE_SCHEMA = "ete-trace/1"
LN2 = math.log(2.0)

ROUND_KINDS = ("exploit", "implicit_explore", "targeted_explore", "cleanup", "vanilla")

EXPLORATION_KINDS = frozenset({"implicit_explore", "targeted_explore", "vanilla"})
EXPLOITATION_KINDS = frozenset({"exploit", "cleanup"})


def nats_to_bits(nats: float) -> float:
    return nats / LN2


def stable_seed(*parts) -> int:
    """Platform-stable 63-bit seed derived from the given parts.

    Unlike hash(), this never changes across processes or Python versions, so
    (master seed, cell index, sample index) always maps to the same run.
    """
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class Vocabulary:
    """Token alphabet: ``size`` real ids 0..size-1 plus a reserved mask sentinel."""

    size: int
    mask_id: int = -1

    def __post_init__(self) -> None:
        if self.size < 2:
            raise ConfigError(f"vocabulary size must be >= 2, got {self.size}")
        if 0 <= self.mask_id < self.size:
            raise ConfigError(
                f"mask_id {self.mask_id} collides with real token ids [0, {self.size})"
            )

    def contains(self, token: int) -> bool:
        return 0 <= token < self.size


def partition_blocks(gen_len: int, block_len: int, prompt_len: int = 0) -> list[range]:
    """Split the generation window into contiguous equal blocks.

    Returns L = gen_len/block_len half-open absolute ranges covering
    [prompt_len, prompt_len + gen_len).
    """
    if gen_len < 1:
        raise ConfigError(f"generation length must be >= 1, got {gen_len}")
    if block_len < 1 or gen_len % block_len != 0:
        raise ConfigError(
            f"block length {block_len} does not divide generation length {gen_len}"
        )
    return [
        range(prompt_len + start, prompt_len + start + block_len)
        for start in range(0, gen_len, block_len)
    ]


@dataclass
class MaskedSequence:
    """A token array with mask sentinels, a prompt prefix, and a block partition.

    The token buffer is owned by the DecodeState that wraps it; all other
    types in this module are immutable after construction.
    """

    tokens: np.ndarray
    prompt_len: int
    block_len: int
    mask_id: int = -1

    def __post_init__(self) -> None:
        self.tokens = np.asarray(self.tokens, dtype=np.int64)
        if self.tokens.ndim != 1:
            raise ConfigError("token buffer must be one-dimensional")
        if self.prompt_len < 0 or self.prompt_len > len(self.tokens):
            raise ConfigError(f"prompt length {self.prompt_len} out of range")
        if self.gen_len < 1:
            raise ConfigError("empty generation window")
        if self.gen_len % self.block_len != 0:
            raise ConfigError(
                f"block length {self.block_len} does not divide generation length {self.gen_len}"
            )
        if bool(np.any(self.tokens[: self.prompt_len] == self.mask_id)):
            raise ConfigError("prompt positions must not contain the mask sentinel")

    @property
    def gen_len(self) -> int:
        return len(self.tokens) - self.prompt_len

    @property
    def total_len(self) -> int:
        return len(self.tokens)

    @property
    def block_count(self) -> int:
        return self.gen_len // self.block_len

    def block_ranges(self) -> list[range]:
        return partition_blocks(self.gen_len, self.block_len, self.prompt_len)

    def block_of(self, position: int) -> int:
        """1-based block index of an absolute generated position."""
        if not (self.prompt_len <= position < self.total_len):
            raise ContractViolation(f"position {position} outside the generation window")
        return (position - self.prompt_len) // self.block_len + 1

    def is_masked(self, position: int) -> bool:
        return bool(self.tokens[position] == self.mask_id)

    def masked_positions(self) -> list[int]:
        rel = np.nonzero(self.tokens[self.prompt_len :] == self.mask_id)[0]
        return [int(r) + self.prompt_len for r in rel]

    def copy(self) -> "MaskedSequence":
        return MaskedSequence(
            tokens=self.tokens.copy(),
            prompt_len=self.prompt_len,
            block_len=self.block_len,
            mask_id=self.mask_id,
        )


@dataclass
class DecodeState:
    """Mutable working state of one scheduler run. Owned by exactly one run."""

    seq: MaskedSequence
    step: int = 0
    active_block: int = 1
    masked_set: set[int] = field(default_factory=set)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        expected = set(self.seq.masked_positions())
        if not self.masked_set:
            self.masked_set = expected
        elif self.masked_set != expected:
            raise ContractViolation("masked_set disagrees with the token buffer")
        if not (1 <= self.active_block <= self.seq.block_count):
            raise ConfigError(f"active block {self.active_block} out of range")

    def commit(self, position: int, token: int) -> None:
        """Unmask one generated position. Irreversible within a run."""
        if position not in self.masked_set:
            raise ContractViolation(f"position {position} is not masked")
        if token == self.seq.mask_id:
            raise ContractViolation("cannot commit the mask sentinel")
        self.seq.tokens[position] = token
        self.masked_set.discard(position)

    def advance_step(self, by: int = 1) -> None:
        if by < 0:
            raise ContractViolation("step counter is non-decreasing")
        self.step += by

    def masked_in_block(self, block: int) -> list[int]:
        rng = self.seq.block_ranges()[block - 1]
        return [p for p in rng if p in self.masked_set]

    def evidence(self) -> dict[int, int]:
        """All unmasked content (prompt plus committed tokens) as position -> token."""
        toks = self.seq.tokens
        return {
            i: int(toks[i])
            for i in range(self.seq.total_len)
            if toks[i] != self.seq.mask_id
        }

    def copy(self) -> "DecodeState":
        return DecodeState(
            seq=self.seq.copy(),
            step=self.step,
            active_block=self.active_block,
            masked_set=set(self.masked_set),
            rng_seed=self.rng_seed,
        )


def make_initial_state(
    prompt: Sequence[int],
    gen_len: int,
    block_len: int,
    seed: int = 0,
    mask_id: int = -1,
) -> DecodeState:
    """Fresh state: tokens = prompt ++ [mask]*gen_len, step 0, block 1."""
    prompt = list(int(t) for t in prompt)
    if any(t == mask_id for t in prompt):
        raise ConfigError("prompt tokens must be real (non-mask) ids")
    tokens = np.concatenate(
        [np.asarray(prompt, dtype=np.int64), np.full(gen_len, mask_id, dtype=np.int64)]
    ) if prompt else np.full(gen_len, mask_id, dtype=np.int64)
    seq = MaskedSequence(tokens=tokens, prompt_len=len(prompt), block_len=block_len, mask_id=mask_id)
    return DecodeState(seq=seq, step=0, active_block=1, rng_seed=int(seed))


class Commit(NamedTuple):
    position: int
    token: int
    confidence: float


@dataclass(frozen=True)
class RoundRecord:
    """One decoding round: what was committed, at what confidence, at what cost.

    ``nats_joint`` is the exact -ln of the round's joint conditional given all
    previously unmasked content; it is filled in post-run for oracles that
    support exact joints, and stays None otherwise.
    """

    kind: str
    committed: tuple[Commit, ...]
    forward_passes: int = 1
    nats_joint: float | None = None
    epsilon_r: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ROUND_KINDS:
            raise ConfigError(f"unknown round kind {self.kind!r}")
        if self.forward_passes < 1:
            raise ConfigError("a round consumes at least one forward pass")
        seen: set[int] = set()
        for c in self.committed:
            if c.position in seen:
                raise ContractViolation(f"position {c.position} committed twice in one round")
            seen.add(c.position)
            if not (0.0 < c.confidence <= 1.0):
                raise ContractViolation(
                    f"confidence {c.confidence} at position {c.position} outside (0, 1]"
                )

    @property
    def nats_marginal(self) -> float:
        return float(sum(-math.log(c.confidence) for c in self.committed))

    def positions(self) -> tuple[int, ...]:
        return tuple(c.position for c in self.committed)


@dataclass(frozen=True)
class DecodeTrace:
    """Completed record of one scheduler run."""

    rounds: tuple[RoundRecord, ...]
    final_tokens: tuple[int, ...]
    prompt_len: int
    block_len: int
    config: dict
    total_steps: int

    @property
    def gen_len(self) -> int:
        return len(self.final_tokens) - self.prompt_len

    @property
    def total_rounds(self) -> int:
        return len(self.rounds)

    @property
    def total_forward_passes(self) -> int:
        return sum(r.forward_passes for r in self.rounds)

    def committed_positions(self) -> list[int]:
        out: list[int] = []
        for r in self.rounds:
            out.extend(r.positions())
        return out

    def generated_tokens(self) -> tuple[int, ...]:
        return self.final_tokens[self.prompt_len :]

    def with_rounds(self, rounds: Iterable[RoundRecord]) -> "DecodeTrace":
        return dataclasses.replace(self, rounds=tuple(rounds))

    def to_jsonl(self) -> str:
        """Canonical newline-delimited serialization (schema ete-trace/1)."""
        header = {
            "schema": TRACE_SCHEMA,
            "prompt_len": self.prompt_len,
            "gen_len": self.gen_len,
            "block_len": self.block_len,
            "total_rounds": self.total_rounds,
            "total_forward_passes": self.total_forward_passes,
            "total_steps": self.total_steps,
            "final_tokens": list(self.final_tokens),
            "config": self.config,
        }
        lines = [json.dumps(header, sort_keys=True)]
        for idx, r in enumerate(self.rounds):
            lines.append(
                json.dumps(
                    {
                        "round": idx,
                        "kind": r.kind,
                        "committed": [[c.position, c.token, c.confidence] for c in r.committed],
                        "forward_passes": r.forward_passes,
                        "nats_marginal": r.nats_marginal,
                        "nats_joint": r.nats_joint,
                        "epsilon_r": r.epsilon_r,
                    },
                    sort_keys=True,
                )
            )
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_jsonl(text: str) -> "DecodeTrace":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = json.loads(lines[0])
        if header.get("schema") != TRACE_SCHEMA:
            raise ConfigError(f"unsupported trace schema {header.get('schema')!r}")
        rounds = []
        for ln in lines[1:]:
            d = json.loads(ln)
            rounds.append(
                RoundRecord(
                    kind=d["kind"],
                    committed=tuple(Commit(int(p), int(t), float(c)) for p, t, c in d["committed"]),
                    forward_passes=int(d["forward_passes"]),
                    nats_joint=d.get("nats_joint"),
                    epsilon_r=d.get("epsilon_r"),
                )
            )
        return DecodeTrace(
            rounds=tuple(rounds),
            final_tokens=tuple(int(t) for t in header["final_tokens"]),
            prompt_len=int(header["prompt_len"]),
            block_len=int(header["block_len"]),
            config=header.get("config", {}),
            total_steps=int(header["total_steps"]),
        )


def check_partition_law(trace: DecodeTrace) -> None:
    """Committed sets must form an ordered partition of the generated window."""
    committed = trace.committed_positions()
    if len(committed) != len(set(committed)):
        raise ContractViolation("a position was committed in more than one round")
    expected = set(range(trace.prompt_len, trace.prompt_len + trace.gen_len))
    if set(committed) != expected:
        missing = sorted(expected - set(committed))
        raise ContractViolation(f"trace does not cover the generation window, missing {missing}")
