"""Oracle abstraction: a probability model answering conditional-marginal
queries over partially masked sequences, plus exact-joint capabilities for
the desk-scale oracles used to verify information accounting.

Exact oracles implement two primitives:

* ``_marginals(evidence, positions)`` — exact conditionals given pinned content;
* ``partial_joint_nats(assignment)`` — -ln of the unconditional probability
  that the named positions take the named values (others marginalized out).

Everything else (conditional joints, full-sequence surprisal, batching) is
derived here, so the chain rule holds by construction.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..core import DecodeState, Vocabulary
from ..errors import (
    ContractViolation,
    OracleError,
    UnsupportedCapability,
    ZeroProbabilityEvidence,
)

EXACT_NORM_TOL = 1e-9


class MarginalReport:
    """Per-position conditional distributions returned by one oracle query.

    Backed by one (positions x vocab) matrix so shape/normalization checks and
    greedy argmaxes are vectorized over the whole query.
    """

    def __init__(
        self,
        positions: Sequence[int],
        matrix: np.ndarray,
        norm_tol: float = EXACT_NORM_TOL,
    ) -> None:
        self._positions = tuple(int(p) for p in positions)
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(self._positions):
            raise OracleError(
                f"marginal matrix shape {matrix.shape} does not cover "
                f"{len(self._positions)} positions"
            )
        if matrix.size:
            if bool(np.any(matrix < -norm_tol)):
                raise OracleError("negative probability in a returned marginal")
            sums = matrix.sum(axis=1)
            off = float(np.abs(sums - 1.0).max())
            if off > norm_tol:
                worst = self._positions[int(np.abs(sums - 1.0).argmax())]
                raise OracleError(
                    f"marginal at position {worst} sums to 1{off:+.3e}, "
                    f"outside tolerance {norm_tol}"
                )
        self._matrix = matrix
        self._row = {p: i for i, p in enumerate(self._positions)}
        self.vocab_size = matrix.shape[1] if matrix.ndim == 2 else 0

    @classmethod
    def from_dict(
        cls,
        dists: Mapping[int, np.ndarray],
        vocab_size: int,
        norm_tol: float = EXACT_NORM_TOL,
    ) -> "MarginalReport":
        positions = sorted(int(p) for p in dists)
        if positions:
            matrix = np.stack([np.asarray(dists[p], dtype=np.float64) for p in positions])
        else:
            matrix = np.zeros((0, vocab_size))
        if matrix.shape[1:] != (vocab_size,):
            raise OracleError(
                f"marginals have vocab dimension {matrix.shape[1:]}, expected {vocab_size}"
            )
        return cls(positions, matrix, norm_tol)

    @property
    def positions(self) -> tuple[int, ...]:
        return self._positions

    def probs(self, position: int) -> np.ndarray:
        return self._matrix[self._row[position]]

    def top(self, position: int) -> tuple[int, float]:
        """Greedy prediction: (argmax token, its probability). Ties -> lowest id."""
        row = self._matrix[self._row[position]]
        tok = int(np.argmax(row))
        return tok, float(row[tok])

    def top_map(self) -> dict[int, tuple[int, float]]:
        """Greedy predictions for every queried position in one shot."""
        if not self._positions:
            return {}
        tokens = np.argmax(self._matrix, axis=1)
        confs = self._matrix[np.arange(len(self._positions)), tokens]
        return {
            p: (int(t), float(c))
            for p, t, c in zip(self._positions, tokens, confs)
        }

    def confidence(self, position: int) -> float:
        return self.top(position)[1]

    def prob_of(self, position: int, token: int) -> float:
        return float(self._matrix[self._row[position], token])

    def __contains__(self, position: int) -> bool:
        return position in self._row

    def __len__(self) -> int:
        return len(self._positions)


class OracleModel(ABC):
    """Abstract conditional-marginal model over fixed-length token sequences."""

    vocabulary: Vocabulary
    seq_len: int
    supports_exact_joint: bool = False

    def _check_query(self, state: DecodeState, positions: Sequence[int]) -> list[int]:
        if state.seq.total_len != self.seq_len:
            raise ContractViolation(
                f"state length {state.seq.total_len} != oracle length {self.seq_len}"
            )
        pos = sorted(int(p) for p in positions)
        for p in pos:
            if p not in state.masked_set:
                raise ContractViolation(f"queried position {p} is not masked")
        return pos

    def conditional_marginals(
        self, state: DecodeState, positions: Iterable[int]
    ) -> MarginalReport:
        """Exact p(token at i | unmasked content of state) for each queried i."""
        pos = self._check_query(state, list(positions))
        matrix = self._marginals(state.evidence(), pos)
        return MarginalReport(pos, matrix)

    def batch_conditional_marginals(
        self, states: Sequence[DecodeState], positions: Sequence[Iterable[int]]
    ) -> list[MarginalReport]:
        """Elementwise identical to independent single calls; costs one round."""
        if len(states) == 0:
            raise ContractViolation("empty batch")
        if len(states) != len(positions):
            raise ContractViolation("one position set per state required")
        return [self.conditional_marginals(s, p) for s, p in zip(states, positions)]

    @abstractmethod
    def _marginals(
        self, evidence: Mapping[int, int], positions: Sequence[int]
    ) -> np.ndarray:
        """Exact conditionals given pinned positions, one matrix row per
        queried position (in the given order)."""

    # exact-joint capabilities -------------------------------------------------

    def partial_joint_nats(self, assignment: Mapping[int, int]) -> float:
        """-ln P(positions take these values), other positions marginalized.

        Returns math.inf for zero-probability assignments (infinite surprisal,
        never silently clamped).
        """
        raise UnsupportedCapability(f"{type(self).__name__} has no exact joint")

    def joint_logprob(self, tokens: Sequence[int]) -> float:
        """-ln p(x) of a fully unmasked sequence, in nats."""
        if not self.supports_exact_joint:
            raise UnsupportedCapability(f"{type(self).__name__} has no exact joint")
        toks = [int(t) for t in tokens]
        if len(toks) != self.seq_len:
            raise ContractViolation(f"expected {self.seq_len} tokens, got {len(toks)}")
        if any(t == self.vocabulary.mask_id for t in toks):
            raise ContractViolation("sequence must be fully unmasked")
        return self.partial_joint_nats({i: t for i, t in enumerate(toks)})

    def conditional_joint_logprob(
        self, state: DecodeState, assignment: Mapping[int, int]
    ) -> float:
        """-ln p(assignment | unmasked content of state), in nats."""
        if not self.supports_exact_joint:
            raise UnsupportedCapability(f"{type(self).__name__} has no exact joint")
        if not assignment:
            return 0.0
        self._check_query(state, list(assignment))
        evidence = state.evidence()
        nats_evidence = self.partial_joint_nats(evidence)
        if math.isinf(nats_evidence):
            raise ZeroProbabilityEvidence("conditioning evidence has zero probability")
        merged = dict(evidence)
        merged.update({int(p): int(t) for p, t in assignment.items()})
        nats_joint = self.partial_joint_nats(merged)
        if math.isinf(nats_joint):
            return math.inf
        return nats_joint - nats_evidence
