"""Explicit joint-table oracle for small sequence spaces.

The whole joint lives in memory as a dense |V|^n array, so every conditional
is computed by slicing and summing — the exactness vehicle for verifying the
round-count accounting at desk scale.
"""
from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from ..core import Vocabulary
from ..errors import ConfigError, ZeroProbabilityEvidence
from .base import OracleModel

# n * ln|V| <= 24 * ln 2, i.e. at most ~16M states.
ENUMERATION_BUDGET_NATS = 24 * math.log(2.0)


class TabularJointOracle(OracleModel):
    supports_exact_joint = True

    def __init__(self, joint: np.ndarray, vocab: Vocabulary):
        joint = np.asarray(joint, dtype=np.float64)
        n = joint.ndim
        if any(dim != vocab.size for dim in joint.shape):
            raise ConfigError(
                f"joint table shape {joint.shape} inconsistent with vocab size {vocab.size}"
            )
        if n * math.log(vocab.size) > ENUMERATION_BUDGET_NATS + 1e-12:
            raise ConfigError(
                f"table over {vocab.size}^{n} states exceeds the enumeration budget"
            )
        if np.any(joint < 0):
            raise ConfigError("joint table has negative entries")
        total = float(joint.sum())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"joint table sums to {total}, not 1 within 1e-9")
        self.joint = joint
        self.vocabulary = vocab
        self.seq_len = n
        self.all_positive = bool(np.all(joint > 0))

    @classmethod
    def from_entries(
        cls,
        vocab_size: int,
        n: int,
        entries: Sequence[tuple[Sequence[int], float]],
        mask_id: int = -1,
        normalize: bool = False,
    ) -> "TabularJointOracle":
        vocab = Vocabulary(vocab_size, mask_id)
        if n * math.log(vocab_size) > ENUMERATION_BUDGET_NATS + 1e-12:
            raise ConfigError(
                f"table over {vocab_size}^{n} states exceeds the enumeration budget"
            )
        table = np.zeros((vocab_size,) * n, dtype=np.float64)
        for tokens, prob in entries:
            if len(tokens) != n:
                raise ConfigError(f"entry {tokens} must name {n} tokens")
            table[tuple(int(t) for t in tokens)] += float(prob)
        if normalize:
            total = table.sum()
            if total <= 0:
                raise ConfigError("entries carry no probability mass")
            table /= total
        return cls(table, vocab)

    @classmethod
    def uniform_support(
        cls, vocab_size: int, support: Sequence[Sequence[int]], mask_id: int = -1
    ) -> "TabularJointOracle":
        n = len(support[0])
        entries = [(tokens, 1.0) for tokens in support]
        return cls.from_entries(vocab_size, n, entries, mask_id=mask_id, normalize=True)

    def _slice(self, pinned: Mapping[int, int]) -> np.ndarray:
        index = tuple(
            int(pinned[i]) if i in pinned else slice(None) for i in range(self.seq_len)
        )
        return self.joint[index]

    def _marginals(
        self, evidence: Mapping[int, int], positions: Sequence[int]
    ) -> np.ndarray:
        sub = self._slice(evidence)
        free = [i for i in range(self.seq_len) if i not in evidence]
        norm = float(sub.sum())
        if norm <= 0.0:
            raise ZeroProbabilityEvidence("evidence has zero probability in the joint table")
        out = np.empty((len(positions), self.vocabulary.size), dtype=np.float64)
        for row, q in enumerate(positions):
            axis = free.index(q)
            other = tuple(a for a in range(sub.ndim) if a != axis)
            out[row] = sub.sum(axis=other) / norm
        return out

    def partial_joint_nats(self, assignment: Mapping[int, int]) -> float:
        mass = float(self._slice(assignment).sum())
        if mass <= 0.0:
            return math.inf
        return -math.log(mass)

    def map_sequence(self) -> list[int]:
        """Most probable full sequence (ties: lowest flat index)."""
        idx = np.unravel_index(int(np.argmax(self.joint)), self.joint.shape)
        return [int(i) for i in idx]
