"""Weighted record-table oracle.

The distribution is a mixture over rows of a structured table (e.g. name /
age / school / hobby tuples): conditionals are weighted empirical conditionals
over the rows matching the observed fields. Low-entropy fields come out
high-confidence yet low-information, which is exactly the regime that makes
confident-first scheduling short-sighted.
"""
from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from ..core import Vocabulary
from ..errors import ConfigError, ZeroProbabilityEvidence
from .base import OracleModel


class ProfileOracle(OracleModel):
    supports_exact_joint = True

    def __init__(
        self,
        records: np.ndarray,
        weights: np.ndarray,
        vocab: Vocabulary,
        layout: Sequence[int] | None = None,
    ):
        records = np.asarray(records, dtype=np.int64)
        if records.ndim != 2 or records.shape[0] < 1:
            raise ConfigError("record table must be a non-empty 2-D array")
        n_fields = records.shape[1]
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (records.shape[0],):
            raise ConfigError("one weight per record required")
        if np.any(weights < 0) or float(weights.sum()) <= 0:
            raise ConfigError("record weights must be non-negative with positive total")
        if layout is None:
            layout = list(range(n_fields))
        layout = [int(p) for p in layout]
        if sorted(layout) != list(range(n_fields)):
            raise ConfigError(f"layout {layout} is not a permutation of the {n_fields} positions")
        if int(records.max()) >= vocab.size or int(records.min()) < 0:
            raise ConfigError("record values outside the vocabulary")
        self.records = records
        self.weights = weights / float(weights.sum())
        self.vocabulary = vocab
        self.seq_len = n_fields
        # layout[field] = position; invert to position -> field
        self._field_of = [0] * n_fields
        for f, p in enumerate(layout):
            self._field_of[p] = f
        self.layout = layout

    def _match(self, pinned: Mapping[int, int]) -> np.ndarray:
        mask = np.ones(self.records.shape[0], dtype=bool)
        for pos, tok in pinned.items():
            mask &= self.records[:, self._field_of[int(pos)]] == int(tok)
        return mask

    def _marginals(
        self, evidence: Mapping[int, int], positions: Sequence[int]
    ) -> np.ndarray:
        mask = self._match(evidence)
        w = self.weights[mask]
        total = float(w.sum())
        if total <= 0.0:
            raise ZeroProbabilityEvidence("no record matches the observed fields")
        rows = self.records[mask]
        out = np.empty((len(positions), self.vocabulary.size), dtype=np.float64)
        for row, q in enumerate(positions):
            counts = np.bincount(
                rows[:, self._field_of[q]], weights=w, minlength=self.vocabulary.size
            )
            out[row] = counts / total
        return out

    def partial_joint_nats(self, assignment: Mapping[int, int]) -> float:
        mass = float(self.weights[self._match(assignment)].sum())
        if mass <= 0.0:
            return math.inf
        return -math.log(mass)

    def map_sequence(self) -> list[int]:
        """Highest-weight record laid out as a token sequence (ties: first row)."""
        row = self.records[int(np.argmax(self.weights))]
        tokens = [0] * self.seq_len
        for f, p in enumerate(self.layout):
            tokens[p] = int(row[f])
        return tokens


def build_profile_oracle(
    records: Sequence[Sequence[int]],
    weights: Sequence[float] | None = None,
    vocab_size: int | None = None,
    layout: Sequence[int] | None = None,
    mask_id: int = -1,
) -> ProfileOracle:
    if len(records) == 0:
        raise ConfigError("record table must be non-empty")
    arr = np.asarray(records, dtype=np.int64)
    if weights is None:
        weights = np.ones(arr.shape[0], dtype=np.float64)
    if vocab_size is None:
        vocab_size = int(arr.max()) + 1
    return ProfileOracle(arr, np.asarray(weights, dtype=np.float64),
                         Vocabulary(max(vocab_size, 2), mask_id), layout)
