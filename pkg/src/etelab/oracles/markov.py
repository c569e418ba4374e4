"""First-order Markov chain oracle with exact conditional inference.

Conditionals treat pinned positions as hard evidence. Because the chain is
first-order, the forward/backward messages between a query and its nearest
pinned neighbours collapse to cached transition-matrix powers:

    p(x_q | pins) ∝ T^(q-j1)[v1, :] * T^(j2-q)[:, v2]

for bracketing pins (j1, v1), (j2, v2), with the unconditional position
marginal pi T^q standing in for a missing side. Partial-assignment surprisals
accumulate in log space, so long or near-deterministic chains cannot
underflow. This is the scalable exact oracle behind long-sequence sweeps.
"""
from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from ..core import Vocabulary
from ..errors import ConfigError, ZeroProbabilityEvidence
from .base import MarginalReport, OracleModel


class MarkovOracle(OracleModel):
    supports_exact_joint = True

    def __init__(self, pi: np.ndarray, T: np.ndarray, n: int, mask_id: int = -1):
        pi = np.asarray(pi, dtype=np.float64)
        T = np.asarray(T, dtype=np.float64)
        V = pi.shape[0]
        if T.shape != (V, V):
            raise ConfigError(f"transition matrix shape {T.shape} != ({V}, {V})")
        if n < 1:
            raise ConfigError("chain length must be >= 1")
        if np.any(pi < 0) or np.any(T < 0):
            raise ConfigError("negative probabilities in chain parameters")
        if abs(float(pi.sum()) - 1.0) > 1e-9:
            raise ConfigError("initial distribution does not sum to 1 within 1e-9")
        rowsums = T.sum(axis=1)
        if np.any(np.abs(rowsums - 1.0) > 1e-9):
            raise ConfigError("a transition row does not sum to 1 within 1e-9")
        self.pi = pi
        self.T = T
        self.vocabulary = Vocabulary(V, mask_id)
        self.seq_len = n
        self._powers: np.ndarray | None = None       # T^k for k = 0..n-1
        self._pos_marginals: np.ndarray | None = None  # pi T^q for q = 0..n-1

    def _tables(self) -> tuple[np.ndarray, np.ndarray]:
        if self._powers is None:
            n, V = self.seq_len, self.vocabulary.size
            powers = np.empty((n, V, V), dtype=np.float64)
            powers[0] = np.eye(V)
            for k in range(1, n):
                powers[k] = powers[k - 1] @ self.T
            margs = np.empty((n, V), dtype=np.float64)
            margs[0] = self.pi
            for q in range(1, n):
                margs[q] = margs[q - 1] @ self.T
            self._powers = powers
            self._pos_marginals = margs
        return self._powers, self._pos_marginals

    def _sorted_pins(self, pinned: Mapping[int, int]) -> tuple[np.ndarray, np.ndarray]:
        if not pinned:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        pos = np.sort(np.fromiter((int(p) for p in pinned), dtype=np.int64))
        if pos[0] < 0 or pos[-1] >= self.seq_len:
            raise ConfigError("pinned position outside the chain")
        tok = np.fromiter((int(pinned[int(p)]) for p in pos), dtype=np.int64)
        if tok.min() < 0 or tok.max() >= self.vocabulary.size:
            raise ConfigError("pinned token outside the vocabulary")
        return pos, tok

    def _marginals(
        self, evidence: Mapping[int, int], positions: Sequence[int]
    ) -> np.ndarray:
        P, M = self._tables()
        pin_pos, pin_tok = self._sorted_pins(evidence)
        if pin_pos.size and math.isinf(self._pins_nats(pin_pos, pin_tok)):
            raise ZeroProbabilityEvidence("evidence has zero probability under the chain")
        V = self.vocabulary.size
        out = np.empty((len(positions), V), dtype=np.float64)
        for row, q in enumerate(positions):
            idx = int(np.searchsorted(pin_pos, q))
            left = idx - 1
            if left >= 0:
                w = P[q - int(pin_pos[left]), int(pin_tok[left]), :].copy()
            else:
                w = M[q].copy()
            if idx < pin_pos.size:
                w *= P[int(pin_pos[idx]) - q, :, int(pin_tok[idx])]
            total = float(w.sum())
            if total <= 0.0:
                raise ZeroProbabilityEvidence(
                    "evidence has zero probability under the chain"
                )
            out[row] = w / total
        return out

    def _pins_nats(self, pin_pos: np.ndarray, pin_tok: np.ndarray) -> float:
        """-ln P(the pinned positions take the pinned values)."""
        P, M = self._tables()
        first = M[int(pin_pos[0]), int(pin_tok[0])]
        if first <= 0.0:
            return math.inf
        if pin_pos.size == 1:
            return -math.log(first)
        gaps = np.diff(pin_pos)
        factors = P[gaps, pin_tok[:-1], pin_tok[1:]]
        if bool(np.any(factors <= 0.0)):
            return math.inf
        return -(math.log(first) + float(np.log(factors).sum()))

    def partial_joint_nats(self, assignment: Mapping[int, int]) -> float:
        if not assignment:
            return 0.0
        pin_pos, pin_tok = self._sorted_pins(assignment)
        return self._pins_nats(pin_pos, pin_tok)

    def map_sequence(self) -> list[int]:
        """Most probable full sequence via Viterbi (ties: lowest token id)."""
        with np.errstate(divide="ignore"):
            logpi = np.log(self.pi)
            logT = np.log(self.T)
        delta = logpi.copy()
        back = []
        for _ in range(1, self.seq_len):
            scores = delta[:, None] + logT
            back.append(np.argmax(scores, axis=0))
            delta = scores.max(axis=0)
        path = [int(np.argmax(delta))]
        for bk in reversed(back):
            path.append(int(bk[path[-1]]))
        return path[::-1]


def markov_conditionals(
    oracle: MarkovOracle, pinned: Mapping[int, int], queries: Sequence[int]
) -> MarginalReport:
    """Exact p(x_q | pinned) for each queried position of a Markov chain.

    Pinned and queried positions must be disjoint. Matches brute-force
    enumeration of the joint on instances small enough to enumerate.
    """
    overlap = set(int(q) for q in queries) & set(int(p) for p in pinned)
    if overlap:
        raise ConfigError(f"positions {sorted(overlap)} both pinned and queried")
    qs = [int(q) for q in queries]
    return MarginalReport(qs, oracle._marginals(pinned, qs))
