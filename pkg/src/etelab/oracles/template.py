"""Tied-slot template oracle.

A template mixes three slot kinds: fixed tokens, independent filler slots with
their own distributions, and a group of tied slots that all copy one latent
symbol drawn from a prior. Each unobserved tied slot is individually
low-confidence, but observing any one of them forces the rest — the canonical
cascade that rewards exploring uncertain positions first.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..core import Vocabulary
from ..errors import ConfigError, ZeroProbabilityEvidence
from .base import OracleModel


@dataclass(frozen=True)
class Slot:
    kind: str  # "fixed" | "tied" | "filler"
    token: int | None = None
    probs: tuple[float, ...] | None = None


def fixed(token: int) -> Slot:
    return Slot("fixed", token=int(token))


def tied() -> Slot:
    return Slot("tied")


def filler(probs: Sequence[float]) -> Slot:
    return Slot("filler", probs=tuple(float(p) for p in probs))


class TemplateOracle(OracleModel):
    supports_exact_joint = True

    def __init__(self, slots: Sequence[Slot], symbol_prior: np.ndarray, vocab: Vocabulary):
        prior = np.asarray(symbol_prior, dtype=np.float64)
        if prior.shape != (vocab.size,):
            raise ConfigError("symbol prior must cover the whole vocabulary")
        if np.any(prior < 0) or abs(float(prior.sum()) - 1.0) > 1e-9:
            raise ConfigError("symbol prior must be a distribution (sum 1 within 1e-9)")
        if sum(1 for s in slots if s.kind == "tied") and float(prior.max()) <= 0:
            raise ConfigError("symbol prior carries no mass")
        self.slots = list(slots)
        self.symbol_prior = prior
        self.vocabulary = vocab
        self.seq_len = len(self.slots)
        self.tied_positions = [i for i, s in enumerate(self.slots) if s.kind == "tied"]
        self._filler_dists: dict[int, np.ndarray] = {}
        for i, s in enumerate(self.slots):
            if s.kind == "filler":
                d = np.asarray(s.probs, dtype=np.float64)
                if d.shape != (vocab.size,) or np.any(d < 0) or abs(float(d.sum()) - 1.0) > 1e-9:
                    raise ConfigError(f"filler distribution at slot {i} is not normalized")
                self._filler_dists[i] = d
            elif s.kind == "fixed":
                if s.token is None or not vocab.contains(s.token):
                    raise ConfigError(f"fixed slot {i} needs a real token id")
            elif s.kind != "tied":
                raise ConfigError(f"unknown slot kind {s.kind!r}")

    def _observed_symbol(self, pinned: Mapping[int, int]) -> int | None:
        symbol: int | None = None
        for p in self.tied_positions:
            if p in pinned:
                v = int(pinned[p])
                if symbol is None:
                    symbol = v
                elif symbol != v:
                    raise ZeroProbabilityEvidence("tied slots observed with different symbols")
        if symbol is not None and self.symbol_prior[symbol] <= 0.0:
            raise ZeroProbabilityEvidence("observed symbol has zero prior probability")
        return symbol

    def _marginals(
        self, evidence: Mapping[int, int], positions: Sequence[int]
    ) -> np.ndarray:
        symbol = self._observed_symbol(evidence)
        V = self.vocabulary.size
        out = np.zeros((len(positions), V), dtype=np.float64)
        for row, q in enumerate(positions):
            slot = self.slots[q]
            if slot.kind == "fixed":
                out[row, slot.token] = 1.0
            elif slot.kind == "filler":
                out[row] = self._filler_dists[q]
            elif symbol is not None:
                out[row, symbol] = 1.0
            else:
                out[row] = self.symbol_prior
        return out

    def partial_joint_nats(self, assignment: Mapping[int, int]) -> float:
        try:
            symbol = self._observed_symbol(assignment)
        except ZeroProbabilityEvidence:
            return math.inf
        nats = 0.0
        if symbol is not None:
            nats -= math.log(float(self.symbol_prior[symbol]))
        for pos, tok in assignment.items():
            slot = self.slots[int(pos)]
            if slot.kind == "fixed":
                if int(tok) != slot.token:
                    return math.inf
            elif slot.kind == "filler":
                p = float(self._filler_dists[int(pos)][int(tok)])
                if p <= 0.0:
                    return math.inf
                nats -= math.log(p)
        return nats

    def map_sequence(self) -> list[int]:
        """Template instantiation at the argmax symbol and argmax fillers."""
        symbol = int(np.argmax(self.symbol_prior))
        out = []
        for i, s in enumerate(self.slots):
            if s.kind == "fixed":
                out.append(int(s.token))
            elif s.kind == "filler":
                out.append(int(np.argmax(self._filler_dists[i])))
            else:
                out.append(symbol)
        return out


def build_template_oracle(
    slots: Sequence[Slot],
    symbol_prior: Sequence[float],
    vocab_size: int | None = None,
    mask_id: int = -1,
) -> TemplateOracle:
    if len(slots) == 0:
        raise ConfigError("template must have at least one slot")
    prior = np.asarray(symbol_prior, dtype=np.float64)
    if vocab_size is None:
        vocab_size = prior.shape[0]
    if prior.shape[0] != vocab_size:
        raise ConfigError("symbol prior length must equal the vocabulary size")
    if float(prior.sum()) <= 0:
        raise ConfigError("symbol prior must carry probability mass")
    prior = prior / prior.sum()
    return TemplateOracle(slots, prior, Vocabulary(max(vocab_size, 2), mask_id))
