"""Checkpoint backends for the marginal server.

A checkpoint answers batched conditional-marginal queries over partially
masked token arrays (mask = -1 on the wire). Inference must be deterministic:
identical inputs always produce identical marginals, so client-side replay
holds.

The stub checkpoint derives each marginal from a cryptographic hash of the
(unmasked) content and the queried position; it needs no weights and is the
fixture backend for protocol-conformance testing. Real model backends
register themselves under their own identifier prefix.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ServerConfig:
    model: str = "stub:8"
    device: str = "cpu"
    max_batch: int = 8
    port: int = 8191
    max_seq_len: int = 4096

    def __post_init__(self) -> None:
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        if self.max_seq_len < 1:
            raise ValueError("max_seq_len must be >= 1")


class StubCheckpoint:
    """Deterministic hash-seeded marginals; no model weights involved."""

    def __init__(self, vocab_size: int, tag: str = "stub"):
        if vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        self.vocab_size = vocab_size
        self.tag = tag

    def _marginal(self, tokens: tuple[int, ...], position: int) -> np.ndarray:
        key = f"{self.tag}:{self.vocab_size}:{','.join(map(str, tokens))}:{position}"
        seed = int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big")
        logits = np.random.default_rng(seed).normal(size=self.vocab_size)
        exp = np.exp(logits - logits.max())
        return exp / exp.sum()

    def forward(
        self,
        batch_tokens: list[list[int]],
        prompt_len: int,
        batch_positions: list[list[int]],
    ) -> list[list[np.ndarray]]:
        """One batched pass: per variant, one marginal per queried position."""
        del prompt_len  # marginals depend only on the token content
        out = []
        for tokens, positions in zip(batch_tokens, batch_positions):
            key = tuple(int(t) for t in tokens)
            out.append([self._marginal(key, int(p)) for p in positions])
        return out


def load_checkpoint(identifier: str):
    """Resolve a model identifier to a checkpoint backend.

    "stub:<vocab>" or "stub:<vocab>:<tag>" loads the deterministic stub.
    """
    parts = identifier.split(":")
    if parts[0] == "stub":
        if len(parts) < 2:
            raise ValueError("stub identifier must name a vocab size, e.g. stub:8")
        vocab = int(parts[1])
        tag = parts[2] if len(parts) > 2 else "stub"
        return StubCheckpoint(vocab, tag)
    raise ValueError(f"unknown model identifier {identifier!r}")
