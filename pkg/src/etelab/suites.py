"""Deterministic desk-scale task families for sweeps and verification.

A suite maps a sample index to a Task: an exact oracle instance, decode
geometry, and a designated target sequence (the exact-match reference). All
randomness flows from the suite seed through stable per-index seeds, so two
runs of the same suite spec always see identical tasks.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Vocabulary, stable_seed
from .errors import ConfigError
from .oracles import (
    MarkovOracle,
    OracleModel,
    TabularJointOracle,
    build_profile_oracle,
    build_template_oracle,
    load_oracle,
)
from .oracles.template import Slot, filler, tied


def _positive(probs: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Floor and renormalize so random tables stay strictly positive."""
    probs = np.clip(probs, floor, None)
    return probs / probs.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class Task:
    oracle: OracleModel
    gen_len: int
    block_len: int
    target: tuple[int, ...]
    prompt: tuple[int, ...] = ()
    name: str = ""


@dataclass(frozen=True)
class TaskSuite:
    name: str
    spec: dict
    factory: Callable[[int], Task] = field(repr=False)

    def task(self, index: int) -> Task:
        return self.factory(index)

    def fingerprint(self) -> str:
        blob = json.dumps(self.spec, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Markov chains: entropy spread via a log-uniform Dirichlet concentration, so
# total information varies widely across samples and regressions get leverage.
# ---------------------------------------------------------------------------

def markov_suite(
    n: int = 128, vocab: int = 16, block_len: int = 32, seed: int = 7
) -> TaskSuite:
    spec = {"kind": "markov", "n": n, "vocab": vocab, "block_len": block_len, "seed": seed}

    def factory(index: int) -> Task:
        rng = np.random.default_rng(stable_seed(seed, "markov", index))
        conc = float(np.exp(rng.uniform(np.log(0.05), np.log(5.0))))
        pi = _positive(rng.dirichlet(np.full(vocab, conc)))
        T = _positive(rng.dirichlet(np.full(vocab, conc), size=vocab))
        oracle = MarkovOracle(pi, T, n)
        return Task(
            oracle=oracle,
            gen_len=n,
            block_len=block_len,
            target=tuple(oracle.map_sequence()),
            name=f"markov{n}v{vocab}-{index}",
        )

    return TaskSuite("markov", spec, factory)


def tabular_suite(seed: int = 11, max_cells: int = 4096) -> TaskSuite:
    spec = {"kind": "tabular", "seed": seed, "max_cells": max_cells}

    def factory(index: int) -> Task:
        rng = np.random.default_rng(stable_seed(seed, "tabular", index))
        while True:
            n = int(rng.integers(3, 7))
            vocab = int(rng.integers(2, 7))
            if vocab ** n <= max_cells:
                break
        conc = float(np.exp(rng.uniform(np.log(0.1), np.log(3.0))))
        flat = _positive(rng.dirichlet(np.full(vocab ** n, conc)))
        oracle = TabularJointOracle(flat.reshape((vocab,) * n), Vocabulary(vocab))
        divisors = [d for d in range(1, n + 1) if n % d == 0]
        block_len = int(rng.choice(divisors))
        return Task(
            oracle=oracle,
            gen_len=n,
            block_len=block_len,
            target=tuple(oracle.map_sequence()),
            name=f"tab{vocab}^{n}-{index}",
        )

    return TaskSuite("tabular", spec, factory)


# ---------------------------------------------------------------------------
# Profile records: a narrow-range field (age) is confidently guessable yet
# uninformative, while the identity field determines everything downstream.
# ---------------------------------------------------------------------------

N_AGES, N_SCHOOLS, N_HOBBIES = 5, 4, 6
AGE0, SCHOOL0, HOBBY0 = 0, N_AGES, N_AGES + N_SCHOOLS
NAME0 = N_AGES + N_SCHOOLS + N_HOBBIES


HEAVY_WEIGHT = 8.0


def _spread_field(rng: np.random.Generator, count: int, n_values: int) -> np.ndarray:
    """Round-robin values in shuffled order, so no value mass can rival the
    heavy record's weight under any conditioning."""
    values = np.array([i % n_values for i in range(count)])
    rng.shuffle(values)
    return values


def profile_suite(seed: int = 13) -> TaskSuite:
    spec = {"kind": "profile", "seed": seed}

    def factory(index: int) -> Task:
        rng = np.random.default_rng(stable_seed(seed, "profile", index))
        n_records = int(rng.integers(12, 25))
        names = NAME0 + rng.permutation(n_records)
        ages = AGE0 + _spread_field(rng, n_records, N_AGES)
        schools = SCHOOL0 + _spread_field(rng, n_records, N_SCHOOLS)
        hobbies = HOBBY0 + _spread_field(rng, n_records, N_HOBBIES)
        weights = np.ones(n_records)
        # one record dominates every field group it belongs to, so greedy
        # decoding (in any schedule) resolves to it once fields start pinning
        weights[0] = HEAVY_WEIGHT
        records = np.stack([names, ages, schools, hobbies], axis=1)
        oracle = build_profile_oracle(records, weights, vocab_size=NAME0 + n_records)
        block_len = int(rng.choice([2, 4]))
        return Task(
            oracle=oracle,
            gen_len=4,
            block_len=block_len,
            target=tuple(oracle.map_sequence()),
            name=f"profile{n_records}-{index}",
        )

    return TaskSuite("profile", spec, factory)


# ---------------------------------------------------------------------------
# Templates: tied slots are individually uncertain but mutually determining;
# fillers around them are near-deterministic. The cascade regime.
# ---------------------------------------------------------------------------

def _confident_filler(rng: np.random.Generator, vocab: int) -> Slot:
    top = int(rng.integers(0, vocab))
    p_top = float(rng.uniform(0.92, 0.98))
    probs = np.full(vocab, (1.0 - p_top) / (vocab - 1))
    probs[top] = p_top
    return filler(probs)


def template_suite(seed: int = 17) -> TaskSuite:
    spec = {"kind": "template", "seed": seed}

    def factory(index: int) -> Task:
        rng = np.random.default_rng(stable_seed(seed, "template", index))
        n_symbols = int(rng.integers(4, 9))
        vocab = max(n_symbols, 8)
        n_tied = int(rng.integers(3, 5))
        block_len = int(rng.choice([6, 8]))
        blocks = int(rng.choice([1, 2]))
        prior = rng.dirichlet(np.full(n_symbols, 8.0))  # mild skew, max well below 0.5
        prior = 0.5 * prior + 0.5 / n_symbols
        symbol_prior = np.zeros(vocab)
        symbol_prior[:n_symbols] = prior / prior.sum()
        slots: list[Slot] = []
        n_fillers_first = block_len - n_tied
        slots.extend(_confident_filler(rng, vocab) for _ in range(n_fillers_first))
        slots.extend(tied() for _ in range(n_tied))
        for _ in range((blocks - 1) * block_len):
            slots.append(_confident_filler(rng, vocab))
        oracle = build_template_oracle(slots, symbol_prior, vocab_size=vocab)
        return Task(
            oracle=oracle,
            gen_len=len(slots),
            block_len=block_len,
            target=tuple(oracle.map_sequence()),
            name=f"template{n_tied}t{blocks}b-{index}",
        )

    return TaskSuite("template", spec, factory)


def bare_template_suite(n_symbols: int = 4, seed: int = 19) -> TaskSuite:
    """Three tied slots, nothing else: the minimal cascade instance."""
    spec = {"kind": "bare_template", "n_symbols": n_symbols, "seed": seed}

    def factory(index: int) -> Task:
        rng = np.random.default_rng(stable_seed(seed, "bare_template", index))
        vocab = max(n_symbols, 4)
        prior = np.zeros(vocab)
        prior[:n_symbols] = 1.0 / n_symbols
        oracle = build_template_oracle([tied(), tied(), tied()], prior, vocab_size=vocab)
        del rng
        return Task(
            oracle=oracle,
            gen_len=3,
            block_len=3,
            target=tuple(oracle.map_sequence()),
            name=f"bare-{index}",
        )

    return TaskSuite("bare_template", spec, factory)


def mixed_bounds_suite(seed: int = 23) -> TaskSuite:
    """Round-robin over all four exact families; sized for bound sweeps."""
    spec = {"kind": "mixed_bounds", "seed": seed}
    markov = _small_markov_suite(seed)
    tabular = tabular_suite(stable_seed(seed, "tab"))
    profile = profile_suite(stable_seed(seed, "prof"))
    template = template_suite(stable_seed(seed, "tmpl"))
    families = [tabular, markov, profile, template]

    def factory(index: int) -> Task:
        fam = families[index % len(families)]
        return fam.task(index // len(families))

    return TaskSuite("mixed_bounds", spec, factory)


def _small_markov_suite(seed: int) -> TaskSuite:
    spec = {"kind": "small_markov", "seed": seed}

    def factory(index: int) -> Task:
        rng = np.random.default_rng(stable_seed(seed, "small_markov", index))
        n = int(rng.choice([16, 24, 32, 48]))
        vocab = int(rng.integers(4, 13))
        conc = float(np.exp(rng.uniform(np.log(0.05), np.log(5.0))))
        pi = _positive(rng.dirichlet(np.full(vocab, conc)))
        T = _positive(rng.dirichlet(np.full(vocab, conc), size=vocab))
        oracle = MarkovOracle(pi, T, n)
        block_len = n // int(rng.choice([2, 4]))
        return Task(
            oracle=oracle,
            gen_len=n,
            block_len=block_len,
            target=tuple(oracle.map_sequence()),
            name=f"smallmarkov{n}v{vocab}-{index}",
        )

    return TaskSuite("small_markov", spec, factory)


def file_suite(path: str, block_len: int | None = None) -> TaskSuite:
    """Single-oracle suite loaded from a JSON oracle definition file."""
    oracle = load_oracle(path)
    if block_len is None:
        block_len = oracle.seq_len
    spec = {"kind": "file", "path": str(path), "block_len": block_len}
    target = tuple(oracle.map_sequence()) if hasattr(oracle, "map_sequence") else ()

    def factory(index: int) -> Task:
        return Task(
            oracle=oracle,
            gen_len=oracle.seq_len,
            block_len=block_len,
            target=target,
            name=f"file-{index}",
        )

    return TaskSuite("file", spec, factory)


def build_suite(spec: dict) -> TaskSuite:
    kind = spec.get("kind")
    args = {k: v for k, v in spec.items() if k not in ("kind", "size")}
    builders = {
        "markov": markov_suite,
        "tabular": tabular_suite,
        "profile": profile_suite,
        "template": template_suite,
        "bare_template": bare_template_suite,
        "mixed_bounds": mixed_bounds_suite,
        "file": file_suite,
    }
    if kind not in builders:
        raise ConfigError(f"unknown suite kind {kind!r}")
    try:
        return builders[kind](**args)
    except TypeError as exc:
        raise ConfigError(f"bad arguments for suite {kind!r}: {exc}") from None
