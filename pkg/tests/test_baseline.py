"""Vanilla sampler, selection rules, and the block-diffusion decoder."""
import math

import numpy as np
import pytest

from etelab import (
    MarkovOracle,
    SelectionRule,
    TabularJointOracle,
    Vocabulary,
    build_template_oracle,
    make_initial_state,
    run_block_diffusion,
    select_dynamic_threshold,
    select_fixed_k,
    select_static_threshold,
    vanilla_any_order_run,
)
from etelab.core import check_partition_law
from etelab.errors import ConfigError, ContractViolation
from etelab.infotool import replay_states
from etelab.oracles.template import tied


def cands(pairs):
    """position -> (token 0, confidence) shorthand."""
    return {p: (0, c) for p, c in pairs.items()}


class TestFixedK:
    def test_top2(self):
        assert select_fixed_k(cands({1: 0.9, 2: 0.8, 3: 0.7}), 2) == [1, 2]

    def test_saturation(self):
        assert select_fixed_k(cands({1: 0.9, 2: 0.8}), 5) == [1, 2]

    def test_tie_prefers_lower_position(self):
        assert select_fixed_k(cands({4: 0.5, 2: 0.5}), 1) == [2]

    def test_empty_rejected(self):
        with pytest.raises(ContractViolation):
            select_fixed_k({}, 1)


class TestStaticThreshold:
    def test_strictly_above(self):
        got = select_static_threshold(cands({1: 0.95, 2: 0.85, 3: 0.91}), 0.9)
        assert got == [1, 3]

    def test_all_below_is_empty(self):
        assert select_static_threshold(cands({1: 0.5}), 0.9) == []

    def test_boundary_excluded(self):
        assert select_static_threshold(cands({1: 0.9}), 0.9) == []


class TestDynamicThreshold:
    def test_worked_example(self):
        # sorted confidences [0.99, 0.97, 0.90, 0.50], factor 0.4:
        # k=1: 2*0.01 ok; k=2: 3*0.03 ok; k=3: 4*0.10 = 0.40 not < 0.4
        conf = cands({0: 0.99, 1: 0.97, 2: 0.90, 3: 0.50})
        assert select_dynamic_threshold(conf, 0.4) == [0, 1]

    def test_single_candidate(self):
        assert select_dynamic_threshold(cands({5: 0.9}), 0.4) == [5]

    def test_can_select_nothing(self):
        # every confidence at most 1 - factor/2 fails the first check
        assert select_dynamic_threshold(cands({0: 0.8, 1: 0.7}), 0.4) == []

    def test_rule_objects_validate(self):
        with pytest.raises(ConfigError):
            SelectionRule.fixed_k(0)
        with pytest.raises(ConfigError):
            SelectionRule.static(1.0)
        with pytest.raises(ConfigError):
            SelectionRule.dynamic(1.3)
        with pytest.raises(ConfigError):
            SelectionRule.from_dict({"variant": "fixed_k", "k": 2, "bogus": 1})


def point_mass_oracle(tokens, vocab=4):
    n = len(tokens)
    return TabularJointOracle.from_entries(vocab, n, [(tokens, 1.0)])


class TestVanilla:
    def test_single_position(self):
        o = point_mass_oracle([2])
        trace = vanilla_any_order_run(o, make_initial_state([], 1, 1, seed=3))
        assert trace.total_rounds == 1
        assert all(r.kind == "vanilla" for r in trace.rounds)

    def test_one_token_per_round_in_permuted_order(self):
        o = MarkovOracle([0.5, 0.5], np.full((2, 2), 0.5), 5)
        trace = vanilla_any_order_run(o, make_initial_state([], 5, 5, seed=11))
        assert trace.total_rounds == 5
        committed = trace.committed_positions()
        assert sorted(committed) == [0, 1, 2, 3, 4]
        check_partition_law(trace)

    def test_point_mass_recovers_support_any_seed(self):
        o = point_mass_oracle([1, 3, 0, 2])
        for seed in range(5):
            st = make_initial_state([], 4, 4, seed=seed)
            trace = vanilla_any_order_run(o, st)
            assert trace.generated_tokens() == (1, 3, 0, 2)

    def test_replay_determinism(self):
        o = MarkovOracle([0.5, 0.5], np.full((2, 2), 0.5), 4)
        runs = [
            vanilla_any_order_run(o, make_initial_state([], 4, 2, seed=42), mode="sample")
            for _ in range(2)
        ]
        assert runs[0].to_jsonl() == runs[1].to_jsonl()
        other = vanilla_any_order_run(o, make_initial_state([], 4, 2, seed=43), mode="sample")
        assert other.to_jsonl() != runs[0].to_jsonl()

    def test_requires_fresh_state(self):
        o = point_mass_oracle([1, 1])
        st = make_initial_state([], 2, 2)
        st.commit(0, 1)
        with pytest.raises(ContractViolation):
            vanilla_any_order_run(o, st)


class TestBlockDiffusion:
    def test_point_mass_one_round_per_block(self):
        o = point_mass_oracle([1, 2, 3, 0])
        trace = run_block_diffusion(o, make_initial_state([], 4, 2),
                                    SelectionRule.static(0.5))
        assert trace.total_rounds == 2
        assert all(r.kind == "exploit" for r in trace.rounds)

    def test_template_implicit_then_cascade(self):
        o = build_template_oracle([tied(), tied(), tied()], [0.25] * 4)
        trace = run_block_diffusion(o, make_initial_state([], 3, 3),
                                    SelectionRule.static(0.9))
        assert [r.kind for r in trace.rounds] == ["implicit_explore", "exploit"]
        assert [len(r.committed) for r in trace.rounds] == [1, 2]

    def test_saturated_fixed_k_single_round(self):
        o = point_mass_oracle([0, 1, 2])
        trace = run_block_diffusion(o, make_initial_state([], 3, 3),
                                    SelectionRule.fixed_k(3))
        assert trace.total_rounds == 1

    def test_block_discipline_and_progress(self):
        # every round commits >= 1 token, and only inside the lowest block
        # that still has masks (blocks strictly left to right)
        rng = np.random.default_rng(0)
        for trial in range(10):
            n, V = 6, 3
            flat = np.clip(rng.dirichlet(np.ones(V**n) * 0.5), 1e-12, None)
            flat /= flat.sum()
            o = TabularJointOracle(flat.reshape((V,) * n), Vocabulary(V))
            st = make_initial_state([], n, 2)
            blocks = st.seq.block_ranges()
            trace = run_block_diffusion(o, st, SelectionRule.dynamic(0.6))
            check_partition_law(trace)
            assert trace.total_rounds <= n
            for state, rnd in replay_states(trace):
                assert len(rnd.committed) >= 1
                lowest = next(
                    b for b in range(len(blocks))
                    if any(p in state.masked_set for p in blocks[b])
                )
                for c in rnd.committed:
                    assert c.position in blocks[lowest]

    def test_dynamic_rule_soundness(self):
        rng = np.random.default_rng(1)
        for trial in range(10):
            n, V, f = 4, 4, float(rng.choice([0.4, 0.6, 0.8, 1.0]))
            flat = np.clip(rng.dirichlet(np.ones(V**n) * 0.7), 1e-12, None)
            flat /= flat.sum()
            o = TabularJointOracle(flat.reshape((V,) * n), Vocabulary(V))
            trace = run_block_diffusion(o, make_initial_state([], n, 2),
                                        SelectionRule.dynamic(f))
            for r in trace.rounds:
                if r.kind != "exploit":
                    continue
                size = len(r.committed)
                for c in r.committed:
                    assert (1 + size) * (1 - c.confidence) <= f + 1e-12

    def test_parallel_equals_sequential_greedy(self):
        # confidence rule satisfied => parallel commits match any sequential
        # greedy order (checked by replay on the exact joint)
        rng = np.random.default_rng(2)
        for trial in range(30):
            n, V = 4, 3
            flat = np.clip(rng.dirichlet(np.ones(V**n) * 0.3), 1e-12, None)
            flat /= flat.sum()
            o = TabularJointOracle(flat.reshape((V,) * n), Vocabulary(V))
            f = float(rng.choice([0.4, 0.7, 1.0]))
            trace = run_block_diffusion(o, make_initial_state([], n, n),
                                        SelectionRule.dynamic(f))
            for state, rnd in replay_states(trace):
                if rnd.kind != "exploit" or len(rnd.committed) < 2:
                    continue
                order = list(rng.permutation(len(rnd.committed)))
                replay = state.copy()
                for idx in order:
                    c = rnd.committed[idx]
                    rep = o.conditional_marginals(replay, [c.position])
                    tok, _ = rep.top(c.position)
                    assert tok == c.token
                    replay.commit(c.position, tok)
