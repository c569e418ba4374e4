"""Explore-then-exploit sampler: feasible window, exploitation, implicit and
targeted exploration, the trigger rule, and full-run behaviour."""
import math

import numpy as np
import pytest

from etelab import (
    DecodeState,
    EteConfig,
    MarkovOracle,
    MaskedSequence,
    SelectionRule,
    TabularJointOracle,
    Vocabulary,
    build_profile_oracle,
    build_template_oracle,
    explore_candidates,
    exploit,
    feasible_set,
    frontier_window,
    implicit_explore,
    make_initial_state,
    run_block_diffusion,
    run_ete,
    score_hypothesis,
    targeted_explore,
    trigger_exploration,
)
from etelab.core import check_partition_law
from etelab.errors import ConfigError, ContractViolation, OracleError
from etelab.ete import Hypothesis
from etelab.oracles.base import MarginalReport
from etelab.oracles.template import filler, tied
from etelab.suites import profile_suite, template_suite


def state_with(tokens, block_len, active_block, prompt_len=0):
    seq = MaskedSequence(np.asarray(tokens), prompt_len=prompt_len, block_len=block_len)
    return DecodeState(seq=seq, active_block=active_block, step=1)


def uniform_markov(n, V=2):
    return MarkovOracle(np.full(V, 1 / V), np.full((V, V), 1 / V), n)


class TestFeasibleSet:
    def test_window_grows_with_active_block(self):
        st = state_with([-1] * 6, block_len=2, active_block=3)
        assert feasible_set(st) == [0, 1, 2, 3, 4, 5]
        st.active_block = 1
        assert feasible_set(st) == [0, 1]

    def test_skips_finished_blocks(self):
        st = state_with([7, 7, -1, -1, -1, -1], block_len=2, active_block=2)
        assert feasible_set(st) == [2, 3]


class TestExploit:
    def test_threshold_and_cache(self):
        o = build_template_oracle(
            [filler([0.95, 0.05, 0.0, 0.0]), tied(), tied()], [0.25] * 4
        )
        st = make_initial_state([], 3, 3)
        commits, cache = exploit(o, st, 0.9)
        assert [c.position for c in commits] == [0]
        assert set(cache) == {0, 1, 2}
        assert cache[1][1] == pytest.approx(0.25)

    def test_commits_nothing_but_keeps_cache(self):
        o = build_template_oracle([tied(), tied()], [0.5, 0.5])
        st = make_initial_state([], 2, 2)
        commits, cache = exploit(o, st, 0.9)
        assert commits == ()
        assert len(cache) == 2

    def test_cross_block_stale_position_commits_with_current_block(self):
        # a later field resolves an earlier one: p(a=0 | b=5) = 0.95 and
        # p(c=10 | b=5) = 1.0, so one pass commits block 1 and block 3 together
        records = [[0, 5, 10]] * 19 + [[1, 5, 10]]
        o = build_profile_oracle(records, vocab_size=11)
        st = state_with([-1, 5, -1], block_len=1, active_block=3)
        commits, _ = exploit(o, st, 0.9)
        assert {c.position for c in commits} == {0, 2}


class TestImplicitExplore:
    def test_one_token_per_unfinished_block(self):
        o = uniform_markov(4)
        st = make_initial_state([], 4, 2)
        st.active_block = 2
        _, cache = exploit(o, st, 0.99)
        commits = implicit_explore(st, cache, 2)
        assert len(commits) == 2
        blocks = st.seq.block_ranges()
        assert sorted(c.position in blocks[0] for c in commits) == [False, True]

    def test_skips_block_handled_by_exploit(self):
        o = build_template_oracle(
            [filler([0.95, 0.05]), filler([0.95, 0.05]), tied(), tied()],
            [0.5, 0.5],
        )
        st = make_initial_state([], 4, 2)
        st.active_block = 2
        commits_x, cache = exploit(o, st, 0.9)
        assert {c.position for c in commits_x} == {0, 1}
        commits = implicit_explore(st, cache, 2)
        assert len(commits) == 1 and commits[0].position in (2, 3)

    def test_up_to_previous_block_leaves_current_untouched(self):
        o = uniform_markov(4)
        st = make_initial_state([], 4, 2)
        st.active_block = 2
        _, cache = exploit(o, st, 0.99)
        commits = implicit_explore(st, cache, 1)
        assert len(commits) == 1
        assert commits[0].position in (0, 1)

    def test_stale_cache_detected(self):
        o = uniform_markov(2)
        st = make_initial_state([], 2, 2)
        _, cache = exploit(o, st, 0.99)
        del cache[1]
        with pytest.raises(ContractViolation):
            implicit_explore(st, cache, 1)


class TestTrigger:
    def test_frontier_formula(self):
        # block 2 of an n=128, block 64 window with relative position 70 the
        # last unmasked: frontier = min(128, max(64, 70) + 32) = 102
        tokens = [0] * 70 + [-1] * 58
        st = state_with(tokens, block_len=64, active_block=2)
        frontier, window = frontier_window(st)
        assert frontier == 102
        assert window == list(range(70, 102))  # absolute = relative-1 here

    def test_fresh_block_frontier_is_half_block(self):
        st = state_with([-1] * 6, block_len=6, active_block=1)
        frontier, window = frontier_window(st)
        assert frontier == 3
        assert window == [0, 1, 2]

    def test_fires_only_when_uncertain_and_unfinished(self):
        cfg = EteConfig(trigger_conf=0.5, explore_min_masked=1,
                        block_budget=3).resolve(6)
        st = state_with([-1] * 6, block_len=6, active_block=1)
        low = {p: (0, 0.2) for p in range(6)}
        high = {p: (0, 0.95) for p in range(6)}
        assert trigger_exploration(st, low, cfg)
        assert not trigger_exploration(st, high, cfg)
        assert not trigger_exploration(st, low, cfg, explored=cfg.explore_budget)

    def test_nearly_done_block_does_not_fire(self):
        cfg = EteConfig(explore_min_masked=2, block_budget=3).resolve(4)
        st = state_with([0, 0, 0, -1], block_len=4, active_block=1)
        cache = {3: (0, 0.1)}
        assert not trigger_exploration(st, cache, cfg)  # 1 mask <= N_e

    def test_empty_window_is_false(self):
        cfg = EteConfig(explore_min_masked=0, block_budget=3).resolve(4)
        # whole frontier already unmasked, later positions still masked
        st = state_with([0, 0, -1, -1], block_len=4, active_block=1)
        _, window = frontier_window(st)
        assert window == [2, 3]  # frontier extends past the unmasked prefix
        st2 = state_with([0, 0, 0, 0], block_len=4, active_block=1)
        assert frontier_window(st2)[1] == []
        assert not trigger_exploration(st2, {}, cfg)

    def test_unresolved_config_rejected(self):
        st = state_with([-1, -1], block_len=2, active_block=1)
        with pytest.raises(ConfigError):
            trigger_exploration(st, {0: (0, 0.1), 1: (0, 0.1)}, EteConfig())


class TestExploreCandidates:
    def test_worked_scores(self):
        # offsets 3, 10, 20 at confidences 0.25, 0.18, 0.05 with info level
        # 0.2 and bias 0.001 score -0.047, -0.010, -0.130
        cfg = EteConfig(info_level=0.2, position_bias=0.001, beam_size=2,
                        block_budget=1, explore_min_masked=0)
        tokens = [0] * 20
        for offset in (3, 10, 20):
            tokens[offset - 1] = -1
        st = state_with(tokens, block_len=20, active_block=1)
        cache = {2: (0, 0.25), 9: (0, 0.18), 19: (0, 0.05)}
        assert explore_candidates(st, cache, cfg) == [9, 2]

    def test_zero_bias_prefers_exact_info_level(self):
        cfg = EteConfig(position_bias=0.0, beam_size=3, block_budget=1,
                        explore_min_masked=0)
        st = state_with([-1, -1, -1], block_len=3, active_block=1)
        cache = {0: (0, 0.5), 1: (0, 0.2), 2: (0, 0.9)}
        assert explore_candidates(st, cache, cfg)[0] == 1

    def test_beam_of_one(self):
        cfg = EteConfig(beam_size=1, block_budget=1, explore_min_masked=0)
        st = state_with([-1, -1], block_len=2, active_block=1)
        cache = {0: (0, 0.2), 1: (0, 0.21)}
        assert len(explore_candidates(st, cache, cfg)) == 1


class TestScoreHypothesis:
    def _hyp(self, position, confs, vocab=8):
        st = state_with([-1] * (max(confs) + 1 if confs else position + 1),
                        block_len=1, active_block=1)
        matrix = np.zeros((len(confs), vocab))
        positions = sorted(confs)
        for row, p in enumerate(positions):
            matrix[row, 0] = confs[p]
            # spread the remainder so confs[p] stays the argmax probability
            matrix[row, 1:] = (1 - confs[p]) / (vocab - 1)
        report = MarginalReport(positions, matrix, norm_tol=1e-6)
        return Hypothesis(position=position, token=0, state=st, report=report)

    def test_worked_arithmetic(self):
        cfg = EteConfig(quality_weight=0.5, conf_threshold=0.9, block_budget=1,
                        explore_min_masked=0)
        # induced sum 2.4 = 0.9 + 0.6 above threshold? no: only >= 0.9 counts
        hyp = self._hyp(0, {1: 0.9, 2: 0.6, 3: 0.95})
        cache = {0: (0, 0.2)}
        got = score_hypothesis(cache, hyp, cfg)
        want = 0.5 * math.log(0.2) + math.log(0.9 + 0.95)
        assert got == pytest.approx(want, abs=1e-12)

    def test_spec_example_value(self):
        cfg = EteConfig(quality_weight=0.5, conf_threshold=0.9, block_budget=1,
                        explore_min_masked=0)
        hyp = self._hyp(0, {1: 0.9, 2: 0.9, 3: 0.6})
        # force an induced sum of exactly 2.4 by three 0.8 entries at C=0.8
        cfg8 = EteConfig(quality_weight=0.5, conf_threshold=0.8, block_budget=1,
                         explore_min_masked=0)
        hyp8 = self._hyp(0, {1: 0.8, 2: 0.8, 3: 0.8})
        cache = {0: (0, 0.2)}
        got = score_hypothesis(cache, hyp8, cfg8)
        assert got == pytest.approx(0.07074978113684971, abs=1e-9)
        del hyp, cfg

    def test_clamp_when_no_cascade(self):
        cfg = EteConfig(quality_weight=0.5, block_budget=1, explore_min_masked=0)
        hyp = self._hyp(0, {1: 0.1})
        cache = {0: (0, 0.2)}
        got = score_hypothesis(cache, hyp, cfg)
        assert got == pytest.approx(0.5 * math.log(0.2) + math.log(1e-12), abs=1e-9)

    def test_quality_breaks_ties(self):
        cfg = EteConfig(quality_weight=0.5, block_budget=1, explore_min_masked=0)
        hyp = self._hyp(0, {1: 0.95})
        weak, strong = {0: (0, 0.1)}, {0: (0, 0.3)}
        assert score_hypothesis(strong, hyp, cfg) > score_hypothesis(weak, hyp, cfg)


class TestTargetedExplore:
    def test_template_cascade_commits_everything(self):
        o = build_template_oracle([tied(), tied(), tied()], [0.25] * 4)
        st = make_initial_state([], 3, 3)
        cfg = EteConfig(beam_size=2).resolve(3)
        _, cache = exploit(o, st, cfg.conf_threshold)
        commits = targeted_explore(o, st, cache, cfg)
        assert len(commits) == 3
        assert not st.masked_set
        # all tied slots carry the same symbol
        assert len({c.token for c in commits}) == 1

    def test_beam_of_one_still_cascades(self):
        o = build_template_oracle([tied(), tied(), tied()], [0.25] * 4)
        st = make_initial_state([], 3, 3)
        cfg = EteConfig(beam_size=1).resolve(3)
        _, cache = exploit(o, st, cfg.conf_threshold)
        assert len(targeted_explore(o, st, cache, cfg)) == 3

    def test_cascade_free_commits_only_winner(self):
        o = build_profile_oracle(
            [[0, 2], [0, 3], [1, 2], [1, 3]], vocab_size=4
        )  # independent fields at confidence 0.5
        st = make_initial_state([], 2, 2)
        cfg = EteConfig(beam_size=2).resolve(2)
        _, cache = exploit(o, st, cfg.conf_threshold)
        commits = targeted_explore(o, st, cache, cfg)
        assert len(commits) == 1

    def test_deterministic_winner(self):
        o = build_template_oracle([tied(), tied(), tied()], [0.25] * 4)
        cfg = EteConfig(beam_size=3).resolve(3)
        outcomes = []
        for _ in range(2):
            st = make_initial_state([], 3, 3)
            _, cache = exploit(o, st, cfg.conf_threshold)
            outcomes.append(targeted_explore(o, st, cache, cfg))
        assert outcomes[0] == outcomes[1]


class FailingBatchOracle:
    """Delegates everything except batched queries, which always fail."""

    def __init__(self, inner):
        self.inner = inner
        self.vocabulary = inner.vocabulary
        self.seq_len = inner.seq_len
        self.supports_exact_joint = inner.supports_exact_joint

    def conditional_marginals(self, state, positions):
        return self.inner.conditional_marginals(state, positions)

    def batch_conditional_marginals(self, states, positions):
        raise OracleError("batch backend down")

    def partial_joint_nats(self, assignment):
        return self.inner.partial_joint_nats(assignment)


class TestRunEte:
    def test_point_mass_is_one_round_per_block(self):
        o = TabularJointOracle.from_entries(4, 4, [([1, 2, 3, 0], 1.0)])
        trace = run_ete(o, make_initial_state([], 4, 2), EteConfig())
        assert trace.total_rounds == 2
        assert all(r.kind == "exploit" for r in trace.rounds)
        check_partition_law(trace)

    def test_zero_trigger_disables_targeted(self):
        o = build_template_oracle([tied(), tied(), tied()], [0.25] * 4)
        trace = run_ete(o, make_initial_state([], 3, 3),
                        EteConfig(trigger_conf=0.0))
        assert all(r.kind != "targeted_explore" for r in trace.rounds)
        check_partition_law(trace)

    def test_degenerates_to_one_token_left_to_right(self):
        # unit blocks, unit budget, zero trigger: vanilla-style scan
        o = uniform_markov(5)
        trace = run_ete(o, make_initial_state([], 5, 1),
                        EteConfig(trigger_conf=0.0, block_budget=1))
        assert trace.total_rounds == 5
        assert [r.committed[0].position for r in trace.rounds] == [0, 1, 2, 3, 4]
        assert all(len(r.committed) == 1 for r in trace.rounds)

    def test_template_block_resolved_by_one_targeted_round(self):
        o = build_template_oracle([tied(), tied(), tied()], [0.25] * 4)
        trace = run_ete(o, make_initial_state([], 3, 3), EteConfig())
        targeted = [r for r in trace.rounds if r.kind == "targeted_explore"]
        assert len(targeted) == 1
        assert len(targeted[0].committed) == 3
        assert targeted[0].forward_passes == 1
        assert trace.total_steps == trace.total_forward_passes

    def test_forward_pass_accounting(self):
        o = build_template_oracle([tied(), tied(), tied()], [0.25] * 4)
        trace = run_ete(o, make_initial_state([], 3, 3), EteConfig(beam_size=3))
        assert trace.total_forward_passes == sum(r.forward_passes for r in trace.rounds)
        assert trace.total_forward_passes == 2  # exploit pass + one batch

    def test_batch_failure_falls_back_to_implicit(self):
        o = FailingBatchOracle(build_template_oracle([tied(), tied(), tied()],
                                                     [0.25] * 4))
        trace = run_ete(o, make_initial_state([], 3, 3), EteConfig())
        assert all(r.kind != "targeted_explore" for r in trace.rounds)
        check_partition_law(trace)

    def test_beam_respects_oracle_batch_limit(self):
        o = build_template_oracle([tied(), tied(), tied()], [0.25] * 4)
        o.batch_limit = 2
        with pytest.raises(ConfigError):
            run_ete(o, make_initial_state([], 3, 3), EteConfig(beam_size=4))

    def test_refined_round_budget(self):
        # every loop iteration commits, so rounds never exceed
        # n + targeted rounds + cleanup budget + 1
        rng = np.random.default_rng(4)
        for _ in range(8):
            n, V = 8, 3
            pi = rng.dirichlet(np.ones(V))
            T = rng.dirichlet(np.ones(V) * 0.3, size=V)
            T = np.clip(T, 1e-12, None)
            T /= T.sum(axis=1, keepdims=True)
            o = MarkovOracle(pi, T, n)
            cfg = EteConfig()
            trace = run_ete(o, make_initial_state([], n, 4), cfg)
            targeted = sum(1 for r in trace.rounds if r.kind == "targeted_explore")
            assert trace.total_rounds <= n + targeted + cfg.cleanup_rounds + 1
            check_partition_law(trace)

    def test_ete_never_slower_than_block_diffusion_on_suites(self):
        # holds instance by instance, not just on average
        for suite, count in ((profile_suite(seed=5), 12), (template_suite(seed=5), 12)):
            for i in range(count):
                task = suite.task(i)
                t_ete = run_ete(task.oracle,
                                make_initial_state([], task.gen_len, task.block_len),
                                EteConfig())
                t_alg1 = run_block_diffusion(
                    task.oracle,
                    make_initial_state([], task.gen_len, task.block_len),
                    SelectionRule.static(0.9),
                )
                check_partition_law(t_ete)
                assert t_ete.total_rounds <= t_alg1.total_rounds
                assert t_ete.total_forward_passes <= t_alg1.total_forward_passes


class TestEteConfig:
    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError):
            EteConfig.from_dict({"conf_threshold": 0.9, "mystery": 1})

    def test_defaults_resolve_from_block_length(self):
        cfg = EteConfig().resolve(64)
        assert cfg.block_budget == 32
        assert cfg.explore_min_masked == 16

    def test_validation(self):
        with pytest.raises(ConfigError):
            EteConfig(conf_threshold=1.5)
        with pytest.raises(ConfigError):
            EteConfig(beam_size=0)
        with pytest.raises(ConfigError):
            EteConfig(quality_weight=0.0)
