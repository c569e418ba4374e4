import numpy as np
import pytest

from etelab import (
    Commit,
    DecodeTrace,
    MaskedSequence,
    RoundRecord,
    Vocabulary,
    make_initial_state,
    nats_to_bits,
    partition_blocks,
)
from etelab.core import check_partition_law, stable_seed
from etelab.errors import ConfigError, ContractViolation


class TestVocabulary:
    def test_basic(self):
        v = Vocabulary(4)
        assert v.mask_id == -1
        assert v.contains(0) and v.contains(3) and not v.contains(4)

    def test_size_floor(self):
        with pytest.raises(ConfigError):
            Vocabulary(1)

    def test_mask_collision(self):
        with pytest.raises(ConfigError):
            Vocabulary(4, mask_id=2)
        # sentinel above the range is fine
        assert Vocabulary(4, mask_id=4).mask_id == 4


class TestPartitionBlocks:
    def test_two_blocks_with_prompt(self):
        assert partition_blocks(6, 3, 2) == [range(2, 5), range(5, 8)]

    def test_single_block_identity(self):
        assert partition_blocks(4, 4, 0) == [range(0, 4)]

    def test_long_window_closed_form(self):
        ranges = partition_blocks(512, 64, 10)
        assert len(ranges) == 8
        assert [r.start for r in ranges] == [10 + 64 * b for b in range(8)]
        assert all(len(r) == 64 for r in ranges)

    def test_non_divisible_names_both_values(self):
        with pytest.raises(ConfigError) as exc:
            partition_blocks(10, 3, 0)
        assert "3" in str(exc.value) and "10" in str(exc.value)


class TestInitialState:
    def test_prompt_then_masks(self):
        st = make_initial_state([3, 1], 3, 3)
        assert st.seq.tokens.tolist() == [3, 1, -1, -1, -1]
        assert st.step == 0 and st.active_block == 1
        assert st.masked_set == {2, 3, 4}

    def test_empty_prompt(self):
        st = make_initial_state([], 2, 2)
        assert st.seq.tokens.tolist() == [-1, -1]

    def test_block_geometry(self):
        st = make_initial_state([0], 4, 2)
        assert st.masked_set == {1, 2, 3, 4}
        assert st.seq.block_count == 2

    def test_empty_window_rejected(self):
        with pytest.raises(ConfigError):
            make_initial_state([1], 0, 1)

    def test_mask_in_prompt_rejected(self):
        with pytest.raises(ConfigError):
            make_initial_state([-1], 3, 3)


class TestDecodeState:
    def test_commit_is_irreversible(self):
        st = make_initial_state([], 2, 2)
        st.commit(0, 5)
        assert st.masked_set == {1}
        with pytest.raises(ContractViolation):
            st.commit(0, 6)

    def test_cannot_commit_mask(self):
        st = make_initial_state([], 2, 2)
        with pytest.raises(ContractViolation):
            st.commit(0, -1)

    def test_step_monotone(self):
        st = make_initial_state([], 2, 2)
        with pytest.raises(ContractViolation):
            st.advance_step(-1)

    def test_masked_set_consistency_enforced(self):
        seq = MaskedSequence(np.array([1, -1]), prompt_len=0, block_len=2)
        with pytest.raises(ContractViolation):
            from etelab import DecodeState

            DecodeState(seq=seq, masked_set={0, 1})

    def test_copy_is_independent(self):
        st = make_initial_state([7], 2, 2)
        cp = st.copy()
        cp.commit(1, 3)
        assert st.seq.is_masked(1) and not cp.seq.is_masked(1)


class TestRoundRecord:
    def test_rejects_duplicates(self):
        with pytest.raises(ContractViolation):
            RoundRecord("exploit", (Commit(1, 0, 0.5), Commit(1, 2, 0.5)))

    def test_rejects_zero_confidence(self):
        with pytest.raises(ContractViolation):
            RoundRecord("exploit", (Commit(1, 0, 0.0),))

    def test_rejects_unknown_kind(self):
        with pytest.raises(ConfigError):
            RoundRecord("mystery", ())

    def test_rejects_free_rounds(self):
        with pytest.raises(ConfigError):
            RoundRecord("exploit", (), forward_passes=0)

    def test_marginal_nats(self):
        r = RoundRecord("exploit", (Commit(0, 1, 0.5), Commit(1, 1, 0.5)))
        assert r.nats_marginal == pytest.approx(2 * np.log(2), abs=1e-12)
        assert RoundRecord("exploit", ()).nats_marginal == 0.0


def _toy_trace() -> DecodeTrace:
    rounds = (
        RoundRecord("implicit_explore", (Commit(1, 4, 0.25),)),
        RoundRecord("exploit", (Commit(2, 4, 1.0), Commit(3, 4, 1.0))),
    )
    return DecodeTrace(
        rounds=rounds,
        final_tokens=(9, 4, 4, 4),
        prompt_len=1,
        block_len=3,
        config={"scheduler": "alg1", "seed": 0},
        total_steps=2,
    )


class TestTraceSerialization:
    def test_round_trip_is_byte_stable(self):
        trace = _toy_trace()
        text = trace.to_jsonl()
        again = DecodeTrace.from_jsonl(text)
        assert again.to_jsonl() == text
        assert again.total_rounds == 2
        assert again.total_forward_passes == 2
        assert again.generated_tokens() == (4, 4, 4)

    def test_schema_tag_present_and_checked(self):
        text = _toy_trace().to_jsonl()
        assert '"schema": "ete-trace/1"' in text.splitlines()[0]
        with pytest.raises(ConfigError):
            DecodeTrace.from_jsonl(text.replace("ete-trace/1", "ete-trace/0"))

    def test_partition_law(self):
        check_partition_law(_toy_trace())
        bad = _toy_trace().with_rounds([_toy_trace().rounds[0]])
        with pytest.raises(ContractViolation):
            check_partition_law(bad)


class TestStableSeed:
    def test_deterministic_and_distinct(self):
        assert stable_seed(1, 2, 3) == stable_seed(1, 2, 3)
        assert stable_seed(1, 2, 3) != stable_seed(1, 2, 4)
        assert 0 <= stable_seed("x") < 2**63


def test_nats_to_bits():
    assert nats_to_bits(np.log(2)) == pytest.approx(1.0, abs=1e-12)
