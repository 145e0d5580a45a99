# Copyright (c) 2025 Yannis Arapakis
# Licensed under the MIT License. See LICENSE file for details.
"""Unit tests for the coded and uncoded Shuffle phases."""

import random
from dataclasses import replace
from fractions import Fraction

import pytest

from cdcplan.core import JobSpec
from cdcplan.operations import shuffle
from cdcplan.operations.placement import build_parallel, build_sequential
from cdcplan.operations.shuffle import (
    DecodeError,
    MulticastMessage,
    ShufflePlan,
    ValueGroup,
    build_coded_plan,
    build_uncoded_plan,
    decode,
    encode,
    needed_values,
)
from cdcplan.operations.simulator import SyntheticDataset

CASES = 1000


@pytest.fixture(name="fig_layout")
def fixture_fig_layout():
    """Q=3 solvers and two helpers over six files with r=2."""
    return build_sequential(JobSpec(3, 6, 1, 2, 1), 2, 5)


def _all_values(spec: JobSpec, seed: int = 5) -> dict:
    data = SyntheticDataset(seed, spec)
    values = {}
    for n in range(1, spec.n + 1):
        values.update(data.map_file(n))
    return values


def _local(values: dict, placement, server: int) -> dict:
    return {(q, n): v for (q, n), v in values.items() if n in placement.maps(server)}


class TestCodedPlan:
    """Unit tests for building coded multicasts."""

    @staticmethod
    def test_worked_example_messages(fig_layout):
        """Test one multicast per helper to all three solvers."""
        plan = build_coded_plan(fig_layout)
        assert plan.coded
        assert [m.sender for m in plan.messages] == [4, 5]
        first = plan.messages[0]
        assert first.recipients == (1, 2, 3)
        assert [g.solver_set for g in first.xor_of] == [(2, 3), (1, 3), (1, 2)]
        assert [g.files for g in first.xor_of] == [(3,), (2,), (1,)]
        assert plan.predicted_load == Fraction(1, 9)
        assert plan.planned_bits == 2 * 64

    @staticmethod
    def test_parallel_load_matches_envelope():
        """Test the strata loads add up to the envelope value."""
        layout = build_parallel(JobSpec(3, 63, 1, 2, 1), Fraction(10, 7), 6)
        plan = build_coded_plan(layout)
        assert plan.predicted_load == Fraction(5, 21)
        assert {m.stratum for m in plan.messages} == {"plus", "minus"}
        assert plan.planned_bits == plan.predicted_load * 3 * 63 * 64

    @staticmethod
    def test_no_repetition_is_unicast():
        """Test r=0 sends every value once, each to a single solver."""
        layout = build_sequential(JobSpec(2, 2, 1, 1), 0, 4)
        plan = build_coded_plan(layout)
        assert len(plan.messages) == 4
        assert all(len(m.recipients) == 1 for m in plan.messages)
        assert plan.predicted_load == 1

    @staticmethod
    def test_full_repetition_sends_nothing():
        """Test the solver-only layout needs no Shuffle."""
        layout = build_sequential(JobSpec(2, 3, 1, 1), 2, 2)
        plan = build_coded_plan(layout)
        assert plan.messages == ()
        assert plan.predicted_load == 0

    @staticmethod
    def test_layout_without_labels_raises(fig_layout):
        """Test coded shuffling needs batch labels."""
        placement = replace(fig_layout.placement, batch_index=None)
        with pytest.raises(ValueError, match="batch labels"):
            build_coded_plan(replace(fig_layout, placement=placement))

    @staticmethod
    def test_dict_form_is_lossless(fig_layout):
        """Test an encoded plan survives serialization."""
        plan = build_coded_plan(fig_layout)
        encoded = encode(plan, fig_layout.placement, _all_values(fig_layout.spec))
        assert ShufflePlan.from_dict(encoded.to_dict()) == encoded


class TestUncodedPlan:
    """Unit tests for the unicast baseline."""

    @staticmethod
    def test_every_missing_value_is_sent_once(fig_layout):
        """Test two unicasts per solver from the lowest mapper."""
        plan = build_uncoded_plan(fig_layout)
        assert not plan.coded
        assert len(plan.messages) == 6
        assert plan.predicted_load == Fraction(1, 3)
        to_one = [m for m in plan.messages if m.recipients == (1,)]
        assert [(m.sender, m.xor_of[0].files) for m in to_one] == [(2, (3,)), (2, (6,))]


class TestEncodeDecode:
    """Unit tests for encoding and decoding."""

    @staticmethod
    def test_every_solver_recovers_its_values(fig_layout):
        """Test decoding yields exactly the needed values."""
        placement = fig_layout.placement
        values = _all_values(fig_layout.spec)
        encoded = encode(build_coded_plan(fig_layout), placement, values)
        assert encoded.encoded
        for k in placement.solvers:
            recovered = decode(k, encoded, placement, _local(values, placement, k))
            assert set(recovered) == needed_values(fig_layout.spec, placement, k)
            assert all(values[vid] == payload for vid, payload in recovered.items())

    @staticmethod
    def test_needed_values(fig_layout):
        """Test solver 1 needs function 1 on the files it did not map."""
        needed = needed_values(fig_layout.spec, fig_layout.placement, 1)
        assert needed == {(1, 3), (1, 6)}

    @staticmethod
    def test_sender_must_have_mapped_the_files(fig_layout):
        """Test a sender cannot encode values of files it did not map."""
        group = ValueGroup(1, (), 2, (3,))
        plan = ShufflePlan(
            fig_layout.spec, False, (MulticastMessage(1, (2,), (group,)),), Fraction(0)
        )
        with pytest.raises(ValueError, match="did not map file"):
            encode(plan, fig_layout.placement, _all_values(fig_layout.spec))

    @staticmethod
    def test_sender_must_be_a_server(fig_layout):
        """Test a sender id beyond K is rejected before its files are read."""
        group = ValueGroup(7, (), 2, (3,))
        plan = ShufflePlan(
            fig_layout.spec, False, (MulticastMessage(7, (2,), (group,)),), Fraction(0)
        )
        with pytest.raises(ValueError, match="sender 7 is not one of the K servers"):
            encode(plan, fig_layout.placement, _all_values(fig_layout.spec))

    @staticmethod
    def test_group_count_must_match_recipients(fig_layout):
        """Test a message with a recipient but no group for it cannot decode."""
        placement = fig_layout.placement
        values = _all_values(fig_layout.spec)
        encoded = encode(build_coded_plan(fig_layout), placement, values)
        first = encoded.messages[0]
        widened = replace(first, recipients=(*first.recipients, 5))
        broken = replace(encoded, messages=(widened, *encoded.messages[1:]))
        with pytest.raises(DecodeError, match="3 groups for 4 recipients") as e:
            decode(1, broken, placement, _local(values, placement, 1))
        assert e.value.server == 1

    @staticmethod
    def test_wrong_value_length_raises(fig_layout):
        """Test payloads must be T_bits long."""
        values = _all_values(fig_layout.spec)
        values[(3, 1)] = b"\x00"
        with pytest.raises(ValueError, match="expected 8"):
            encode(build_coded_plan(fig_layout), fig_layout.placement, values)

    @staticmethod
    def test_missing_value_raises(fig_layout):
        """Test encoding needs every referenced value."""
        values = _all_values(fig_layout.spec)
        del values[(3, 1)]
        with pytest.raises(ValueError, match="not in the store"):
            encode(build_coded_plan(fig_layout), fig_layout.placement, values)

    @staticmethod
    def test_unencoded_plan_cannot_be_decoded(fig_layout):
        """Test decoding requires payloads."""
        with pytest.raises(DecodeError, match="not encoded") as e:
            decode(1, build_coded_plan(fig_layout), fig_layout.placement, {})
        assert e.value.server == 1

    @staticmethod
    def test_missing_side_information_raises(fig_layout):
        """Test a solver without the cancelling values cannot decode."""
        placement = fig_layout.placement
        values = _all_values(fig_layout.spec)
        encoded = encode(build_coded_plan(fig_layout), placement, values)
        with pytest.raises(DecodeError, match="cannot cancel") as e:
            decode(2, encoded, placement, {})
        assert e.value.server == 2

    @staticmethod
    def test_undelivered_value_raises(fig_layout):
        """Test a plan missing a message leaves a solver short."""
        placement = fig_layout.placement
        values = _all_values(fig_layout.spec)
        encoded = encode(build_coded_plan(fig_layout), placement, values)
        partial = replace(encoded, messages=encoded.messages[:1])
        with pytest.raises(DecodeError, match="did not receive"):
            decode(1, partial, placement, _local(values, placement, 1))

    @staticmethod
    def test_xor_is_an_involution():
        """Test XOR-ing a chunk twice restores the original."""
        rng = random.Random(51)
        for _ in range(CASES):
            size = rng.randint(1, 32)
            a, b, c = (rng.randbytes(size) for _ in range(3))
            assert shuffle._xor([a, b, b]) == a
            assert shuffle._xor([shuffle._xor([a, b, c]), b, c]) == a
