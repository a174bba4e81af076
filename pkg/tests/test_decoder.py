"""Replica placement and iterative cancellation, checked against
hand-worked layouts and exhaustive enumeration."""

from fractions import Fraction

import numpy as np
import pytest

from crdsa.core import DegreeDistribution, RandomStream
from crdsa.decoder import (
    FrameLayout,
    brute_force_plr,
    layout_from_text,
    layout_to_text,
    place_replicas,
    place_replicas_batch,
    sic_decode,
    sic_decode_batch,
)


# --- frozen layouts -------------------------------------------------------
# Worked out by hand; these pin the cancellation semantics.

def test_lone_packet_decodes():
    result = sic_decode(FrameLayout(4, ((1,),)), i_max=10)
    assert result.decoded == {0}
    assert result.lost == set()
    assert result.iterations_used == 1


def test_two_way_collision_lost():
    result = sic_decode(FrameLayout(4, ((2,), (2,))), i_max=10)
    assert result.decoded == set()
    assert result.lost == {0, 1}
    assert result.iterations_used == 0


def test_chain_peels_in_order():
    # packet 0 is clean, cancelling it frees packet 1, then packet 2;
    # packets 3 and 4 pin slots 3-4 so the chain cannot shortcut
    layout = FrameLayout(6, ((0, 1), (1, 2), (2, 3), (3, 4), (3, 4)))
    result = sic_decode(layout, i_max=10)
    assert result.decoded == {0, 1, 2}
    assert result.lost == {3, 4}
    assert result.iterations_used == 3


def test_iteration_budget_cuts_chain():
    layout = FrameLayout(6, ((0, 1), (1, 2), (2, 3), (3, 4), (3, 4)))
    result = sic_decode(layout, i_max=2)
    assert result.decoded == {0, 1}
    assert result.lost == {2, 3, 4}
    assert result.iterations_used == 2


def test_zero_iterations_decodes_nothing():
    result = sic_decode(FrameLayout(4, ((1,),)), i_max=0)
    assert result.decoded == set()
    assert result.lost == {0}
    assert result.iterations_used == 0


def test_stuck_cycle():
    # two packets occupying the same two slots can never be separated
    layout = FrameLayout(4, ((0, 1), (0, 1)))
    result = sic_decode(layout, i_max=50)
    assert result.lost == {0, 1}


def test_parallel_scan_within_iteration():
    # both packets are clean somewhere in iteration 1 -> one iteration total
    layout = FrameLayout(4, ((0, 1), (2, 3)))
    result = sic_decode(layout, i_max=10)
    assert result.decoded == {0, 1}
    assert result.iterations_used == 1


def test_empty_frame():
    result = sic_decode(FrameLayout(4, ()), i_max=10)
    assert result.decoded == set() and result.lost == set()
    assert result.iterations_used == 0


# --- placement ------------------------------------------------------------

def test_placement_slots_distinct_and_in_range():
    rng = RandomStream(3)
    dist = DegreeDistribution.constant(3)
    for _ in range(200):
        layout = place_replicas(5, dist, 10, rng)
        assert layout.n_slots == 10
        for slots in layout.packets:
            assert len(slots) == 3
            assert len(set(slots)) == 3
            assert all(0 <= s < 10 for s in slots)
            assert list(slots) == sorted(slots)


def test_placement_degree_equal_slots():
    rng = RandomStream(4)
    layout = place_replicas(2, DegreeDistribution.constant(4), 4, rng)
    for slots in layout.packets:
        assert slots == (0, 1, 2, 3)


def test_placement_mixed_degrees():
    rng = RandomStream(5)
    dist = DegreeDistribution(((2, 0.5), (3, 0.5)))
    lengths = set()
    for _ in range(100):
        layout = place_replicas(4, dist, 8, rng)
        lengths.update(len(s) for s in layout.packets)
    assert lengths == {2, 3}


def test_placement_batch_matches_single_frame_shape():
    rng = RandomStream(6)
    slots = place_replicas_batch(50, 7, DegreeDistribution.constant(2), 9, rng)
    assert slots.shape == (50, 7, 2)
    assert slots.min() >= 0  # constant degree: no padding
    valid = np.sort(slots, axis=2)
    assert (valid[:, :, 0] != valid[:, :, 1]).all()


def test_placement_padding_for_variable_degrees():
    rng = RandomStream(7)
    dist = DegreeDistribution(((1, 0.5), (3, 0.5)))
    slots = place_replicas_batch(200, 5, dist, 8, rng)
    assert slots.shape == (200, 5, 3)
    counts = (slots >= 0).sum(axis=2)
    assert set(np.unique(counts)) <= {1, 3}
    # padding sits after the real entries
    for f, p in zip(*np.nonzero(counts == 1)):
        assert slots[f, p, 0] >= 0 and (slots[f, p, 1:] == -1).all()


def test_placement_pairs_roughly_uniform():
    # degree 2 out of 4 slots: each of the 6 pairs should get ~1/6
    rng = RandomStream(8)
    slots = place_replicas_batch(30_000, 1, DegreeDistribution.constant(2), 4, rng)
    pairs = np.sort(slots[:, 0, :], axis=1)
    codes = pairs[:, 0] * 4 + pairs[:, 1]
    _, counts = np.unique(codes, return_counts=True)
    assert len(counts) == 6
    freq = counts / counts.sum()
    sigma = np.sqrt((1 / 6) * (5 / 6) / 30_000)
    assert np.abs(freq - 1 / 6).max() < 5 * sigma


# --- batch decoder versus reference ----------------------------------------

def test_batch_decoder_matches_reference():
    rng = RandomStream(12)
    for trial in range(300):
        gen = rng.substream(trial, 0).gen
        n_slots = int(gen.integers(1, 7))
        n = int(gen.integers(0, 7))
        degree = int(gen.integers(1, n_slots + 1))
        i_max = int(gen.integers(0, 5))
        place_rng = rng.substream(trial, 1)
        slots = place_replicas_batch(
            1, n, DegreeDistribution.constant(degree), n_slots, place_rng
        )
        packets = tuple(tuple(sorted(row.tolist())) for row in slots[0])
        expected = sic_decode(FrameLayout(n_slots, packets), i_max)
        lost = sic_decode_batch(slots, n_slots, i_max)
        assert int(lost[0]) == len(expected.lost), (n_slots, n, degree, i_max)


def test_batch_decoder_many_frames_at_once():
    rng = RandomStream(13)
    slots = place_replicas_batch(400, 3, DegreeDistribution.constant(2), 5, rng)
    lost = sic_decode_batch(slots, 5, 10)
    assert lost.shape == (400,)
    singles = []
    for f in range(400):
        packets = tuple(tuple(sorted(row.tolist())) for row in slots[f])
        singles.append(len(sic_decode(FrameLayout(5, packets), 10).lost))
    assert lost.tolist() == singles


# --- exhaustive enumeration -------------------------------------------------

def test_brute_force_frozen_values():
    # 2 packets, 2 replicas each, 3 slots: loss only when both pick the
    # same pair of slots -> 1/3 of the 9 layout combinations... worked out:
    # C(3,2)=3 pairs, collision iff identical pairs, so plr = 3/9 = 1/3.
    assert brute_force_plr(2, 2, 3, 10) == Fraction(1, 3)
    # slotted-aloha flavour: 2 packets, 1 replica, 2 slots -> collide half
    # the time.
    assert brute_force_plr(2, 1, 2, 10) == Fraction(1, 2)
    # 3 packets, 1 replica, 2 slots: some packet always collides; count
    # gives 3/4 expected loss per packet.
    assert brute_force_plr(3, 1, 2, 10) == Fraction(3, 4)
    # 2 packets, 2 replicas, 2 slots: always the same two slots, never
    # separable.
    assert brute_force_plr(2, 2, 2, 10) == Fraction(1)


def test_brute_force_zero_iterations():
    assert brute_force_plr(1, 1, 3, 0) == Fraction(1)


def test_brute_force_search_space_guard():
    with pytest.raises(ValueError):
        brute_force_plr(10, 3, 12, 10)


# --- text form --------------------------------------------------------------

def test_layout_text_round_trip():
    layout = FrameLayout(5, ((0, 2), (1,), (2, 3)))
    text = layout_to_text(layout)
    assert layout_from_text(text, 5) == layout


def test_layout_text_empty():
    layout = FrameLayout(3, ())
    assert layout_from_text(layout_to_text(layout), 3) == layout
