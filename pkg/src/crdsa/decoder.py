"""Replica placement and iterative interference-cancellation decoding.

Two implementations of the same decoder live here on purpose: `sic_decode`
is a plain-Python reference working on one frame, `sic_decode_batch` is the
vectorized version used by the Monte-Carlo and simulation hot paths.  They
are held equivalent by tests; `brute_force_plr` additionally provides an
exact enumeration oracle for small frames.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import DegreeDistribution, RandomStream, sample_degrees


@dataclass(frozen=True)
class FrameLayout:
    """Replica placement of one frame: per packet, the set of slots it occupies."""

    n_slots: int
    packets: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class DecodeResult:
    decoded: frozenset[int]
    lost: frozenset[int]
    iterations_used: int


def place_replicas_batch(
    n_frames: int,
    n_packets: int,
    dist: DegreeDistribution,
    n_slots: int,
    rng: RandomStream,
) -> np.ndarray:
    """Place replicas for a batch of frames.

    Returns an (n_frames, n_packets, max_degree) int32 array of slot indices,
    padded with -1 past each packet's sampled degree.  Every packet's slots
    are a uniform sample without replacement; packets are independent.
    """
    l_max = dist.max_degree
    if l_max > n_slots:
        raise ValueError(f"max degree {l_max} exceeds n_slots {n_slots}")
    if n_packets == 0:
        return np.empty((n_frames, 0, l_max), dtype=np.int32)
    gen = rng.gen
    chosen = np.empty((n_frames, n_packets, l_max), dtype=np.int32)
    # Floyd's sampling: k-th round draws from [0, n_slots-l_max+k], mapping
    # collisions with earlier picks to the newly admitted slot index.  Fixed
    # draw count per packet, uniform over distinct slot subsets.
    for k in range(l_max):
        j = n_slots - l_max + k
        pick = gen.integers(0, j + 1, size=(n_frames, n_packets), dtype=np.int32)
        if k:
            clash = (chosen[:, :, :k] == pick[:, :, None]).any(axis=2)
            pick = np.where(clash, j, pick)
        chosen[:, :, k] = pick
    if len(dist.entries) > 1:
        degrees = sample_degrees(dist, rng, n_frames * n_packets)
        degrees = degrees.reshape(n_frames, n_packets)
        pad = np.arange(l_max, dtype=np.int64)[None, None, :] >= degrees[:, :, None]
        chosen[pad] = -1
    return chosen


def place_replicas(
    n_packets: int,
    dist: DegreeDistribution,
    n_slots: int,
    rng: RandomStream,
) -> FrameLayout:
    """Place replicas for a single frame, as explicit slot tuples."""
    rows = place_replicas_batch(1, n_packets, dist, n_slots, rng)[0]
    packets = tuple(tuple(sorted(int(s) for s in row if s >= 0)) for row in rows)
    return FrameLayout(n_slots=n_slots, packets=packets)


def sic_decode(layout: FrameLayout, i_max: int) -> DecodeResult:
    """Iteratively decode one frame.

    One iteration scans for slots holding exactly one undecoded replica,
    marks those packets decoded, and cancels all their replicas.  Stops when
    an iteration makes no progress or i_max iterations were spent; with
    i_max=0 nothing is decoded.
    """
    occupancy = [0] * layout.n_slots
    for slots in layout.packets:
        for s in slots:
            occupancy[s] += 1
    decoded: set[int] = set()
    iterations_used = 0
    for _ in range(i_max):
        newly = [
            p
            for p, slots in enumerate(layout.packets)
            if p not in decoded and any(occupancy[s] == 1 for s in slots)
        ]
        if not newly:
            break
        iterations_used += 1
        decoded.update(newly)
        for p in newly:
            for s in layout.packets[p]:
                occupancy[s] -= 1
    lost = frozenset(range(len(layout.packets))) - decoded
    return DecodeResult(decoded=frozenset(decoded), lost=lost, iterations_used=iterations_used)


def sic_decode_batch(slots: np.ndarray, n_slots: int, i_max: int) -> np.ndarray:
    """Decode a batch of frames at once; returns lost-packet count per frame.

    `slots` is an (n_frames, n_packets, l_max) array as produced by
    place_replicas_batch.  Matches sic_decode frame by frame: parallel
    singleton scan, batch cancellation, stop on no progress or after i_max
    iterations.
    """
    n_frames, n_packets, _ = slots.shape
    if n_packets == 0:
        return np.zeros(n_frames, dtype=np.int64)
    valid = slots >= 0
    frame_base = (np.arange(n_frames, dtype=np.int64) * n_slots)[:, None, None]
    flat = np.where(valid, slots.astype(np.int64) + frame_base, 0)
    occupancy = np.bincount(flat[valid], minlength=n_frames * n_slots)
    decoded_count = np.zeros(n_frames, dtype=np.int64)

    # Frames that make no progress in an iteration are finished for good, so
    # the working set shrinks as frames settle.
    act_ids = np.arange(n_frames)
    act_flat, act_valid = flat, valid
    act_decoded = np.zeros((n_frames, n_packets), dtype=bool)
    for _ in range(i_max):
        singleton = (occupancy[act_flat] == 1) & act_valid
        newly = singleton.any(axis=2) & ~act_decoded
        progressed = newly.any(axis=1)
        if not progressed.any():
            break
        cancelled = act_flat[newly[:, :, None] & act_valid]
        occupancy -= np.bincount(cancelled, minlength=occupancy.size)
        decoded_count[act_ids] += newly.sum(axis=1)
        if progressed.all():
            act_decoded |= newly
        else:
            act_ids = act_ids[progressed]
            act_flat = act_flat[progressed]
            act_valid = act_valid[progressed]
            act_decoded = (act_decoded | newly)[progressed]
    return np.int64(n_packets) - decoded_count


# Enumeration guard: refuse brute force beyond this many placements x packets.
BRUTE_FORCE_LIMIT = 10_000_000


def brute_force_plr(n_packets: int, degree: int, n_slots: int, i_max: int) -> Fraction:
    """Exact packet loss rate by enumerating every equiprobable placement.

    Only constant-degree placement is supported; the state space is
    C(n_slots, degree) ** n_packets and must stay under BRUTE_FORCE_LIMIT.
    """
    if degree > n_slots:
        raise ValueError(f"degree {degree} exceeds n_slots {n_slots}")
    per_packet = math.comb(n_slots, degree)
    if per_packet**n_packets > BRUTE_FORCE_LIMIT:
        raise ValueError("placement space too large for brute force")
    subsets = list(itertools.combinations(range(n_slots), degree))
    total_lost = 0
    for placement in itertools.product(subsets, repeat=n_packets):
        layout = FrameLayout(n_slots=n_slots, packets=placement)
        total_lost += len(sic_decode(layout, i_max).lost)
    return Fraction(total_lost, per_packet**n_packets * n_packets)


def layout_to_text(layout: FrameLayout) -> str:
    """Diagnostic dump: one line per packet, comma-separated slot indices."""
    return "\n".join(",".join(str(s) for s in slots) for slots in layout.packets) + "\n"


def layout_from_text(text: str, n_slots: int) -> FrameLayout:
    packets = tuple(
        tuple(int(tok) for tok in line.split(","))
        for line in text.splitlines()
        if line.strip()
    )
    return FrameLayout(n_slots=n_slots, packets=packets)
