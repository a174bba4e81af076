"""Closed-loop frame-by-frame channel simulation with feedback and policies.

Users are either thinking (may generate a new packet) or backlogged (failed
earlier, retransmitting with the configured probability).  Feedback arrives
at the end of every frame, so the next frame's policy decision sees the
backlog the current frame left behind.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .core import (
    ChannelConfig,
    DEFAULT_FRAMES,
    FinitePopulation,
    Icp,
    NoPolicy,
    Policy,
    RandomStream,
    Rcp,
    require_valid,
)
from .decoder import place_replicas_batch, sic_decode_batch

DEFAULT_TRACE_STRIDE = 100


@dataclass(frozen=True)
class PopulationState:
    """Counts are sufficient state: users are exchangeable within a class."""

    backlogged: int
    thinking: int | None  # None for an infinite population


class FrameRecord(NamedTuple):
    f: int
    attempted: int
    decoded: int
    n_b: int
    critical: bool
    rejected: int


@dataclass(frozen=True)
class SimMetrics:
    frames: int
    avg_throughput: float
    percent_critical: float
    rejected_arrivals: int
    final_n_b: int
    per_frame: tuple[FrameRecord, ...]


def initial_state(config: ChannelConfig) -> PopulationState:
    if isinstance(config.population, FinitePopulation):
        return PopulationState(backlogged=0, thinking=config.population.size)
    return PopulationState(backlogged=0, thinking=None)


def step_frame(
    state: PopulationState,
    config: ChannelConfig,
    policy: Policy,
    rng: RandomStream,
    f: int = 0,
) -> tuple[PopulationState, FrameRecord]:
    """Advance the channel by one frame.

    Order within the frame: policy looks at the backlog left by the previous
    frame, new arrivals are drawn (and possibly denied), backlogged users
    retransmit, everything transmitted is placed and decoded, and end-of-frame
    feedback moves users between the two states.
    """
    gen = rng.gen
    pop = config.population
    finite = isinstance(pop, FinitePopulation)
    critical = isinstance(policy, (Icp, Rcp)) and state.backlogged > policy.threshold

    if finite:
        arrivals = 0
        if state.thinking > 0 and pop.arrival_prob > 0.0:
            arrivals = int(gen.binomial(state.thinking, pop.arrival_prob))
    else:
        arrivals = int(gen.poisson(pop.mean_arrivals)) if pop.mean_arrivals > 0.0 else 0

    # Input control denies new traffic outright in the critical state; the
    # generating users stay thinking and may regenerate later.
    rejected = 0
    if critical and isinstance(policy, Icp):
        rejected, arrivals = arrivals, 0

    retx_prob = config.retx_prob
    if critical and isinstance(policy, Rcp):
        retx_prob = policy.critical_retx_prob
    if state.backlogged == 0:
        retx = 0
    elif retx_prob >= 1.0:
        retx = state.backlogged
    else:
        retx = int(gen.binomial(state.backlogged, retx_prob))

    attempted = arrivals + retx
    if attempted:
        slots = place_replicas_batch(1, attempted, config.degree_dist, config.n_slots, rng)
        lost = int(sic_decode_batch(slots, config.n_slots, config.i_max)[0])
    else:
        lost = 0
    decoded = attempted - lost

    # Decoding is blind to packet origin, so the backlog update only needs
    # counts: failed transmitters (new or old) are backlogged, the rest think.
    backlogged = state.backlogged + arrivals - decoded
    thinking = pop.size - backlogged if finite else None
    new_state = PopulationState(backlogged=backlogged, thinking=thinking)
    record = FrameRecord(
        f=f,
        attempted=attempted,
        decoded=decoded,
        n_b=backlogged,
        critical=critical,
        rejected=rejected,
    )
    return new_state, record


def run_simulation(
    config: ChannelConfig,
    policy: Policy = NoPolicy(),
    frames: int = DEFAULT_FRAMES,
    seed: int = 0,
    trace_stride: int = DEFAULT_TRACE_STRIDE,
) -> SimMetrics:
    """Simulate from an all-thinking start; identical arguments reproduce
    identical metrics bit for bit."""
    require_valid(config, policy)
    if frames < 1:
        raise ValueError("frames must be positive")
    if trace_stride < 1:
        raise ValueError("trace_stride must be positive")
    rng = RandomStream(seed)
    state = initial_state(config)
    decoded_total = 0
    critical_frames = 0
    rejected_total = 0
    trace: list[FrameRecord] = []
    for f in range(frames):
        state, record = step_frame(state, config, policy, rng, f)
        decoded_total += record.decoded
        critical_frames += record.critical
        rejected_total += record.rejected
        if f % trace_stride == 0:
            trace.append(record)
    with_threshold = isinstance(policy, (Icp, Rcp))
    return SimMetrics(
        frames=frames,
        avg_throughput=decoded_total / (frames * config.n_slots),
        percent_critical=100.0 * critical_frames / frames if with_threshold else 0.0,
        rejected_arrivals=rejected_total,
        final_n_b=state.backlogged,
        per_frame=tuple(trace),
    )


def sweep_threshold(
    config: ChannelConfig,
    policy_family: str,
    thresholds: list[int],
    frames: int = DEFAULT_FRAMES,
    seed: int = 0,
    critical_retx_prob: float | None = None,
    trace_stride: int = DEFAULT_TRACE_STRIDE,
) -> list[tuple[int, SimMetrics]]:
    """One full run per backlog threshold, all with the same seed.

    Sharing the seed gives every threshold the same arrival randomness, so
    differences between rows reflect the policy, not resampling.
    """
    if policy_family not in ("icp", "rcp"):
        raise ValueError("policy_family must be 'icp' or 'rcp'")
    if policy_family == "rcp" and critical_retx_prob is None:
        raise ValueError("rcp sweep needs critical_retx_prob")
    results = []
    for threshold in thresholds:
        policy: Policy
        if policy_family == "icp":
            policy = Icp(threshold)
        else:
            policy = Rcp(threshold, critical_retx_prob)
        results.append((threshold, run_simulation(config, policy, frames, seed, trace_stride)))
    return results


# --------------------------------------------------------------------------
# CSV serialization
# --------------------------------------------------------------------------

def metrics_to_csv(metrics: SimMetrics, header_comments: list[str] = ()) -> str:
    lines = [f"# {c}" for c in header_comments]
    lines.append("frames,avg_throughput,percent_critical,rejected_arrivals,final_n_b")
    lines.append(
        f"{metrics.frames},{metrics.avg_throughput!r},{metrics.percent_critical!r},"
        f"{metrics.rejected_arrivals},{metrics.final_n_b}"
    )
    return "\n".join(lines) + "\n"


def trace_to_csv(metrics: SimMetrics, header_comments: list[str] = ()) -> str:
    lines = [f"# {c}" for c in header_comments]
    lines.append("f,attempted,decoded,n_b,critical")
    for r in metrics.per_frame:
        lines.append(f"{r.f},{r.attempted},{r.decoded},{r.n_b},{int(r.critical)}")
    return "\n".join(lines) + "\n"


def sweep_to_csv(rows: list[tuple[int, SimMetrics]], header_comments: list[str] = ()) -> str:
    lines = [f"# {c}" for c in header_comments]
    lines.append("n_hat,avg_throughput,percent_critical")
    for threshold, m in rows:
        lines.append(f"{threshold},{m.avg_throughput!r},{m.percent_critical!r}")
    return "\n".join(lines) + "\n"
