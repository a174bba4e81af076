"""Monte-Carlo packet-loss-rate estimation and PLR curves over channel load.

A PLR curve samples the frame decoder at fixed normalized loads (packets per
slot).  Curves are the bridge to the stability analysis: they depend only on
(n_slots, degree distribution, i_max), never on population or policy, so one
curve serves every load line sharing those channel parameters.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import ChannelConfig, DegreeDistribution, FinitePopulation, RandomStream, require_valid
from .decoder import place_replicas_batch, sic_decode_batch

DEFAULT_GRID_STEP = 0.02
DEFAULT_TRIALS = 20_000

# Trials are consumed in fixed-size chunks, each on its own substream, so a
# parallel evaluator splitting at chunk boundaries reproduces the serial run.
TRIAL_CHUNK = 4096


def packets_for_load(g_in: float, n_slots: int) -> int:
    """Number of packets per frame that realizes a normalized load."""
    return int(round(g_in * n_slots))


def curve_fingerprint(n_slots: int, i_max: int, dist: DegreeDistribution) -> str:
    """Identity of a PLR curve: the channel parameters the PLR depends on."""
    degrees = ",".join(f"{d}:{p:.10g}" for d, p in dist.entries)
    return f"n_slots={n_slots} i_max={i_max} degrees={degrees}"


@dataclass(frozen=True)
class PlrSample:
    g_in: float
    n_packets: int
    plr: float
    std_err: float
    trials: int


@dataclass(frozen=True)
class PlrCurve:
    """PLR as a function of load, plus the channel identity that produced it."""

    n_slots: int
    i_max: int
    degree_dist: DegreeDistribution
    samples: tuple[PlrSample, ...]

    @property
    def fingerprint(self) -> str:
        return curve_fingerprint(self.n_slots, self.i_max, self.degree_dist)

    @property
    def g_max(self) -> float:
        return self.samples[-1].g_in

    def violations(self) -> list[str]:
        out = []
        if not self.samples:
            return ["curve: no samples"]
        if self.samples[0].g_in != 0.0:
            out.append("curve: grid must start at g_in=0")
        g = [s.g_in for s in self.samples]
        if any(b <= a for a, b in zip(g, g[1:])):
            out.append("curve: g_in values must be strictly increasing")
        if any(not 0.0 <= s.plr <= 1.0 for s in self.samples):
            out.append("curve: plr values must lie in [0, 1]")
        return out


def estimate_plr(g_in: float, config: ChannelConfig, trials: int, rng: RandomStream) -> PlrSample:
    """Estimate the PLR at one load point with `trials` independent frames.

    Every trial places exactly packets_for_load(g_in) packets.  Trials run in
    fixed chunks on substreams of `rng`, so results do not depend on how the
    chunks are scheduled.
    """
    require_valid(config)
    if g_in < 0:
        raise ValueError("g_in must be non-negative")
    if trials < 1:
        raise ValueError("trials must be positive")
    n = packets_for_load(g_in, config.n_slots)
    if n == 0:
        return PlrSample(g_in=g_in, n_packets=0, plr=0.0, std_err=0.0, trials=trials)
    total_lost = 0
    for chunk_idx, start in enumerate(range(0, trials, TRIAL_CHUNK)):
        chunk = min(TRIAL_CHUNK, trials - start)
        sub = rng.substream(chunk_idx)
        slots = place_replicas_batch(chunk, n, config.degree_dist, config.n_slots, sub)
        total_lost += int(sic_decode_batch(slots, config.n_slots, config.i_max).sum())
    plr = total_lost / (trials * n)
    std_err = math.sqrt(plr * (1.0 - plr) / (trials * n))
    return PlrSample(g_in=g_in, n_packets=n, plr=plr, std_err=std_err, trials=trials)


def build_plr_curve(
    config: ChannelConfig,
    g_max: float,
    grid_step: float = DEFAULT_GRID_STEP,
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    workers: int = 1,
) -> PlrCurve:
    """Sample the PLR on the grid {0, grid_step, ..., g_max}.

    Each grid point runs on its own (seed, point index) stream, so point
    evaluation order and worker count cannot change the result.
    """
    require_valid(config)
    if g_max <= 0 or grid_step <= 0:
        raise ValueError("g_max and grid_step must be positive")
    n_points = int(math.floor(g_max / grid_step + 1e-9)) + 1
    grid = [round(i * grid_step, 10) for i in range(n_points)]

    def point(i: int) -> PlrSample:
        return estimate_plr(grid[i], config, trials, RandomStream(seed, stream_id=i))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = tuple(pool.map(point, range(n_points)))
    else:
        samples = tuple(point(i) for i in range(n_points))
    return PlrCurve(
        n_slots=config.n_slots,
        i_max=config.i_max,
        degree_dist=config.degree_dist,
        samples=samples,
    )


def plr_at(curve: PlrCurve, g_in: float) -> float:
    """Linear interpolation between grid samples; g_in must lie inside the grid."""
    if g_in < 0.0 or g_in > curve.g_max:
        raise ValueError(f"g_in={g_in} outside curve range [0, {curve.g_max}]")
    g = np.array([s.g_in for s in curve.samples])
    p = np.array([s.plr for s in curve.samples])
    return float(np.interp(g_in, g, p))


def peak_throughput_load(curve: PlrCurve) -> float:
    """Grid load with the highest g_in * (1 - plr)."""
    best = max(curve.samples, key=lambda s: s.g_in * (1.0 - s.plr))
    return best.g_in


def covers_saturation_branch(curve: PlrCurve) -> bool:
    """True when the grid extends at least 3x past the peak-throughput load."""
    return curve.g_max >= 3.0 * peak_throughput_load(curve)


def default_g_max(config: ChannelConfig) -> float:
    """Grid extent wide enough for classification against this population.

    Finite populations need the contour to reach backlogs past M so the
    saturation crossing is inside the grid; 3.0 covers the saturation branch
    for every degree distribution with a peak load at or below 1.
    """
    if isinstance(config.population, FinitePopulation):
        reach = 1.25 * config.population.size * config.retx_prob / config.n_slots
        return round(max(3.0, reach), 10)
    return 3.0


def check_fingerprint(curve: PlrCurve, config: ChannelConfig) -> None:
    """Reject reuse of a curve built for a different channel."""
    expected = curve_fingerprint(config.n_slots, config.i_max, config.degree_dist)
    if curve.fingerprint != expected:
        raise ValueError(
            f"curve fingerprint mismatch: curve has [{curve.fingerprint}], "
            f"config needs [{expected}]"
        )


# --------------------------------------------------------------------------
# CSV serialization
# --------------------------------------------------------------------------

def curve_to_csv(curve: PlrCurve, seed: int | None = None) -> str:
    lines = [f"# fingerprint: {curve.fingerprint}"]
    if seed is not None:
        lines.append(f"# seed: {seed}")
    lines.append("g_in,n,plr,std_err,trials")
    for s in curve.samples:
        lines.append(f"{s.g_in!r},{s.n_packets},{s.plr!r},{s.std_err!r},{s.trials}")
    return "\n".join(lines) + "\n"


def _parse_fingerprint(line: str) -> tuple[int, int, DegreeDistribution]:
    fields = dict(tok.split("=", 1) for tok in line.split())
    entries = tuple(
        (int(d), float(p))
        for d, p in (part.split(":") for part in fields["degrees"].split(","))
    )
    return int(fields["n_slots"]), int(fields["i_max"]), DegreeDistribution(entries)


def curve_from_csv(text: str) -> PlrCurve:
    n_slots = i_max = None
    dist = None
    samples = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if body.startswith("fingerprint:"):
                n_slots, i_max, dist = _parse_fingerprint(body.partition(":")[2].strip())
            continue
        if line.startswith("g_in,"):
            continue
        g_s, n_s, plr_s, se_s, t_s = line.split(",")
        samples.append(
            PlrSample(float(g_s), int(n_s), float(plr_s), float(se_s), int(t_s))
        )
    if dist is None:
        raise ValueError("curve file has no fingerprint header")
    curve = PlrCurve(n_slots=n_slots, i_max=i_max, degree_dist=dist, samples=tuple(samples))
    problems = curve.violations()
    if problems:
        raise ValueError("invalid curve file: " + "; ".join(problems))
    return curve
