"""Core domain types: channel configuration, access policies, random streams.

Everything downstream (decoding, PLR estimation, stability analysis, the
closed-loop simulator) builds on the types defined here.  Configuration
objects are immutable; validation returns violations as data instead of
raising, so callers can report every problem at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

_UINT64_MAX = 2**64 - 1

# Tolerance for "probabilities sum to one" checks.
PROB_SUM_TOL = 1e-9


@dataclass(frozen=True)
class DegreeDistribution:
    """Distribution over the number of replicas a packet sends per frame.

    entries: ((degree, probability), ...) with degrees strictly increasing.
    A constant-replica scheme is a single entry; plain slotted Aloha is
    ``DegreeDistribution.constant(1)``.
    """

    entries: tuple[tuple[int, float], ...]

    @classmethod
    def constant(cls, degree: int) -> "DegreeDistribution":
        return cls(((degree, 1.0),))

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(d for d, _ in self.entries)

    @property
    def probs(self) -> tuple[float, ...]:
        return tuple(p for _, p in self.entries)

    @property
    def max_degree(self) -> int:
        return max(self.degrees)

    def violations(self) -> list[str]:
        out: list[str] = []
        if not self.entries:
            return ["degree_dist: needs at least one (degree, prob) entry"]
        if any(d < 1 for d in self.degrees):
            out.append("degree_dist: degrees must be >= 1")
        if any(b <= a for a, b in zip(self.degrees, self.degrees[1:])):
            out.append("degree_dist: degrees must be strictly increasing")
        if any(p < 0.0 or p > 1.0 for p in self.probs):
            out.append("degree_dist: probabilities must lie in [0, 1]")
        if abs(sum(self.probs) - 1.0) > PROB_SUM_TOL:
            out.append(f"degree_dist: probabilities sum to {sum(self.probs)!r}, expected 1")
        return out


@dataclass(frozen=True)
class FinitePopulation:
    """Fixed user population; each thinking user generates with arrival_prob per frame."""

    size: int
    arrival_prob: float


@dataclass(frozen=True)
class InfinitePopulation:
    """Unbounded population; new packets arrive Poisson with the given per-frame mean."""

    mean_arrivals: float


Population = FinitePopulation | InfinitePopulation


@dataclass(frozen=True)
class ChannelConfig:
    """Static description of one random-access channel."""

    n_slots: int
    i_max: int
    degree_dist: DegreeDistribution
    population: Population
    retx_prob: float


@dataclass(frozen=True)
class NoPolicy:
    """Uncontrolled channel: every arrival and retransmission goes out."""


@dataclass(frozen=True)
class Icp:
    """Input control: deny new arrivals while the backlog exceeds the threshold."""

    threshold: int


@dataclass(frozen=True)
class Rcp:
    """Retransmission control: backlogged users retransmit with a reduced
    probability while the backlog exceeds the threshold."""

    threshold: int
    critical_retx_prob: float


Policy = NoPolicy | Icp | Rcp


def validate(config: ChannelConfig) -> list[str]:
    """Check a ChannelConfig, returning one message per violated rule (empty = valid)."""
    out: list[str] = []
    if not isinstance(config.n_slots, int) or config.n_slots < 1:
        out.append("n_slots: must be a positive integer")
    if not isinstance(config.i_max, int) or config.i_max < 0:
        out.append("i_max: must be a non-negative integer")
    out.extend(config.degree_dist.violations())
    if isinstance(config.n_slots, int) and config.n_slots >= 1 and config.degree_dist.entries:
        if config.degree_dist.max_degree > config.n_slots:
            out.append("degree_dist: max degree exceeds n_slots")
    pop = config.population
    if isinstance(pop, FinitePopulation):
        if not isinstance(pop.size, int) or pop.size < 1:
            out.append("M: population size must be a positive integer")
        if not 0.0 <= pop.arrival_prob <= 1.0:
            out.append("p0: arrival probability must lie in [0, 1]")
    elif isinstance(pop, InfinitePopulation):
        if not pop.mean_arrivals >= 0.0:
            out.append("lambda: mean arrivals per frame must be >= 0")
    else:
        out.append("population: must be finite or infinite")
    if not 0.0 < config.retx_prob <= 1.0:
        out.append("p_r: retransmission probability must lie in (0, 1]")
    return out


def validate_policy(policy: Policy, config: ChannelConfig) -> list[str]:
    """Check a policy against the channel it will control."""
    out: list[str] = []
    if isinstance(policy, (Icp, Rcp)):
        if not isinstance(policy.threshold, int) or policy.threshold < 0:
            out.append("n_hat: backlog threshold must be a non-negative integer")
    if isinstance(policy, Rcp):
        if not 0.0 < policy.critical_retx_prob < 1.0:
            out.append("p_c: critical retransmission probability must lie in (0, 1)")
        elif policy.critical_retx_prob >= config.retx_prob:
            out.append("p_c: must be smaller than p_r for retransmission control to act")
    return out


def require_valid(config: ChannelConfig, policy: Policy | None = None) -> None:
    """Raise ValueError listing every violation; no-op on valid input."""
    problems = validate(config)
    if policy is not None:
        problems += validate_policy(policy, config)
    if problems:
        raise ValueError("invalid configuration: " + "; ".join(problems))


class RandomStream:
    """Deterministic stream of random draws identified by (seed, stream_id).

    The same (seed, stream_id) always reproduces the same draw sequence, no
    matter where or in what order streams are consumed, so work can be split
    across workers without changing results.  Derived streams (`substream`)
    extend the identity with extra keys instead of sharing state.
    """

    def __init__(self, seed: int, stream_id: int = 0, _path: tuple[int, ...] = ()):
        if not 0 <= seed <= _UINT64_MAX:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if not 0 <= stream_id <= _UINT64_MAX:
            raise ValueError("stream_id must fit in an unsigned 64-bit integer")
        self.seed = seed
        self.stream_id = stream_id
        self._path = tuple(_path)
        self._gen: np.random.Generator | None = None

    @property
    def gen(self) -> np.random.Generator:
        if self._gen is None:
            entropy = [self.seed, self.stream_id, *self._path]
            self._gen = np.random.default_rng(np.random.SeedSequence(entropy))
        return self._gen

    def substream(self, *keys: int) -> "RandomStream":
        """Independent child stream; children with different keys never overlap."""
        return RandomStream(self.seed, self.stream_id, self._path + keys)

    def __repr__(self) -> str:  # pragma: no cover
        extra = f", path={self._path}" if self._path else ""
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id}{extra})"


def sample_degree(dist: DegreeDistribution, rng: RandomStream) -> int:
    """Draw one replica count from the distribution."""
    if len(dist.entries) == 1:
        return dist.entries[0][0]
    return int(sample_degrees(dist, rng, 1)[0])


def sample_degrees(dist: DegreeDistribution, rng: RandomStream, n: int) -> np.ndarray:
    """Draw n independent replica counts (vectorized form of sample_degree)."""
    degrees = np.asarray(dist.degrees, dtype=np.int64)
    if len(dist.entries) == 1:
        return np.full(n, degrees[0], dtype=np.int64)
    probs = np.asarray(dist.probs, dtype=np.float64)
    probs = probs / probs.sum()  # guard against 1e-9 rounding slack
    return rng.gen.choice(degrees, size=n, p=probs)


# --------------------------------------------------------------------------
# Config files: flat "key = value" text, '#' starts a comment.
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RunSettings:
    """Everything a config file describes: channel, policy, run length, seed."""

    channel: ChannelConfig
    policy: Policy
    frames: int
    seed: int


class ConfigError(ValueError):
    """A config file could not be parsed or failed validation."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


_KNOWN_KEYS = {
    "n_slots", "i_max", "degrees", "population", "M", "p0", "lambda",
    "p_r", "policy", "n_hat", "p_c", "frames", "seed",
}

DEFAULT_FRAMES = 100_000


def _parse_degrees(text: str) -> DegreeDistribution:
    entries = []
    for part in text.split(","):
        degree_s, _, prob_s = part.partition(":")
        entries.append((int(degree_s.strip()), float(prob_s.strip())))
    return DegreeDistribution(tuple(entries))


def parse_settings(text: str) -> RunSettings:
    """Parse config-file text; raises ConfigError listing every problem found."""
    raw: dict[str, str] = {}
    problems: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, eq, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if not eq or not key or not value:
            problems.append(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
            continue
        if key not in _KNOWN_KEYS:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in raw:
            problems.append(f"line {lineno}: duplicate key {key!r}")
            continue
        raw[key] = value
    if problems:
        raise ConfigError(problems)

    def take(key: str, conv, default=None, required=False):
        if key not in raw:
            if required:
                problems.append(f"missing required key {key!r}")
            return default
        try:
            return conv(raw[key])
        except (ValueError, TypeError):
            problems.append(f"key {key!r}: cannot parse value {raw[key]!r}")
            return default

    n_slots = take("n_slots", int, required=True)
    i_max = take("i_max", int, required=True)
    degree_dist = take("degrees", _parse_degrees, required=True)
    retx_prob = take("p_r", float, required=True)
    pop_kind = take("population", str, required=True)

    population: Population | None = None
    if pop_kind == "finite":
        size = take("M", int, required=True)
        arrival_prob = take("p0", float, required=True)
        if size is not None and arrival_prob is not None:
            population = FinitePopulation(size, arrival_prob)
    elif pop_kind == "infinite":
        mean = take("lambda", float, required=True)
        if mean is not None:
            population = InfinitePopulation(mean)
    elif pop_kind is not None:
        problems.append(f"key 'population': must be 'finite' or 'infinite', got {pop_kind!r}")

    policy_kind = take("policy", str, default="none")
    policy: Policy = NoPolicy()
    if policy_kind in ("icp", "rcp"):
        threshold = take("n_hat", int, required=True)
        if policy_kind == "icp":
            if threshold is not None:
                policy = Icp(threshold)
        else:
            crit = take("p_c", float, required=True)
            if threshold is not None and crit is not None:
                policy = Rcp(threshold, crit)
    elif policy_kind != "none":
        problems.append(f"key 'policy': must be 'none', 'icp' or 'rcp', got {policy_kind!r}")

    frames = take("frames", int, default=DEFAULT_FRAMES)
    seed = take("seed", int, default=0)

    # keys that contradict the selected population/policy hide mistakes
    if pop_kind == "finite" and "lambda" in raw:
        problems.append("key 'lambda' is only valid for population = infinite")
    if pop_kind == "infinite" and ("M" in raw or "p0" in raw):
        problems.append("keys 'M' and 'p0' are only valid for population = finite")
    if policy_kind == "none" and ("n_hat" in raw or "p_c" in raw):
        problems.append("keys 'n_hat' and 'p_c' require a policy")
    if policy_kind == "icp" and "p_c" in raw:
        problems.append("key 'p_c' is only valid for policy = rcp")

    if problems:
        raise ConfigError(problems)

    config = ChannelConfig(
        n_slots=n_slots,
        i_max=i_max,
        degree_dist=degree_dist,
        population=population,
        retx_prob=retx_prob,
    )
    problems = validate(config) + validate_policy(policy, config)
    if frames < 1:
        problems.append("frames: must be a positive integer")
    if not 0 <= seed <= _UINT64_MAX:
        problems.append("seed: must fit in an unsigned 64-bit integer")
    if problems:
        raise ConfigError(problems)
    return RunSettings(channel=config, policy=policy, frames=frames, seed=seed)


def load_settings(path: str | Path) -> RunSettings:
    return parse_settings(Path(path).read_text(encoding="utf-8"))


def config_summary(config: ChannelConfig) -> str:
    """One-line textual fingerprint of a channel config (used in CSV headers)."""
    degrees = ",".join(f"{d}:{p:.10g}" for d, p in config.degree_dist.entries)
    pop = config.population
    if isinstance(pop, FinitePopulation):
        pop_s = f"population=finite M={pop.size} p0={pop.arrival_prob:.10g}"
    else:
        pop_s = f"population=infinite lambda={pop.mean_arrivals:.10g}"
    return (f"n_slots={config.n_slots} i_max={config.i_max} degrees={degrees} "
            f"{pop_s} p_r={config.retx_prob:.10g}")
