"""Equilibrium-contour stability analysis of a random-access channel.

The PLR curve induces an equilibrium contour in the (backlog, throughput)
plane; the population induces a load line.  Intersections are the channel's
equilibria; the drift of the backlog on either side of each intersection
determines whether it attracts or repels, which in turn classifies the
channel as stable, unstable, or overloaded.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import ChannelConfig, FinitePopulation, InfinitePopulation, Population
from .plr import PlrCurve, check_fingerprint

# Residual |load line - contour| accepted for a refined equilibrium.
ROOT_TOL = 1e-9

# A lone equilibrium losing more than this fraction of traffic is the
# saturation point itself: the channel is overloaded, not stable.
OVERLOAD_PLR = 0.95


class EquilibriumKind(Enum):
    GLOBALLY_STABLE = "globally-stable"
    LOCALLY_STABLE = "locally-stable"
    UNSTABLE = "unstable"
    SATURATION = "saturation"


class ChannelKind(Enum):
    STABLE = "stable"
    UNSTABLE_FINITE = "unstable-finite"
    UNSTABLE_INFINITE = "unstable-infinite"
    OVERLOADED = "overloaded"


@dataclass(frozen=True)
class ContourPoint:
    g_in: float
    g_t: float
    n_b: float


@dataclass(frozen=True)
class EquilibriumPoint:
    g_in: float
    g_t: float
    n_b: float
    kind: EquilibriumKind


@dataclass(frozen=True)
class ChannelClass:
    kind: ChannelKind
    equilibria: tuple[EquilibriumPoint, ...]


def equilibrium_contour(curve: PlrCurve, retx_prob: float) -> list[ContourPoint]:
    """Map each PLR sample to its equilibrium (throughput, backlog) pair.

    At equilibrium a load g_in delivers g_in*(1-plr) and keeps a backlog of
    g_in*plr*n_slots/retx_prob users retransmitting.
    """
    if not 0.0 < retx_prob <= 1.0:
        raise ValueError("retx_prob must lie in (0, 1]")
    return [
        ContourPoint(
            g_in=s.g_in,
            g_t=s.g_in * (1.0 - s.plr),
            n_b=s.g_in * s.plr * curve.n_slots / retx_prob,
        )
        for s in curve.samples
    ]


def load_line_gt(n_b: float, population: Population, n_slots: int) -> float:
    """New traffic offered per slot when n_b users are backlogged."""
    if isinstance(population, FinitePopulation):
        thinking = max(population.size - n_b, 0.0)
        return thinking * population.arrival_prob / n_slots
    return population.mean_arrivals / n_slots


def _bisect_root(
    seg_a: ContourPoint,
    seg_b: ContourPoint,
    population: Population,
    n_slots: int,
) -> ContourPoint:
    """Refine a sign change between two contour samples on their linear interpolant."""

    def offset(t: float) -> tuple[float, ContourPoint]:
        pt = ContourPoint(
            g_in=seg_a.g_in + t * (seg_b.g_in - seg_a.g_in),
            g_t=seg_a.g_t + t * (seg_b.g_t - seg_a.g_t),
            n_b=seg_a.n_b + t * (seg_b.n_b - seg_a.n_b),
        )
        return load_line_gt(pt.n_b, population, n_slots) - pt.g_t, pt

    lo, hi = 0.0, 1.0
    d_lo, _ = offset(lo)
    mid_pt = seg_a
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        d_mid, mid_pt = offset(mid)
        if abs(d_mid) < ROOT_TOL:
            return mid_pt
        if (d_mid > 0.0) == (d_lo > 0.0):
            lo, d_lo = mid, d_mid
        else:
            hi = mid
    return mid_pt


def find_equilibria(
    contour: list[ContourPoint],
    population: Population,
    n_slots: int,
) -> list[EquilibriumPoint]:
    """Intersect the load line with the contour and label each crossing.

    The sign of (load line - contour throughput) along the contour is the
    backlog drift: positive drift grows the backlog.  A crossing where drift
    turns negative-to-positive with increasing backlog repels (Unstable);
    positive-to-negative attracts (stable).  For finite populations the
    highest-backlog attractor of a multi-crossing set is the saturation
    point; for infinite populations ending with positive drift a synthetic
    saturation point at unbounded backlog is appended.
    """
    if len(contour) < 2:
        raise ValueError("contour needs at least two points")
    d = np.array([load_line_gt(p.n_b, population, n_slots) - p.g_t for p in contour])
    finite = isinstance(population, FinitePopulation)
    if finite and d[-1] > 0:
        raise ValueError(
            "contour ends before the load line does: increase the PLR curve's "
            "g_max so backlogs beyond the population size are covered"
        )

    def nearest_sign(start: int, step: int) -> float:
        j = start
        while 0 <= j < len(d):
            if d[j] != 0.0:
                return math.copysign(1.0, d[j])
            j += step
        return 0.0

    crossings: list[tuple[ContourPoint, float, float, float]] = []
    i = 0
    while i < len(contour):
        if d[i] == 0.0:
            j = i
            while j + 1 < len(contour) and d[j + 1] == 0.0:
                j = j + 1
            before = nearest_sign(i - 1, -1)
            after = nearest_sign(j + 1, +1)
            lo = contour[max(i - 1, 0)].n_b
            hi = contour[min(j + 1, len(contour) - 1)].n_b
            crossings.append((contour[i], before, after, hi - lo))
            i = j + 1
            continue
        if i + 1 < len(contour) and d[i] * d[i + 1] < 0.0:
            root = _bisect_root(contour[i], contour[i + 1], population, n_slots)
            slope = contour[i + 1].n_b - contour[i].n_b
            crossings.append(
                (root, math.copysign(1.0, d[i]), math.copysign(1.0, d[i + 1]), slope)
            )
        i += 1

    labeled: list[tuple[ContourPoint, bool]] = []
    for point, before, after, nb_slope in crossings:
        if nb_slope < 0.0:
            # contour runs toward smaller backlog here; read the drift
            # directions in backlog order, not grid order
            before, after = after, before
        if after < 0.0 or (after == 0.0 and before > 0.0):
            labeled.append((point, True))
        else:
            labeled.append((point, False))

    labeled.sort(key=lambda item: item[0].n_b)
    flags = [stable for _, stable in labeled]
    if any(a == b for a, b in zip(flags, flags[1:])):
        raise ValueError(
            "equilibria do not alternate stable/unstable along the backlog "
            "axis; the contour is too noisy or tangent to the load line"
        )

    points: list[EquilibriumPoint] = []
    if len(labeled) == 1:
        point, stable = labeled[0]
        kind = EquilibriumKind.GLOBALLY_STABLE if stable else EquilibriumKind.UNSTABLE
        points.append(EquilibriumPoint(point.g_in, point.g_t, point.n_b, kind))
    else:
        for point, stable in labeled:
            kind = EquilibriumKind.LOCALLY_STABLE if stable else EquilibriumKind.UNSTABLE
            points.append(EquilibriumPoint(point.g_in, point.g_t, point.n_b, kind))
        if finite and flags[-1]:
            points[-1] = dataclasses.replace(points[-1], kind=EquilibriumKind.SATURATION)

    if not finite and points and d[-1] > 0.0:
        points.append(
            EquilibriumPoint(
                g_in=math.inf,
                g_t=load_line_gt(math.inf, population, n_slots),
                n_b=math.inf,
                kind=EquilibriumKind.SATURATION,
            )
        )
    return points


def classify_channel(
    equilibria: list[EquilibriumPoint],
    population: Population,
) -> ChannelClass:
    """Reduce an equilibrium set to the channel's operating regime."""
    finite = isinstance(population, FinitePopulation)
    if not equilibria:
        if finite:
            raise ValueError("a finite population always has at least one equilibrium")
        return ChannelClass(ChannelKind.OVERLOADED, ())

    if len(equilibria) == 1:
        point = equilibria[0]
        if point.kind is EquilibriumKind.UNSTABLE:
            raise ValueError("single repelling equilibrium: load line is tangent to the contour")
        plr_here = 1.0 - point.g_t / point.g_in if point.g_in > 0.0 else 0.0
        if plr_here > OVERLOAD_PLR:
            relabeled = dataclasses.replace(point, kind=EquilibriumKind.SATURATION)
            return ChannelClass(ChannelKind.OVERLOADED, (relabeled,))
        return ChannelClass(ChannelKind.STABLE, (point,))

    kinds = [e.kind for e in equilibria]
    if len(equilibria) == 3 and kinds == [
        EquilibriumKind.LOCALLY_STABLE,
        EquilibriumKind.UNSTABLE,
        EquilibriumKind.SATURATION,
    ]:
        kind = ChannelKind.UNSTABLE_FINITE if finite else ChannelKind.UNSTABLE_INFINITE
        return ChannelClass(kind, tuple(equilibria))
    raise ValueError(
        f"unrecognized equilibrium structure {[k.value for k in kinds]}; "
        "refine the PLR curve grid"
    )


def analyze_parts(
    curve: PlrCurve, config: ChannelConfig
) -> tuple[list[ContourPoint], list[EquilibriumPoint], ChannelClass]:
    """Full pipeline for one config: contour, equilibria, classification."""
    check_fingerprint(curve, config)
    contour = equilibrium_contour(curve, config.retx_prob)
    equilibria = find_equilibria(contour, config.population, config.n_slots)
    return contour, equilibria, classify_channel(equilibria, config.population)


def analyze(curve: PlrCurve, config: ChannelConfig) -> ChannelClass:
    return analyze_parts(curve, config)[2]


SWEEPABLE = ("M", "p0", "p_r")


def sweep_parameter(
    config: ChannelConfig,
    curve: PlrCurve,
    parameter: str,
    values: list[float],
) -> list[tuple[float, ChannelClass]]:
    """Classify the channel across values of one parameter, reusing one curve.

    M and p0 reshape the load line only; p_r reshapes the contour only.  The
    PLR curve is load-line independent, so it is never rebuilt.
    """
    if parameter not in SWEEPABLE:
        raise ValueError(f"parameter must be one of {SWEEPABLE}")
    check_fingerprint(curve, config)
    if parameter in ("M", "p0") and not isinstance(config.population, FinitePopulation):
        raise ValueError(f"sweeping {parameter} requires a finite population")
    base_contour = equilibrium_contour(curve, config.retx_prob)
    results: list[tuple[float, ChannelClass]] = []
    for value in values:
        population = config.population
        contour = base_contour
        if parameter == "p_r":
            contour = equilibrium_contour(curve, value)
        elif parameter == "M":
            population = dataclasses.replace(population, size=int(value))
        else:
            population = dataclasses.replace(population, arrival_prob=float(value))
        equilibria = find_equilibria(contour, population, config.n_slots)
        results.append((value, classify_channel(equilibria, population)))
    return results


# --------------------------------------------------------------------------
# CSV serialization
# --------------------------------------------------------------------------

def contour_to_csv(contour: list[ContourPoint], header_comments: list[str] = ()) -> str:
    lines = [f"# {c}" for c in header_comments]
    lines.append("g_in,g_t,n_b")
    lines += [f"{p.g_in!r},{p.g_t!r},{p.n_b!r}" for p in contour]
    return "\n".join(lines) + "\n"


def equilibria_to_csv(points: list[EquilibriumPoint], header_comments: list[str] = ()) -> str:
    lines = [f"# {c}" for c in header_comments]
    lines.append("g_in,g_t,n_b,kind")
    lines += [f"{p.g_in!r},{p.g_t!r},{p.n_b!r},{p.kind.value}" for p in points]
    return "\n".join(lines) + "\n"
