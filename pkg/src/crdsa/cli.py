"""Command-line entry point.

Subcommands: plr (loss-rate sweep), contour, classify, simulate, sweep
(policy threshold sweep).  Every run leaves a manifest.json in the output
directory listing the artifacts it produced with their content hashes.
Outputs are byte-identical for identical flags and seed.

Exit codes: 0 success, 1 runtime failure, 2 configuration failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from .core import ConfigError, Rcp, RunSettings, config_summary, load_settings
from .plr import (
    DEFAULT_GRID_STEP,
    DEFAULT_TRIALS,
    build_plr_curve,
    check_fingerprint,
    covers_saturation_branch,
    curve_from_csv,
    curve_to_csv,
    default_g_max,
)
from .simulator import (
    DEFAULT_TRACE_STRIDE,
    metrics_to_csv,
    run_simulation,
    sweep_threshold,
    sweep_to_csv,
    trace_to_csv,
)
from .stability import (
    analyze_parts,
    contour_to_csv,
    equilibria_to_csv,
)


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crdsa",
        description="Frame-level simulation and stability analysis of slotted random-access channels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("config", help="channel config file (key = value lines)")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    def add_curve_opts(p: argparse.ArgumentParser) -> None:
        p.add_argument("--curve", default=None, help="reuse a previously written PLR curve CSV")
        p.add_argument("--gmax", type=float, default=None,
                       help="largest load to sample (default: wide enough for classification)")
        p.add_argument("--step", type=float, default=DEFAULT_GRID_STEP)
        p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)

    p = sub.add_parser("plr", help="sample the packet loss rate over a load grid")
    add_common(p)
    add_curve_opts(p)

    p = sub.add_parser("contour", help="write the equilibrium contour")
    add_common(p)
    add_curve_opts(p)

    p = sub.add_parser("classify", help="locate equilibria and classify the channel")
    add_common(p)
    add_curve_opts(p)

    p = sub.add_parser("simulate", help="closed-loop simulation with the configured policy")
    add_common(p)
    p.add_argument("--frames", type=int, default=None, help="override the config frame count")
    p.add_argument("--trace", type=int, default=DEFAULT_TRACE_STRIDE,
                   help="record every Nth frame in trace.csv")

    p = sub.add_parser("sweep", help="rerun the simulation across backlog thresholds")
    add_common(p)
    p.add_argument("--policy", choices=("icp", "rcp"), required=True)
    p.add_argument("--thresholds", type=_int_list, required=True,
                   help="comma-separated backlog thresholds, e.g. 25,35,45")
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--pc", type=float, default=None,
                   help="critical retransmission probability for rcp (default: from config)")
    return parser


class _Run:
    """Collects artifacts and writes the manifest for one CLI invocation."""

    def __init__(self, args: argparse.Namespace, settings: RunSettings, seed: int):
        self.args = args
        self.settings = settings
        self.seed = seed
        self.out_dir = Path(args.out)
        self.artifacts: list[dict[str, str]] = []

    def write(self, name: str, text: str) -> None:
        path = self.out_dir / name
        data = text.encode("utf-8")
        path.write_bytes(data)
        self.artifacts.append({"name": name, "sha256": hashlib.sha256(data).hexdigest()})

    def header(self, *extra: str) -> list[str]:
        return [f"config: {config_summary(self.settings.channel)}", f"seed: {self.seed}", *extra]

    def finish(self, status: str, error: str | None = None) -> None:
        flags = {
            k: v for k, v in sorted(vars(self.args).items())
            if k not in ("command", "config", "out") and v is not None
        }
        manifest = {
            "command": self.args.command,
            "config": str(self.args.config),
            "out": str(self.out_dir),
            "seed": self.seed,
            "flags": flags,
            "artifacts": self.artifacts,
            "status": status,
        }
        if error is not None:
            manifest["error"] = error
        text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        (self.out_dir / "manifest.json").write_text(text, encoding="utf-8")


def _obtain_curve(run: _Run):
    """Load the curve named on the command line, or build one."""
    args = run.args
    if args.curve is not None:
        curve = curve_from_csv(Path(args.curve).read_text(encoding="utf-8"))
        check_fingerprint(curve, run.settings.channel)
        return curve, False
    g_max = args.gmax if args.gmax is not None else default_g_max(run.settings.channel)
    curve = build_plr_curve(
        run.settings.channel, g_max=g_max, grid_step=args.step,
        trials=args.trials, seed=run.seed,
    )
    return curve, True


def _cmd_plr(run: _Run) -> None:
    curve, built = _obtain_curve(run)
    run.write("plr_curve.csv", curve_to_csv(curve, seed=run.seed if built else None))
    if not covers_saturation_branch(curve):
        print("warning: grid ends less than 3x past the peak-throughput load; "
              "the saturation branch may be cut off", file=sys.stderr)


def _cmd_contour(run: _Run) -> None:
    curve, built = _obtain_curve(run)
    if built:
        run.write("plr_curve.csv", curve_to_csv(curve, seed=run.seed))
    contour, _, _ = analyze_parts(curve, run.settings.channel)
    run.write("contour.csv", contour_to_csv(contour, run.header()))


def _cmd_classify(run: _Run) -> None:
    curve, built = _obtain_curve(run)
    if built:
        run.write("plr_curve.csv", curve_to_csv(curve, seed=run.seed))
    _, equilibria, channel_class = analyze_parts(curve, run.settings.channel)
    run.write("equilibria.csv", equilibria_to_csv(equilibria, run.header()))
    summary = (f"{channel_class.kind.value} "
               f"({len(channel_class.equilibria)} equilibria)")
    run.write("classification.txt", summary + "\n")
    print(summary)


def _cmd_simulate(run: _Run) -> None:
    args, settings = run.args, run.settings
    frames = args.frames if args.frames is not None else settings.frames
    metrics = run_simulation(
        settings.channel, settings.policy, frames=frames,
        seed=run.seed, trace_stride=args.trace,
    )
    header = run.header(f"frames: {frames} policy: {settings.policy}")
    run.write("metrics.csv", metrics_to_csv(metrics, header))
    run.write("trace.csv", trace_to_csv(metrics, header))
    print(f"avg_throughput={metrics.avg_throughput:.6g} "
          f"percent_critical={metrics.percent_critical:.6g} "
          f"final_n_b={metrics.final_n_b}")


def _cmd_sweep(run: _Run) -> None:
    args, settings = run.args, run.settings
    frames = args.frames if args.frames is not None else settings.frames
    critical = args.pc
    if critical is None and isinstance(settings.policy, Rcp):
        critical = settings.policy.critical_retx_prob
    rows = sweep_threshold(
        settings.channel, args.policy, args.thresholds, frames=frames,
        seed=run.seed, critical_retx_prob=critical,
    )
    header = run.header(f"frames: {frames} policy: {args.policy}")
    run.write("sweep.csv", sweep_to_csv(rows, header))


_HANDLERS = {
    "plr": _cmd_plr,
    "contour": _cmd_contour,
    "classify": _cmd_classify,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings(args.config)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "sweep" and args.policy == "rcp":
        if args.pc is None and not isinstance(settings.policy, Rcp):
            print("config error: rcp sweep needs p_c (config key or --pc)", file=sys.stderr)
            return 2

    seed = args.seed if args.seed is not None else settings.seed
    run = _Run(args, settings, seed)
    run.out_dir.mkdir(parents=True, exist_ok=True)

    if args.command in ("plr", "contour", "classify") and args.curve is not None:
        # Curve compatibility is a configuration problem, not a runtime one:
        # report it before anything is written.
        try:
            curve = curve_from_csv(Path(args.curve).read_text(encoding="utf-8"))
            check_fingerprint(curve, settings.channel)
        except (OSError, ValueError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2

    try:
        _HANDLERS[args.command](run)
    except Exception as exc:  # noqa: BLE001 - boundary: report, record, exit 1
        print(f"error: {exc}", file=sys.stderr)
        run.finish("failed", error=str(exc))
        return 1
    run.finish("ok")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
