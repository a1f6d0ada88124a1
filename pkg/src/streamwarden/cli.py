"""Command line entry point.

Subcommands: fit, calibrate, run, pilot, hybrid, report, synth. Every
subcommand takes --config (a JSON run configuration); --seed and --workers
override the config values, --out redirects the output artifact. Exit
codes: 0 success, 1 usage/config error, 2 data error, 3 judge-endpoint
failure.
"""

import argparse
import sys
from pathlib import Path

from streamwarden import harness, reporting
from streamwarden.abstraction import save_artifact
from streamwarden.errors import StreamwardenError
from streamwarden.harness import RunConfig
from streamwarden.hybrid import EnsembleSpec, bagging_fit
from streamwarden.synth import SynthConfig, generate_dataset
from streamwarden.traces import write_trace_file


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="streamwarden", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("fit", "fit white-box artifacts (boxes, cluster centers) from safe traces"),
        ("calibrate", "calibrate per-(task, model) thresholds"),
        ("run", "run the full benchmark and emit a metric report"),
        ("pilot", "prefix feasibility analysis over the configured fractions"),
        ("hybrid", "run the configured ensembles"),
        ("report", "re-render a saved JSON report"),
        ("synth", "generate a synthetic trace fixture"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--workers", type=int, default=None, help="override config workers")
        p.add_argument("--out", default=None, help="output path")
        if name in ("run", "pilot", "hybrid", "report"):
            p.add_argument(
                "--format",
                choices=reporting.REPORT_FORMATS,
                default=None,
                help="report format (default: config.report.format or table)",
            )
        if name == "report":
            p.add_argument(
                "--input", default=None, help="saved JSON report (default: config.report.path)"
            )
    return parser


def load_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.workers is not None:
        config.workers = args.workers
    return config


def cmd_fit(args, config: RunConfig) -> int:
    run = harness.BenchmarkRun(config)
    run.load_datasets()
    run.prepare_artifacts(force_fit=True)
    out_dir = Path(args.out) if args.out else Path(".")
    bagging_specs = [
        EnsembleSpec(**spec)
        for spec in config.ensembles
        if spec.get("strategy") == "bagging"
    ]
    if not run.artifacts and not bagging_specs:
        print("no white-box monitors or bagging ensembles configured; nothing to fit", file=sys.stderr)
        return 1
    for name, artifact in run.artifacts.items():
        params = config.monitors.get(name) or {}
        default = out_dir / ("box.json" if name == "box" else "kmeans.json")
        path = config.resolve(params.get("artifact")) if params.get("artifact") else default
        save_artifact(artifact, path)
        print(f"wrote {name} artifact: {path}")
    for spec in bagging_specs:
        base_params = dict(config.monitors.get(spec.base) or {})
        base_params.pop("artifact", None)
        base_params.pop("threshold", None)
        instances = bagging_fit(
            spec.base,
            run.construction_matrix(),
            n_instances=spec.n_instances,
            subsample_fraction=spec.subsample_fraction,
            seed=config.seed if spec.seed == 0 else spec.seed,
            with_replacement=spec.with_replacement,
            **base_params,
        )
        for i, instance in enumerate(instances):
            path = out_dir / f"{spec.name}_{i}.json"
            save_artifact(instance, path)
        print(f"wrote {len(instances)} {spec.name} instances: {out_dir}")
    return 0


def cmd_calibrate(args, config: RunConfig) -> int:
    thresholds = harness.calibrate_all(config)
    out = Path(args.out) if args.out else Path("thresholds.json")
    harness.save_thresholds(thresholds, out)
    print(f"wrote thresholds: {out}")
    return 0


def _report_settings(args, config: RunConfig, use_config_path: bool = True) -> tuple[str, Path | None]:
    fmt = args.format or config.report.get("format", "table")
    # config.report.path belongs to `run`; pilot/hybrid would clobber it
    path = args.out or (config.report.get("path") if use_config_path else None)
    return fmt, Path(path) if path else None


def cmd_run(args, config: RunConfig) -> int:
    reports = harness.run_benchmark(config)
    fmt, path = _report_settings(args, config)
    text = reporting.emit_report(reports, format=fmt, path=path)
    if path is not None:
        print(f"wrote report: {path}")
    else:
        print(text, end="")
    return 0


def cmd_pilot(args, config: RunConfig) -> int:
    prefix_reports = harness.pilot_prefix_analysis(config)
    fmt, path = _report_settings(args, config, use_config_path=False)
    text = reporting.emit_prefix_report(prefix_reports, format=fmt, path=path)
    if path is not None:
        print(f"wrote prefix report: {path}")
    else:
        print(text, end="")
    return 0


def cmd_hybrid(args, config: RunConfig) -> int:
    reports = harness.run_ensembles(config)
    fmt, path = _report_settings(args, config, use_config_path=False)
    text = reporting.emit_report(reports, format=fmt, path=path)
    if path is not None:
        print(f"wrote report: {path}")
    else:
        print(text, end="")
    return 0


def cmd_report(args, config: RunConfig) -> int:
    source = args.input or config.report.get("path")
    if not source:
        print("report: no saved report given (--input or config.report.path)", file=sys.stderr)
        return 1
    reports = reporting.parse_report_json(Path(source).read_text(encoding="utf-8"))
    fmt = args.format or "table"
    out = Path(args.out) if args.out else None
    text = reporting.emit_report(reports, format=fmt, path=out)
    if out is not None:
        print(f"wrote report: {out}")
    else:
        print(text, end="")
    return 0


def cmd_synth(args, config: RunConfig) -> int:
    synth_cfg = SynthConfig(**config.synth)
    if args.seed is not None:
        synth_cfg.seed = args.seed
    dataset = generate_dataset(synth_cfg)
    out = Path(args.out) if args.out else Path("synthetic.jsonl")
    write_trace_file(dataset, out)
    n_unsafe = sum(1 for t in dataset if t.label == "UNSAFE")
    print(f"wrote {len(dataset)} traces ({n_unsafe} unsafe): {out}")
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "calibrate": cmd_calibrate,
    "run": cmd_run,
    "pilot": cmd_pilot,
    "hybrid": cmd_hybrid,
    "report": cmd_report,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        return COMMANDS[args.command](args, config)
    except StreamwardenError as exc:
        print(f"streamwarden {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
