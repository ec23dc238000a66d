import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from providers import get_source
from superchannel import __version__
from superchannel.config import ExperimentConfig, emit_config, parse_config, render_reference, with_overrides
from superchannel.errors import ConfigError, SimulationError
from superchannel.harness import (
    calibrate_awgn,
    plan_superchannel,
    run_channel_sweep,
    run_constellation_compare,
    run_fm_noise_report,
    run_spectrum_report,
    usable_span,
)
from superchannel.reporting import (
    write_manifest,
    write_psd_csv,
    write_rows,
    write_spectrum_csv,
    write_sweep_csv,
    write_symbols_csv,
)
from superchannel.waveio import write_waveform

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CHANNEL_FAILED = 2


def _setup_logging(verbose: bool) -> None:
    level = "DEBUG" if verbose else os.getenv("LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _parse_channels(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad channel list {text!r}") from e


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = parse_config(args.config) if args.config else ExperimentConfig()
    channels = tuple(args.channels) if getattr(args, "channels", None) is not None else None
    return with_overrides(cfg, master_seed=args.seed, channels=channels)


# ----------------------------
# Subcommands
# ----------------------------

def cmd_sweep(args: argparse.Namespace, cfg: ExperimentConfig, out: Path) -> int:
    source = get_source(args.source)
    report = run_channel_sweep(cfg, source=source, threads=args.threads, keep_waveforms=args.dump_waveforms)
    write_sweep_csv(out / "sweep.csv", report.outcomes)
    if args.dump_waveforms:
        for o in report.outcomes:
            if o.detected is not None:
                write_waveform(out / "waveforms" / f"channel_{o.channel:02d}.ccs1", o.detected)
    write_manifest(out / "manifest.json", "sweep", emit_config(cfg), report.outcomes, {"source": report.source_name})

    for o in report.outcomes:
        if o.ok:
            print(f"channel {o.channel:2d}  BER {o.record.ber:.3e}  {o.record.fec_class.name}")
        else:
            print(f"channel {o.channel:2d}  FAILED  {o.error}")
    return EXIT_CHANNEL_FAILED if report.failed else EXIT_OK


def cmd_constellation(args: argparse.Namespace, cfg: ExperimentConfig, out: Path) -> int:
    channel = args.channels[0] if args.channels else None
    cmp = run_constellation_compare(cfg, get_source("comb"), get_source("dfb"), channel)
    rows = []
    for label, outcome, clusters in (
        ("referenced", cmp.referenced, cmp.referenced_clusters),
        ("free_running", cmp.free_running, cmp.free_running_clusters),
    ):
        if outcome.ok:
            write_symbols_csv(out / f"constellation_{label}.csv", outcome.symbols)
            rows.append([label, outcome.record.ber, outcome.record.fec_class.name, clusters])
            print(f"{label:13s} BER {outcome.record.ber:.3e}  resolved clusters {clusters}/{cfg.modem.m}")
        else:
            rows.append([label, "", "ERROR", clusters])
            print(f"{label:13s} FAILED  {outcome.error}")
    write_rows(out / "constellation_summary.csv", ("case", "ber", "fec_class", "resolved_clusters"), rows)
    write_manifest(out / "manifest.json", "constellation", emit_config(cfg), [cmp.referenced, cmp.free_running], {"channel": cmp.channel})
    failed = not (cmp.referenced.ok and cmp.free_running.ok)
    return EXIT_CHANNEL_FAILED if failed else EXIT_OK


def cmd_fmnoise(args: argparse.Namespace, cfg: ExperimentConfig, out: Path) -> int:
    report = run_fm_noise_report(cfg)
    for name, estimate in report.estimates.items():
        write_psd_csv(out / f"fm_{name}.csv", estimate)
    write_rows(
        out / "fm_floors.csv",
        ("source", "h0", "linewidth_hz"),
        [[name, level, report.linewidth_hz(name)] for name, level in report.floors.items()],
    )
    write_manifest(out / "manifest.json", "fmnoise", emit_config(cfg))
    for name, level in report.floors.items():
        print(f"{name:14s} h0 {level:.4g} Hz^2/Hz  linewidth {report.linewidth_hz(name):.4g} Hz")
    return EXIT_OK


def cmd_spectrum(args: argparse.Namespace, cfg: ExperimentConfig, out: Path) -> int:
    channel = args.channels[0] if args.channels else None
    for name, spectrum in run_spectrum_report(cfg, channel).items():
        write_spectrum_csv(out / f"spectrum_{name}.csv", spectrum)
    write_manifest(out / "manifest.json", "spectrum", emit_config(cfg))
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace, cfg: ExperimentConfig, out: Path) -> int:
    points = calibrate_awgn(cfg)
    write_rows(out / "calibration.csv", ("snr_db", "ber", "analytic_ber", "gap_db", "bits", "errors"), [[p.snr_db, p.ber, p.analytic_ber, p.gap_db, p.bits, p.errors] for p in points])
    write_manifest(out / "manifest.json", "calibrate-awgn", emit_config(cfg))
    for p in points:
        print(f"{p.snr_db:6.2f} dB  BER {p.ber:.3e}  analytic {p.analytic_ber:.3e}  gap {p.gap_db:+.2f} dB")
    return EXIT_OK


def cmd_plan(args: argparse.Namespace, cfg: ExperimentConfig, out: Path) -> int:
    span = args.span_hz if args.span_hz is not None else usable_span(cfg.comb.fsr_hz, cfg.comb.n_lines)
    fsr_list = args.fsr or [cfg.comb.fsr_hz]
    rows = plan_superchannel(span, fsr_list, cfg.modem, polarizations=args.polarizations)
    write_rows(out / "plan.csv", ("fsr_hz", "n_lines", "usable_span_hz", "aggregate_rate_bps", "baud_fits"), rows)
    print(f"usable span {span / 1e9:g} GHz")
    for r in rows:
        print(f"FSR {r.fsr_hz / 1e9:6g} GHz  lines {r.n_lines:3d}  span {r.usable_span_hz / 1e9:g} GHz  {r.aggregate_rate_bps / 1e9:g} Gbit/s{'' if r.baud_fits else '  (baud exceeds FSR)'}")
    return EXIT_OK


def cmd_reference(args: argparse.Namespace, cfg: ExperimentConfig, out: Path) -> int:
    path = out / "experiment.reference.conf"
    path.write_text(render_reference(), encoding="utf-8")
    print(path)
    return EXIT_OK


COMMANDS = {
    "sweep": cmd_sweep,
    "constellation": cmd_constellation,
    "fmnoise": cmd_fmnoise,
    "spectrum": cmd_spectrum,
    "calibrate-awgn": cmd_calibrate,
    "plan": cmd_plan,
    "config-reference": cmd_reference,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file (dotted key = value)")
    common.add_argument("--seed", type=int, help="override master_seed")
    common.add_argument("--out", default="./tmp/runs", help="output directory (default ./tmp/runs)")
    common.add_argument("--channels", type=_parse_channels, help="comma separated comb line indices")
    common.add_argument("--threads", type=int, default=1, help="channels run concurrently")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="superchannel", description="Comb-referenced superchannel simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", parents=[common], help="BER per demultiplexed comb line")
    sweep.add_argument("--source", help="carrier source: comb or dfb (default: env CARRIER_SOURCE or comb)")
    sweep.add_argument("--dump-waveforms", action="store_true", help="write each channel's detected waveform (CCS1)")
    sub.add_parser("constellation", parents=[common], help="comb-referenced vs free-running constellations")
    sub.add_parser("fmnoise", parents=[common], help="FM-noise spectra of master, comb lines, DFB and fiber laser")
    sub.add_parser("spectrum", parents=[common], help="optical spectra of the comb and a demultiplexed line")
    sub.add_parser("calibrate-awgn", parents=[common], help="BER vs SNR against the analytic curve")
    plan = sub.add_parser("plan", parents=[common], help="usable span and FSR retuning")
    plan.add_argument("--span-hz", type=float, help="target usable span (default: configured comb)")
    plan.add_argument("--fsr", type=float, action="append", help="candidate FSR in Hz; repeatable")
    plan.add_argument("--polarizations", type=int, choices=(1, 2), default=1, help="polarizations per carrier (default 1)")
    sub.add_parser("config-reference", parents=[common], help="write the documented default config")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        cfg = _load_config(args)
    except ConfigError as e:
        logger.error(f"Config error: {e}")
        return EXIT_USAGE
    if args.threads < 1:
        logger.error("--threads must be >= 1")
        return EXIT_USAGE

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    logger.info(f"superchannel {__version__}: {args.command} -> {out}")
    try:
        return COMMANDS[args.command](args, cfg, out)
    except SimulationError as e:
        logger.exception(f"{args.command} failed: {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
