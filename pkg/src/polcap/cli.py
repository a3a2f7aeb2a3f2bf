"""Command-line interface: ``polcap {twirl,scan,fit,capacity,reproduce}``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 reproduction assertion failure.
"""
from __future__ import annotations

import argparse
import json
import secrets
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .analyzer import AnalyzerModel
from .capacity import ChannelMatrixError, ClassicalChannelMatrix, blahut_arimoto
from .channel import ChannelModel, twirl_exact, twirl_monte_carlo
from .config import ConfigError, RunConfig, load_config
from .experiment import (
    DipFit,
    FitError,
    ReductionError,
    ScanRecord,
    default_delays,
    fit_gaussian_pair,
    invert_indistinguishability,
    label_seed,
    reduce_to_channel,
    run_pipeline,
    simulate_scan,
)
from .qstate import LABELS, InvalidStateError, load_state, make_named_state, matrix_to_json

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ASSERT = 0, 2, 3, 4
PANELS = {"parallel": "a", "orthogonal": "b", "triplet-plus": "c", "singlet": "d"}
IDEAL_SEPARABLE_BITS = float(np.log2(5 / 4))
IDEAL_ENTANGLED_BITS = 1.0


class UsageError(Exception):
    pass


class AssertionFailure(Exception):
    pass


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _seed_arg(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _resolve(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = cfg["seed"]
    if seed is None:
        seed = secrets.randbits(63)
        print(f"seed = {seed} (chosen at random; pass --seed to reproduce)", file=sys.stderr)
    over = {"seed": seed}
    if getattr(args, "trials", None) is not None:
        over["trials_per_point"] = args.trials
    return cfg.with_overrides(**over)


def _provenance(cfg: RunConfig) -> dict:
    return {"seed": cfg["seed"], "config_hash": cfg.digest(), "polcap_version": __version__}


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None


def _fmt_matrix(m) -> str:
    rows = []
    for row in np.asarray(m):
        rows.append("  ".join(f"{z.real:+.6f}{z.imag:+.6f}j" for z in row))
    return "\n".join(rows)


def cmd_twirl(args) -> int:
    if args.state_file:
        rho = load_state(args.state_file)
        source = str(args.state_file)
    else:
        rho = make_named_state(args.state)
        source = args.state
    if args.mc:
        cfg = _resolve(args)
        base = cfg.channel()
        model = ChannelModel(
            regime="monte-carlo",
            coherence_time=base.coherence_time,
            pulse_separation=base.pulse_separation,
            decorrelation_angle_std=args.decorrelation if args.decorrelation is not None else base.decorrelation_angle_std,
            mc_samples=args.samples or base.mc_samples,
            rng_seed=cfg["seed"],
        )
        res = twirl_monte_carlo(rho, model, workers=args.workers)
        prov = _provenance(cfg)
    else:
        res = twirl_exact(rho)
        prov = {}
    print(f"input: {source}")
    print(f"F = {res.singlet_weight:.6f}  (samples: {res.sample_count})")
    print(_fmt_matrix(res.state.matrix))
    doc = {
        "singlet_weight": res.singlet_weight,
        "sample_count": res.sample_count,
        "state": matrix_to_json(res.state),
        **prov,
    }
    text = json.dumps(doc, indent=2)
    if args.json:
        _write(Path(args.json), text + "\n")
    else:
        print(text)
    return EXIT_OK


def _delays(cfg: RunConfig, analyzer: AnalyzerModel):
    return default_delays(analyzer, cfg["delay_points"], cfg["delay_span_fwhm"])


def cmd_scan(args) -> int:
    cfg = _resolve(args)
    analyzer = cfg.analyzer()
    scan = simulate_scan(
        args.label, cfg.channel(), analyzer, _delays(cfg, analyzer), cfg["trials_per_point"],
        label_seed(cfg["seed"], args.label),
    )
    scan = ScanRecord(
        scan.input_label, scan.delays, scan.singlet_counts, scan.triplet_counts, scan.trials_per_point,
        cfg["seed"], {"config_hash": cfg.digest()},
    )
    _write(Path(args.out), scan.to_csv())
    i_s = int(np.argmin(scan.singlet_counts)) if args.label != "singlet" else int(np.argmax(scan.singlet_counts))
    print(f"wrote {args.out}: {scan.delays.size} delays, {scan.trials_per_point} trials/point")
    print(f"singlet counts: min {scan.singlet_counts.min()}  max {scan.singlet_counts.max()}")
    print(f"triplet counts: min {scan.triplet_counts.min()}  max {scan.triplet_counts.max()}")
    print(f"singlet extremum at delay {scan.delays[i_s]:.4g} s")
    return EXIT_OK


def _read_scan(path) -> ScanRecord:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return ScanRecord.from_csv(text)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def cmd_fit(args) -> int:
    scan = _read_scan(args.scan)
    if (args.center is None) != (args.width is None):
        raise UsageError("--center and --width must be given together")
    fit = fit_gaussian_pair(scan, args.center, args.width)
    e = fit.stderr
    print(f"input: {fit.input_label}")
    for k in ("baseline_singlet", "baseline_triplet", "visibility_singlet", "visibility_triplet", "center", "width"):
        print(f"{k:20s} {getattr(fit, k):+.6g} +/- {e.get(k, 0.0):.2g}")
    print(f"{'chi2/dof':20s} {fit.fit_residual:.4g}")
    out = Path(args.out) if args.out else Path(args.scan).with_suffix(".fit.json")
    _write(out, fit.to_json() + "\n")
    print(f"wrote {out}")
    return EXIT_OK


def _read_fit(path) -> DipFit:
    try:
        return DipFit.from_json(Path(path).read_text())
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc.strerror}") from None
    except (json.JSONDecodeError, TypeError) as exc:
        raise ValueError(f"{path}: not a fit JSON file ({exc})") from None


def cmd_capacity(args) -> int:
    if args.channel:
        try:
            text = Path(args.channel).read_text()
        except OSError as exc:
            raise ValueError(f"cannot read {args.channel}: {exc.strerror}") from None
        ch = ClassicalChannelMatrix.from_csv(text)
    else:
        ch = reduce_to_channel(_read_fit(args.fits[0]), _read_fit(args.fits[1])).matrix
    res = blahut_arimoto(ch, tol=args.tol)
    print(f"capacity = {res.capacity_bits:.6f} bits per pair")
    print("optimal prior = " + ", ".join(f"{p:.6f}" for p in res.optimal_prior))
    print(f"bracket residual = {res.residual:.3g} bits after {res.iterations} iterations")
    doc = {**res.to_dict(), "channel": ch.p.tolist(), "outcomes": list(ch.outcomes)}
    if args.out:
        _write(Path(args.out), json.dumps(doc, indent=2) + "\n")
    return EXIT_OK if res.converged else EXIT_DATA


def _plot_files(out: Path, scan: ScanRecord, fit: DipFit) -> None:
    panel = PANELS[scan.input_label]
    fine = np.linspace(scan.delays[0], scan.delays[-1], 401)
    fs, ft = fit.curves(fine)
    for name, counts, curve in (("singlet", scan.singlet_counts, fs), ("triplet", scan.triplet_counts, ft)):
        rows = [f"{float(d)!r} {int(c)} {np.sqrt(max(c, 1)):.6g}" for d, c in zip(scan.delays, counts)]
        _write(out / f"fig2{panel}_{name}.dat", f"# delay_s {name}_counts stderr\n" + "\n".join(rows) + "\n")
        rows = [f"{float(d)!r} {y:.8g}" for d, y in zip(fine, curve)]
        _write(out / f"fig2{panel}_{name}_fit.dat", f"# delay_s {name}_fit\n" + "\n".join(rows) + "\n")


def cmd_reproduce(args) -> int:
    cfg = _resolve(args)
    out = Path(args.out or cfg["output_dir"])
    channel = cfg.channel()
    base = cfg.analyzer()
    prov = _provenance(cfg)
    if args.case == "ideal":
        targets = {"separable": IDEAL_SEPARABLE_BITS, "entangled": IDEAL_ENTANGLED_BITS}
        tol = cfg["ideal_tolerance_bits"]
        analyzers = {
            ens: AnalyzerModel(**{**asdict(base), "indistinguishability_max": 1.0, "detector_efficiency": 1.0,
                                  "accidental_rate": 0.0})
            for ens in targets
        }
        note = "ideal source and detectors"
    else:
        targets = {"separable": cfg["target_separable_bits"], "entangled": cfg["target_entangled_bits"]}
        tol = cfg["experimental_tolerance_bits"]
        analyzers = {}
        for ens, tgt in targets.items():
            m0 = invert_indistinguishability(tgt, ens, channel, base)
            analyzers[ens] = AnalyzerModel(**{**asdict(base), "indistinguishability_max": m0})
        note = "oracle-inverted visibilities: m0 per ensemble solved from the target capacity"

    rows = []
    summary = {"case": args.case, "note": note, **prov, "ensembles": {}}
    for ens, tgt in targets.items():
        an = analyzers[ens]
        res = run_pipeline(ens, channel, an, _delays(cfg, an), cfg["trials_per_point"], cfg["seed"])
        for scan, fit in zip(res.scans, res.fits):
            tagged = ScanRecord(scan.input_label, scan.delays, scan.singlet_counts, scan.triplet_counts,
                                scan.trials_per_point, cfg["seed"],
                                {"config_hash": prov["config_hash"]})
            _write(out / f"scan_{scan.input_label}.csv", tagged.to_csv())
            _write(out / f"fit_{scan.input_label}.json", fit.to_json() + "\n")
            _plot_files(out, scan, fit)
        _write(out / f"channel_{ens}.csv", res.reduced.matrix.to_csv())
        cap = res.capacity.capacity_bits
        _write(out / f"capacity_{ens}.json", json.dumps({**res.capacity.to_dict(), **prov}, indent=2) + "\n")
        ok = abs(cap - tgt) <= tol
        rows.append((ens, cap, tgt, tol, ok))
        summary["ensembles"][ens] = {
            "capacity_bits": cap, "expected_bits": tgt, "tolerance_bits": tol, "pass": ok,
            "indistinguishability_max": an.indistinguishability_max,
            "channel": res.reduced.matrix.p.tolist(),
        }
    _write(out / "summary.json", json.dumps(summary, indent=2) + "\n")

    print(f"reproduce {args.case}  (seed {cfg['seed']}, config {prov['config_hash']})")
    print(f"{'ensemble':10s} {'measured':>10s} {'expected':>10s} {'tol':>6s}  result")
    for ens, cap, tgt, t, ok in rows:
        print(f"{ens:10s} {cap:10.6f} {tgt:10.6f} {t:6.3f}  {'PASS' if ok else 'FAIL'}")
    print(f"artifacts in {out}")
    if not all(r[4] for r in rows):
        raise AssertionFailure("measured capacities outside tolerance")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polcap", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, trials=False):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--seed", type=_seed_arg, help="random seed (default: config, else random)")
        if trials:
            sp.add_argument("--trials", type=_positive_int, help="pump pulses per delay point")

    sp = sub.add_parser("twirl", help="send a state through the collective channel")
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--state", choices=LABELS)
    g.add_argument("--state-file", help="JSON 4x4 matrix of [re, im] pairs")
    sp.add_argument("--mc", action="store_true", help="Monte Carlo twirl instead of the exact average")
    sp.add_argument("--samples", type=_positive_int)
    sp.add_argument("--decorrelation", type=float, help="decorrelation angle std (rad)")
    sp.add_argument("--workers", type=_positive_int, default=1)
    sp.add_argument("--json", help="write the result JSON here instead of stdout")
    common(sp)
    sp.set_defaults(func=cmd_twirl)

    sp = sub.add_parser("scan", help="simulate coincidences versus delay")
    sp.add_argument("label", choices=LABELS)
    sp.add_argument("--out", required=True)
    common(sp, trials=True)
    sp.set_defaults(func=cmd_scan)

    sp = sub.add_parser("fit", help="fit a shared-width Gaussian pair to a scan CSV")
    sp.add_argument("scan")
    sp.add_argument("--out")
    sp.add_argument("--center", type=float, help="fix the dip center (s)")
    sp.add_argument("--width", type=float, help="fix the dip rms width (s)")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("capacity", help="capacity of a channel matrix or of two fits")
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--channel", help="CSV, header 'singlet,triplet', one row per input")
    g.add_argument("--fits", nargs=2, metavar=("FIT0", "FIT1"))
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_capacity)

    sp = sub.add_parser("reproduce", help="full pipeline for both input ensembles")
    sp.add_argument("case", choices=("ideal", "experimental"))
    sp.add_argument("--out", help="artifact directory (default: config output_dir)")
    common(sp, trials=True)
    sp.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"polcap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AssertionFailure as exc:
        print(f"polcap: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except (InvalidStateError, ChannelMatrixError, FitError, ReductionError, ValueError, OSError) as exc:
        print(f"polcap: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
