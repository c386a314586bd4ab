"""Command-line entry point: ``pairsmooth {train,eval,sweep,gradcheck}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import evaluation as ev
from . import nn
from .config import load_config
from .data import Batch, ConfigError, one_hot
from .gradcheck import gradient_check
from .smoothing import TargetStrategy
from .tensor import DimensionError
from .train import train

log = logging.getLogger("pairsmooth")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def _report_files(out_dir, prefix, report, provenance, figures, title):
    hist = os.path.join(out_dir, f"{prefix}hist.csv")
    ev.write_histogram_csv(report, hist, provenance)
    if report.bins:
        ev.write_ece_csv(report, os.path.join(out_dir, f"{prefix}ece_bins.csv"), provenance)
    if figures:
        from .plotting import histogram_figure

        histogram_figure(hist, os.path.join(out_dir, f"{prefix}hist.png"), title)


def _temperature_summary(cfg, model, calib, test):
    grid = cfg.eval.get("temperature_grid", ev.DEFAULT_TEMPERATURE_GRID)
    bins = cfg.eval.get("num_bins", 15)
    t = ev.temperature_search(model, calib, grid, bins)
    before = ev.evaluate(model, test, bins)
    after = ev.evaluate(model, test, bins, temperature=t)
    return {"temperature": t, "ece_before": before.ece, "ece_after": after.ece,
            "error_before": before.error_rate, "error_after": after.error_rate}


def run_experiment(cfg, out_dir, figures=False):
    """Train, evaluate and write every artifact for one config; returns the summary."""
    provenance = cfg.provenance()
    train_set, calib, test = cfg.load_data()
    tcfg = cfg.train_config()
    model, runlog = train(tcfg, train_set, val=calib)

    os.makedirs(out_dir, exist_ok=True)
    ckpt = os.path.join(out_dir, "checkpoint.json")
    nn.save_checkpoint(model, ckpt, provenance)
    runlog.checkpoint = ckpt
    runlog_path = os.path.join(out_dir, "runlog.csv")
    with open(runlog_path, "w") as f:
        f.write(runlog.to_csv(provenance))

    e = cfg.eval
    report = ev.evaluate(model, test, e.get("num_bins", 15), e.get("bin_width", 0.05),
                         e.get("min_score", 0.0))
    _report_files(out_dir, "", report, provenance, figures, tcfg.strategy.label())
    summary = {"strategy": tcfg.strategy.to_dict(), "test": report.summary(),
               "temperature_scaling": _temperature_summary(cfg, model, calib, test)}
    if "ood" in e:
        ood = ev.ood_report(model, cfg.load_ood(), e.get("bin_width", 0.05), e.get("min_score", 0.0))
        _report_files(out_dir, "ood_", ood, provenance, figures, f"{tcfg.strategy.label()} (OOD)")
        summary["ood"] = ood.summary()
    ev.write_json(summary, os.path.join(out_dir, "report.json"), provenance)
    if figures:
        from .plotting import runlog_figure

        runlog_figure(runlog_path, os.path.join(out_dir, "runlog.png"))
    return summary


def cmd_train(args):
    cfg = load_config(args.config)
    summary = run_experiment(cfg, args.out, args.figures)
    t = summary["test"]
    print(f"test error {t['error_rate']:.4f}  ece {t['ece']:.4f}  "
          f"median winning score {t['median_winning_score']:.3f}")
    return EXIT_OK


def _sweep_value(cfg, axis, value):
    if axis == "strategy":
        s = TargetStrategy.parse(value)
        return cfg.with_strategy(**{"kind": s.kind, "alpha": s.alpha, "w": s.w, "lam": s.lam})
    try:
        x = float(value)
    except ValueError:
        raise ConfigError(f"{axis} values must be numbers, got {value!r}") from None
    return cfg.with_strategy(**{axis: x})


def cmd_sweep(args):
    cfg = load_config(args.config)
    if not args.values:
        raise ConfigError("sweep needs at least one value")
    runs = [(v, _sweep_value(cfg, args.axis, v)) for v in args.values]
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for i, (value, run_cfg) in enumerate(runs):
        summary = run_experiment(run_cfg, os.path.join(args.out, f"run{i:02d}"), args.figures)
        rows.append((value, repr(summary["test"]["error_rate"]), repr(summary["test"]["ece"])))
        print(f"{args.axis}={value}: error {summary['test']['error_rate']:.4f}")
    sweep_csv = os.path.join(args.out, "sweep.csv")
    ev.write_csv(sweep_csv, ["value", "final_error", "final_ece"], rows,
                  {**cfg.provenance(), "axis": args.axis})
    if args.figures:
        from .plotting import sweep_figure

        sweep_figure(sweep_csv, os.path.join(args.out, "sweep.png"), args.axis)
    return EXIT_OK


def cmd_eval(args):
    cfg = load_config(args.config)
    try:
        model = nn.load_checkpoint(args.checkpoint)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load checkpoint {args.checkpoint}: {exc}") from None
    _, calib, test = cfg.load_data()
    if model.input_dim != test.dim or model.num_classes != test.num_classes:
        raise ConfigError(
            f"checkpoint expects {model.input_dim} features / {model.num_classes} classes, "
            f"dataset has {test.dim} / {test.num_classes}"
        )
    provenance = cfg.provenance()
    e = cfg.eval
    os.makedirs(args.out, exist_ok=True)
    report = ev.evaluate(model, test, e.get("num_bins", 15), e.get("bin_width", 0.05),
                         e.get("min_score", 0.0))
    summary = {"error_rate": report.error_rate}
    if args.ece:
        summary["ece"] = report.ece
        ev.write_ece_csv(report, os.path.join(args.out, "ece_bins.csv"), provenance)
    if args.hist:
        summary.update(report.summary())
        path = os.path.join(args.out, "hist.csv")
        ev.write_histogram_csv(report, path, provenance)
        if args.figures:
            from .plotting import histogram_figure

            histogram_figure(path, os.path.join(args.out, "hist.png"))
    if args.temperature:
        summary["temperature_scaling"] = _temperature_summary(cfg, model, calib, test)
    if args.ood:
        ood = ev.ood_report(model, cfg.load_ood(), e.get("bin_width", 0.05), e.get("min_score", 0.0))
        summary["ood"] = ood.summary()
        path = os.path.join(args.out, "ood_hist.csv")
        ev.write_histogram_csv(ood, path, provenance)
        if args.figures:
            from .plotting import histogram_figure

            histogram_figure(path, os.path.join(args.out, "ood_hist.png"), "OOD")
    ev.write_json(summary, os.path.join(args.out, "summary.json"), provenance)
    print(f"test error {report.error_rate:.4f}")
    return EXIT_OK


def cmd_gradcheck(args):
    names = args.strategy or ["Baseline", "ULS(0.1)", "PLS"]
    ok = True
    for name in names:
        strategy = TargetStrategy.parse(name)
        rng = np.random.default_rng(args.seed)
        model = nn.init_model(6, [8], 5, 3, rng, coefficient_head=strategy.coefficient_head)
        batch = Batch(rng.normal(size=(4, 6)), one_hot(rng.integers(0, 3, size=4), 3))
        for step in (0, 1):
            report = gradient_check(model, batch, strategy, args.tolerance, seed=args.seed,
                                    step=step)
            status = "PASS" if report.passed else "FAIL"
            note = "  (pre-activation near a ReLU kink)" if report.relu_margin < 100 * 1e-5 else ""
            print(f"{status} {strategy.label():<14} step {step}  max rel err {report.worst:.2e}"
                  f"  relu margin {report.relu_margin:.1e}{note}")
            if args.verbose:
                for tensor_name, err in report.max_rel_error.items():
                    print(f"    {tensor_name:<16} {err:.2e}")
            ok &= report.passed
    return EXIT_OK if ok else EXIT_RUNTIME


def build_parser():
    parser = argparse.ArgumentParser(prog="pairsmooth", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one configuration and write its reports")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the config's dataset")
    p.add_argument("checkpoint")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.add_argument("--ece", action="store_true", help="write 15-bin ECE table")
    p.add_argument("--hist", action="store_true", help="write winning-score histogram")
    p.add_argument("--temperature", action="store_true", help="search a logit multiplier")
    p.add_argument("--ood", action="store_true", help="report on the eval.ood dataset")
    p.add_argument("--figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="one run per value of a strategy parameter")
    p.add_argument("config")
    p.add_argument("--axis", required=True, choices=["w", "alpha", "strategy"])
    p.add_argument("--values", nargs="*", default=[])
    p.add_argument("--out", required=True)
    p.add_argument("--figures", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check on a tiny network")
    p.add_argument("--strategy", action="append", help="e.g. PLS, ULS(0.2); repeatable")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
