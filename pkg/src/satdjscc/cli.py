"""Command-line surface.

Subcommands: link-budget, channel-sim, synth-data, train, eval, sweep-snr,
mismatch, compare-storage. Exit codes: 0 success, 1 configuration error,
2 numeric failure.
"""
from __future__ import annotations

import argparse
import struct
import sys
from pathlib import Path

import numpy as np

from . import harness
from .channel import FixedState, MarkovEvolution, ShadowState, generate_gain_series
from .config import load_config
from .data import load_multiband, resize_image, save_multiband, split_dataset, \
    synth_dataset
from .errors import NumericError, SatDjsccError
from .harness import TrainSpec, compare_storage, evaluate, make_row, \
    snr_mismatch_sweep, state_mismatch, train
from .linkbudget import link_budget_breakdown
from .model import ConditionSpec, DjsccNetwork

CONFIG_ERROR_EXIT = 1
NUMERIC_ERROR_EXIT = 2


def _resolve_condition(app, ref):
    table = app.environment(ref.environment)
    return ConditionSpec.resolve(
        table, ref.state, ref.elevation_deg, snr_db=ref.snr_db,
        link=app.link, snr_db_override=app.snr_db_override,
    )


def _load_dataset(app):
    """Images from the configured directory, else the synthetic generator."""
    if app.data.dir is not None:
        paths = sorted(Path(app.data.dir).glob("*.mbif"))
        if not paths:
            raise SatDjsccError(f"no .mbif files under {app.data.dir}")
        images = [load_multiband(p) for p in paths]
    else:
        synth = app.data.synthetic
        images = synth_dataset(synth.seed, synth.count, synth.shape)
    if app.data.resize_to is not None:
        h, w = app.data.resize_to
        images = [resize_image(img, h, w) for img in images]
    return np.stack([img.to_hwc() for img in images])


def cmd_link_budget(args):
    app = load_config(args.config)
    if app.link is None:
        raise SatDjsccError("config has no link section")
    for elevation in args.elevation:
        report = link_budget_breakdown(app.link, elevation)
        print(f"elevation {elevation:g} deg")
        print(f"  slant range       {report['slant_range_m']:.1f} m")
        print(f"  tx power          {report['tx_power_dbw']:.2f} dBW")
        print(f"  tx gain           {report['tx_gain_dbi']:.2f} dBi")
        print(f"  rx gain           {report['rx_gain_dbi']:.2f} dBi")
        print(f"  path loss         {report['path_loss_db']:.2f} dB")
        print(f"  noise floor       {report['noise_floor_dbw']:.2f} dBW")
        print(f"  snr               {report['snr_db']:.2f} dB")
        if app.snr_db_override is not None:
            print(f"  snr override      {app.snr_db_override:.2f} dB")
    return 0


def cmd_channel_sim(args):
    app = load_config(args.config)
    table = app.environment(args.environment)
    state = ShadowState.parse(args.state)
    mode = MarkovEvolution(state) if args.markov else FixedState(state)
    rng = np.random.default_rng(0 if args.seed is None else args.seed)
    series = generate_gain_series(table, args.elevation, mode, args.count, rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"gains_{args.environment}_{state.label}_{args.elevation:g}.{args.format}"
    if args.format == "csv":
        with open(path, "w") as handle:
            handle.write("re,im,state\n")
            for value, st in zip(series.samples, series.states):
                handle.write(f"{value.real!r},{value.imag!r},{int(st)}\n")
    else:
        with open(path, "wb") as handle:
            handle.write(struct.pack("<I", len(series)))
            for value, st in zip(series.samples, series.states):
                handle.write(struct.pack("<ddB", value.real, value.imag, int(st)))
    print(f"wrote {len(series)} gains to {path}")
    return 0


def cmd_synth_data(args):
    height, width, bands = (int(v) for v in args.shape.split("x"))
    images = synth_dataset(args.seed, args.count, (height, width, bands))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, image in enumerate(images):
        save_multiband(image, out / f"synth_{i:04d}.mbif")
    print(f"wrote {len(images)} images to {out}")
    return 0


def _train_from_config(app, seed):
    if app.model is None:
        raise SatDjsccError("config has no model section")
    if not app.train.conditions:
        raise SatDjsccError("train section lists no conditions")
    conditions = [_resolve_condition(app, ref) for ref in app.train.conditions]
    spec = TrainSpec(
        model=app.model,
        conditions=conditions,
        epochs=app.train.epochs,
        seed=app.train.seed if seed is None else seed,
        batch_size=app.train.batch_size,
        learning_rate=app.train.learning_rate,
        learning_rate_after_drop=app.train.learning_rate_after_drop,
        lr_drop_epoch=app.train.lr_drop_epoch,
        fading=app.train.fading,
    )
    return spec, conditions


def cmd_train(args):
    app = load_config(args.config)
    spec, _ = _train_from_config(app, args.seed)
    dataset = _load_dataset(app)
    split = split_dataset(dataset.shape[0], app.data.split, spec.seed)
    result = train(spec, dataset[split.train])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.network.save(out / "model.djsc", out / "model.json")
    with open(out / "train_loss.csv", "w") as handle:
        handle.write("epoch,mean_loss\n")
        for epoch, value in enumerate(result.epoch_losses):
            handle.write(f"{epoch},{value:.8e}\n")
    print(f"trained {result.steps} steps; model saved under {out}")
    return 0


def _load_model(args):
    weights = Path(args.model)
    sidecar = weights.with_suffix(".json")
    return DjsccNetwork.load(weights, sidecar)


def _effective_seed(app, seed):
    return app.train.seed if seed is None else seed


def _eval_dataset(app, seed):
    dataset = _load_dataset(app)
    split = split_dataset(dataset.shape[0], app.data.split, seed)
    test = split.test if split.test.size else split.train
    return dataset[test]


def cmd_eval(args):
    app = load_config(args.config)
    args.seed = _effective_seed(app, args.seed)
    network = _load_model(args)
    dataset = _eval_dataset(app, args.seed)
    if not app.eval.conditions:
        raise SatDjsccError("eval section lists no conditions")
    report = harness.EvalReport()
    for ref in app.eval.conditions:
        condition = _resolve_condition(app, ref)
        result = evaluate(network, condition, dataset,
                          app.eval.trials_per_image, args.seed, app.eval.fading)
        report.add(
            make_row(args.model_id, (condition,), condition,
                     network.code.realized_ratio, result),
            per_trial=result.per_trial,
        )
    _write_report(report, args.out, "eval")
    return 0


def cmd_sweep_snr(args):
    app = load_config(args.config)
    args.seed = _effective_seed(app, args.seed)
    network = _load_model(args)
    dataset = _eval_dataset(app, args.seed)
    if not app.eval.conditions:
        raise SatDjsccError("eval section lists no conditions")
    if not app.eval.snr_sweep:
        raise SatDjsccError("eval.snr_sweep is empty")
    trained = _resolve_condition(app, app.eval.conditions[0])
    report = snr_mismatch_sweep(
        network, trained, app.eval.snr_sweep, dataset,
        app.eval.trials_per_image, args.seed, app.eval.fading, args.model_id,
    )
    _write_report(report, args.out, "sweep_snr")
    return 0


def cmd_mismatch(args):
    app = load_config(args.config)
    args.seed = _effective_seed(app, args.seed)
    network = _load_model(args)
    dataset = _eval_dataset(app, args.seed)
    if len(app.eval.conditions) < 2:
        raise SatDjsccError(
            "mismatch needs eval.conditions = [assumed, actual]"
        )
    assumed = _resolve_condition(app, app.eval.conditions[0])
    actual = _resolve_condition(app, app.eval.conditions[1])
    report = state_mismatch(network, assumed, actual, dataset,
                            app.eval.trials_per_image, args.seed,
                            app.eval.fading, args.model_id)
    _write_report(report, args.out, "mismatch")
    return 0


def cmd_compare_storage(args):
    adaptable = DjsccNetwork.load(Path(args.adaptable),
                                  Path(args.adaptable).with_suffix(".json"))
    others = [
        DjsccNetwork.load(Path(p), Path(p).with_suffix(".json"))
        for p in args.per_condition
    ]
    report = compare_storage(adaptable, others)
    for line in report.lines():
        print(line)
    return 0


def _write_report(report, out_dir, stem):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / f"{stem}.csv")
    report.write_trials_csv(out / f"{stem}_trials.csv")
    print(f"wrote {out / (stem + '.csv')} ({len(report.rows)} rows)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="satdjscc",
        description="Statistical satellite fading channel plus a learned "
                    "joint source-channel image codec, at desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=False):
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--out", default="out", help="output directory")
        if model:
            p.add_argument("--model", required=True, help="model .djsc path")
            p.add_argument("--model-id", default="model", help="report label")

    p = sub.add_parser("link-budget", help="print the SNR budget chain")
    p.add_argument("--config", required=True)
    p.add_argument("--elevation", type=float, nargs="+", default=[40.0, 80.0])
    p.set_defaults(fn=cmd_link_budget)

    p = sub.add_parser("channel-sim", help="emit a gain series to CSV/binary")
    common(p)
    p.add_argument("--environment", required=True)
    p.add_argument("--state", default="los")
    p.add_argument("--elevation", type=float, default=40.0)
    p.add_argument("--count", type=int, default=10000)
    p.add_argument("--markov", action="store_true",
                   help="evolve the state per sample instead of fixing it")
    p.add_argument("--format", choices=("csv", "bin"), default="csv")
    p.set_defaults(fn=cmd_channel_sim)

    p = sub.add_parser("synth-data", help="write synthetic MBIF images")
    p.add_argument("--out", default="out")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--shape", default="16x16x3", help="HxWxB")
    p.set_defaults(fn=cmd_synth_data)

    p = sub.add_parser("train", help="train per the config's train section")
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model over eval.conditions")
    common(p, model=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep-snr", help="SNR mismatch sweep")
    common(p, model=True)
    p.set_defaults(fn=cmd_sweep_snr)

    p = sub.add_parser("mismatch", help="state mismatch experiment")
    common(p, model=True)
    p.set_defaults(fn=cmd_mismatch)

    p = sub.add_parser("compare-storage", help="parameter/byte accounting")
    p.add_argument("--adaptable", required=True)
    p.add_argument("--per-condition", nargs="+", required=True)
    p.set_defaults(fn=cmd_compare_storage)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_ERROR_EXIT
    except SatDjsccError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR_EXIT


if __name__ == "__main__":
    sys.exit(main())
