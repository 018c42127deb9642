"""Command-line interface: synth | preprocess | train | eval | quantize | energy | sweep.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 model error. Every command that draws random numbers takes ``--seed``;
JSON is written with sorted keys so equal seeds give byte-identical files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import energy as energy_mod
from . import quantize as qz
from .cnn import fileformat as ff
from .cnn.training import TrainConfig
from .config import ConfigError, apply_to_dataclass, load_kv
from .harness import cirio
from .harness.corpus import SETUPS, make_corpus, make_persons, make_recording
from .harness.dataset import dataset_windows, labels, stack_inputs
from .harness.experiments import (
    CnnEstimator,
    RuleEstimator,
    evaluate,
    evaluate_all,
    plan_for,
    sampling_sweep,
    write_sweep_csv,
)
from .harness.metrics import l1_stats
from .harness.splits import STRATEGIES
from .rule_estimators import ESTIMATORS

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MODEL = 0, 2, 3, 4

log = logging.getLogger("uwb_breath")


class DataError(Exception):
    pass


def _dump_json(obj, path: Path | None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    return text


def _load_recordings(data_dir):
    path = Path(data_dir)
    if path.is_file():
        files = [path]
    elif path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".uwbc", ".csv"))
    else:
        raise DataError(f"no such file or directory: {path}")
    if not files:
        raise DataError(f"no .uwbc or .csv captures in {path}")
    recs = []
    for f in files:
        imported = cirio.import_cir(f)
        if imported.gt_bpm is None:
            raise DataError(f"{f} has no ground-truth series; evaluation needs labels")
        recs.append(imported.to_recording())
    return recs


def _train_config(args) -> tuple[TrainConfig, float]:
    values = load_kv(args.config) if args.config else {}
    val_fraction = float(values.pop("val_fraction", 0.125))
    for key in ("learning_rate", "epochs", "replicates", "batch_size", "patience", "l2", "momentum"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = str(flag)
    values["seed"] = str(args.seed)
    cfg = apply_to_dataclass(TrainConfig(), values, skip=("specs",))
    if not 0 < val_fraction < 1:
        raise ConfigError("val_fraction must lie in (0, 1)")
    return cfg, val_fraction


# commands -------------------------------------------------------------------


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.fb is not None:
        person = make_persons(1, args.seed)[0]
        rec = make_recording(person, args.setup, args.fb, args.duration, args.seed)
        recs = [rec]
    else:
        recs = make_corpus(args.persons, args.setups, args.per_pair, args.duration, args.seed)
    manifest = []
    for i, rec in enumerate(recs):
        name = f"rec{i:04d}_p{rec.person_id}_s{rec.setup_id}.uwbc"
        cirio.write_cir(out / name, rec.cir, rec.person_id, rec.setup_id, rec.gt_bpm)
        manifest.append(
            {
                "file": name,
                "person_id": rec.person_id,
                "setup_id": rec.setup_id,
                "setup": SETUPS[rec.setup_id % len(SETUPS)].name,
                "bpm": float(rec.gt_bpm[0]),
                "n_slow": rec.cir.n_slow,
            }
        )
    _dump_json({"seed": args.seed, "recordings": manifest}, out / "manifest.json")
    print(f"wrote {len(recs)} recording(s) to {out}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    recs = _load_recordings(args.data)
    windows = dataset_windows(recs, rate_hz=args.rate)
    items = [
        {
            "person_id": w.person_id,
            "setup_id": w.setup_id,
            "ground_truth_bpm": w.ground_truth_bpm,
            "range_bin_offset": w.rf_map.range_bin_offset,
            "freq_axis_hz": [round(float(f), 9) for f in w.rf_map.freq_axis_hz],
            "map": np.round(w.rf_map.data.T, 9).tolist(),  # rows = range bins
        }
        for w in windows
    ]
    text = _dump_json({"n_windows": len(items), "windows": items}, Path(args.out) if args.out else None)
    if not args.out:
        sys.stdout.write(text)
    else:
        print(f"wrote {len(items)} window(s) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg, val_fraction = _train_config(args)
    windows = dataset_windows(_load_recordings(args.data))
    fitted = CnnEstimator(cfg, val_fraction).fit(windows)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    n_bytes = ff.save_model(fitted.model, out)
    pred = fitted.predict(windows)
    summary = {
        "model": str(out),
        "bytes": n_bytes,
        "n_params": fitted.model.n_params(),
        "train_windows": len(windows),
        "train_mean_l1": l1_stats(pred - labels(windows)).mean,
        "config": {k: v for k, v in dataclasses.asdict(cfg).items() if k != "specs"},
    }
    _dump_json(summary, out.with_suffix(".json"))
    print(f"saved model ({n_bytes} bytes) to {out}")
    return EXIT_OK


def _fixed_model_estimator(path):
    data = Path(path).read_bytes()
    if len(data) > 6 and data[6] == ff.DTYPE_U8:
        qm = qz.qmodel_from_bytes(data)

        class _Q:
            name = "cnn-int8"

            def fit(self, train, fold=None):
                return self

            def predict(self, windows):
                return qz.forward_q(qm, stack_inputs(windows, qm.norm))

        return _Q()
    model = ff.model_from_bytes(data)

    class _F:
        name = "cnn"

        def fit(self, train, fold=None):
            return self

        def predict(self, windows):
            return model.predict(stack_inputs(windows, model.norm))

    return _F()


def _estimator(args):
    if args.estimator == "cnn":
        if args.model:
            return _fixed_model_estimator(args.model)
        cfg, val_fraction = _train_config(args)
        return CnnEstimator(cfg, val_fraction)
    return RuleEstimator(args.estimator)


def cmd_eval(args) -> int:
    windows = dataset_windows(_load_recordings(args.data))
    est = _estimator(args)
    try:
        plan = plan_for(windows, args.strategy)
    except ValueError:
        # one person/setup/pair cannot be cross-validated; score every window once
        if args.estimator == "cnn" and not args.model:
            raise DataError(f"{args.strategy} needs at least two held-out groups to train a CNN") from None
        plan = None
    report = evaluate(est, plan, windows) if plan is not None else evaluate_all(est, windows)
    text = _dump_json(report.to_dict(), Path(args.out) if args.out else None)
    pooled = report.pooled
    print(f"{report.estimator} {report.strategy}: mean L1 {pooled.mean:.3f} BPM (n={pooled.n})")
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_quantize(args) -> int:
    model = ff.load_model(args.model)
    if model.norm is None:
        raise ff.ModelFormatError("model has no stored normalisation; retrain with this version")
    windows = dataset_windows(_load_recordings(args.data))
    x = stack_inputs(windows, model.norm)
    qm = qz.quantize_model(model, qz.calibrate(model, x))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    qz.save_qmodel(qm, out)
    y = labels(windows)
    mae_f = float(np.mean(np.abs(model.predict(x) - y)))
    mae_q = float(np.mean(np.abs(qz.forward_q(qm, x) - y)))
    summary = {
        "float_bytes": qm.float_size_bytes,
        "quantized_bytes": qm.size_bytes,
        "size_ratio": qm.size_ratio,
        "mae_float": mae_f,
        "mae_quantized": mae_q,
        "mae_relative_change": (mae_q - mae_f) / mae_f if mae_f else 0.0,
    }
    _dump_json(summary, out.with_suffix(".json"))
    print(
        f"quantized model {qm.size_bytes} bytes ({100 * (1 - qm.size_ratio):.1f}% smaller); "
        f"MAE {mae_f:.3f} -> {mae_q:.3f} BPM"
    )
    return EXIT_OK


def cmd_energy(args) -> int:
    if args.config:
        values = load_kv(args.config)
        if args.scenario:
            values["preset"] = args.scenario
        scenario = energy_mod.scenario_from_config(values)
    else:
        scenario = energy_mod.preset(args.scenario or "theoretical_20hz")
    rep = energy_mod.report(scenario)
    print(f"{scenario.name}: E_30s = {rep['energy_per_30s_j']:.3f} J, average power {rep['average_power_w']:.4f} W")
    for name, hours in sorted(rep["lifetime_h"].items()):
        print(f"  lifetime on {name}: {hours:.1f} h ({hours / 24:.1f} days)")
    if args.out:
        _dump_json(rep, Path(args.out))
    return EXIT_OK


def cmd_sweep(args) -> int:
    recs = _load_recordings(args.data)
    try:
        rates = [float(r) for r in args.rates.split(",")]
    except ValueError:
        raise ConfigError(f"--rates must be comma-separated numbers, got {args.rates!r}") from None
    est = _estimator(args)
    noisy = [i for i, s in enumerate(SETUPS) if s.noisy]
    rows = sampling_sweep(recs, rates, est, args.strategy, noisy_setups=noisy)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, out)
    for r in rows:
        print(f"{r.effective_hz:7.3f} Hz  median L1 {r.median_l1:.3f}  mean L1 {r.mean_l1:.3f}")
    return EXIT_OK


# parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uwb-breath", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        if seed:
            p.add_argument("--seed", type=int, default=0, help="seed for every random draw")
        return p

    def training_flags(p):
        p.add_argument("--config", help="key=value file with training settings")
        p.add_argument("--epochs", type=int)
        p.add_argument("--replicates", type=int)
        p.add_argument("--learning-rate", dest="learning_rate", type=float)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--patience", type=int)

    p = common(sub.add_parser("synth", help="generate synthetic CIR recordings"))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--duration", type=float, default=60.0, help="seconds per recording")
    p.add_argument("--fb", type=float, help="single recording at this breathing frequency (Hz)")
    p.add_argument("--setup", type=int, default=1, help="setup preset for --fb (default: clean chair)")
    p.add_argument("--persons", type=int, default=8)
    p.add_argument("--setups", type=int, default=len(SETUPS))
    p.add_argument("--per-pair", dest="per_pair", type=int, default=2)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="CIR captures to cropped range-frequency maps (JSON)")
    p.add_argument("--data", required=True, help="capture file or directory")
    p.add_argument("--rate", type=float, help="decimate to this slow-time rate first")
    p.add_argument("--out")
    p.set_defaults(func=cmd_preprocess)

    p = common(sub.add_parser("train", help="train the CNN on labelled captures"))
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="model file to write")
    training_flags(p)
    p.set_defaults(func=cmd_train)

    estimators = [*ESTIMATORS, "cnn"]
    p = common(sub.add_parser("eval", help="cross-validated L1 metrics"))
    p.add_argument("--data", required=True)
    p.add_argument("--estimator", choices=estimators, default="accumulated-highest-peak")
    p.add_argument("--strategy", choices=STRATEGIES, default="leave-setup-out")
    p.add_argument("--model", help="score this trained model instead of training per fold")
    p.add_argument("--out")
    training_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("quantize", help="8-bit post-training quantization")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="calibration captures")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("energy", help="energy per 30 s window and battery lifetime")
    p.add_argument("--scenario", choices=sorted(energy_mod.PRESETS))
    p.add_argument("--config", help="key=value scenario file")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_energy)

    p = common(sub.add_parser("sweep", help="median L1 against slow-time sampling rate"))
    p.add_argument("--data", required=True)
    p.add_argument("--rates", default="77.5,20,10,4,2")
    p.add_argument("--estimator", choices=estimators, default="accumulated-highest-peak")
    p.add_argument("--strategy", choices=STRATEGIES, default="leave-setup-out")
    p.add_argument("--model")
    p.add_argument("--out", required=True, help="CSV file")
    training_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, cirio.CirFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ff.ModelFormatError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
