"""``vprd`` command line."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, io
from .config import Config, ConfigError, load_config
from .data_model import DataError, Dataset, split_dataset
from .evaluation import evaluate
from .preprocess import PreprocessError, preprocess_images
from .reconstruct import InputError, Predictor, bench_inference, count_allocations, photon_power
from .synthetic import gen_dataset, gen_phase_images
from .training import TrainingDiverged, train

log = logging.getLogger("vprd")

D = Config()


def _common(p: argparse.ArgumentParser) -> None:
    _verbose(p)
    p.add_argument("--config", type=Path, help="JSON file of config keys (unknown keys are rejected)")
    p.add_argument("--seed", type=int, help=f"random seed (default {D.seed}; env VPRD_SEED sits "
                                            "below the config file and flags)")


def _verbose(p: argparse.ArgumentParser) -> None:
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                   help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vprd",
        description="Predict lasing-off electron power profiles from machine parameters "
                    "and reconstruct per-shot photon power.",
    )
    parser.add_argument("--version", action="version", version=f"vprd {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset (and optional phase images)")
    _common(p)
    p.add_argument("--out", type=Path, required=True, help="dataset directory to write")
    p.add_argument("--images", type=Path, help="also write jittered phase images here")
    p.add_argument("--n-samples", type=int, help=f"number of shots (default {D.n_samples})")
    p.add_argument("--d-out", type=int, help=f"profile width in bins (default {D.d_out})")
    p.add_argument("--mapping", choices=["bump", "linear"], help="parameter-to-profile map")
    p.add_argument("--noise-std", type=float, help=f"additive label noise (default {D.noise_std})")
    p.add_argument("--jitter-std-px", type=float, help="time jitter of phase images in pixels")

    p = sub.add_parser("preprocess", help="phase images -> aligned, cropped power profiles")
    _common(p)
    p.add_argument("--images", type=Path, required=True, help="phase-image directory")
    p.add_argument("--out", type=Path, required=True, help="dataset directory to write")
    p.add_argument("--smooth-radius", type=int,
                   help=f"Gaussian sigma in pixels for peak finding (published: {D.smooth_radius})")
    p.add_argument("--padding", type=int, help=f"crop padding in pixels (published: {D.padding})")
    p.add_argument("--otsu-bins", type=int, help=f"Otsu histogram bins (default {D.otsu_bins})")

    p = sub.add_parser("train", help="full-batch training with plateau scheduling and early stopping")
    _common(p)
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--out", type=Path, required=True, help="checkpoint file to write")
    p.add_argument("--hidden", type=int, help=f"hidden width (published: {D.hidden})")
    p.add_argument("--dropout", type=float, help=f"hidden-layer dropout (published: {D.dropout})")
    p.add_argument("--lr", type=float, help=f"initial Adam learning rate (published: {D.lr})")
    p.add_argument("--sched-factor", type=float,
                   help=f"plateau lr factor (published: {D.sched_factor})")
    p.add_argument("--sched-patience", type=int,
                   help=f"plateau patience in steps (published: {D.sched_patience})")
    p.add_argument("--es-patience", type=int,
                   help=f"early-stopping patience in steps (published: {D.es_patience})")
    p.add_argument("--loss", choices=["mse", "anti_mean"], help="training loss (default mse)")
    p.add_argument("--alpha", type=float,
                   help="anti-mean penalty factor; implies --loss anti_mean; values above 0.05 warn")
    p.add_argument("--reduction", choices=["mean_per_element", "sum"], help="loss reduction")
    p.add_argument("--max-steps", type=int, help=f"hard step cap (default {D.max_steps})")

    p = sub.add_parser("evaluate", help="test-set errors, baselines and signed-rank tests")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="report JSON (errors CSV written beside it)")
    p.add_argument("--pairing", choices=["lower", "upper"],
                   help="neighbor pairing: error i with pair (i,i+1) or (i-1,i)")

    p = sub.add_parser("predict", help="lasing-off profiles for a parameter CSV")
    _verbose(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--params", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="binary matrix of profiles")

    p = sub.add_parser("reconstruct", help="photon power = predicted lasing-off - measured lasing-on")
    _verbose(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--lasing-on", type=Path, required=True, help="dataset directory of lasing-on shots")
    p.add_argument("--out", type=Path, required=True, help="binary matrix of photon power")

    p = sub.add_parser("bench", help="single-shot inference latency")
    _verbose(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--runs", type=int, default=10_000)
    p.add_argument("--warmup", type=int, default=100)
    p.add_argument("--backend", choices=["numba", "numpy"])
    return parser


def _resolve(args, keys: dict, **extra) -> Config:
    flags = {cfg_key: getattr(args, attr) for attr, cfg_key in keys.items()}
    flags["seed"] = getattr(args, "seed", None)
    flags.update(extra)
    return load_config(getattr(args, "config", None), flags)


def _manifest_path(out: Path) -> Path:
    return out / io.MANIFEST_NAME if out.is_dir() else out.with_name(out.name + ".manifest.json")


def cmd_synth(args) -> None:
    cfg = _resolve(args, {"n_samples": "n_samples", "d_out": "d_out", "mapping": "mapping",
                          "noise_std": "noise_std", "jitter_std_px": "jitter_std_px"})
    sc = cfg.synth_config()
    ds, gt = gen_dataset(sc)
    io.write_dataset(args.out, ds)
    io.write_json(args.out / "ground_truth.json", gt.to_dict())
    outputs = {"dataset": args.out}
    if args.images is not None:
        images, shifts = gen_phase_images(sc, ds.profiles)
        io.write_images(args.images, images, ds.param_names, ds.params, ds.shot_index)
        io.write_json(args.images / "jitter.json", {"shift_px": [int(s) for s in shifts]})
        io.write_manifest(_manifest_path(args.images), "synth", cfg.to_dict(), {}, {"images": args.images})
        outputs["images"] = args.images
    io.write_manifest(_manifest_path(args.out), "synth", cfg.to_dict(), {}, outputs)


def cmd_preprocess(args) -> None:
    cfg = _resolve(args, {"smooth_radius": "smooth_radius", "padding": "padding",
                          "otsu_bins": "otsu_bins"})
    images, names, params, shot_index = io.read_images(args.images)
    profiles, report = preprocess_images(images, cfg.smooth_radius, cfg.padding, cfg.otsu_bins)
    ds = Dataset(params, profiles, shot_index, names, images[0].time_calibration_fs_per_px,
                 {"source": "preprocess", "images": args.images.name})
    io.write_dataset(args.out, ds)
    io.write_json(args.out / "alignment.json", report.to_dict())
    io.write_manifest(_manifest_path(args.out), "preprocess", cfg.to_dict(),
                      {"images": args.images}, {"dataset": args.out})


def cmd_train(args) -> None:
    if args.loss == "mse" and args.alpha:
        raise ConfigError("--alpha > 0 conflicts with --loss mse")
    loss = args.loss or ("anti_mean" if args.alpha else None)
    keys = {"hidden": "hidden", "dropout": "dropout", "lr": "lr", "sched_factor": "sched_factor",
            "sched_patience": "sched_patience", "es_patience": "es_patience", "alpha": "alpha",
            "reduction": "reduction", "max_steps": "max_steps"}
    cfg = _resolve(args, keys, loss=loss)
    ds = io.read_dataset(args.data)
    split = split_dataset(len(ds), cfg.fractions, cfg.seed)
    result = train(ds, split, cfg.train_config())
    ck = io.Checkpoint(result.model, result.label_mean, result.standardization, ds.time_bin_fs,
                       ds.param_names, cfg.dropout, cfg.seed, cfg.fractions, cfg.to_dict())
    io.write_checkpoint(args.out, ck)
    report_path = args.out.with_name(args.out.name + ".report.json")
    csv_path = args.out.with_name(args.out.name + ".loss.csv")
    io.write_json(report_path, result.report.to_dict())
    result.report.write_csv(csv_path)
    io.write_manifest(_manifest_path(args.out), "train", cfg.to_dict(), {"data": args.data},
                      {"checkpoint": args.out, "report": report_path, "loss_csv": csv_path})
    log.info("stopped at step %d (%s), best val loss %.6g at step %d",
             result.report.stop_step, result.report.stop_reason,
             result.report.best_val_loss, result.report.best_step)


def cmd_evaluate(args) -> None:
    cfg = _resolve(args, {"pairing": "pairing"})
    ck = io.read_checkpoint(args.model)
    ds = io.read_dataset(args.data)
    split = split_dataset(len(ds), ck.split_fractions, ck.split_seed)
    rep = evaluate(ck.model, ds, split, ck.label_mean, ck.standardization, cfg.pairing)
    io.write_json(args.out, rep.to_dict())
    csv_path = args.out.with_suffix(".errors.csv")
    rep.write_errors_csv(csv_path)
    io.write_manifest(_manifest_path(args.out), "evaluate", cfg.to_dict(),
                      {"model": args.model, "data": args.data},
                      {"report": args.out, "errors_csv": csv_path})


def _predict_all(ck: io.Checkpoint, params: np.ndarray) -> np.ndarray:
    pred = Predictor(ck.model, ck.standardization)
    out = np.empty((params.shape[0], pred.d_out))
    for i, row in enumerate(params):
        pred.predict_into(pred.check_input(row), out[i])
    return out


def cmd_predict(args) -> None:
    ck = io.read_checkpoint(args.model)
    names, params = io.read_params_csv(args.params)
    if names != ck.param_names:
        raise InputError(f"parameter columns {names} do not match the model's {ck.param_names}")
    io.write_matrix(args.out, _predict_all(ck, params))
    io.write_manifest(_manifest_path(args.out), "predict", {}, {"model": args.model,
                      "params": args.params}, {"profiles": args.out})


def cmd_reconstruct(args) -> None:
    ck = io.read_checkpoint(args.model)
    ds = io.read_dataset(args.lasing_on)
    if ds.param_names != ck.param_names:
        raise InputError("lasing-on parameter columns do not match the model")
    pred = _predict_all(ck, ds.params)
    photon = np.stack([
        photon_power(p, m, time_bin_pred=ck.time_bin_fs, time_bin_meas=ds.time_bin_fs).power
        for p, m in zip(pred, ds.profiles)
    ])
    io.write_matrix(args.out, photon)
    io.write_manifest(_manifest_path(args.out), "reconstruct", {},
                      {"model": args.model, "lasing_on": args.lasing_on}, {"photon": args.out})


def cmd_bench(args) -> None:
    ck = io.read_checkpoint(args.model)
    pred = Predictor(ck.model, ck.standardization, backend=args.backend)
    rep = bench_inference(pred, args.runs, args.warmup).to_dict()
    alloc = count_allocations(pred, 1000)
    rep["allocations"] = {**dataclasses.asdict(alloc), "allocation_free": alloc.allocation_free}
    print(json.dumps(rep, sort_keys=True, indent=2))


COMMANDS = {
    "synth": cmd_synth, "preprocess": cmd_preprocess, "train": cmd_train,
    "evaluate": cmd_evaluate, "predict": cmd_predict, "reconstruct": cmd_reconstruct,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        warnings.showwarning = lambda msg, *a, **k: print(f"warning: {msg}", file=sys.stderr)
        try:
            COMMANDS[args.command](args)
        except (ConfigError, DataError, io.FormatError, PreprocessError, InputError,
                TrainingDiverged, ValueError, OSError) as exc:
            print(f"vprd {args.command}: error: {exc}", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
