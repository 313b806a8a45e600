"""Command line interface.

Subcommands cover the full workflow: ``train`` fits a model to recorded
scanpaths, ``sample`` generates scanpaths from a checkpoint, ``eval``
compares simulated against recorded scanpaths, ``saliency`` renders and
scores fixation density maps, and ``stats`` summarizes a corpus.

Exit codes: 0 on success, 1 on numeric failures (non-finite values during
training or sampling), 2 on usage or data errors.  Diagnostics go to stderr;
stdout carries only the requested report text.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import analysis
from . import saliency as salmod
from .datamodel import (
    DataFormatError,
    Dataset,
    FeatureVolume,
    Stimulus,
    load_feature_volume,
    load_stimulus_manifest,
    parse_scanpath_dataset,
    preprocess,
    serialize_scanpaths,
    split_by_stimulus,
)
from .evalproto import EvalConfig, evaluate
from .metrics import ScanMatchConfig
from .sampler import MAX_FIXATIONS, sample_ensemble
from .svgplot import histogram_overlay_svg
from .tppcore import TppConfig, TppModel, init_params, load_checkpoint, save_checkpoint
from .trainer import TrainConfig, prepare_examples, train, write_history_csv

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_USAGE = 2


def _detect_format(path: str) -> str:
    return "csv" if path.lower().endswith(".csv") else "jsonl"


def _load_dataset(manifest: str, scanpaths: str) -> Dataset:
    stimuli = load_stimulus_manifest(manifest)
    return parse_scanpath_dataset(scanpaths, fmt=_detect_format(scanpaths), stimuli=stimuli)


def _volume_path(stim: Stimulus, manifest_path: str, features_dir: Optional[str]) -> str:
    if features_dir is not None:
        return os.path.join(features_dir, f"{stim.id}.fvol")
    if not stim.feature_path:
        raise DataFormatError(
            f"stimulus {stim.id!r} has no feature_path; pass --features-dir"
        )
    if os.path.isabs(stim.feature_path):
        return stim.feature_path
    return os.path.join(os.path.dirname(os.path.abspath(manifest_path)), stim.feature_path)


def _load_volumes(
    stimuli: dict[str, Stimulus], manifest_path: str, features_dir: Optional[str]
) -> dict[str, FeatureVolume]:
    volumes = {}
    for stim_id in sorted(stimuli):
        path = _volume_path(stimuli[stim_id], manifest_path, features_dir)
        volumes[stim_id] = load_feature_volume(path)
    grids = {(v.height, v.width, v.channels) for v in volumes.values()}
    if len(grids) > 1:
        raise DataFormatError(f"feature volumes disagree on grid shape: {sorted(grids)}")
    return volumes


def _config_from_table(cls, table: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise DataFormatError(f"{where}: unknown keys {sorted(unknown)}")
    return cls(**table)


def _read_config(path: Optional[str]) -> tuple[TppConfig, TrainConfig]:
    """TOML config with optional [model] and [train] tables."""
    if path is None:
        return TppConfig(), TrainConfig()
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise DataFormatError(f"{path}: invalid TOML ({exc})") from exc
    unknown = set(doc) - {"model", "train"}
    if unknown:
        raise DataFormatError(f"{path}: unknown tables {sorted(unknown)}")
    model_cfg = _config_from_table(TppConfig, doc.get("model", {}), f"{path} [model]")
    train_cfg = _config_from_table(TrainConfig, doc.get("train", {}), f"{path} [train]")
    return model_cfg, train_cfg


def cmd_train(args: argparse.Namespace) -> int:
    dataset = preprocess(_load_dataset(args.manifest, args.scanpaths))
    if not dataset.scanpaths:
        raise DataFormatError("no scanpaths survive preprocessing")
    volumes = _load_volumes(dict(dataset.stimuli), args.manifest, args.features_dir)
    model_cfg, train_cfg = _read_config(args.config)
    if args.seed is not None:
        train_cfg = dataclasses.replace(train_cfg, seed=args.seed)
    if args.val_fraction > 0 and len(dataset.stimuli) > 1:
        train_ds, val_ds = split_by_stimulus(dataset, args.val_fraction, train_cfg.seed)
        val_examples = prepare_examples(val_ds, volumes)
    else:
        train_ds, val_examples = dataset, None
    train_examples = prepare_examples(train_ds, volumes)
    any_vol = next(iter(volumes.values()))
    n_cells = any_vol.height * any_vol.width
    c_in = any_vol.channels + 3
    rng = np.random.default_rng(np.random.SeedSequence([train_cfg.seed, 0x1417]))
    model = TppModel(model_cfg, init_params(model_cfg, n_cells, c_in, rng))
    best, history = train(model, train_examples, val_examples, train_cfg, args.threads)
    if not history:
        raise NonFiniteTrainingError("training diverged before completing an epoch")
    save_checkpoint(args.checkpoint, best)
    if args.history:
        write_history_csv(history, args.history)
    best_nll = min(h.val_nll for h in history)
    print(f"epochs={len(history)} best_nll={best_nll!r} checkpoint={args.checkpoint}")
    return EXIT_OK


class NonFiniteTrainingError(ArithmeticError):
    """Training produced no usable epoch before hitting non-finite values."""


def cmd_sample(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.checkpoint)
    stimuli = load_stimulus_manifest(args.manifest)
    volumes = _load_volumes(stimuli, args.manifest, args.features_dir)
    dataset = Dataset(stimuli=stimuli, scanpaths=())
    sims = sample_ensemble(
        model, dataset, volumes, args.per_stimulus, args.seed,
        max_fixations=args.max_fixations,
    )
    serialize_scanpaths(sims, args.out)
    print(f"wrote {len(sims)} scanpaths to {args.out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    stimuli = load_stimulus_manifest(args.manifest)
    real = parse_scanpath_dataset(
        args.scanpaths, fmt=_detect_format(args.scanpaths), stimuli=stimuli
    )
    if not args.no_preprocess:
        real = preprocess(real)
    sim = parse_scanpath_dataset(args.sim, fmt=_detect_format(args.sim), stimuli=stimuli)
    bins_long, bins_short = args.sm_bins
    cfg = EvalConfig(
        metrics=tuple(args.metrics.split(",")),
        kl_bins=args.kl_bins,
        sed_grid=args.sed_grid,
        scanmatch=ScanMatchConfig(bins_long=bins_long, bins_short=bins_short),
        threads=args.threads,
    )
    report = evaluate(real, sim.scanpaths, cfg)
    if args.out:
        report.to_csv(args.out)
    if args.svg_dir:
        os.makedirs(args.svg_dir, exist_ok=True)
        report.write_svgs(args.svg_dir, bins=args.kl_bins)
    if args.print or not args.out:
        print(report.pretty())
    return EXIT_OK


def _pooled_fixations(dataset: Dataset, stim_id: str) -> list[tuple[float, float]]:
    pts = []
    for sp in dataset.scanpaths:
        if sp.stimulus_id == stim_id:
            pts.extend((f.x, f.y) for f in sp.fixations)
    return pts


def cmd_saliency(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.manifest, args.scanpaths)
    if not args.no_preprocess:
        dataset = preprocess(dataset)
    if args.stimulus not in dataset.stimuli:
        raise DataFormatError(f"unknown stimulus {args.stimulus!r}")
    stim = dataset.stimuli[args.stimulus]
    real_pts = _pooled_fixations(dataset, args.stimulus)
    if not real_pts:
        raise DataFormatError(f"no fixations recorded on stimulus {args.stimulus!r}")
    gt = salmod.saliency_from_fixations(real_pts, stim.width, stim.height, sigma=args.sigma)
    os.makedirs(args.out_dir, exist_ok=True)
    salmod.write_pgm(gt, os.path.join(args.out_dir, f"{args.stimulus}_real.pgm"))
    if args.sim:
        sim = parse_scanpath_dataset(
            args.sim, fmt=_detect_format(args.sim), stimuli=dict(dataset.stimuli)
        )
        sim_pts = _pooled_fixations(
            Dataset(stimuli=dataset.stimuli, scanpaths=sim.scanpaths), args.stimulus
        )
        if not sim_pts:
            raise DataFormatError(f"no simulated fixations for stimulus {args.stimulus!r}")
        pred = salmod.saliency_from_fixations(
            sim_pts, stim.width, stim.height, sigma=args.sigma
        )
        salmod.write_pgm(pred, os.path.join(args.out_dir, f"{args.stimulus}_sim.pgm"))
        print(f"saliency_kl {salmod.saliency_kl(pred, gt)!r}")
        print(f"auc_judd {salmod.auc_judd(pred, real_pts)!r}")
        print(f"nss {salmod.nss(pred, real_pts)!r}")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.manifest, args.scanpaths)
    if not args.no_preprocess:
        dataset = preprocess(dataset)
    if not dataset.scanpaths:
        raise DataFormatError("no scanpaths survive preprocessing")
    os.makedirs(args.out_dir, exist_ok=True)
    series = {"durations": [], "amplitudes": []}
    groups = [("real", dataset.scanpaths)]
    if args.sim:
        sim = parse_scanpath_dataset(
            args.sim, fmt=_detect_format(args.sim), stimuli=dict(dataset.stimuli)
        )
        groups.append(("sim", sim.scanpaths))
    for label, sps in groups:
        taus = np.concatenate([sp.taus() for sp in sps])
        amps = np.concatenate(
            [
                np.linalg.norm(np.diff(sp.positions(), axis=0), axis=1)
                for sp in sps
                if len(sp) >= 2
            ]
        )
        series["durations"].append((label, taus))
        series["amplitudes"].append((label, amps))
    for name, xlab in (("durations", "seconds"), ("amplitudes", "pixels")):
        histogram_overlay_svg(
            series[name],
            os.path.join(args.out_dir, f"{name}.svg"),
            bins=args.bins,
            title=name,
            x_label=xlab,
        )
    dur = analysis.duration_histogram(dataset.scanpaths, bins=args.bins)
    dur.to_csv(os.path.join(args.out_dir, "durations.csv"))
    amp = analysis.amplitude_histogram(dataset.scanpaths, bins=args.bins)
    amp.to_csv(os.path.join(args.out_dir, "amplitudes.csv"))
    rf = analysis.rf_distribution(dataset.scanpaths, radius=args.rf_radius)
    with open(os.path.join(args.out_dir, "return_fixations.csv"), "w", encoding="utf-8") as fh:
        fh.write("offset,frequency\n")
        for i, f in enumerate(rf.offsets, start=1):
            fh.write(f"{i},{float(f)!r}\n")
    print(f"scanpaths {len(dataset.scanpaths)}")
    print(f"mean_returns_per_scanpath {rf.mean_per_scanpath!r}")
    return EXIT_OK


def _parse_sm_bins(text: str) -> tuple[int, int]:
    try:
        long_s, short_s = text.lower().split("x")
        bins = (int(long_s), int(short_s))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected LONGxSHORT, got {text!r}") from exc
    if bins[0] < 1 or bins[1] < 1:
        raise argparse.ArgumentTypeError("grid bins must be positive")
    return bins


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scanpath-tpp",
        description="Train, sample and evaluate scanpath point-process models.",
    )
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common_data(p, with_scanpaths=True):
        p.add_argument("--manifest", required=True, help="stimulus manifest JSON")
        if with_scanpaths:
            p.add_argument("--scanpaths", required=True, help="recorded scanpaths (.jsonl or .csv)")
        p.add_argument(
            "--features-dir",
            help="directory of <stimulus_id>.fvol files (default: manifest feature_path)",
        )

    p = sub.add_parser("train", help="fit a model to recorded scanpaths")
    common_data(p)
    p.add_argument("--config", help="TOML file with [model] and [train] tables")
    p.add_argument("--checkpoint", required=True, help="output checkpoint path")
    p.add_argument("--history", help="optional per-epoch NLL CSV")
    p.add_argument("--seed", type=int, default=None, help="override training seed")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--val-fraction", type=float, default=0.2,
                   help="held-out stimulus fraction (0 disables validation)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate scanpaths from a checkpoint")
    common_data(p, with_scanpaths=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output scanpaths JSONL")
    p.add_argument("--per-stimulus", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-fixations", type=int, default=MAX_FIXATIONS)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="score simulated against recorded scanpaths")
    common_data(p)
    p.add_argument("--sim", required=True, help="simulated scanpaths (.jsonl or .csv)")
    p.add_argument("--out", help="report CSV path")
    p.add_argument("--svg-dir", help="write score distribution SVGs here")
    p.add_argument("--metrics", default="mm,sm,ss,sed",
                   help="comma list from mm,sm,ss,sed")
    p.add_argument("--kl-bins", type=int, default=20)
    p.add_argument("--sed-grid", type=int, default=5)
    p.add_argument("--sm-bins", type=_parse_sm_bins, default=(14, 8),
                   metavar="LONGxSHORT", help="spatial grid for scanmatch (default 14x8)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-preprocess", action="store_true",
                   help="keep first fixations and short scanpaths")
    p.add_argument("--print", action="store_true", help="also print the report table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("saliency", help="render and score fixation density maps")
    common_data(p)
    p.add_argument("--sim", help="simulated scanpaths to score against the recordings")
    p.add_argument("--stimulus", required=True, help="stimulus id to render")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--sigma", type=float, default=24.0, help="blur radius in pixels")
    p.add_argument("--no-preprocess", action="store_true")
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("stats", help="summary statistics of a scanpath corpus")
    common_data(p)
    p.add_argument("--sim", help="overlay simulated scanpaths in the SVGs")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--bins", type=int, default=25)
    p.add_argument("--rf-radius", type=float, default=50.0,
                   help="return-fixation radius in pixels")
    p.add_argument("--no-preprocess", action="store_true")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except ArithmeticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
