"""Command-line entry points: synth | extract | train | predict | eval.

Exit codes: 0 on success, 1 when some records failed I/O but others went
through, 2 on invalid arguments or data.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import Config
from .diffusion import diffuse, render
from .exceptions import (DecodeError, DegenerateInput, DimensionMismatch,
                         MissingPrediction, ModelMismatch)
from .features import chi2_map, extract_features
from .imaging import load_image
from .learn import TrainConfig, train
from .metrics import accuracy, average_precision, mae, pr_curve
from .model import infer
from .persist import (load_features, load_manifest, load_mask_png, load_model,
                      load_saliency_png, save_features, save_model,
                      save_saliency_png)
from .synth import synth_dataset

CONFIG_SIDECAR = "run-config.cfg"


def _load_config(args):
    cfg = Config.load(args.config) if args.config else Config()
    if getattr(args, "chi2", False):
        cfg.chi2 = True
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _cache_path(out_dir, image_path):
    return Path(out_dir) / (Path(image_path).stem + ".feat")


def _extract_record(image_path, cache_path, cfg_text):
    """Worker: one image to one cache file (top level for process pools)."""
    cfg = Config.from_text(cfg_text)
    feats, _ = extract_features(load_image(image_path), cfg)
    save_features(cache_path, feats, clamp_eps=cfg.clamp_eps)


def cmd_synth(args):
    manifest = synth_dataset(args.n, args.seed, args.out)
    print(f"wrote {args.n} images and {manifest}")
    return 0


def cmd_extract(args):
    cfg = _load_config(args)
    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    sidecar = out_dir / CONFIG_SIDECAR
    cfg_text = cfg.to_text()
    config_unchanged = sidecar.exists() and sidecar.read_text() == cfg_text
    if not config_unchanged:
        sidecar.write_text(cfg_text)

    pending = []
    for rec in manifest.records:
        cache = _cache_path(out_dir, rec.image)
        if (config_unchanged and cache.exists()
                and cache.stat().st_mtime >= rec.image.stat().st_mtime):
            continue
        pending.append((str(rec.image), str(cache)))

    failures = []
    if args.jobs > 1 and pending:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [(image, pool.submit(_extract_record, image, cache, cfg_text))
                       for image, cache in pending]
            for image, fut in futures:
                try:
                    fut.result()
                except Exception as exc:           # per-record isolation
                    failures.append((image, str(exc)))
    else:
        for image, cache in pending:
            try:
                _extract_record(image, cache, cfg_text)
            except Exception as exc:
                failures.append((image, str(exc)))

    done = len(pending) - len(failures)
    skipped = len(manifest.records) - len(pending)
    print(f"extracted {done}, skipped {skipped} up-to-date, "
          f"failed {len(failures)}")
    for image, msg in failures:
        print(f"  failed {image}: {msg}", file=sys.stderr)
    return 1 if failures else 0


def _gather_instances(manifest, cfg, features_dir=None):
    instances = []
    for rec in manifest.records:
        if features_dir is not None:
            cache = _cache_path(features_dir, rec.image)
            if not cache.exists():
                raise FileNotFoundError(f"missing feature cache {cache}")
            feats = load_features(cache)
        else:
            feats, _ = extract_features(load_image(rec.image), cfg)
        if cfg.chi2:
            feats.global_desc = chi2_map(feats.global_desc, order=cfg.chi2_order,
                                         period=cfg.chi2_period)
        instances.append(feats)
    return instances


def cmd_train(args):
    cfg = _load_config(args)
    manifest = load_manifest(args.manifest)
    labels = manifest.labels
    instances = _gather_instances(manifest, cfg, args.features)
    train_cfg = TrainConfig(lam=cfg.lam, max_iters=cfg.max_iters, tol=cfg.tol,
                            optimizer=cfg.optimizer, seed=cfg.seed)
    params, trace = train(instances, labels, train_cfg)

    model_path = Path(args.model)
    model_path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model_path, params)
    trace_path = Path(args.trace) if args.trace else model_path.with_suffix(".trace.csv")
    trace_path.write_text(trace.to_csv())
    model_path.with_suffix(".cfg").write_text(cfg.to_text())
    print(f"trained {len(instances)} images, {len(trace)} iterations, "
          f"final objective {min(trace.objective)!r}")
    print(f"model -> {model_path}, trace -> {trace_path}")
    return 0


def _predict_record(model_path, image_path, out_dir, cfg_text, force_black):
    """Worker: one image to one saliency PNG plus its existence row."""
    cfg = Config.from_text(cfg_text)
    params = load_model(model_path)
    image_path = Path(image_path)
    feats, seg = extract_features(load_image(image_path), cfg)
    if cfg.chi2:
        feats.global_desc = chi2_map(feats.global_desc, order=cfg.chi2_order,
                                     period=cfg.chi2_period)
    if len(feats.global_desc) != params.global_dim:
        raise ModelMismatch(
            f"model expects {params.global_dim} global features, "
            f"got {len(feats.global_desc)} (check the --chi2 setting)")
    y_star, h_star, (s0, s1) = infer(params, feats)
    z = diffuse(h_star, feats.graph, gamma=cfg.gamma)
    smap = render(z, seg, y_star, force_black_on_background=force_black)
    save_saliency_png(Path(out_dir) / (image_path.stem + ".png"), smap)
    return f"{image_path.name},{y_star},{s0!r},{s1!r}"


def cmd_predict(args):
    cfg = _load_config(args)
    load_model(args.model)                    # fail fast on a bad model file
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.manifest:
        image_paths = [rec.image for rec in load_manifest(args.manifest).records]
    elif args.images:
        image_paths = [Path(p) for p in args.images]
    else:
        raise ValueError("predict needs --manifest or image paths")

    cfg_text = cfg.to_text()
    worker_args = [(args.model, str(p), str(out_dir), cfg_text,
                    args.force_black) for p in image_paths]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_predict_record, *wa) for wa in worker_args]
            rows = [fut.result() for fut in futures]
    else:
        rows = [_predict_record(*wa) for wa in worker_args]

    (out_dir / "existence.csv").write_text(
        "image,existence,score_0,score_1\n" + "\n".join(rows) + "\n")
    print(f"predicted {len(rows)} images -> {out_dir}")
    return 0


def cmd_eval(args):
    manifest = load_manifest(args.manifest)
    pred_dir = Path(args.pred)
    existence_path = pred_dir / "existence.csv"
    if not existence_path.exists():
        raise MissingPrediction(f"missing {existence_path}")
    predicted = {}
    for line in existence_path.read_text().strip().split("\n")[1:]:
        name, y_star, _, _ = line.split(",")
        predicted[name] = int(y_star)

    maps, masks = [], []
    pred_labels, true_labels = [], []
    for rec in manifest.records:
        if rec.image.name not in predicted:
            raise MissingPrediction(f"no existence row for {rec.image.name}")
        pred_labels.append(predicted[rec.image.name])
        true_labels.append(rec.label)
        if rec.mask is None:
            continue
        pred_png = pred_dir / (rec.image.stem + ".png")
        if not pred_png.exists():
            raise MissingPrediction(f"missing prediction {pred_png}")
        maps.append(load_saliency_png(pred_png))
        masks.append(load_mask_png(rec.mask))

    acc = accuracy(pred_labels, true_labels)
    mae_val = mae(maps, masks) if maps else float("nan")
    curve = None
    if maps and any(mask.any() for mask in masks):
        curve = pr_curve(maps, masks, per_image=args.per_image_pr)
        ap_text = repr(average_precision(curve))
    else:
        ap_text = "NA"                      # background-only split

    out_path = Path(args.out) if args.out else pred_dir / "metrics.csv"
    out_path.write_text("dataset,method,ap,mae,accuracy\n"
                        f"{manifest.name},weaksal,{ap_text},{mae_val!r},{acc!r}\n")
    if curve is not None and args.pr_dump:
        lines = ["threshold,precision,recall"]
        lines += [f"{t},{p!r},{r!r}" for t, p, r in
                  zip(curve.thresholds, curve.precision, curve.recall)]
        Path(args.pr_dump).write_text("\n".join(lines) + "\n")
    print(f"accuracy {acc:.4f}, mae {mae_val:.4f}, ap {ap_text}")
    print(f"metrics -> {out_path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="weaksal",
        description="Weakly supervised salient object detection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, required=True, help="image count (even)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="cache per-image features")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train the latent model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", help="feature cache directory from extract")
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--trace", help="output trace CSV (default: <model>.trace.csv)")
    p.add_argument("--config")
    p.add_argument("--chi2", action="store_true",
                   help="train on the chi-square feature expansion")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict existence and saliency maps")
    p.add_argument("images", nargs="*", help="image files (or use --manifest)")
    p.add_argument("--manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--chi2", action="store_true")
    p.add_argument("--force-black", action="store_true",
                   help="all-black map when no salient object is predicted")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against masks")
    p.add_argument("--pred", required=True, help="prediction directory")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="metrics CSV (default: <pred>/metrics.csv)")
    p.add_argument("--pr-dump", help="write the full PR curve CSV here")
    p.add_argument("--per-image-pr", action="store_true")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, DimensionMismatch, DegenerateInput, ModelMismatch,
            DecodeError, MissingPrediction, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
