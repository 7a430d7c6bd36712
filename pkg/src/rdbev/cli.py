"""Command-line surface: generate / baseline / ablate / evaluate.

Every command is deterministic given its (config, seed) inputs and prints the
digest of its effective configuration.  Exit codes: 0 success, 2 bad
configuration or usage, 3 I/O failure, 4 validation failure.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

import numpy as np

from . import baselines, container, datagen, metrics, report
from .core import ConfigError, FrameRecord, PredictionMap, RdbevError, ValidationError
from .radar import ChirpMode, collapse_dim, select_chirps

EXIT_CONFIG, EXIT_IO, EXIT_VALIDATION = 2, 3, 4

TRANSFORMS = ("a_only", "b_only", "collapse_doppler", "collapse_range")
METHODS = ("prior", "range_energy", "beamform")


def _digest(parts: dict[str, str]) -> str:
    text = ";".join(f"{k}={parts[k]}" for k in sorted(parts))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _print_digest(parts: dict[str, str]) -> None:
    print(f"effective config digest: {_digest(parts)}")


def _load_manifest(dataset: str) -> container.DatasetManifest:
    path = Path(dataset) / "manifest.txt"
    if not path.is_file():
        raise ValidationError(f"no dataset manifest at {path}")
    return container.read_dataset_manifest(path)


def cmd_generate(args: argparse.Namespace) -> int:
    mapping: dict[str, str] = {}
    if args.config:
        mapping.update(datagen.parse_kv_file(args.config))
    if args.resolution is not None:
        mapping["grid_resolution"] = repr(args.resolution)
    if args.snr_db is not None:
        mapping["radar_snr_db"] = repr(args.snr_db)
    if args.split_ratio is not None:
        mapping["split_ratio"] = repr(args.split_ratio)
    cfg = datagen.config_from_mapping(mapping)
    echo = cfg.to_mapping()
    echo.update(seed=str(args.seed), n_frames=str(args.frames))
    _print_digest(echo)
    manifest = datagen.generate_dataset(cfg, args.out, args.frames, args.seed)
    n_train = len(manifest.split_frames("train"))
    n_val = len(manifest.split_frames("val"))
    print(f"wrote {len(manifest.frames)} frames ({n_train} train / {n_val} val) to {args.out}")
    return 0


def _write_predictions(out_dir: Path, method: str, preds: list[tuple[int, PredictionMap]]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["rdbev-predset 1", f"method = {method}"]
    for fid, pm in preds:
        rel = f"pred_{fid:06d}.rdp"
        container.write_prediction(pm, fid, out_dir / rel)
        lines.append(f"frame = {fid} {rel}")
    lines.append("end")
    (out_dir / "predictions.txt").write_text("\n".join(lines) + "\n")


def read_prediction_set(pred_dir: str | Path) -> tuple[str, dict[int, PredictionMap]]:
    pred_dir = Path(pred_dir)
    index = pred_dir / "predictions.txt"
    if not index.is_file():
        raise ValidationError(f"no prediction manifest at {index}")
    method = "unknown"
    preds: dict[int, PredictionMap] = {}
    for line in index.read_text().splitlines()[1:]:
        line = line.strip()
        if not line or line == "end":
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "method":
            method = value
        elif key == "frame":
            fid_txt, rel = value.split()
            fid, pm = container.read_prediction(pred_dir / rel)
            if fid != int(fid_txt):
                raise ValidationError(f"prediction file {rel} holds frame {fid}, index says {fid_txt}")
            preds[fid] = pm
    return method, preds


def _train_pos_frac(root: Path, manifest: container.DatasetManifest) -> float:
    n_sup = n_pos = 0
    for mf in manifest.split_frames("train"):
        rec = container.read_frame(manifest.frame_path(root, mf))
        n_sup += int(rec.sup.bits.sum())
        n_pos += int((rec.label.occupancy & rec.sup.bits).sum())
    if n_sup == 0:
        raise ValidationError("training split has no supervised cells")
    return n_pos / n_sup


def cmd_baseline(args: argparse.Namespace) -> int:
    manifest = _load_manifest(args.dataset)
    root = Path(args.dataset)
    cfg = datagen.manifest_gen_config(manifest)
    grid, radar = cfg.grid(), cfg.radar()
    _print_digest(
        {"command": "baseline", "method": args.method, "chirp": args.chirp, "dataset": _digest(dict(manifest.config))}
    )
    val = manifest.split_frames("val")
    if not val:
        raise ValidationError("dataset has no validation frames")
    preds: list[tuple[int, PredictionMap]] = []
    if args.method == "prior":
        pos_frac = _train_pos_frac(root, manifest)
        print(f"train pos_frac: {pos_frac:.6f}")
        constant = baselines.random_prior(pos_frac, grid)
        preds = [(mf.frame_id, constant) for mf in val]
    else:
        chirp = 0 if args.chirp == "a" else 1
        for mf in val:
            rec = container.read_frame(manifest.frame_path(root, mf))
            if args.method == "range_energy":
                pm = baselines.range_energy_projection(rec.rd, radar, grid, cfg.radar_offset())
            else:
                pm = baselines.beamform_prediction(
                    rec.rd, radar, grid, chirp=chirp, radar_offset=cfg.radar_offset()
                )
            preds.append((mf.frame_id, pm))
    _write_predictions(Path(args.out), args.method, preds)
    print(f"wrote {len(preds)} prediction maps to {args.out}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    manifest = _load_manifest(args.dataset)
    root = Path(args.dataset)
    out = Path(args.out)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    _print_digest(
        {"command": "ablate", "transform": args.transform, "dataset": _digest(dict(manifest.config))}
    )
    for mf in manifest.frames:
        rec = container.read_frame(manifest.frame_path(root, mf))
        if args.transform == "a_only":
            rd = select_chirps(rec.rd, ChirpMode.A_ONLY)
        elif args.transform == "b_only":
            rd = select_chirps(rec.rd, ChirpMode.B_ONLY)
        elif args.transform == "collapse_doppler":
            rd = collapse_dim(rec.rd, "doppler")
        else:
            rd = collapse_dim(rec.rd, "range")
        moved = FrameRecord(
            frame_id=rec.frame_id,
            sequence_id=rec.sequence_id,
            rd=rd,
            label=rec.label,
            hfov=rec.hfov,
            sup=rec.sup,
            cloud=rec.cloud,
            prediction=rec.prediction,
        )
        container.write_frame(moved, out / mf.relpath)
    config = dict(manifest.config)
    config["ablation"] = args.transform
    container.write_dataset_manifest(
        container.DatasetManifest(config, manifest.frames), out / "manifest.txt"
    )
    print(f"wrote {len(manifest.frames)} transformed frames to {out}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    manifest = _load_manifest(args.dataset)
    root = Path(args.dataset)
    cfg = datagen.manifest_gen_config(manifest)
    grid = cfg.grid()
    method, preds = read_prediction_set(args.predictions)
    val_ids = {mf.frame_id for mf in manifest.split_frames("val")}
    pred_ids = set(preds)
    if val_ids != pred_ids:
        missing = sorted(val_ids - pred_ids)
        extra = sorted(pred_ids - val_ids)
        raise ValidationError(
            f"prediction/frame id mismatch: missing={missing[:20]} extra={extra[:20]}"
        )
    _print_digest(
        {
            "command": "evaluate",
            "method": method,
            "dataset": _digest(dict(manifest.config)),
            "n_frames": str(len(pred_ids)),
        }
    )
    val = sorted(manifest.split_frames("val"), key=lambda mf: mf.frame_id)
    scores = np.empty((len(val),) + grid.shape, dtype=np.float64)
    labels = np.empty((len(val),) + grid.shape, dtype=bool)
    sup = np.empty_like(labels)
    unknown = np.empty_like(labels)
    hfov = np.empty_like(labels)
    for k, mf in enumerate(val):
        rec = container.read_frame(manifest.frame_path(root, mf))
        if rec.grid != grid:
            raise ValidationError(f"frame {mf.frame_id} grid differs from manifest grid")
        scores[k] = preds[mf.frame_id].probs
        labels[k] = rec.label.occupancy
        sup[k] = rec.sup.bits
        unknown[k] = rec.unknown_bits()
        hfov[k] = rec.hfov.bits
    rep = metrics.bandwise_report(scores, labels, sup, unknown, hfov, grid, cfg.radar_offset())
    report.emit_outputs(rep, args.out, title=f"BEV occupancy evaluation: {method}")
    print(report.format_report(rep, title=f"BEV occupancy evaluation: {method}"))
    print(f"outputs written to {Path(args.out).resolve()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdbev",
        description="Synthetic range-Doppler to BEV occupancy toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic dataset")
    g.add_argument("--config", help="key = value config file")
    g.add_argument("--out", required=True)
    g.add_argument("--frames", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--resolution", type=float, choices=(0.5, 0.4, 0.35), default=None)
    g.add_argument("--snr-db", type=float, default=None)
    g.add_argument("--split-ratio", type=float, default=None)
    g.set_defaults(func=cmd_generate)

    b = sub.add_parser("baseline", help="run a reference predictor on the validation split")
    b.add_argument("--dataset", required=True)
    b.add_argument("--method", choices=METHODS, required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--chirp", choices=("a", "b"), default="b", help="chirp for beamform method")
    b.set_defaults(func=cmd_baseline)

    a = sub.add_parser("ablate", help="apply an RD transform to every frame")
    a.add_argument("--dataset", required=True)
    a.add_argument("--transform", choices=TRANSFORMS, required=True)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_ablate)

    e = sub.add_parser("evaluate", help="evaluate predictions against a dataset")
    e.add_argument("--dataset", required=True)
    e.add_argument("--predictions", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RdbevError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
