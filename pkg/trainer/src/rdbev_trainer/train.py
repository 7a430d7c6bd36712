"""Training loop: AdamW with cosine decay, masked focal loss over the
supervision mask, per-epoch validation AP, prediction export in the rdbev
format, and a `epoch,train_loss,val_ap` CSV log."""

from __future__ import annotations

import argparse
import math
import time
from pathlib import Path

import numpy as np
import torch

from . import dataio
from .model import DualChirpBevNet, ModelConfig, masked_focal_loss


def pooled_average_precision(scores: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    """AP over masked cells pooled across frames (step integration, tie
    groups enter together) - the rdbev evaluation convention."""
    s = np.asarray(scores, dtype=np.float64)[mask]
    y = np.asarray(labels, dtype=bool)[mask]
    n_pos = int(y.sum())
    if n_pos == 0:
        return float("nan")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.ones(s.size, dtype=bool)
    last[:-1] = s[:-1] != s[1:]
    ends = np.nonzero(last)[0]
    tp = np.cumsum(y)[ends]
    prec = tp / (ends + 1)
    rec = tp / n_pos
    return float(np.sum(np.diff(rec, prepend=0.0) * prec))


class FrameBatcher:
    """Loads network inputs and targets for a list of frames on demand.
    With an augmentation RNG set, every load applies fresh label-preserving
    measurement augmentations (training only)."""

    def __init__(
        self,
        frames: list[dataio.FrameEntry],
        mode: str,
        augment_rng: np.random.Generator | None = None,
        noise_sigma: float | None = None,
    ):
        self.frames = frames
        self.mode = mode
        self.augment_rng = augment_rng
        self.noise_sigma = noise_sigma

    def load(self, entry: dataio.FrameEntry):
        fr = dataio.open_frame(entry.path)
        x = dataio.model_input(fr, self.mode, self.augment_rng, self.noise_sigma)
        occ, sup = dataio.frame_targets(fr)
        return x, occ, sup

    def batches(self, order: np.ndarray, batch_size: int):
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            xs, occs, sups = [], [], []
            for k in idx:
                x, occ, sup = self.load(self.frames[int(k)])
                xs.append(x)
                occs.append(occ)
                sups.append(sup)
            yield (
                torch.from_numpy(np.stack(xs)),
                torch.from_numpy(np.stack(occs)),
                torch.from_numpy(np.stack(sups)),
            )


def _validate(
    net: DualChirpBevNet,
    batcher: FrameBatcher,
    limit: int | None,
    batch_size: int,
) -> tuple[float, list[tuple[int, np.ndarray]]]:
    net.eval()
    frames = batcher.frames if limit is None else batcher.frames[:limit]
    probs_all, occ_all, sup_all, preds = [], [], [], []
    with torch.no_grad():
        sub = FrameBatcher(frames, batcher.mode)
        order = np.arange(len(frames))
        k = 0
        for x, occ, sup in sub.batches(order, batch_size):
            p = torch.sigmoid(net(x)).numpy()
            for row in range(p.shape[0]):
                preds.append((frames[k].frame_id, p[row]))
                k += 1
            probs_all.append(p)
            occ_all.append(occ.numpy())
            sup_all.append(sup.numpy())
    net.train()
    ap = pooled_average_precision(
        np.concatenate(probs_all), np.concatenate(occ_all), np.concatenate(sup_all)
    )
    return ap, preds


def train(
    dataset_dir: str | Path,
    out_dir: str | Path,
    mode: str = "ab",
    epochs: int = 50,
    batch_size: int = 4,
    lr: float = 1e-4,
    weight_decay: float = 0.01,
    seed: int = 0,
    val_limit: int | None = 128,
    stop_at_ap: float | None = None,
    model_config: ModelConfig | None = None,
    log_every: int = 50,
    augment: bool = True,
) -> dict:
    """Train one model; returns a summary dict.  Writes to out_dir:
    checkpoint.pt, training_log.csv, and predictions/ for the full validation
    split at the final weights."""
    if mode not in dataio.MODES:
        raise ValueError(f"mode must be one of {dataio.MODES}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = dataio.load_dataset(dataset_dir)
    train_frames = ds.split("train")
    val_frames = ds.split("val")
    if not train_frames or not val_frames:
        raise RuntimeError("dataset needs nonempty train and val splits")
    grid = ds.grid

    torch.manual_seed(seed)
    cfg = model_config or ModelConfig(out_height=grid.height, out_width=grid.width)
    net = DualChirpBevNet(cfg)
    opt = torch.optim.AdamW(net.parameters(), lr=lr, weight_decay=weight_decay)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=epochs)
    rng = np.random.default_rng(seed)
    aug_rng = np.random.default_rng((seed, 1)) if augment else None
    noise_sigma = dataio.noise_sigma_from_config(ds.config) if augment else None
    train_batcher = FrameBatcher(train_frames, mode, aug_rng, noise_sigma)
    val_batcher = FrameBatcher(val_frames, mode)

    log_rows = ["epoch,train_loss,val_ap"]
    best_ap = float("nan")
    t_start = time.time()
    stopped_early = False
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(train_frames))
        losses = []
        for bi, (x, occ, sup) in enumerate(train_batcher.batches(order, batch_size)):
            opt.zero_grad()
            logits = net(x)
            loss = masked_focal_loss(logits, occ, sup, cfg.focal_gamma, cfg.focal_alpha)
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
            if log_every and (bi + 1) % log_every == 0:
                print(
                    f"epoch {epoch} step {bi + 1}/{math.ceil(len(order) / batch_size)} "
                    f"loss {np.mean(losses[-log_every:]):.5f}",
                    flush=True,
                )
        sched.step()
        val_ap, _ = _validate(net, val_batcher, val_limit, batch_size)
        train_loss = float(np.mean(losses))
        log_rows.append(f"{epoch},{train_loss:.6f},{val_ap:.6f}")
        (out_dir / "training_log.csv").write_text("\n".join(log_rows) + "\n")
        print(
            f"epoch {epoch}/{epochs} loss {train_loss:.5f} val_ap {val_ap:.4f} "
            f"elapsed {time.time() - t_start:.0f}s",
            flush=True,
        )
        best_ap = val_ap if math.isnan(best_ap) else max(best_ap, val_ap)
        if stop_at_ap is not None and val_ap >= stop_at_ap:
            stopped_early = True
            break

    final_ap, preds = _validate(net, val_batcher, None, batch_size)
    dataio.write_prediction_set(out_dir / "predictions", f"trained_{mode}", preds, grid)
    torch.save(
        {"model": net.state_dict(), "config": cfg.__dict__, "mode": mode, "epochs": epoch},
        out_dir / "checkpoint.pt",
    )
    summary = {
        "mode": mode,
        "epochs_run": epoch,
        "stopped_early": stopped_early,
        "final_val_ap": final_ap,
        "best_subset_val_ap": best_ap,
        "parameters": net.parameter_count(),
        "seconds": time.time() - t_start,
    }
    (out_dir / "summary.txt").write_text(
        "".join(f"{k} = {v}\n" for k, v in summary.items())
    )
    print(f"final full-val AP: {final_ap:.4f} ({summary['seconds']:.0f}s)", flush=True)
    return summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Train the dual-chirp RD-to-BEV network")
    parser.add_argument("--dataset", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--mode", choices=dataio.MODES, default="ab")
    parser.add_argument("--epochs", type=int, default=50)
    parser.add_argument("--batch-size", type=int, default=4)
    parser.add_argument("--lr", type=float, default=1e-4)
    parser.add_argument("--weight-decay", type=float, default=0.01)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--val-limit", type=int, default=128,
                        help="frames for the per-epoch AP probe (full set at the end)")
    parser.add_argument("--stop-at-ap", type=float, default=None,
                        help="stop once the per-epoch validation AP reaches this value")
    parser.add_argument("--no-augment", action="store_true",
                        help="disable train-time measurement augmentation")
    args = parser.parse_args(argv)
    train(
        args.dataset,
        args.out,
        mode=args.mode,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        weight_decay=args.weight_decay,
        seed=args.seed,
        val_limit=args.val_limit,
        stop_at_ap=args.stop_at_ap,
        augment=not args.no_augment,
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
