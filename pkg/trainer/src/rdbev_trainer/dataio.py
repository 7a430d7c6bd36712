"""Reader for rdbev dataset directories and writer for its prediction-set
format.

This is an independent implementation of the documented container layout
(ASCII header, `end` marker, little-endian payload; complex tensors as
interleaved float32 re/im, masks bit-packed), so the trainer depends on the
file contract rather than on the rdbev package.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class FormatError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridInfo:
    resolution: float
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    height: int
    width: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True)
class FrameEntry:
    frame_id: int
    sequence_id: int
    split: str
    path: Path


@dataclass(frozen=True)
class Dataset:
    root: Path
    config: dict[str, str]
    frames: tuple[FrameEntry, ...]

    def split(self, name: str) -> list[FrameEntry]:
        return [f for f in self.frames if f.split == name]

    @property
    def grid(self) -> GridInfo:
        res = float(self.config["grid_resolution"])
        x0, x1 = float(self.config["grid_x_min"]), float(self.config["grid_x_max"])
        y0, y1 = float(self.config["grid_y_min"]), float(self.config["grid_y_max"])
        return GridInfo(
            res, x0, x1, y0, y1,
            int(round((x1 - x0) / res)), int(round((y1 - y0) / res)),
        )


def load_dataset(root: str | Path) -> Dataset:
    root = Path(root)
    path = root / "manifest.txt"
    lines = path.read_text(encoding="ascii").splitlines()
    if not lines or lines[0].strip() != "rdbev-dataset 1":
        raise FormatError(f"not an rdbev dataset manifest: {path}")
    config: dict[str, str] = {}
    frames: list[FrameEntry] = []
    for line in lines[1:]:
        line = line.strip()
        if not line or line.startswith("#") or line == "end":
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "frame":
            fid, sid, split, rel = value.split()
            frames.append(FrameEntry(int(fid), int(sid), split, root / rel))
        else:
            config[key] = value
    return Dataset(root, config, tuple(frames))


@dataclass(frozen=True)
class FrameArrays:
    """Lazily decoded frame: header fields plus array locators."""

    path: Path
    grid: GridInfo
    arrays: dict[str, tuple[str, tuple[int, ...], int, int]]  # dtype, dims, offset, nbytes
    payload_start: int

    def _raw(self, name: str) -> tuple[str, tuple[int, ...], bytes]:
        if name not in self.arrays:
            raise FormatError(f"{self.path.name}: no array {name!r}")
        dtype, dims, offset, nbytes = self.arrays[name]
        with open(self.path, "rb") as fh:
            fh.seek(self.payload_start + offset)
            buf = fh.read(nbytes)
        if len(buf) != nbytes:
            raise FormatError(f"{self.path.name}: truncated array {name!r}")
        return dtype, dims, buf

    def complex_tensor(self, name: str) -> np.ndarray:
        dtype, dims, buf = self._raw(name)
        if dtype != "c64":
            raise FormatError(f"{name!r} is not complex")
        flat = np.frombuffer(buf, dtype="<f4")
        return (flat[0::2] + 1j * flat[1::2]).astype(np.complex64).reshape(dims)

    def mask(self, name: str) -> np.ndarray:
        dtype, dims, buf = self._raw(name)
        if dtype != "bits":
            raise FormatError(f"{name!r} is not a bitmask")
        n = int(np.prod(dims))
        return np.unpackbits(np.frombuffer(buf, dtype=np.uint8), count=n).astype(bool).reshape(dims)


def open_frame(path: str | Path) -> FrameArrays:
    path = Path(path)
    raw = path.read_bytes()
    marker = b"\nend\n"
    pos = raw.find(marker)
    if pos < 0:
        raise FormatError(f"{path.name}: missing header end marker")
    header = raw[:pos].decode("ascii").split("\n")
    if header[0].strip() != "rdbev-frame 1":
        raise FormatError(f"{path.name}: bad magic")
    fields: dict[str, str] = {}
    arrays: dict[str, tuple[str, tuple[int, ...], int, int]] = {}
    for line in header[1:]:
        if "=" not in line:
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "array":
            parts = value.split()
            name, dtype = parts[0], parts[1]
            nums = [int(p) for p in parts[2:]]
            arrays[name] = (dtype, tuple(nums[:-2]), nums[-2], nums[-1])
        else:
            fields[key] = value
    g = fields["grid"].split()
    grid = GridInfo(
        float(g[0]), float(g[1]), float(g[2]), float(g[3]), float(g[4]), int(g[5]), int(g[6])
    )
    return FrameArrays(path, grid, arrays, pos + len(marker))


MODES = ("ab", "a_only", "b_only", "collapse_doppler", "collapse_range")


def noise_sigma_from_config(config: dict[str, str]) -> float | None:
    """Per-component noise std the generator used, reconstructed from the
    manifest echo; None when the dataset is noise-free."""
    try:
        snr_db = float(config["radar_snr_db"])
        ref_range = float(config["prop_reference_range_m"])
        exponent = float(config["prop_amplitude_exponent"])
    except KeyError:
        return None
    if np.isinf(snr_db):
        return None
    ref_amp = 1.0 / ref_range**exponent
    noise_power = ref_amp**2 * 10.0 ** (-snr_db / 10.0)
    return float(np.sqrt(noise_power / 2.0))


def augment_rd(
    rd: np.ndarray, rng: np.random.Generator, noise_sigma: float | None
) -> np.ndarray:
    """Label-preserving measurement augmentations on the raw complex tensor:
    a global carrier phase rotation, a circular Doppler shift (uniform radial
    velocity offset), and fresh receiver noise up to ~70% of the dataset's
    noise floor.  Occupancy depends on none of these."""
    rd = rd * np.complex64(np.exp(1j * rng.uniform(0.0, 2.0 * np.pi)))
    shift = int(rng.integers(-16, 17))
    if shift:
        rd = np.roll(rd, shift, axis=3)
    if noise_sigma is not None:
        scale = np.float32(rng.uniform(0.0, 0.7) * noise_sigma)
        rd = rd + scale * (
            rng.standard_normal(rd.shape, dtype=np.float32)
            + 1j * rng.standard_normal(rd.shape, dtype=np.float32)
        )
    return rd


def model_input(
    frame: FrameArrays,
    mode: str = "ab",
    augment_rng: np.random.Generator | None = None,
    noise_sigma: float | None = None,
) -> np.ndarray:
    """(2*C_rx, ...) float32 network input: optional train-time augmentation
    on the raw complex tensor, then the ablation transform, then per-cell
    normalization by sqrt(mean RX power), then re/im stacked into channels.
    Output shape (2, 2*N_rx, R, D)."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    rd = frame.complex_tensor("rd").astype(np.complex64)  # (2, rx, R, D)
    if augment_rng is not None:
        rd = augment_rd(rd, augment_rng, noise_sigma)
    if mode == "a_only":
        rd[1] = 0
    elif mode == "b_only":
        rd[0] = 0
    elif mode == "collapse_doppler":
        rd[:] = rd.mean(axis=3, keepdims=True)
    elif mode == "collapse_range":
        rd[:] = rd.mean(axis=2, keepdims=True)
    power = np.mean(np.abs(rd) ** 2, axis=1, keepdims=True)
    rd /= np.sqrt(power + 1e-12, dtype=np.float32)
    n_chirp, n_rx, n_r, n_d = rd.shape
    out = np.empty((n_chirp, 2 * n_rx, n_r, n_d), dtype=np.float32)
    out[:, 0::2] = rd.real
    out[:, 1::2] = rd.imag
    return out


def frame_targets(frame: FrameArrays) -> tuple[np.ndarray, np.ndarray]:
    """(occupancy, supervision mask) boolean H x W."""
    return frame.mask("occupancy"), frame.mask("sup")


def write_prediction_set(
    out_dir: str | Path, method: str, preds: list[tuple[int, np.ndarray]], grid: GridInfo
) -> None:
    """Write probability maps in the rdbev prediction-set layout so the
    primary `rdbev evaluate` command can score them."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid_line = (
        f"{grid.resolution!r} {grid.x_min!r} {grid.x_max!r} "
        f"{grid.y_min!r} {grid.y_max!r} {grid.height} {grid.width}"
    )
    index = ["rdbev-predset 1", f"method = {method}"]
    for fid, probs in preds:
        probs = np.asarray(probs, dtype="<f4")
        if probs.shape != grid.shape:
            raise FormatError(f"prediction shape {probs.shape} != grid {grid.shape}")
        payload = probs.tobytes()
        rel = f"pred_{fid:06d}.rdp"
        header = "\n".join(
            [
                "rdbev-pred 1",
                f"frame_id = {fid}",
                f"grid = {grid_line}",
                f"array = probs f32 {grid.height} {grid.width} 0 {len(payload)}",
                "end",
            ]
        )
        (out_dir / rel).write_bytes(header.encode("ascii") + b"\n" + payload)
        index.append(f"frame = {fid} {rel}")
    index.append("end")
    (out_dir / "predictions.txt").write_text("\n".join(index) + "\n")
