"""Single-file frame container and dataset manifest I/O.

A frame file is an ASCII header followed by a raw binary payload:

    rdbev-frame 1
    frame_id = 17
    sequence_id = 2
    grid = 0.5 0.0 60.0 -38.0 38.0 120 152
    radar = 9f8a6c...
    array = rd c64 2 8 200 128 0 3276800
    array = occupancy bits 120 152 3276800 2280
    ...
    end
    <payload bytes>

Array dtypes: ``c64`` = complex stored as interleaved little-endian float32
re/im pairs, ``f32`` = little-endian float32, ``bits`` = bit-packed booleans
padded to a byte boundary.  Offsets are relative to the end of the header
(the byte after the ``end`` line).  The format is deliberately trivial to
parse from any language.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    BevGridSpec,
    BevLabel,
    BevMask,
    FrameRecord,
    PointCloud,
    PredictionMap,
    RdbevError,
    RdFrame,
    Scatterer,
    Scene,
)

FRAME_MAGIC = "rdbev-frame 1"
PRED_MAGIC = "rdbev-pred 1"
DATASET_MAGIC = "rdbev-dataset 1"


class MalformedHeaderError(RdbevError):
    """Header text cannot be parsed."""


class ShapeMismatchError(RdbevError):
    """Array manifest dimensions disagree with byte counts or the grid."""


class TruncatedPayloadError(RdbevError):
    """File ends before the last array's stated extent."""


@dataclass(frozen=True)
class _ArrayEntry:
    name: str
    dtype: str  # c64 | f32 | bits
    dims: tuple[int, ...]
    offset: int
    nbytes: int


def _expected_nbytes(dtype: str, dims: tuple[int, ...]) -> int:
    n = int(np.prod(dims)) if dims else 0
    if dtype == "c64":
        return n * 8
    if dtype == "f32":
        return n * 4
    if dtype == "bits":
        return (n + 7) // 8
    raise MalformedHeaderError(f"unknown array dtype {dtype!r}")


def _grid_header(grid: BevGridSpec) -> str:
    return grid.header_text()


def _parse_grid(line: str) -> BevGridSpec:
    parts = line.split()
    if len(parts) != 7:
        raise MalformedHeaderError(f"bad grid line: {line!r}")
    try:
        res, x0, x1, y0, y1 = (float(p) for p in parts[:5])
        h, w = int(parts[5]), int(parts[6])
    except ValueError as exc:
        raise MalformedHeaderError(f"bad grid line: {line!r}") from exc
    grid = BevGridSpec(resolution=res, x_range=(x0, x1), y_range=(y0, y1))
    if grid.shape != (h, w):
        raise ShapeMismatchError(
            f"grid header claims {h}x{w} cells but extent/resolution give {grid.shape}"
        )
    return grid


class _HeaderReader:
    """Incremental reader for the ASCII header of a container file."""

    def __init__(self, raw: bytes, magic: str):
        end_marker = b"\nend\n"
        pos = raw.find(end_marker)
        if pos < 0:
            raise MalformedHeaderError("missing end-of-header marker")
        try:
            text = raw[:pos].decode("ascii")
        except UnicodeDecodeError as exc:
            raise MalformedHeaderError("header is not ASCII") from exc
        lines = text.split("\n")
        if not lines or lines[0].strip() != magic:
            raise MalformedHeaderError(f"bad magic, expected {magic!r}")
        self.fields: dict[str, str] = {}
        self.arrays: list[_ArrayEntry] = []
        for line in lines[1:]:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise MalformedHeaderError(f"bad header line: {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key == "array":
                self.arrays.append(self._parse_array(value))
            else:
                self.fields[key] = value
        self.payload = raw[pos + len(end_marker):]

    @staticmethod
    def _parse_array(value: str) -> _ArrayEntry:
        parts = value.split()
        if len(parts) < 4:
            raise MalformedHeaderError(f"bad array line: {value!r}")
        name, dtype = parts[0], parts[1]
        try:
            nums = [int(p) for p in parts[2:]]
        except ValueError as exc:
            raise MalformedHeaderError(f"bad array line: {value!r}") from exc
        dims, offset, nbytes = tuple(nums[:-2]), nums[-2], nums[-1]
        if offset < 0 or nbytes < 0 or any(d < 0 for d in dims):
            raise MalformedHeaderError(f"negative sizes in array line: {value!r}")
        entry = _ArrayEntry(name, dtype, dims, offset, nbytes)
        if _expected_nbytes(dtype, dims) != nbytes:
            raise ShapeMismatchError(
                f"array {name!r}: dims {dims} imply "
                f"{_expected_nbytes(dtype, dims)} bytes, header says {nbytes}"
            )
        return entry

    def require(self, key: str) -> str:
        if key not in self.fields:
            raise MalformedHeaderError(f"missing header field {key!r}")
        return self.fields[key]

    def array_bytes(self, entry: _ArrayEntry) -> bytes:
        end = entry.offset + entry.nbytes
        if end > len(self.payload):
            raise TruncatedPayloadError(
                f"array {entry.name!r} extends to byte {end} but payload has "
                f"{len(self.payload)} bytes"
            )
        return self.payload[entry.offset : end]

    def decode(self, entry: _ArrayEntry) -> np.ndarray:
        buf = self.array_bytes(entry)
        if entry.dtype == "c64":
            flat = np.frombuffer(buf, dtype="<f4")
            cplx = flat[0::2].astype(np.float64) + 1j * flat[1::2].astype(np.float64)
            return cplx.reshape(entry.dims)
        if entry.dtype == "f32":
            return np.frombuffer(buf, dtype="<f4").reshape(entry.dims)
        if entry.dtype == "bits":
            n = int(np.prod(entry.dims)) if entry.dims else 0
            bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8), count=n)
            return bits.astype(bool).reshape(entry.dims)
        raise MalformedHeaderError(f"unknown array dtype {entry.dtype!r}")


class _ContainerWriter:
    def __init__(self, magic: str):
        self.lines = [magic]
        self.chunks: list[bytes] = []
        self.offset = 0

    def field(self, key: str, value) -> None:
        self.lines.append(f"{key} = {value}")

    def array(self, name: str, dtype: str, dims: tuple[int, ...], payload: bytes) -> None:
        expected = _expected_nbytes(dtype, dims)
        if len(payload) != expected:
            raise ShapeMismatchError(
                f"array {name!r}: building {len(payload)} bytes, dims imply {expected}"
            )
        dim_txt = " ".join(str(d) for d in dims)
        self.lines.append(f"array = {name} {dtype} {dim_txt} {self.offset} {len(payload)}")
        self.chunks.append(payload)
        self.offset += len(payload)

    def complex_array(self, name: str, data: np.ndarray) -> None:
        flat = np.asarray(data, dtype=np.complex128).ravel()
        inter = np.empty(flat.size * 2, dtype="<f4")
        inter[0::2] = flat.real.astype(np.float32)
        inter[1::2] = flat.imag.astype(np.float32)
        self.array(name, "c64", data.shape, inter.tobytes())

    def f32_array(self, name: str, data: np.ndarray) -> None:
        self.array(name, "f32", data.shape, np.asarray(data, dtype="<f4").tobytes())

    def bits_array(self, name: str, data: np.ndarray) -> None:
        bits = np.asarray(data, dtype=bool)
        self.array(name, "bits", bits.shape, np.packbits(bits.ravel()).tobytes())

    def tobytes(self) -> bytes:
        header = "\n".join(self.lines) + "\nend\n"
        return header.encode("ascii") + b"".join(self.chunks)


def write_frame(record: FrameRecord, path: str | Path) -> None:
    """Serialize a FrameRecord; the write is atomic via a temp file."""
    w = _ContainerWriter(FRAME_MAGIC)
    w.field("frame_id", record.frame_id)
    w.field("sequence_id", record.sequence_id)
    w.field("grid", _grid_header(record.grid))
    w.field("radar", record.rd.config_digest)
    w.complex_array("rd", record.rd.data)
    w.bits_array("occupancy", record.label.occupancy)
    w.bits_array("observable", record.label.observable.bits)
    w.bits_array("hfov", record.hfov.bits)
    w.bits_array("sup", record.sup.bits)
    if record.cloud is not None:
        w.f32_array("points", record.cloud.points)
        w.bits_array("ground", record.cloud.ground)
    if record.prediction is not None:
        w.f32_array("probs", record.prediction.probs)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(w.tobytes())
    tmp.replace(path)


def read_frame(path: str | Path) -> FrameRecord:
    """Parse a frame file. Raises MalformedHeaderError / ShapeMismatchError /
    TruncatedPayloadError; never returns a partial record."""
    reader = _HeaderReader(Path(path).read_bytes(), FRAME_MAGIC)
    try:
        frame_id = int(reader.require("frame_id"))
        sequence_id = int(reader.require("sequence_id"))
    except ValueError as exc:
        raise MalformedHeaderError("frame/sequence ids must be integers") from exc
    grid = _parse_grid(reader.require("grid"))
    digest = reader.require("radar")
    arrays = {e.name: e for e in reader.arrays}
    for required in ("rd", "occupancy", "observable", "hfov", "sup"):
        if required not in arrays:
            raise MalformedHeaderError(f"frame file lacks array {required!r}")
    rd_entry = arrays["rd"]
    if len(rd_entry.dims) != 4:
        raise ShapeMismatchError(f"rd tensor must be 4-D, header says {rd_entry.dims}")
    for name in ("occupancy", "observable", "hfov", "sup"):
        if arrays[name].dims != grid.shape:
            raise ShapeMismatchError(
                f"mask {name!r} dims {arrays[name].dims} do not match grid {grid.shape}"
            )
    rd = RdFrame(reader.decode(rd_entry), digest)
    observable = BevMask(reader.decode(arrays["observable"]), grid)
    label = BevLabel(reader.decode(arrays["occupancy"]), observable)
    hfov = BevMask(reader.decode(arrays["hfov"]), grid)
    sup = BevMask(reader.decode(arrays["sup"]), grid)
    cloud = None
    if "points" in arrays:
        if "ground" not in arrays:
            raise MalformedHeaderError("points array present without ground flags")
        pts = reader.decode(arrays["points"])
        if pts.ndim != 2 or (pts.size and pts.shape[1] != 3):
            raise ShapeMismatchError(f"points must be (N, 3), header says {arrays['points'].dims}")
        cloud = PointCloud(pts, reader.decode(arrays["ground"]))
    prediction = None
    if "probs" in arrays:
        prediction = PredictionMap(reader.decode(arrays["probs"]), grid)
    return FrameRecord(frame_id, sequence_id, rd, label, hfov, sup, cloud, prediction)


def write_prediction(probs: PredictionMap, frame_id: int, path: str | Path) -> None:
    w = _ContainerWriter(PRED_MAGIC)
    w.field("frame_id", frame_id)
    w.field("grid", _grid_header(probs.grid))
    w.f32_array("probs", probs.probs)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(w.tobytes())
    tmp.replace(path)


def read_prediction(path: str | Path) -> tuple[int, PredictionMap]:
    reader = _HeaderReader(Path(path).read_bytes(), PRED_MAGIC)
    try:
        frame_id = int(reader.require("frame_id"))
    except ValueError as exc:
        raise MalformedHeaderError("frame_id must be an integer") from exc
    grid = _parse_grid(reader.require("grid"))
    arrays = {e.name: e for e in reader.arrays}
    if "probs" not in arrays:
        raise MalformedHeaderError("prediction file lacks probs array")
    if arrays["probs"].dims != grid.shape:
        raise ShapeMismatchError("probs dims do not match grid")
    return frame_id, PredictionMap(reader.decode(arrays["probs"]), grid)


@dataclass(frozen=True)
class ManifestFrame:
    frame_id: int
    sequence_id: int
    split: str  # train | val
    relpath: str


@dataclass(frozen=True)
class DatasetManifest:
    config: dict[str, str]
    frames: tuple[ManifestFrame, ...]

    def split_frames(self, split: str) -> list[ManifestFrame]:
        return [f for f in self.frames if f.split == split]

    def frame_path(self, root: str | Path, frame: ManifestFrame) -> Path:
        return Path(root) / frame.relpath


def write_dataset_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    lines = [DATASET_MAGIC]
    for key in sorted(manifest.config):
        lines.append(f"{key} = {manifest.config[key]}")
    for f in manifest.frames:
        lines.append(f"frame = {f.frame_id} {f.sequence_id} {f.split} {f.relpath}")
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_dataset_manifest(path: str | Path) -> DatasetManifest:
    text = Path(path).read_text(encoding="ascii")
    lines = text.splitlines()
    if not lines or lines[0].strip() != DATASET_MAGIC:
        raise MalformedHeaderError(f"bad dataset magic in {path}")
    config: dict[str, str] = {}
    frames: list[ManifestFrame] = []
    for line in lines[1:]:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line == "end":
            break
        if "=" not in line:
            raise MalformedHeaderError(f"bad manifest line: {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "frame":
            parts = value.split()
            if len(parts) != 4 or parts[2] not in ("train", "val"):
                raise MalformedHeaderError(f"bad frame line: {line!r}")
            frames.append(ManifestFrame(int(parts[0]), int(parts[1]), parts[2], parts[3]))
        else:
            config[key] = value
    return DatasetManifest(config, tuple(frames))


def write_scene(scene: Scene, path: str | Path) -> None:
    """Line-oriented scene format: one scatterer per line,
    ``x y height radius reflectivity vx vy``."""
    lines = [
        f"# ground_extent = {scene.ground_extent_m!r}",
        f"# radar_offset = {scene.radar_origin_offset[0]!r} {scene.radar_origin_offset[1]!r}",
    ]
    for s in scene.scatterers:
        lines.append(
            f"{s.x!r} {s.y!r} {s.height!r} {s.radius!r} {s.reflectivity!r} {s.vx!r} {s.vy!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_scene(path: str | Path) -> Scene:
    ground_extent = 80.0
    radar_offset = (0.0, 0.0)
    scatterers: list[Scatterer] = []
    for raw in Path(path).read_text(encoding="ascii").splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, value = (s.strip() for s in body.split("=", 1))
                if key == "ground_extent":
                    ground_extent = float(value)
                elif key == "radar_offset":
                    dx, dy = (float(v) for v in value.split())
                    radar_offset = (dx, dy)
            continue
        parts = line.split()
        if len(parts) != 7:
            raise MalformedHeaderError(f"scene line needs 7 fields: {line!r}")
        x, y, h, rad, refl, vx, vy = (float(p) for p in parts)
        scatterers.append(Scatterer(x, y, h, rad, refl, vx, vy))
    return Scene(tuple(scatterers), ground_extent, radar_offset)
