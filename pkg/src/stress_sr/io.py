"""On-disk formats: STRVOL1 volumes, CSV tables, scan directories, checkpoints."""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .acquisition import Frame, ScanProtocol
from .metrics import KeypointRecord
from .motion import KeypointSet, Trajectory
from .volume import Volume


class FormatError(ValueError):
    pass


VOLUME_MAGIC = b"STRVOL1\0"
_VOLUME_HEADER = struct.Struct("<8s3I3f3fI")
DTYPE_F32 = 0


def write_volume(path, v: Volume):
    """Write ``v`` as STRVOL1 (little-endian, x-fastest payload)."""
    nx, ny, nz = v.shape
    header = _VOLUME_HEADER.pack(VOLUME_MAGIC, nx, ny, nz, *v.spacing, *v.origin, DTYPE_F32)
    payload = np.asarray(v.data, dtype="<f4").ravel(order="F").tobytes()
    Path(path).write_bytes(header + payload)


def read_volume(path) -> Volume:
    raw = Path(path).read_bytes()
    if len(raw) < _VOLUME_HEADER.size:
        raise FormatError(f"{path}: truncated STRVOL1 header")
    magic, nx, ny, nz, sx, sy, sz, ox, oy, oz, dtype = _VOLUME_HEADER.unpack_from(raw)
    if magic != VOLUME_MAGIC:
        raise FormatError(f"{path}: not a STRVOL1 file")
    if dtype != DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype code {dtype}")
    n = nx * ny * nz
    body = raw[_VOLUME_HEADER.size :]
    if len(body) != 4 * n:
        raise FormatError(f"{path}: payload has {len(body)} bytes, expected {4 * n}")
    data = np.frombuffer(body, dtype="<f4").reshape((nx, ny, nz), order="F")
    # float32 header fields widen to float64 exactly, so rewriting is lossless.
    return Volume(data, (sx, sy, sz), (ox, oy, oz))


TRAJECTORY_HEADER = ["t_s", "elx", "ely", "elz", "erx", "ery", "erz", "smx", "smy", "smz"]


def write_trajectory(path, traj: Trajectory):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for t, kp in zip(traj.times, traj.keypoints):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in kp.as_array().ravel()])


def read_trajectory(path) -> Trajectory:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TRAJECTORY_HEADER:
        raise FormatError(f"{path}: bad trajectory header")
    times, kps = [], []
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != len(TRAJECTORY_HEADER):
            raise FormatError(f"{path}:{n}: expected {len(TRAJECTORY_HEADER)} columns")
        try:
            vals = [float(x) for x in row]
        except ValueError as exc:
            raise FormatError(f"{path}:{n}: {exc}") from None
        times.append(vals[0])
        kps.append(KeypointSet.from_array(vals[1:]))
    return Trajectory(np.array(times), kps)


KEYPOINT_HEADER = ["frame", "id", "x_mm", "y_mm", "z_mm", "role"]


def write_keypoints(path, records):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(KEYPOINT_HEADER)
        for r in records:
            w.writerow([r.frame, r.id, *(repr(p) for p in r.position), r.role])


def read_keypoints(path) -> list[KeypointRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != KEYPOINT_HEADER:
        raise FormatError(f"{path}: bad keypoint header")
    out = []
    for n, row in enumerate(rows[1:], start=2):
        try:
            out.append(KeypointRecord(int(row[0]), int(row[1]), tuple(float(x) for x in row[2:5]), row[5]))
        except (ValueError, IndexError) as exc:
            raise FormatError(f"{path}:{n}: {exc}") from None
    return out


def phantom_keypoint_records(kp: KeypointSet, frame: int = 0, role: str = "truth"):
    """The three pose keypoints as records with ids 1 (left eye), 2 (right eye), 3 (shoulder)."""
    return [KeypointRecord(frame, i + 1, tuple(p), role) for i, p in enumerate(kp.as_array())]


def write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from None


def write_scan(directory, frames: list[Frame], protocol: ScanProtocol):
    """Scan directory: ``manifest.json`` plus one STRVOL1 per frame."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for fr in frames:
        name = f"frame_{fr.frame_index:04d}.strvol"
        write_volume(directory / name, Volume(fr.slices, fr.spacing, fr.origin))
        entries.append(
            {
                "k": fr.frame_index,
                "z_indices": list(fr.z_indices),
                "times": list(fr.times),
                "subset_phase": (fr.frame_index - 1) % protocol.n_interleave,
                "file": name,
            }
        )
    write_json(directory / "manifest.json", {"protocol": protocol.to_dict(), "frames": entries})


def read_scan(directory) -> tuple[list[Frame], ScanProtocol]:
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    try:
        protocol = ScanProtocol(**manifest["protocol"])
        frames = []
        for e in manifest["frames"]:
            v = read_volume(directory / e["file"])
            frames.append(Frame(v.data, e["z_indices"], e["times"], e["k"], v.spacing, v.origin))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{directory}: malformed manifest: {exc}") from None
    return frames, protocol


def write_series(directory, volumes, prefix="frame", first_index=1):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, v in enumerate(volumes, start=first_index):
        name = f"{prefix}_{i:04d}.strvol"
        write_volume(directory / name, v)
        names.append(name)
    write_json(directory / "series.json", {"files": names, "first_index": first_index})
    return names


def read_series(directory) -> list[Volume]:
    directory = Path(directory)
    meta = read_json(directory / "series.json")
    return [read_volume(directory / n) for n in meta["files"]]


def write_loss_csv(path, history):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss"])
        for i, loss in enumerate(history, start=1):
            w.writerow([i, repr(float(loss))])


CHECKPOINT_MAGIC = b"STRCKPT\0"
CHECKPOINT_VERSION = 1


def write_checkpoint(path, header: dict, arrays: dict[str, np.ndarray]):
    """Versioned container: magic, u32 header length, JSON header, raw f32 arrays."""
    index = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype="<f4")
        index.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(a.tobytes())
        offset += a.nbytes
    meta = dict(header, format_version=CHECKPOINT_VERSION, arrays=index)
    text = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    Path(path).write_bytes(CHECKPOINT_MAGIC + struct.pack("<I", len(text)) + text + b"".join(blobs))


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    (n,) = struct.unpack_from("<I", raw, 8)
    meta = json.loads(raw[12 : 12 + n].decode("utf-8"))
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {meta.get('format_version')}")
    base = 12 + n
    arrays = {}
    for entry in meta.pop("arrays"):
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start = base + entry["offset"]
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f4", count=count, offset=start).reshape(entry["shape"])
    return meta, arrays


def write_pairs(path, pairs):
    """Dump pairs as JSON-lines metadata plus a raw f32 sidecar (``path + '.bin'``)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as meta_fh, open(str(path) + ".bin", "wb") as bin_fh:
        for p in pairs:
            record = {
                "k": p.meta.k,
                "x": p.meta.x,
                "row": p.meta.row,
                "col": p.meta.col,
                "lr_shape": list(p.lr.shape),
                "hr_shape": list(p.hr.shape),
                "flips": list(p.flips),
            }
            meta_fh.write(json.dumps(record, sort_keys=True) + "\n")
            bin_fh.write(np.ascontiguousarray(p.lr, dtype="<f4").tobytes())
            bin_fh.write(np.ascontiguousarray(p.hr, dtype="<f4").tobytes())


def read_pairs(path):
    from .sampling import PairMeta, PatchPair

    path = Path(path)
    raw = Path(str(path) + ".bin").read_bytes()
    pairs, offset = [], 0
    for line in path.read_text(encoding="utf-8").splitlines():
        rec = json.loads(line)
        arrs = []
        for key in ("lr_shape", "hr_shape"):
            count = int(np.prod(rec[key]))
            arrs.append(np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(rec[key]).copy())
            offset += 4 * count
        meta = PairMeta(rec["k"], rec["x"], rec["row"], rec["col"])
        pairs.append(PatchPair(arrs[0], arrs[1], meta, tuple(rec["flips"])))
    return pairs
