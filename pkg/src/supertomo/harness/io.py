"""On-disk formats: binary vectors, sidecar headers, PGM previews, CSV curves.

The binary vector container is the magic string followed by a u64 length
and the f64 payload, all little-endian.  Shape and scan metadata live in
plain-text sidecar files next to the binary (``<file>.meta`` for images,
``<file>.geom`` for sinograms) so the container itself stays minimal.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..geometry import ScanGeometry, Sinogram
from ..linops import Image
from ..solvers import CurveRecord

VEC_MAGIC = b"SUPTOMO-VEC1"

_U64 = np.dtype("<u8")
_F64 = np.dtype("<f8")

# gray-scale display window defaults; values at or below lo map to black,
# at or above hi to white, linearly in between
WINDOW_LO = 0.204
WINDOW_HI = 0.21675


def write_vector(path, vec: np.ndarray) -> None:
    vec = np.ascontiguousarray(vec, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(VEC_MAGIC)
        fh.write(np.array([vec.size], dtype=_U64).tobytes())
        fh.write(vec.astype(_F64).tobytes())


def read_vector(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(VEC_MAGIC)] != VEC_MAGIC:
        raise ValueError(f"{path}: not a {VEC_MAGIC.decode()} file")
    off = len(VEC_MAGIC)
    (length,) = np.frombuffer(blob, _U64, count=1, offset=off)
    off += 8
    vec = np.frombuffer(blob, _F64, count=int(length), offset=off).astype(np.float64)
    if off + int(length) * 8 != len(blob):
        raise ValueError(f"{path}: trailing bytes after vector payload")
    return vec


def _write_keyvals(path, banner: str, pairs: list[tuple[str, str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {banner}\n")
        for key, val in pairs:
            fh.write(f"{key}={val}\n")


def _read_keyvals(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}: malformed line {line!r}")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def write_image(path, image: Image) -> None:
    write_vector(path, image.data)
    _write_keyvals(
        f"{path}.meta",
        "supertomo-image v1",
        [("rows", str(image.rows)), ("cols", str(image.cols))],
    )


def read_image(path) -> Image:
    vec = read_vector(path)
    meta = _read_keyvals(f"{path}.meta")
    return Image(vec, int(meta["rows"]), int(meta["cols"]))


def write_sinogram(path, sino: Sinogram) -> None:
    write_vector(path, sino.data)
    g = sino.geometry
    _write_keyvals(
        f"{path}.geom",
        "supertomo-geometry v1",
        [
            ("n_angles", str(g.n_angles)),
            ("n_rays", str(g.n_rays)),
            ("ray_spacing", format(g.ray_spacing, ".17g")),
            ("grid_rows", str(g.grid_rows)),
            ("grid_cols", str(g.grid_cols)),
            ("pixel_size", format(g.pixel_size, ".17g")),
        ],
    )


def read_sinogram(path) -> Sinogram:
    vec = read_vector(path)
    raw = _read_keyvals(f"{path}.geom")
    geom = ScanGeometry(
        n_angles=int(raw["n_angles"]),
        n_rays=int(raw["n_rays"]),
        ray_spacing=float(raw["ray_spacing"]),
        grid_rows=int(raw["grid_rows"]),
        grid_cols=int(raw["grid_cols"]),
        pixel_size=float(raw["pixel_size"]),
    )
    return Sinogram(vec, geom)


def write_pgm(path, image: Image, lo: float = WINDOW_LO, hi: float = WINDOW_HI) -> None:
    """8-bit binary PGM preview through the display window.

    Gray levels are floor(255*(v-lo)/(hi-lo) + 0.5) clipped to 0..255, so
    a value halfway through the window lands on 128 (half-up rounding).
    """
    if hi <= lo:
        raise ValueError("display window must have hi > lo")
    levels = np.floor(255.0 * (image.data - lo) / (hi - lo) + 0.5)
    levels = np.clip(levels, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.cols} {image.rows}\n255\n".encode("ascii"))
        fh.write(levels.tobytes())


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_curves_csv(path, trace: list[CurveRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# supertomo-curves v1\n")
        writer = csv.writer(fh)
        writer.writerow(["k", "seconds", "f", "tv", "se"])
        for rec in trace:
            writer.writerow([rec.k, _fmt(rec.seconds), _fmt(rec.f), _fmt(rec.tv), _fmt(rec.se)])


def _csv_rows(path) -> list[list[str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    return rows


def read_curves_csv(path) -> list[CurveRecord]:
    rows = _csv_rows(path)
    if not rows or rows[0] != ["k", "seconds", "f", "tv", "se"]:
        raise ValueError(f"{path}: missing curve header row")
    return [
        CurveRecord(int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4]))
        for r in rows[1:]
    ]


def write_compare_csv(path, curves: list[tuple[str, list[CurveRecord]]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# supertomo-compare v1\n")
        writer = csv.writer(fh)
        writer.writerow(["algorithm", "k", "seconds", "f", "tv", "se"])
        for name, trace in curves:
            for rec in trace:
                writer.writerow(
                    [name, rec.k, _fmt(rec.seconds), _fmt(rec.f), _fmt(rec.tv), _fmt(rec.se)]
                )


def read_compare_csv(path) -> list[tuple[str, CurveRecord]]:
    rows = _csv_rows(path)
    if not rows or rows[0] != ["algorithm", "k", "seconds", "f", "tv", "se"]:
        raise ValueError(f"{path}: missing compare header row")
    return [
        (r[0], CurveRecord(int(r[1]), float(r[2]), float(r[3]), float(r[4]), float(r[5])))
        for r in rows[1:]
    ]


def write_summary_csv(path, summary: list[tuple[str, int, float]]) -> None:
    """Per-algorithm (name, iteration of the SE minimum, minimum SE)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# supertomo-summary v1\n")
        writer = csv.writer(fh)
        writer.writerow(["algorithm", "argmin_k", "min_se"])
        for name, argmin_k, min_se in summary:
            writer.writerow([name, argmin_k, _fmt(min_se)])


def write_sweep_csv(path, ranking: list[dict]) -> None:
    """Ranked parameter sets; params are serialized as key=value;... pairs."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# supertomo-sweep v1\n")
        writer = csv.writer(fh)
        writer.writerow(["rank", "algorithm", "params", "min_se", "argmin_k", "status"])
        for i, row in enumerate(ranking, start=1):
            params = ";".join(f"{k}={v}" for k, v in row["params"].items())
            writer.writerow(
                [i, row["algorithm"], params, _fmt(row["min_se"]), row["argmin_k"], row["status"]]
            )


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
