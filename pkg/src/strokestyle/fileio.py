"""File formats: PNG images, stroke documents, SVG export, bank files, loss CSV, manifests."""

from __future__ import annotations

import csv
import json
import math
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from PIL import Image

from .geometry import StrokeField
from .perception import ConvLayer, FeatureBank
from .optimize import LossLog

STROKE_FORMAT_VERSION = 1
BANK_MAGIC = b"SFBANK1\0"
CSV_COLUMNS = ("iteration", "content_loss", "style_loss", "total_loss", "elapsed_ms")

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class FormatError(ValueError):
    """Malformed or invalid file contents."""


class MalformedPNGError(FormatError):
    pass


class UnsupportedPNGError(FormatError):
    pass


class StrokeDocumentError(FormatError):
    pass


class BankFileError(FormatError):
    pass


# --------------------------------------------------------------------------
# PNG


def _png_header(data: bytes) -> tuple[int, int]:
    if len(data) < 33 or data[:8] != _PNG_SIGNATURE:
        raise MalformedPNGError("not a PNG file (bad signature or truncated header)")
    length, kind = struct.unpack(">I4s", data[8:16])
    if kind != b"IHDR" or length != 13:
        raise MalformedPNGError("first chunk is not a valid IHDR")
    if zlib.crc32(data[12:29]) != struct.unpack(">I", data[29:33])[0]:
        raise MalformedPNGError("IHDR checksum mismatch")
    bit_depth, color_type = data[24], data[25]
    return bit_depth, color_type


def load_png(path) -> np.ndarray:
    """Read an 8-bit RGB/RGBA PNG as an H x W x 3 float array in [0, 1]."""
    path = Path(path)
    data = path.read_bytes()  # FileNotFoundError for a missing file
    bit_depth, color_type = _png_header(data)
    if bit_depth != 8:
        raise UnsupportedPNGError(f"{path}: unsupported bit depth {bit_depth} (need 8)")
    if color_type not in (2, 6):
        raise UnsupportedPNGError(f"{path}: unsupported color type {color_type} (need RGB or RGBA)")
    try:
        with Image.open(path) as im:
            im.load()
            rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, SyntaxError, ValueError) as exc:
        raise MalformedPNGError(f"{path}: {exc}") from exc
    return rgb.astype(float) / 255.0


def to_uint8(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=float)
    return np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_png(image: np.ndarray, path) -> None:
    arr = to_uint8(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected H x W x 3 image, got {arr.shape}")
    Image.fromarray(arr, mode="RGB").save(Path(path), format="PNG")


# --------------------------------------------------------------------------
# stroke documents

_DOC_KEYS = {"version", "height", "width", "background", "strokes"}
_STROKE_KEYS = {"location", "offsets", "width", "color"}


def field_to_document(field_: StrokeField, background=(1.0, 1.0, 1.0)) -> dict[str, Any]:
    strokes = []
    for row in field_.params.tolist():
        strokes.append(
            {
                "location": row[0:2],
                "offsets": [row[2:4], row[4:6], row[6:8]],
                "width": row[8],
                "color": row[9:12],
            }
        )
    return {
        "version": STROKE_FORMAT_VERSION,
        "height": field_.height,
        "width": field_.width,
        "background": [float(c) for c in background],
        "strokes": strokes,
    }


def _vector(value, n: int, what: str) -> list[float]:
    if not isinstance(value, list) or len(value) != n:
        raise StrokeDocumentError(f"{what}: expected a list of {n} numbers")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise StrokeDocumentError(f"{what}: {v!r} is not a number")
        out.append(float(v))
    return out


def document_to_field(doc: Any) -> tuple[StrokeField, tuple[float, float, float]]:
    if not isinstance(doc, dict):
        raise StrokeDocumentError("stroke document must be a JSON object")
    unknown = set(doc) - _DOC_KEYS
    missing = _DOC_KEYS - set(doc)
    if unknown:
        raise StrokeDocumentError(f"unknown fields: {sorted(unknown)}")
    if missing:
        raise StrokeDocumentError(f"missing fields: {sorted(missing)}")
    if doc["version"] != STROKE_FORMAT_VERSION:
        raise StrokeDocumentError(
            f"unsupported version {doc['version']!r} (expected {STROKE_FORMAT_VERSION})"
        )
    h, w = doc["height"], doc["width"]
    if not (isinstance(h, int) and isinstance(w, int) and h >= 1 and w >= 1):
        raise StrokeDocumentError(f"canvas size must be positive integers, got {h}x{w}")
    background = tuple(_vector(doc["background"], 3, "background"))
    if not all(0.0 <= c <= 1.0 for c in background):
        raise StrokeDocumentError(f"background {background} outside [0, 1]")
    if not isinstance(doc["strokes"], list):
        raise StrokeDocumentError("strokes must be a list")

    rows = []
    for n, s in enumerate(doc["strokes"]):
        where = f"stroke {n}"
        if not isinstance(s, dict):
            raise StrokeDocumentError(f"{where}: expected an object")
        if set(s) != _STROKE_KEYS:
            raise StrokeDocumentError(
                f"{where}: fields must be exactly {sorted(_STROKE_KEYS)}, got {sorted(s)}"
            )
        offsets = s["offsets"]
        if not isinstance(offsets, list) or len(offsets) != 3:
            raise StrokeDocumentError(f"{where}: offsets must hold three points")
        row = _vector(s["location"], 2, f"{where} location")
        for k, p in enumerate(offsets):
            row += _vector(p, 2, f"{where} offset {k}")
        row += _vector([s["width"]], 1, f"{where} width")
        row += _vector(s["color"], 3, f"{where} color")
        if not all(math.isfinite(v) for v in row):
            raise StrokeDocumentError(f"{where}: non-finite value")
        if not row[8] > 0:
            raise StrokeDocumentError(f"{where}: width must be positive, got {row[8]}")
        if not all(0.0 <= c <= 1.0 for c in row[9:]):
            raise StrokeDocumentError(f"{where}: color {row[9:]} outside [0, 1]")
        rows.append(row)
    params = np.array(rows, dtype=float).reshape(-1, 12)
    return StrokeField(params, h, w), background


def save_strokes(field_: StrokeField, path, background=(1.0, 1.0, 1.0)) -> None:
    # json writes floats with repr(), which round-trips exactly
    text = json.dumps(field_to_document(field_, background), indent=1)
    Path(path).write_text(text + "\n")


def load_strokes(path, *, with_background: bool = False):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise StrokeDocumentError(f"{path}: malformed JSON: {exc}") from exc
    field_, background = document_to_field(doc)
    return (field_, background) if with_background else field_


# --------------------------------------------------------------------------
# SVG


def hex_color(rgb) -> str:
    return "#" + "".join(f"{int(v):02x}" for v in to_uint8(np.asarray(rgb)))


def _num(v: float) -> str:
    return f"{v:.6g}"


def field_to_svg(field_: StrokeField, background=(1.0, 1.0, 1.0)) -> str:
    h, w = field_.height, field_.width
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="{hex_color(background)}"/>',
    ]
    p = field_.params
    ctrl = p[:, 0:2][:, None, :] + p[:, 2:8].reshape(-1, 3, 2)
    for n in range(len(p)):
        (x0, y0), (x1, y1), (x2, y2) = ctrl[n]
        d = f"M {_num(x0)} {_num(y0)} Q {_num(x1)} {_num(y1)} {_num(x2)} {_num(y2)}"
        lines.append(
            f'<path d="{d}" fill="none" stroke="{hex_color(p[n, 9:12])}" '
            f'stroke-width="{_num(2 * p[n, 8])}" stroke-linecap="round"/>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def export_svg(field_: StrokeField, config, path) -> None:
    Path(path).write_text(field_to_svg(field_, config.background))


# --------------------------------------------------------------------------
# feature-bank files
#
# magic "SFBANK1\0", u32 layer count, then per layer: u32 out, u32 in,
# out*in*9 float32 weights (row-major), out float32 biases.  Little endian.


def bank_to_bytes(bank: FeatureBank) -> bytes:
    parts = [BANK_MAGIC, struct.pack("<I", len(bank))]
    for layer in bank.layers:
        parts.append(struct.pack("<II", layer.out_channels, layer.in_channels))
        parts.append(np.ascontiguousarray(layer.weight, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())
    return b"".join(parts)


def bank_from_bytes(data: bytes, provenance: str = "loaded") -> FeatureBank:
    if data[: len(BANK_MAGIC)] != BANK_MAGIC:
        raise BankFileError("bad magic bytes")
    pos = len(BANK_MAGIC)

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise BankFileError(f"truncated: need {n} bytes at offset {pos}, file has {len(data)}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    layers = []
    for k in range(count):
        c_out, c_in = struct.unpack("<II", take(8))
        w = np.frombuffer(take(4 * c_out * c_in * 9), dtype="<f4").reshape(c_out, c_in, 3, 3)
        b = np.frombuffer(take(4 * c_out), dtype="<f4")
        try:
            layers.append(ConvLayer(w.astype(float), b.astype(float)))
        except ValueError as exc:
            raise BankFileError(f"layer {k}: {exc}") from exc
    if pos != len(data):
        raise BankFileError(f"{len(data) - pos} trailing bytes after {count} layers")
    try:
        return FeatureBank(tuple(layers), provenance=provenance)
    except ValueError as exc:
        raise BankFileError(str(exc)) from exc


def save_bank(bank: FeatureBank, path) -> None:
    Path(path).write_bytes(bank_to_bytes(bank))


def load_bank(path) -> FeatureBank:
    return bank_from_bytes(Path(path).read_bytes(), provenance=f"loaded:{Path(path).name}")


# --------------------------------------------------------------------------
# loss CSV


def write_loss_csv(loss_log: LossLog, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in loss_log:
            writer.writerow([r.iteration, repr(r.content), repr(r.style), repr(r.total), f"{r.elapsed_ms:.3f}"])


def read_loss_csv(path) -> LossLog:
    from .optimize import LossRecord

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise FormatError(f"unexpected CSV header {header}")
        records = [
            LossRecord(int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4])) for r in reader
        ]
    return LossLog(records)


# --------------------------------------------------------------------------
# run manifests


@dataclass
class RunManifest:
    mode: str = "paint"
    content: str = ""
    style: str | None = None
    bank: str | None = None
    bank_seed: int = 0
    strokes: int = 300
    samples_per_curve: int = 10
    knn: int = 20
    mask_sharpness: float = 5.0
    assign_sharpness: float = 2.0
    background: list[float] = field(default_factory=lambda: [1.0, 1.0, 1.0])
    tile_size: int = 16
    workers: int = 1
    alpha: float = 1.0
    beta: float = 100.0
    layer_weights: list[float] = field(default_factory=lambda: [1 / 3, 1 / 3, 1 / 3])
    content_layer: int = 1
    stroke_iters: int = 500
    pixel_iters: int = 100
    pixel_lr: float = 0.01
    learning_rates: list[float] = field(default_factory=lambda: [1.0, 0.5, 0.1, 0.05])
    snapshot_every: int = 0
    seed: int = 0
    out: str = "."

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> RunManifest:
        data = json.loads(text)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise FormatError(f"unknown manifest fields: {sorted(unknown)}")
        return cls(**data)


def save_manifest(manifest: RunManifest, path) -> None:
    Path(path).write_text(manifest.to_json())


def load_manifest(path) -> RunManifest:
    return RunManifest.from_json(Path(path).read_text())
