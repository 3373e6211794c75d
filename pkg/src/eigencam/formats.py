"""On-disk formats: FMAP tensor dumps, binary PGM/PPM, model directories,
JSON Lines manifests and JSON reports.

FMAP layout (little-endian)::

    offset 0   4 bytes   magic b"FMAP"
    offset 4   u8        version = 1
    offset 5   u8        dtype = 1 (float32)
    offset 6   u8        ndim in 1..4
    offset 7   ndim*u32  dims
    then       4*prod(dims) bytes of row-major float32 values

Nothing may follow the payload.
"""
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadDims,
    BadMagic,
    BoxOutOfBounds,
    CorruptHeader,
    LengthMismatch,
    MissingWeightFile,
    NonFiniteData,
    ParseError,
    ShapeMismatch,
    TruncatedPayload,
    UnsupportedDtype,
    UnsupportedFormat,
    UnsupportedVersion,
)
from .localize import BoundingBox
from .refnet import Conv, Dense, GlobalAvgPool, MaxPool, ModelGraph, Relu, Softmax
from .tensor import RasterImage, as_tensor

__all__ = [
    "encode_fmap",
    "decode_fmap",
    "write_fmap",
    "read_fmap",
    "encode_pnm",
    "decode_pnm",
    "read_image",
    "write_image",
    "read_image_size",
    "ManifestRecord",
    "read_manifest",
    "parse_manifest",
    "write_model",
    "read_model",
    "dumps_report",
]

FMAP_MAGIC = b"FMAP"
FMAP_VERSION = 1
FMAP_DTYPE_F32 = 1
_HEADER_FIXED = 7


# FMAP

def encode_fmap(tensor):
    a = as_tensor(tensor)
    header = FMAP_MAGIC + struct.pack("<BBB", FMAP_VERSION, FMAP_DTYPE_F32, a.ndim)
    header += struct.pack(f"<{a.ndim}I", *a.shape)
    return header + a.astype("<f4").tobytes()


def decode_fmap(buf):
    """Parse FMAP bytes into a float32 array; every error names its byte offset."""
    buf = bytes(buf)
    if len(buf) < 4 or buf[:4] != FMAP_MAGIC:
        raise BadMagic(f"bad magic {buf[:4]!r} at offset 0, expected b'FMAP'", offset=0)
    if len(buf) < _HEADER_FIXED:
        raise LengthMismatch(f"header truncated at offset {len(buf)}", offset=len(buf))
    version, dtype, ndim = buf[4], buf[5], buf[6]
    if version != FMAP_VERSION:
        raise UnsupportedVersion(f"version {version} at offset 4 is not supported", offset=4)
    if dtype != FMAP_DTYPE_F32:
        raise UnsupportedDtype(f"dtype {dtype} at offset 5 is not supported", offset=5)
    if not 1 <= ndim <= 4:
        raise BadDims(f"ndim {ndim} at offset 6 outside 1..4", offset=6)
    end = _HEADER_FIXED + 4 * ndim
    if len(buf) < end:
        raise LengthMismatch(f"dims truncated at offset {len(buf)}, need {end} header bytes", offset=len(buf))
    dims = struct.unpack_from(f"<{ndim}I", buf, _HEADER_FIXED)
    for i, d in enumerate(dims):
        if d == 0:
            raise BadDims(f"dim {i} at offset {_HEADER_FIXED + 4 * i} is zero", offset=_HEADER_FIXED + 4 * i)
    count = 1
    for d in dims:
        count *= d
    expected = end + 4 * count
    if len(buf) != expected:
        raise LengthMismatch(
            f"payload starting at offset {end} has {len(buf) - end} bytes, expected {4 * count}",
            offset=min(len(buf), expected),
        )
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=end)
    bad = np.flatnonzero(~np.isfinite(data))
    if bad.size:
        off = end + 4 * int(bad[0])
        raise NonFiniteData(f"non-finite value at offset {off}", offset=off)
    return data.astype(np.float32).reshape(dims)


def write_fmap(path, tensor):
    Path(path).write_bytes(encode_fmap(tensor))


def read_fmap(path):
    return decode_fmap(Path(path).read_bytes())


# PGM / PPM

def encode_pnm(image):
    magic = b"P5" if image.channels == 1 else b"P6"
    header = magic + f"\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.pixels.tobytes()


def _header_token(buf, pos):
    n = len(buf)
    while pos < n:
        c = buf[pos]
        if c == 0x23:  # comment runs to end of line
            while pos < n and buf[pos] not in (0x0A, 0x0D):
                pos += 1
        elif c in b" \t\r\n\x0b\x0c":
            pos += 1
        else:
            break
    start = pos
    while pos < n and buf[pos] not in b" \t\r\n\x0b\x0c#":
        pos += 1
    if start == pos:
        raise CorruptHeader(f"header ends early at offset {start}", offset=start)
    token = buf[start:pos]
    if not token.isdigit():
        raise CorruptHeader(f"expected a number at offset {start}, got {token[:16]!r}", offset=start)
    return int(token), pos


def _parse_pnm_header(buf):
    if len(buf) < 2 or buf[0:1] != b"P":
        raise UnsupportedFormat(f"not a PNM file (magic {buf[:2]!r})")
    if buf[:2] not in (b"P5", b"P6"):
        raise UnsupportedFormat(f"PNM variant {buf[:2]!r} not supported; only binary P5/P6")
    channels = 1 if buf[:2] == b"P5" else 3
    width, pos = _header_token(buf, 2)
    height, pos = _header_token(buf, pos)
    maxval, pos = _header_token(buf, pos)
    if width == 0 or height == 0:
        raise CorruptHeader("image dims must be positive", offset=2)
    if maxval != 255:
        raise UnsupportedFormat(f"maxval {maxval} not supported; only 255")
    if pos >= len(buf) or buf[pos] not in b" \t\r\n\x0b\x0c":
        raise CorruptHeader(f"missing whitespace after maxval at offset {pos}", offset=pos)
    return width, height, channels, pos + 1


def decode_pnm(buf):
    buf = bytes(buf)
    width, height, channels, start = _parse_pnm_header(buf)
    need = width * height * channels
    if len(buf) - start < need:
        raise TruncatedPayload(
            f"payload at offset {start} has {len(buf) - start} bytes, expected {need}", offset=len(buf)
        )
    pixels = np.frombuffer(buf, dtype=np.uint8, count=need, offset=start)
    return RasterImage(pixels.reshape(height, width, channels))


def read_image(path):
    return decode_pnm(Path(path).read_bytes())


def write_image(path, image):
    Path(path).write_bytes(encode_pnm(image))


def read_image_size(path):
    """``(height, width)`` from a PGM/PPM header without decoding pixels."""
    with open(path, "rb") as fh:
        head = fh.read(4096)
    width, height, _, _ = _parse_pnm_header(head)
    return height, width


# manifests

@dataclass(frozen=True)
class ManifestRecord:
    line: int
    image: Path
    boxes: tuple
    label: int = None
    classified_correctly: bool = None
    fmap: Path = None

    @property
    def image_id(self):
        return str(self.image)


def _parse_box(raw, line):
    if not (isinstance(raw, list) and len(raw) == 4 and all(isinstance(v, int) and not isinstance(v, bool) for v in raw)):
        raise ParseError(f"box {raw!r} must be [xmin, ymin, xmax, ymax] integers", line=line)
    xmin, ymin, xmax, ymax = raw
    if not (0 <= xmin <= xmax and 0 <= ymin <= ymax):
        raise BoxOutOfBounds(f"box {raw} is not a valid inclusive rectangle", line=line)
    return BoundingBox(xmin, ymin, xmax, ymax)


def parse_manifest(text, base_dir=".", check_bounds=True):
    """Parse JSON Lines manifest text.  Blank lines are skipped.

    Relative paths resolve against ``base_dir``.  With ``check_bounds`` each
    record's image header is read to confirm its boxes fit.
    """
    base_dir = Path(base_dir)
    records = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        if not raw_line.strip():
            continue
        try:
            obj = json.loads(raw_line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
        if not isinstance(obj, dict):
            raise ParseError("record must be a JSON object", line=lineno)
        if not isinstance(obj.get("image"), str):
            raise ParseError('missing or non-string "image"', line=lineno)
        boxes = obj.get("boxes")
        if not isinstance(boxes, list) or not boxes:
            raise ParseError('missing or empty "boxes"', line=lineno)
        boxes = tuple(_parse_box(b, lineno) for b in boxes)
        label = obj.get("label")
        if label is not None and (not isinstance(label, int) or isinstance(label, bool)):
            raise ParseError('"label" must be an integer', line=lineno)
        flag = obj.get("classified_correctly")
        if flag is not None and not isinstance(flag, bool):
            raise ParseError('"classified_correctly" must be a boolean', line=lineno)
        fmap = obj.get("fmap")
        if fmap is not None and not isinstance(fmap, str):
            raise ParseError('"fmap" must be a path string', line=lineno)
        image = base_dir / obj["image"]
        if check_bounds:
            try:
                h, w = read_image_size(image)
            except (OSError, UnsupportedFormat, CorruptHeader) as exc:
                raise ParseError(f"cannot read image {image}: {exc}", line=lineno) from None
            for b in boxes:
                if not b.fits(h, w):
                    raise BoxOutOfBounds(f"box {b.as_list()} exceeds image {w}x{h}", line=lineno)
        records.append(ManifestRecord(
            line=lineno,
            image=image,
            boxes=boxes,
            label=label,
            classified_correctly=flag,
            fmap=None if fmap is None else base_dir / fmap,
        ))
    return records


def read_manifest(path, check_bounds=True):
    path = Path(path)
    return parse_manifest(path.read_text(encoding="utf-8"), base_dir=path.parent, check_bounds=check_bounds)


# model directories

MODEL_FORMAT = "eigencam-model"


def _layer_json(layer):
    if isinstance(layer, Conv):
        return {"type": "conv", "out_ch": layer.out_ch, "in_ch": layer.in_ch, "kh": layer.kh,
                "kw": layer.kw, "stride": layer.stride, "pad": layer.pad}
    if isinstance(layer, Dense):
        return {"type": "dense", "out": layer.out_features, "in": layer.in_features}
    if isinstance(layer, MaxPool):
        return {"type": "maxpool", "k": layer.k, "stride": layer.stride}
    return {"type": layer.kind}


def write_model(directory, model):
    """Write ``model.json`` plus ``w<i>.fmap`` / ``b<i>.fmap`` per weighted layer."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    doc = {"format": MODEL_FORMAT, "version": 1, "layers": [_layer_json(l) for l in model.layers]}
    (d / "model.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    for i, layer in enumerate(model.layers):
        if isinstance(layer, (Conv, Dense)):
            write_fmap(d / f"w{i}.fmap", layer.weights)
            write_fmap(d / f"b{i}.fmap", layer.bias)


def _load_weight(d, name, expected, layer_index):
    p = d / name
    if not p.is_file():
        raise MissingWeightFile(f"missing weight file {name} for layer {layer_index}", name=name)
    a = read_fmap(p)
    if a.shape != tuple(expected):
        raise ShapeMismatch(f"{name} has dims {a.shape}, layer {layer_index} declares {tuple(expected)}",
                            layer=layer_index)
    return a


def _int_field(entry, key, i, minimum=0):
    v = entry.get(key)
    if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
        raise ShapeMismatch(f"layer {i}: field {key!r} must be an integer >= {minimum}, got {v!r}", layer=i)
    return v


def read_model(directory):
    """Load a model directory; runs shape propagation before returning."""
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"model directory {d} does not exist")
    text = (d / "model.json").read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model.json: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict) or not isinstance(doc.get("layers"), list):
        raise ParseError('model.json must be an object with a "layers" list', line=1)
    layers = []
    for i, entry in enumerate(doc["layers"]):
        kind = entry.get("type") if isinstance(entry, dict) else None
        if kind == "conv":
            shape = [_int_field(entry, k, i, 1) for k in ("out_ch", "in_ch", "kh", "kw")]
            w = _load_weight(d, f"w{i}.fmap", shape, i)
            b = _load_weight(d, f"b{i}.fmap", shape[:1], i)
            layers.append(Conv(w, b, stride=_int_field(entry, "stride", i, 1), pad=_int_field(entry, "pad", i, 0)))
        elif kind == "dense":
            shape = [_int_field(entry, k, i, 1) for k in ("out", "in")]
            w = _load_weight(d, f"w{i}.fmap", shape, i)
            b = _load_weight(d, f"b{i}.fmap", shape[:1], i)
            layers.append(Dense(w, b))
        elif kind == "maxpool":
            layers.append(MaxPool(_int_field(entry, "k", i, 1), _int_field(entry, "stride", i, 1)))
        elif kind == "relu":
            layers.append(Relu())
        elif kind == "gap":
            layers.append(GlobalAvgPool())
        elif kind == "softmax":
            layers.append(Softmax())
        else:
            raise ShapeMismatch(f"layer {i}: unknown layer type {kind!r}", layer=i)
    return ModelGraph(tuple(layers))


# reports

def dumps_report(doc):
    """Serialize a report deterministically (sorted keys, fixed indentation)."""
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
