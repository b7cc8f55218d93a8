"""Binary tensor container and CSV trace files.

Container layout (little endian): magic ``TBL1``, then ``n1, n2, k, count``
as uint32 and ``seed`` as uint64, then ``count * n1 * n2 * k`` float64
values, each tensor stored slice-major (see :mod:`tubal.algebra`).
"""

import csv
import io
import math
import struct

import numpy as np

from .algebra import as_tubal, from_data, to_data
from .errors import FormatError

MAGIC = b"TBL1"
HEADER = struct.Struct("<4sIIIIQ")


def encode_tensors(tensors, seed=0):
    tensors = [as_tubal(T) for T in tensors]
    if not tensors:
        raise FormatError("container needs at least one tensor")
    shape = tensors[0].shape
    if any(T.shape != shape for T in tensors):
        raise FormatError("stacked tensors must share one shape")
    n1, n2, k = shape
    head = HEADER.pack(MAGIC, n1, n2, k, len(tensors), int(seed))
    payload = np.concatenate([to_data(T) for T in tensors]).astype("<f8")
    return head + payload.tobytes()


def decode_tensors(blob):
    """Return ``(tensors, seed)``; any header/payload mismatch is a FormatError."""
    if len(blob) < HEADER.size:
        raise FormatError(f"file too short for header ({len(blob)} bytes)")
    magic, n1, n2, k, count, seed = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if min(n1, n2, k, count) < 1:
        raise FormatError("header has a zero dimension or count")
    size = n1 * n2 * k
    expected = HEADER.size + 8 * size * count
    if len(blob) != expected:
        raise FormatError(f"payload is {len(blob) - HEADER.size} bytes, header implies "
                          f"{expected - HEADER.size}")
    data = np.frombuffer(blob, dtype="<f8", offset=HEADER.size).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise FormatError("payload holds non-finite values")
    tensors = [from_data(data[i * size:(i + 1) * size], n1, n2, k) for i in range(count)]
    return tensors, seed


def write_tensor(path, tensors, seed=0):
    if isinstance(tensors, np.ndarray) and tensors.ndim == 3:
        tensors = [tensors]
    with open(path, "wb") as fh:
        fh.write(encode_tensors(tensors, seed))


def read_tensor(path):
    with open(path, "rb") as fh:
        return decode_tensors(fh.read())


def write_checkpoint(path, state):
    """Store ``(t, U_t)``; the iteration counter lives in the seed field."""
    write_tensor(path, [state.U], seed=state.t)


def read_checkpoint(path):
    (U,), t = read_tensor(path)
    return int(t), U


# -- CSV -----------------------------------------------------------------------

def format_cell(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return format(value, ".17g")
    return str(value)


def parse_cell(text):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def render_csv(meta, columns, rows):
    """CSV text: ``# key=value`` provenance lines, a header, then data rows."""
    buf = io.StringIO()
    for key, value in meta:
        buf.write(f"# {key}={value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise FormatError(f"row has {len(row)} cells, header has {len(columns)}")
        writer.writerow([format_cell(v) for v in row])
    return buf.getvalue()


def parse_csv(text):
    """Inverse of :func:`render_csv`: returns ``(meta, columns, rows)``."""
    meta = []
    lines = text.splitlines(keepends=True)
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        body = lines[i][1:].strip()
        key, sep, value = body.partition("=")
        if not sep:
            raise FormatError(f"malformed provenance line {lines[i]!r}")
        meta.append((key.strip(), value.strip()))
        i += 1
    reader = csv.reader(lines[i:])
    try:
        columns = next(reader)
    except StopIteration:
        raise FormatError("missing header row") from None
    rows = []
    for row in reader:
        if len(row) != len(columns):
            raise FormatError(f"row has {len(row)} cells, header has {len(columns)}")
        rows.append([parse_cell(c) for c in row])
    return meta, columns, rows


def write_trace_csv(path, rows, meta=(), k=None):
    """Write ``IterateMetrics`` rows with their provenance block."""
    from .solver import IterateMetrics

    if k is None:
        k = len(rows[0].sigma_r) if rows else 0
    text = render_csv(meta, IterateMetrics.columns(k), [r.flat() for r in rows])
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text


def read_trace_csv(path):
    """Return ``(meta, rows)`` with rows rebuilt as ``IterateMetrics``."""
    from .solver import IterateMetrics

    with open(path, newline="") as fh:
        meta, columns, raw = parse_csv(fh.read())
    k = sum(1 for c in columns if c.startswith("sigma_r1_"))
    if columns != IterateMetrics.columns(k):
        raise FormatError("columns do not match the trace schema")
    rows = [IterateMetrics.from_flat([math.nan if v is None else v for v in r], k) for r in raw]
    return meta, rows
