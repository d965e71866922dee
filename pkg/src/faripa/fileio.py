"""PGM and CSV readers/writers used by the synth module and the CLI."""
import csv
import re

import numpy as np

from .errors import FormatError

_PGM_TOKEN = re.compile(rb"(#[^\n]*\n?)|(\S+)")


def _header_tokens(raw, count):
    """Return the first `count` header tokens of a PNM file and the offset
    just past the single whitespace byte that terminates the last one."""
    tokens = []
    pos = 0
    while len(tokens) < count:
        m = _PGM_TOKEN.search(raw, pos)
        if m is None:
            raise FormatError("truncated PGM header")
        pos = m.end()
        if m.group(2) is not None:
            tokens.append(m.group(2))
    return tokens, pos + 1


def read_pgm(path):
    """Read a binary (P5) or ASCII (P2) graymap into an int array of shape
    ``(height, width)``; also returns the declared maximum value."""
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens, offset = _header_tokens(raw, 4)
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"not a PGM file (magic {magic!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError("non-integer PGM header field") from exc
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise FormatError(f"invalid PGM header {width}x{height} max {maxval}")
    n = width * height
    if magic == b"P5":
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        body = np.frombuffer(raw, dtype=dtype, count=-1, offset=offset)
        if body.size < n:
            raise FormatError(f"PGM body has {body.size} samples, expected {n}")
        pixels = body[:n].astype(np.int64)
    else:
        body = re.sub(rb"#[^\n]*", b"", raw[offset - 1:]).split()
        if len(body) < n:
            raise FormatError(f"PGM body has {len(body)} samples, expected {n}")
        try:
            pixels = np.array([int(v) for v in body[:n]], dtype=np.int64)
        except ValueError as exc:
            raise FormatError("non-integer PGM sample") from exc
    if pixels.min() < 0 or pixels.max() > maxval:
        raise FormatError("PGM sample outside [0, maxval]")
    return pixels.reshape(height, width), maxval


def write_pgm(path, pixels, maxval=255, binary=True):
    pixels = np.asarray(pixels)
    height, width = pixels.shape
    header = f"{'P5' if binary else 'P2'}\n{width} {height}\n{maxval}\n".encode()
    with open(path, "wb") as fh:
        fh.write(header)
        if binary:
            dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
            fh.write(pixels.astype(dtype).tobytes())
        else:
            for row in pixels:
                fh.write((" ".join(str(int(v)) for v in row) + "\n").encode())


def write_series_csv(path, data, names=None):
    """Write a ``(T, D)`` array with a header row (default ``x1..xD``)."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if names is None:
        names = [f"x{i + 1}" for i in range(data.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in data:
            w.writerow([repr(float(v)) for v in row])


def read_series_csv(path):
    """Inverse of :func:`write_series_csv`; returns ``(data, names)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    names, body = rows[0], [r for r in rows[1:] if r]
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=float)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric CSV entry") from exc
    if data.size == 0:
        data = data.reshape(0, len(names))
    if data.shape[1] != len(names):
        raise FormatError(f"{path}: ragged CSV")
    return data, names


def write_matrix_csv(path, M):
    """Headerless CSV of a 2-D matrix (G, block sums, dependence matrices)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in M:
            w.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        M = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric matrix entry") from exc
    if M.ndim != 2:
        raise FormatError(f"{path}: ragged matrix")
    return M
