"""CSV emission and loading of traces, atomic file writes."""
from __future__ import annotations

import io
import os
import tempfile

import numpy as np

from .closed_loop import Trace

__all__ = ["emit_trace_csv", "trace_to_csv", "read_trace_csv", "write_atomic"]


def trace_to_csv(trace: Trace) -> str:
    """Header row plus one row per sample, floats as shortest round-trip text."""
    buf = io.StringIO()
    buf.write(",".join(trace.columns))
    buf.write("\n")
    for row in trace.data.tolist():
        buf.write(",".join(map(repr, row)))
        buf.write("\n")
    return buf.getvalue()


def write_atomic(path, data: str | bytes) -> None:
    """Write a whole file via a temporary sibling and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_trace_csv(trace: Trace, destination) -> bytes:
    """Serialize ``trace`` to ``destination`` (path or binary/text stream).

    Returns the bytes written.
    """
    payload = trace_to_csv(trace).encode("ascii")
    if hasattr(destination, "write"):
        try:
            destination.write(payload)
        except TypeError:
            destination.write(payload.decode("ascii"))
    else:
        try:
            write_atomic(destination, payload)
        except OSError as exc:
            raise OSError(f"cannot write trace to {os.fspath(destination)}: {exc}") from exc
    return payload


def read_trace_csv(source) -> Trace:
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, encoding="ascii") as fh:
            text = fh.read()
    if isinstance(text, bytes):
        text = text.decode("ascii")
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty trace file")
    columns = tuple(c.strip() for c in lines[0].split(","))
    if not columns or columns[0] != "t":
        raise ValueError("trace CSV must start with a 't' column")
    rows = [[float(v) for v in line.split(",")] for line in lines[1:] if line.strip()]
    data = np.array(rows, dtype=float).reshape(len(rows), len(columns))
    return Trace(columns, data)
