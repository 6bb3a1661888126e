"""Atomic writers for CSV, JSON and figure outputs."""

import csv
import io
import json
import os
import tempfile
from pathlib import Path


def _atomic(path, write):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_text(path, text):
    return _atomic(path, lambda fh: fh.write(text.encode()))


def format_value(value):
    if isinstance(value, float):
        return "" if value != value else f"{value:.17g}"
    return "" if value is None else str(value)


def write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return write_text(path, buf.getvalue())


def write_json(path, payload):
    return write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def save_figure(fig, path, **kwargs):
    path = Path(path)
    return _atomic(path, lambda fh: fig.savefig(fh, format=path.suffix.lstrip(".") or "png", **kwargs))
