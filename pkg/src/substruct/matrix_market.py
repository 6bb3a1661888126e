"""Dense matrix I/O in the Matrix Market coordinate format.

Values are written with 17 significant digits, which round-trips IEEE
doubles exactly. Symmetric matrices are stored as their lower triangle.
"""

import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ParseError

_HEADER = "%%MatrixMarket"


def save_matrix(matrix, path, comment=None):
    """Write ``matrix`` to ``path`` atomically.

    The ``symmetric`` qualifier is used when the matrix equals its
    transpose exactly.
    """
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2:
        raise ValueError("only 2-D matrices can be saved")
    symmetric = A.shape[0] == A.shape[1] and np.array_equal(A, A.T)
    rows, cols = np.nonzero(np.tril(A) if symmetric else A)
    lines = [f"{_HEADER} matrix coordinate real {'symmetric' if symmetric else 'general'}"]
    if comment:
        lines.extend(f"% {text}" for text in str(comment).splitlines())
    lines.append(f"{A.shape[0]} {A.shape[1]} {rows.size}")
    # column-major entry order, as most readers expect
    order = np.lexsort((rows, cols))
    lines.extend(f"{r + 1} {c + 1} {A[r, c]:.17g}" for r, c in zip(rows[order], cols[order]))

    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_matrix(path, square=False):
    """Read a coordinate Matrix Market file into a dense array.

    Parameters
    ----------
    path : str or Path
    square : bool
        Reject files whose header declares a non-square shape.

    Raises
    ------
    ParseError
        On any malformed content; the message carries the line number.
    """
    with open(path) as fh:
        text = fh.read().splitlines()
    if not text:
        raise ParseError("empty file", 1)
    banner = text[0].split()
    if len(banner) != 5 or banner[0] != _HEADER or banner[1].lower() != "matrix":
        raise ParseError("missing or malformed %%MatrixMarket banner", 1)
    fmt, field, symmetry = (s.lower() for s in banner[2:])
    if fmt != "coordinate":
        raise ParseError(f"unsupported format '{fmt}'", 1)
    if field not in ("real", "integer", "double"):
        raise ParseError(f"unsupported field '{field}'", 1)
    if symmetry not in ("general", "symmetric"):
        raise ParseError(f"unsupported symmetry '{symmetry}'", 1)

    lineno = 1
    body = iter(enumerate(text[1:], start=2))
    size = None
    for lineno, line in body:
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        parts = stripped.split()
        try:
            size = tuple(int(p) for p in parts)
        except ValueError:
            raise ParseError(f"bad size line '{stripped}'", lineno) from None
        if len(size) != 3 or min(size) < 0:
            raise ParseError(f"bad size line '{stripped}'", lineno)
        break
    if size is None:
        raise ParseError("missing size line", lineno + 1)
    n_rows, n_cols, nnz = size
    if (square or symmetry == "symmetric") and n_rows != n_cols:
        raise ParseError(f"expected a square matrix, header declares {n_rows}x{n_cols}", lineno)

    A = np.zeros((n_rows, n_cols))
    seen = 0
    for lineno, line in body:
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        parts = stripped.split()
        if len(parts) != 3:
            raise ParseError(f"expected 'row col value', got '{stripped}'", lineno)
        try:
            r, c, v = int(parts[0]) - 1, int(parts[1]) - 1, float(parts[2])
        except ValueError:
            raise ParseError(f"unparseable entry '{stripped}'", lineno) from None
        if not (0 <= r < n_rows and 0 <= c < n_cols):
            raise ParseError(f"index ({r + 1}, {c + 1}) outside {n_rows}x{n_cols}", lineno)
        if symmetry == "symmetric" and c > r:
            raise ParseError("symmetric storage must hold the lower triangle only", lineno)
        A[r, c] = v
        if symmetry == "symmetric":
            A[c, r] = v
        seen += 1
        if seen > nnz:
            raise ParseError(f"more entries than the declared {nnz}", lineno)
    if seen != nnz:
        raise ParseError(f"declared {nnz} entries, found {seen}", lineno)
    return A
