"""Matrix Market and CSV input/output.

The Matrix Market reader is hand-written rather than delegated to
``scipy.io.mmread`` so that every malformed file is reported with the line
number at fault.
"""
import csv
import os

import numpy as np
import scipy.sparse as sp

from .errors import ParseError

_FIELDS = ("real", "integer", "pattern", "double")
_SYMMETRIES = ("general", "symmetric", "skew-symmetric")


def _lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for no, line in enumerate(fh, start=1):
            yield no, line.strip()


def read_matrix_market(path):
    """Read a real Matrix Market file.

    ``coordinate`` files come back as CSR, ``array`` files as dense arrays.
    Raises :class:`ParseError` naming the offending line.
    """
    path = os.fspath(path)
    lines = _lines(path)
    try:
        no, header = next(lines)
    except StopIteration:
        raise ParseError(path, 1, "empty file") from None
    parts = header.lower().split()
    if len(parts) != 5 or parts[0] != "%%matrixmarket" or parts[1] != "matrix":
        raise ParseError(path, 1, "expected '%%MatrixMarket matrix <format> <field> <symmetry>'")
    fmt, fld, sym = parts[2:]
    if fmt not in ("coordinate", "array"):
        raise ParseError(path, 1, f"unsupported format {fmt!r}")
    if fld not in _FIELDS or (fld == "pattern" and fmt == "array"):
        raise ParseError(path, 1, f"unsupported field {fld!r}")
    if sym not in _SYMMETRIES:
        raise ParseError(path, 1, f"unsupported symmetry {sym!r}")

    body = ((n, s) for n, s in lines if s and not s.startswith("%"))
    try:
        no, size_line = next(body)
    except StopIteration:
        raise ParseError(path, no + 1, "missing size line") from None
    want = 3 if fmt == "coordinate" else 2
    dims = _ints(path, no, size_line, want)
    nrows, ncols = dims[0], dims[1]
    if nrows < 0 or ncols < 0:
        raise ParseError(path, no, "negative dimension")
    if sym != "general" and nrows != ncols:
        raise ParseError(path, no, f"{sym} matrix must be square")

    if fmt == "array":
        return _read_array(path, body, nrows, ncols, sym, no)
    return _read_coordinate(path, body, nrows, ncols, dims[2], fld, sym, no)


def _ints(path, no, line, count):
    tok = line.split()
    if len(tok) != count:
        raise ParseError(path, no, f"expected {count} integers, got {len(tok)} fields")
    try:
        return [int(t) for t in tok]
    except ValueError:
        raise ParseError(path, no, f"expected integers, got {line!r}") from None


def _float(path, no, tok):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(path, no, f"invalid number {tok!r}") from None
    if not np.isfinite(v):
        raise ParseError(path, no, f"non-finite value {tok!r}")
    return v


def _read_coordinate(path, body, nrows, ncols, nnz, fld, sym, size_no):
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    k = 0
    last = size_no
    width = 2 if fld == "pattern" else 3
    for no, line in body:
        last = no
        if k == nnz:
            raise ParseError(path, no, f"more than the declared {nnz} entries")
        tok = line.split()
        if len(tok) != width:
            raise ParseError(path, no, f"expected {width} fields, got {len(tok)}")
        try:
            i, j = int(tok[0]), int(tok[1])
        except ValueError:
            raise ParseError(path, no, "row and column indices must be integers") from None
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise ParseError(path, no, f"index ({i}, {j}) outside {nrows}x{ncols}")
        if sym == "skew-symmetric" and i == j:
            raise ParseError(path, no, "skew-symmetric matrix has a diagonal entry")
        rows[k], cols[k] = i - 1, j - 1
        vals[k] = 1.0 if fld == "pattern" else _float(path, no, tok[2])
        k += 1
    if k != nnz:
        raise ParseError(path, last + 1, f"expected {nnz} entries, found {k}")
    if sym != "general":
        off = rows != cols
        sign = -1.0 if sym == "skew-symmetric" else 1.0
        rows, cols, vals = (np.concatenate((rows, cols[off])), np.concatenate((cols, rows[off])),
                            np.concatenate((vals, sign * vals[off])))
    out = sp.csr_array(sp.coo_array((vals, (rows, cols)), shape=(nrows, ncols)))
    out.sum_duplicates()
    out.sort_indices()
    return out


def _read_array(path, body, nrows, ncols, sym, size_no):
    if sym == "general":
        slots = [(i, j) for j in range(ncols) for i in range(nrows)]
    else:
        first = 0 if sym == "symmetric" else 1
        slots = [(i, j) for j in range(ncols) for i in range(j + first, nrows)]
    out = np.zeros((nrows, ncols))
    k = 0
    last = size_no
    for no, line in body:
        last = no
        tok = line.split()
        if len(tok) != 1:
            raise ParseError(path, no, f"expected one value per line, got {len(tok)}")
        if k == len(slots):
            raise ParseError(path, no, f"more than the expected {len(slots)} values")
        i, j = slots[k]
        v = _float(path, no, tok[0])
        out[i, j] = v
        if sym != "general" and i != j:
            out[j, i] = v if sym == "symmetric" else -v
        k += 1
    if k != len(slots):
        raise ParseError(path, last + 1, f"expected {len(slots)} values, found {k}")
    return out


def write_matrix_market(path, m, comment=None):
    """Write ``m`` as ``coordinate real general`` (sparse) or ``array real general`` (dense)."""
    with open(path, "w", encoding="utf-8") as fh:
        if sp.issparse(m):
            c = sp.coo_array(m)
            fh.write("%%MatrixMarket matrix coordinate real general\n")
            if comment:
                fh.write(f"% {comment}\n")
            fh.write(f"{c.shape[0]} {c.shape[1]} {c.nnz}\n")
            order = np.lexsort((c.col, c.row))
            for i, j, v in zip(c.row[order], c.col[order], c.data[order]):
                fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")
        else:
            a = np.asarray(m, dtype=np.float64)
            fh.write("%%MatrixMarket matrix array real general\n")
            if comment:
                fh.write(f"% {comment}\n")
            fh.write(f"{a.shape[0]} {a.shape[1]}\n")
            for v in a.ravel(order="F"):
                fh.write(f"{float(v)!r}\n")


def read_vector_csv(path):
    """Read a one-column CSV of floats; a non-numeric first line is taken as a header."""
    path = os.fspath(path)
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        for no, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 1:
                raise ParseError(path, no, f"expected one column, got {len(row)}")
            try:
                v = float(row[0])
            except ValueError:
                if no == 1 and not values:
                    continue
                raise ParseError(path, no, f"invalid number {row[0]!r}") from None
            if not np.isfinite(v):
                raise ParseError(path, no, f"non-finite value {row[0]!r}")
            values.append(v)
    return np.array(values)


def write_vector_csv(path, v, header="value"):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([header])
        w.writerows([repr(float(x))] for x in np.asarray(v, dtype=np.float64))


def write_estimate_csv(path, report):
    """One row per component: ``component, estimate, variance, n_walks``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["component", "estimate", "variance", "n_walks"])
        for i, (e, v) in enumerate(zip(np.atleast_1d(report.estimate),
                                       np.atleast_1d(report.sample_variance))):
            w.writerow([i, repr(float(e)), repr(float(v)), report.n_walks])


def read_wls_csv(path):
    """Read a :class:`~mcboost.lsq.WlsProblem` from a CSV.

    The header names the design columns (any names) followed by ``obs`` and
    ``weights``.
    """
    from .lsq import WlsProblem

    path = os.fspath(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(path, 1, "empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 3 or header[-2:] != ["obs", "weights"]:
        raise ParseError(path, 1, "header must end with 'obs,weights' after the design columns")
    data = []
    for no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(path, no, f"expected {len(header)} columns, got {len(row)}")
        data.append([_float(path, no, t) for t in row])
    arr = np.array(data).reshape(-1, len(header))
    return WlsProblem(arr[:, :-2], arr[:, -2], arr[:, -1])


def write_wls_csv(path, problem):
    n = problem.design.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j}" for j in range(n)] + ["obs", "weights"])
        for row, f, om in zip(problem.design, problem.obs, problem.weights):
            w.writerow([repr(float(v)) for v in row] + [repr(float(f)), repr(float(om))])
