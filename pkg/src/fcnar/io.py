"""Reading and writing panels, weight matrices, fitted models and result tables.

Panels are wide CSV files: a ``time`` column (integers or ISO dates) followed
by one column per node. Lines starting with ``#`` are comments. Floats are
written with 17 significant digits so values survive a round trip exactly.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
from typing import Iterable, Optional, Sequence

import numpy as np

from .estimate import FitResult
from .model import ROW_SUM_TOL, FcnarSpec, NetworkMatrix
from .simulate import PanelSeries

WEIGHT_ROW_TOL = 1e-8


class PanelFormatError(ValueError):
    """A panel or weight file does not follow the expected layout."""


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def header_lines(command: str, seed: Optional[int] = None, **extra) -> list[str]:
    """Comment lines recording tool version, command line and seed."""
    from . import __version__

    lines = [f"fcnar {__version__}", f"command: {command}", f"seed: {'none' if seed is None else seed}"]
    lines += [f"{k}: {v}" for k, v in extra.items()]
    return lines


def _data_lines(path) -> list[tuple[int, list[str]]]:
    """CSV records with their 1-based line numbers, comments and blank lines removed."""
    with open(path, newline="") as fh:
        text = fh.read()
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        out.append((lineno, next(csv.reader([line]))))
    return out


def _parse_time(cell: str):
    cell = cell.strip()
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return dt.date.fromisoformat(cell)
    except ValueError:
        raise ValueError(f"time stamp {cell!r} is neither an integer nor an ISO date") from None


def _check_cadence(times: list, lines: list[int], path) -> None:
    kinds = {type(t) for t in times}
    if len(kinds) > 1:
        raise PanelFormatError(f"{path}: time column mixes integers and dates")
    for k in range(1, len(times)):
        if times[k] == times[k - 1]:
            raise PanelFormatError(f"{path}: duplicate time stamp {times[k]} at line {lines[k]}")
        if times[k] < times[k - 1]:
            raise PanelFormatError(f"{path}: time stamps decrease at line {lines[k]}")
    if len(times) < 3:
        return
    if isinstance(times[0], dt.date) and _monthly(times):
        return
    step = times[1] - times[0]
    for k in range(2, len(times)):
        if times[k] - times[k - 1] != step:
            raise PanelFormatError(
                f"{path}: irregular time step between line {lines[k - 1]} ({times[k - 1]}) and "
                f"line {lines[k]} ({times[k]}); the panel must be gap-free with a constant step"
            )


def _monthly(times: list) -> bool:
    index = [t.year * 12 + t.month for t in times]
    return all(b - a == 1 for a, b in zip(index, index[1:])) and len({t.day for t in times}) == 1


def _read_wide(path) -> tuple[list, list[str], np.ndarray, list[int]]:
    rows = _data_lines(path)
    if not rows:
        raise PanelFormatError(f"{path}: no header row")
    header_line, header = rows[0]
    header = [h.strip() for h in header]
    if header[0].lower() != "time":
        raise PanelFormatError(f"{path}: first column must be 'time', got {header[0]!r}")
    names = header[1:]
    if not names:
        raise PanelFormatError(f"{path}: no node columns")
    times, lines, values = [], [], []
    for lineno, cells in rows[1:]:
        if len(cells) != len(header):
            raise PanelFormatError(
                f"{path}: line {lineno} has {len(cells)} fields, header has {len(header)}"
            )
        try:
            times.append(_parse_time(cells[0]))
        except ValueError as exc:
            raise PanelFormatError(f"{path}: line {lineno}, column 'time': {exc}") from None
        row = []
        for name, cell in zip(names, cells[1:]):
            if not cell.strip():
                raise PanelFormatError(f"{path}: line {lineno}, column {name!r}: missing value")
            try:
                v = float(cell)
            except ValueError:
                raise PanelFormatError(
                    f"{path}: line {lineno}, column {name!r}: non-numeric value {cell!r}"
                ) from None
            if not np.isfinite(v):
                raise PanelFormatError(f"{path}: line {lineno}, column {name!r}: non-finite value")
            row.append(v)
        values.append(row)
        lines.append(lineno)
    if not values:
        raise PanelFormatError(f"{path}: no data rows")
    _check_cadence(times, lines, path)
    return times, names, np.array(values).T, lines


def load_panel(path, threshold_path=None) -> PanelSeries:
    """Read a wide panel (and optionally a same-shaped exogenous threshold file)."""
    times, names, X, _ = _read_wide(path)
    U = None
    if threshold_path is not None:
        t_u, n_u, U, _ = _read_wide(threshold_path)
        if t_u != times:
            raise PanelFormatError(f"{threshold_path}: time stamps differ from {path}")
        if n_u != names:
            raise PanelFormatError(f"{threshold_path}: node columns differ from {path}")
    return PanelSeries(X, U, None, [str(t) for t in times], names)


def _write_comment(fh, lines: Optional[Iterable[str]]) -> None:
    for line in lines or ():
        fh.write(f"# {line}\n")


def write_panel(path, data: PanelSeries, header: Optional[Sequence[str]] = None,
                values: Optional[np.ndarray] = None) -> None:
    """Write ``data.X`` (or ``values``, e.g. thresholds) as a wide CSV."""
    X = data.X if values is None else np.asarray(values, dtype=float)
    names = data.names or [f"node{i + 1}" for i in range(X.shape[0])]
    times = data.time or [str(t) for t in range(X.shape[1])]
    with open(path, "w", newline="") as fh:
        _write_comment(fh, header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time"] + list(names))
        for t in range(X.shape[1]):
            w.writerow([times[t]] + [format_float(v) for v in X[:, t]])


def write_table(path, columns: Sequence[str], rows: Iterable[Sequence], header: Optional[Sequence[str]] = None) -> None:
    """Write a CSV table; floats use 17 significant digits."""
    with open(path, "w", newline="") as fh:
        _write_comment(fh, header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_table(path) -> tuple[list[str], list[list[str]]]:
    rows = [cells for _, cells in _data_lines(path)]
    return rows[0], rows[1:]


def load_weights(path, normalize: bool = False) -> NetworkMatrix:
    """Read a square weight matrix; an optional first row of node names is skipped."""
    rows = _data_lines(path)
    if rows and not _numeric(rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise PanelFormatError(f"{path}: no matrix rows")
    N = len(rows)
    W = np.empty((N, N))
    for r, (lineno, cells) in enumerate(rows):
        if len(cells) != N:
            raise PanelFormatError(f"{path}: line {lineno} has {len(cells)} entries; matrix must be {N} x {N}")
        for c, cell in enumerate(cells):
            try:
                W[r, c] = float(cell)
            except ValueError:
                raise PanelFormatError(f"{path}: line {lineno}, column {c + 1}: non-numeric value {cell!r}") from None
    return weights_from_array(W, normalize)


def _numeric(cells: Sequence[str]) -> bool:
    try:
        [float(c) for c in cells]
    except ValueError:
        return False
    return True


def weights_from_array(W, normalize: bool = False) -> NetworkMatrix:
    W = np.array(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"weight matrix must be square, got shape {W.shape}")
    if np.any(W < 0):
        r, c = np.argwhere(W < 0)[0]
        raise ValueError(f"weight matrix has a negative entry at row {r + 1}, column {c + 1}")
    sums = W.sum(axis=1)
    if normalize:
        if np.any(sums <= 0):
            raise ValueError(f"row {int(np.flatnonzero(sums <= 0)[0]) + 1} of the weight matrix sums to zero")
        return NetworkMatrix(W / sums[:, None])
    off = np.abs(sums - 1.0)
    if np.any(off > WEIGHT_ROW_TOL):
        r = int(np.argmax(off))
        raise ValueError(f"row {r + 1} of the weight matrix sums to {sums[r]!r}; pass normalize to rescale")
    fix = off > ROW_SUM_TOL
    W[fix] /= sums[fix, None]
    return NetworkMatrix(W)


def inverse_distance_weights(D, power: float = 1.0) -> NetworkMatrix:
    """Row-normalised inverse-distance weights w_ij proportional to D_ij^-power, zero diagonal.

    A convenience for distance-based networks; other constructions may suit
    a given application better.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("distance matrix must be square")
    off = ~np.eye(D.shape[0], dtype=bool)
    if np.any(D[off] <= 0):
        raise ValueError("off-diagonal distances must be positive")
    W = np.zeros_like(D)
    W[off] = D[off] ** -power
    return weights_from_array(W, normalize=True)


def write_weights(path, W: NetworkMatrix, header: Optional[Sequence[str]] = None) -> None:
    write_table(path, [f"node{i + 1}" for i in range(W.N)], W.W.tolist(), header)


# Fitted-model artifacts

def fit_to_dict(fit: FitResult) -> dict:
    return {
        "spec": fit.spec.to_dict(),
        "beta": fit.beta.tolist(),
        "gram": fit.gram.tolist(),
        "sigma2": fit.sigma2,
        "rss": fit.rss.tolist(),
        "T_eff": fit.T_eff,
        "start": fit.start,
        "excluded": fit.excluded.tolist(),
        "u_range": None if fit.u_range is None else fit.u_range.tolist(),
        "method": fit.method,
        "lam": fit.lam,
        "tag": fit.tag,
        "dof_correct": fit.dof_correct,
    }


def fit_from_dict(d: dict) -> FitResult:
    return FitResult(
        spec=FcnarSpec.from_dict(d["spec"]),
        beta=np.asarray(d["beta"], dtype=float),
        gram=np.asarray(d["gram"], dtype=float),
        sigma2=float(d["sigma2"]),
        rss=np.asarray(d["rss"], dtype=float),
        T_eff=int(d["T_eff"]),
        start=int(d["start"]),
        excluded=np.asarray(d["excluded"], dtype=bool),
        u_range=None if d.get("u_range") is None else np.asarray(d["u_range"], dtype=float),
        method=d.get("method", "ls"),
        lam=float(d.get("lam", 0.0)),
        tag=d.get("tag", "FCNAR"),
        dof_correct=bool(d.get("dof_correct", False)),
    )


def write_json(path, payload: dict, header: Optional[Sequence[str]] = None) -> None:
    """JSON document; the header lines go under a ``meta`` key since JSON has no comments."""
    doc = {"meta": list(header or [])}
    doc.update(payload)
    with open(path, "w") as fh:
        json.dump(_plain(doc), fh, indent=1, allow_nan=True)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def save_fit(path, fit: FitResult, header: Optional[Sequence[str]] = None) -> None:
    write_json(path, {"fit": fit_to_dict(fit)}, header)


def load_fit(path) -> FitResult:
    doc = read_json(path)
    if "fit" not in doc:
        raise ValueError(f"{path} is not a fit artifact")
    return fit_from_dict(doc["fit"])


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def long_to_wide(path, time_col: str = "time", node_col: str = "node", value_col: str = "value") -> PanelSeries:
    """Convert a long CSV (one row per time and node) to a wide panel.

    Every (time, node) pair must appear exactly once.
    """
    rows = _data_lines(path)
    if not rows:
        raise PanelFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0][1]]
    try:
        it, ino, iv = header.index(time_col), header.index(node_col), header.index(value_col)
    except ValueError:
        raise PanelFormatError(f"{path}: header needs columns {time_col!r}, {node_col!r}, {value_col!r}") from None
    cells: dict = {}
    times, nodes = {}, {}
    for lineno, r in rows[1:]:
        if len(r) != len(header):
            raise PanelFormatError(f"{path}: line {lineno} has {len(r)} fields, header has {len(header)}")
        t, n = _parse_time(r[it]), r[ino].strip()
        if (t, n) in cells:
            raise PanelFormatError(f"{path}: line {lineno}: duplicate entry for time {t}, node {n}")
        try:
            cells[(t, n)] = float(r[iv])
        except ValueError:
            raise PanelFormatError(f"{path}: line {lineno}, column {value_col!r}: non-numeric value {r[iv]!r}") from None
        times.setdefault(t, None)
        nodes.setdefault(n, None)
    times, nodes = sorted(times), list(nodes)
    X = np.empty((len(nodes), len(times)))
    for i, n in enumerate(nodes):
        for k, t in enumerate(times):
            if (t, n) not in cells:
                raise PanelFormatError(f"{path}: no value for node {n} at time {t}")
            X[i, k] = cells[(t, n)]
    _check_cadence(times, list(range(1, len(times) + 1)), path)
    return PanelSeries(X, None, None, [str(t) for t in times], nodes)

