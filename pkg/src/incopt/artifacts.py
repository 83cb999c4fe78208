"""CSV / SVG artifacts for traces and success maps.

Every artifact gets a sidecar ``<name>.meta.json`` holding the config snapshot
and toolkit version, so the CSV files themselves keep their fixed headers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from incopt import __version__
from incopt.trace import RunTrace, Status, SuccessMap

TRACE_HEADER = ("epoch", "step_size", "dist", "fval", "moreau_grad_norm")
MAP_HEADER = ("rho", "mu0_times_m", "success", "final_dist")


def fmt(v) -> str:
    """17 significant digits, empty for NaN."""
    v = float(v)
    return "" if math.isnan(v) else format(v, ".17g")


def _num(s):
    return float(s) if s != "" else float("nan")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_meta(path, config, **extra):
    doc = {"artifact": Path(path).name, "version": __version__, "config": _jsonable(config or {})}
    doc.update(_jsonable(extra))
    meta_path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_meta(path) -> dict:
    return json.loads(meta_path(path).read_text())


def _write(path, text):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as err:
        raise OSError(f"cannot write {path}: {err.strerror or err}") from err


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------

def trace_csv(trace: RunTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for k in range(len(trace.epoch)):
        w.writerow([str(int(trace.epoch[k])), fmt(trace.step_size[k]), fmt(trace.dist[k]),
                    fmt(trace.fval[k]), fmt(trace.moreau_grad_norm[k])])
    return buf.getvalue()


def emit_trace_csv(trace: RunTrace, path, meta=True):
    _write(path, trace_csv(trace))
    if meta:
        write_meta(path, trace.config, status=trace.status.value, epochs=trace.epochs,
                   records=len(trace.epoch), x0_dist=fmt(trace.x0_dist), x0_fval=fmt(trace.x0_fval),
                   certified_stall=trace.certified_stall,
                   certified_success=trace.certified_success)


def parse_trace_csv(path) -> RunTrace:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise ValueError(f"{path}: not a trace file (bad header)")
    cols = list(zip(*rows[1:])) if len(rows) > 1 else [()] * 5
    status = Status.STALLED
    epochs = len(rows) - 1
    config = {}
    if meta_path(path).exists():
        meta = read_meta(path)
        status = Status(meta.get("status", "stalled"))
        epochs = meta.get("epochs", epochs)
        config = meta.get("config", {})
    return RunTrace(
        epoch=np.array([int(v) for v in cols[0]], dtype=int),
        step_size=np.array([_num(v) for v in cols[1]]),
        dist=np.array([_num(v) for v in cols[2]]),
        fval=np.array([_num(v) for v in cols[3]]),
        moreau_grad_norm=np.array([_num(v) for v in cols[4]]),
        status=status, epochs=epochs, config=config,
    )


# ---------------------------------------------------------------------------
# success maps
# ---------------------------------------------------------------------------

def map_csv(smap: SuccessMap) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MAP_HEADER)
    for i, rho in enumerate(smap.rho_grid):
        for j, c in enumerate(smap.mu0_grid):
            w.writerow([fmt(rho), fmt(c), "1" if smap.cells[i, j] else "0", fmt(smap.final_dist[i, j])])
    return buf.getvalue()


def map_svg(smap: SuccessMap, cell=24, margin=60) -> str:
    """Heatmap: rows rho (smallest at the bottom), columns mu0 * m; white = success."""
    nr, nc = smap.cells.shape
    W, H = margin + nc * cell + 10, margin + nr * cell + 10
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f"<metadata>{escape(json.dumps(_jsonable({'version': __version__, 'config': smap.config}), sort_keys=True))}</metadata>",
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="#d0d0d0"/>',
    ]
    for i in range(nr):
        y = 10 + (nr - 1 - i) * cell
        for j in range(nc):
            x = margin + j * cell
            fill = "#ffffff" if smap.cells[i, j] else "#000000"
            out.append(f'<rect class="cell" x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" '
                       f'data-rho="{fmt(smap.rho_grid[i])}" data-mu0-times-m="{fmt(smap.mu0_grid[j])}"/>')
        out.append(f'<text x="{margin - 4}" y="{y + cell * 0.7:g}" font-size="10" text-anchor="end">'
                   f'{smap.rho_grid[i]:.3g}</text>')
    for j in range(nc):
        x = margin + j * cell + cell / 2
        out.append(f'<text x="{x:g}" y="{H - margin + 24}" font-size="9" text-anchor="middle">'
                   f'{smap.mu0_grid[j]:.3g}</text>')
    out.append(f'<text x="{margin + nc * cell / 2:g}" y="{H - 12}" font-size="12" text-anchor="middle">'
               "m * mu0</text>")
    out.append(f'<text x="14" y="{10 + nr * cell / 2:g}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 14 {10 + nr * cell / 2:g})">rho</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_map(smap: SuccessMap, path, format=None, meta=True):
    fmt_ = format or Path(path).suffix.lstrip(".").lower()
    if fmt_ == "csv":
        _write(path, map_csv(smap))
    elif fmt_ == "svg":
        _write(path, map_svg(smap))
    else:
        raise ValueError(f"unknown map format {fmt_!r}; use csv or svg")
    if meta:
        write_meta(path, smap.config)


def parse_map_csv(path) -> SuccessMap:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != MAP_HEADER:
        raise ValueError(f"{path}: not a success-map file (bad header)")
    body = [(float(r[0]), float(r[1]), r[2] == "1", _num(r[3])) for r in rows[1:]]
    rhos = sorted({b[0] for b in body})
    mus = sorted({b[1] for b in body})
    cells = np.zeros((len(rhos), len(mus)), dtype=bool)
    final = np.full(cells.shape, np.nan)
    ri = {v: i for i, v in enumerate(rhos)}
    mj = {v: j for j, v in enumerate(mus)}
    for rho, c, ok, d in body:
        cells[ri[rho], mj[c]] = ok
        final[ri[rho], mj[c]] = d
    config = read_meta(path).get("config", {}) if meta_path(path).exists() else {}
    return SuccessMap(np.array(rhos), np.array(mus), cells, final, config)


# ---------------------------------------------------------------------------
# convergence plot
# ---------------------------------------------------------------------------

def plot_convergence(traces, path, labels=None, metric="dist"):
    """Semilog plot of a per-epoch metric, written as a deterministic SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "incopt", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for k, tr in enumerate(traces):
            y = np.asarray(getattr(tr, metric), dtype=float)
            label = labels[k] if labels else None
            ax.semilogy(tr.epoch, y, label=label)
        ax.set_xlabel("epoch")
        ax.set_ylabel(metric)
        if labels:
            ax.legend()
        fig.tight_layout()
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": f"incopt {__version__}"})
        plt.close(fig)
