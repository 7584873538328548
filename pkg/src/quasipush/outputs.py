"""Batch outputs: CSV trajectories and final poses, JSON histograms and summary, SVG plots.

Floats are written with ``repr`` so identical inputs give identical bytes.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

FORMATS = ("csv", "json", "svg")
HIST_BINS = 50
HIST_KEYS = ("dx_mm", "dy_mm", "dtheta_rad")


def _f(x) -> str:
    return repr(float(x))


def final_deltas(records) -> np.ndarray:
    d = np.array([r.object_poses[-1] - r.object_poses[0] for r in records])
    d[:, 2] = (d[:, 2] + math.pi) % (2 * math.pi) - math.pi
    return d


def histograms(records, bins: int = HIST_BINS) -> dict:
    """Fixed-count uniform histograms of the final pose change over the observed range."""
    d = final_deltas(records)
    out = {"bins": bins, "range": "observed min to max", "quantities": {}}
    for k, key in enumerate(HIST_KEYS):
        lo, hi = float(d[:, k].min()), float(d[:, k].max())
        if hi - lo < 1e-12:
            lo, hi = lo - 0.5, hi + 0.5
        counts, edges = np.histogram(d[:, k], bins=bins, range=(lo, hi))
        out["quantities"][key] = {"edges": edges.tolist(), "counts": counts.tolist()}
    return out


def count_modes(counts, sigmas: float = 3.0) -> int:
    """Number of histogram peaks that stand out from counting noise.

    A peak counts when its prominence exceeds ``sigmas`` Poisson standard
    deviations of the tallest bin.
    """
    c = np.concatenate([[0], np.asarray(counts, dtype=float), [0]])
    peaks, _ = find_peaks(c, prominence=sigmas * math.sqrt(max(c.max(), 1.0)))
    return len(peaks)


def is_unimodal(counts, sigmas: float = 3.0) -> bool:
    return count_modes(counts, sigmas) == 1


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_trajectories(records, path) -> None:
    n_f = records[0].finger_positions.shape[1]
    header = ["rollout", "step", "t_s", "x_mm", "y_mm", "theta_rad"]
    for k in range(n_f):
        header += [f"finger{k}_x_mm", f"finger{k}_y_mm"]
    header += ["modes"]
    rows = []
    for r in records:
        for i in range(len(r.t)):
            row = [r.index, i, _f(r.t[i])] + [_f(v) for v in r.object_poses[i]]
            for k in range(n_f):
                row += [_f(r.finger_positions[i, k, 0]), _f(r.finger_positions[i, k, 1])]
            rows.append(row + [r.modes[i]])
    _write_csv(Path(path), header, rows)


def write_final_poses(records, path) -> None:
    _write_csv(Path(path), ["x_mm", "y_mm", "theta_rad"], [[_f(v) for v in r.object_poses[-1]] for r in records])


def _svg(records, path, max_paths: int = 200) -> None:
    pts = np.concatenate([r.object_poses[:, :2] for r in records])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = max(float((hi - lo).max()), 1e-9)
    size, pad = 600.0, 20.0
    s = (size - 2 * pad) / span

    def xy(p):
        return pad + (p[0] - lo[0]) * s, size - pad - (p[1] - lo[1]) * s

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0f}" height="{size:.0f}" '
             f'viewBox="0 0 {size:.0f} {size:.0f}">', '<rect width="100%" height="100%" fill="white"/>']
    for r in records[:max_paths]:
        path_pts = " ".join("%.3f,%.3f" % xy(p) for p in r.object_poses[:, :2])
        lines.append(f'<polyline points="{path_pts}" fill="none" stroke="#888" stroke-width="0.5"/>')
    colors = {"Completed": "#1f77b4", "Grasped": "#2ca02c", "Jammed": "#d62728", "Escaped": "#ff7f0e"}
    for r in records:
        x, y = xy(r.object_poses[-1])
        lines.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="1.5" fill="{colors.get(r.status, "black")}"/>')
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n")


def emit_outputs(records, out_dir, formats=FORMATS, summary: dict | None = None) -> list:
    """Write the requested formats into ``out_dir``; returns the paths written.

    csv: trajectories.csv, final_poses.csv; json: histogram.json,
    summary.json (when a summary is given); svg: trajectories.svg.
    """
    formats = [f for f in formats if f]
    unknown = set(formats) - set(FORMATS)
    if unknown:
        raise ValueError(f"unknown output formats {sorted(unknown)}")
    if not formats:
        return []
    if not records:
        raise ValueError("no rollouts to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        write_trajectories(records, out / "trajectories.csv")
        write_final_poses(records, out / "final_poses.csv")
        written += [out / "trajectories.csv", out / "final_poses.csv"]
    if "json" in formats:
        (out / "histogram.json").write_text(json.dumps(histograms(records), indent=1) + "\n")
        written.append(out / "histogram.json")
        if summary is not None:
            (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
            written.append(out / "summary.json")
    if "svg" in formats:
        _svg(records, out / "trajectories.svg")
        written.append(out / "trajectories.svg")
    return written
