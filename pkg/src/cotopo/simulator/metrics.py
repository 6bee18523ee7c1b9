"""Summary statistics of a finished run."""

from __future__ import annotations

import csv

import numpy as np

from ..topology import Topology, path_lengths
from .engine import SimResult


def cdf_points(values) -> list[tuple[float, float]]:
    """(value, fraction <= value) for every distinct value."""
    v = np.sort(np.asarray(list(values), dtype=float))
    if v.size == 0:
        return []
    uniq, idx = np.unique(v, return_index=True)
    last = np.append(idx[1:], v.size)
    return [(float(u), float(c) / v.size) for u, c in zip(uniq, last)]


def metrics(result: SimResult, topology: Topology | None = None) -> dict:
    hops = np.asarray(result.path_hops, dtype=float)
    loads = list(result.link_bytes.values())
    out = {
        "iteration_time_us": result.iteration_time_us,
        "bandwidth_tax": result.bandwidth_tax,
        "flow_path_length_mean": float(hops.mean()) if hops.size else 0.0,
        "flow_path_length_p50": float(np.percentile(hops, 50)) if hops.size else 0.0,
        "flow_path_length_p99": float(np.percentile(hops, 99)) if hops.size else 0.0,
        "link_load_cdf": cdf_points(loads),
        "link_load_max": float(max(loads)) if loads else 0.0,
        "link_load_mean": float(np.mean(loads)) if loads else 0.0,
    }
    if topology is not None:
        pl = path_lengths(topology)
        out["all_pairs_path_length_mean"] = float(pl.mean())
        out["all_pairs_path_length_p99"] = float(np.percentile(pl, 99))
    return out


def write_cdf_csv(points, path, header=("value", "cdf")) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(points)
