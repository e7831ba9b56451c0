"""CSV persistence for trajectories and training sets.

Layout: a header line ``# d=<d> delta=<delta> n=<rows>``, then one
comma-separated row per sample holding ``x_1..x_d`` (trajectories) or
``x_1..x_d,y_1..y_d`` (training sets), written with 17 significant digits so a
round trip is exact.
"""

import re

import numpy as np

from .sde import TrainingSet, Trajectory

_HEADER = re.compile(r"#\s*d=(\d+)\s+delta=(\S+)\s+n=(\d+)")
FMT = "%.17g"


def _write(path, block, d, delta):
    np.savetxt(path, block, fmt=FMT, delimiter=",", header=f"d={d} delta={delta!r} n={block.shape[0]}")


def _read(path):
    with open(path) as fh:
        first = fh.readline()
        m = _HEADER.match(first.strip())
        if not m:
            raise ValueError(f"{path}: missing '# d=.. delta=.. n=..' header")
        d, delta, n = int(m.group(1)), float(m.group(2)), int(m.group(3))
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[0] != n:
        raise ValueError(f"{path}: header announces {n} rows, found {data.shape[0]}")
    return d, delta, data


def save_trajectory(traj, path):
    _write(path, traj.states, traj.d, traj.delta)


def load_trajectory(path):
    d, delta, data = _read(path)
    if data.shape[1] != d:
        raise ValueError(f"{path}: expected {d} columns, found {data.shape[1]}")
    return Trajectory(data, delta)


def save_training_set(ts, path):
    _write(path, np.hstack([ts.points, ts.labels]), ts.d, ts.delta)


def load_training_set(path):
    d, delta, data = _read(path)
    if data.shape[1] != 2 * d:
        raise ValueError(f"{path}: expected {2 * d} columns, found {data.shape[1]}")
    return TrainingSet(data[:, :d], data[:, d:], delta)
