"""Small constructors shared by the test modules."""

import numpy as np

from airtraj.trajdata import FlightMetadata, make_trajectory


def meta(fid="F1", n=2, dest="SFO", rules="IFR", op="arrival", category="jet",
         start="2006-02-10T06:00:00Z", template=None):
    return FlightMetadata(fid, op, "LAX", dest, category, rules, start, n, template)


def track(xy, z=1000.0, t0=0, dt=5, fid="F1", **kw):
    """A trajectory through planar points ``xy`` at constant altitude."""
    xy = np.asarray(xy, dtype=float)
    xyz = np.column_stack([xy, np.full(len(xy), z)])
    t = t0 + dt * np.arange(len(xy))
    return make_trajectory(meta(fid, len(xy), **kw), xyz, t)


def line(n, heading=0.0, step=100.0, start=(0.0, 0.0)):
    k = np.arange(n)[:, None]
    return np.asarray(start) + step * k * np.array([np.cos(heading), np.sin(heading)])


def l_path(angle, n1=20, n2=20, step=100.0):
    """n1 points heading east, then n2 points after turning left by ``angle``."""
    a = line(n1, 0.0, step)
    b = line(n2 + 1, angle, step, start=a[-1])[1:]
    return np.vstack([a, b])
