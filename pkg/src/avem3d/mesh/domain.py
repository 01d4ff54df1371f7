"""Polyhedral domains built from integer unit cubes."""
from __future__ import annotations

from collections import deque

import numpy as np

# offsets used by the octant test; coordinates carry far fewer than 30
# fractional bits, so p +- EPS is exact and never crosses a lattice plane
_EPS = 2.0 ** -30
_OCTANTS = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)


class DomainError(ValueError):
    pass


def _as_corner(cube):
    cube = tuple(cube)
    if len(cube) == 2 and all(np.ndim(c) == 1 for c in cube):
        lo, hi = (np.asarray(c, dtype=float) for c in cube)
        if lo.shape != (3,) or hi.shape != (3,):
            raise DomainError(f"cube {cube!r}: expected two 3-vectors")
        if not np.all(hi - lo == 1.0):
            raise DomainError(f"cube {cube!r} is not a unit cube")
        cube = tuple(lo)
    if len(cube) != 3:
        raise DomainError(f"cube {cube!r}: expected a lower corner (x, y, z)")
    corner = []
    for c in cube:
        if float(c) != int(np.floor(float(c))):
            raise DomainError(f"cube {cube!r} has a non-integer corner")
        corner.append(int(np.floor(float(c))))
    return tuple(corner)


class CubeDomain:
    """Union of closed unit cubes with integer lower corners.

    Parameters
    ----------
    cubes : iterable
        Either lower corners ``(i, j, k)`` or ``(lower, upper)`` pairs.
    """

    def __init__(self, cubes):
        corners = [_as_corner(c) for c in cubes]
        if not corners:
            raise DomainError("empty domain")
        if len(set(corners)) != len(corners):
            raise DomainError("overlapping cubes")
        self.cubes = corners
        self._set = set(corners)
        self._check_connected()

    def _check_connected(self):
        seen = {self.cubes[0]}
        todo = deque(seen)
        while todo:
            c = todo.popleft()
            for ax in range(3):
                for s in (-1, 1):
                    n = list(c)
                    n[ax] += s
                    n = tuple(n)
                    if n in self._set and n not in seen:
                        seen.add(n)
                        todo.append(n)
        if len(seen) != len(self.cubes):
            raise DomainError("cubes are not face-connected")

    @property
    def volume(self):
        return float(len(self.cubes))

    def _inside_open(self, pts):
        cells = np.floor(pts).astype(np.int64)
        return np.array([tuple(c) in self._set for c in cells], dtype=bool)

    def on_boundary(self, pts):
        """Boolean mask of points of the closed domain lying on its boundary."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        inside = np.ones(len(pts), dtype=bool)
        for off in _OCTANTS:
            inside &= self._inside_open(pts + _EPS * off)
        return ~inside

    def __repr__(self):
        return f"CubeDomain({len(self.cubes)} cubes)"


def fichera_cubes():
    """The seven unit cubes tiling (-1, 1)^3 minus the closed positive octant."""
    return [c for c in ((i, j, k) for i in (-1, 0) for j in (-1, 0) for k in (-1, 0)) if c != (0, 0, 0)]
