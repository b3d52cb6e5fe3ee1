"""Uniform hash grid over the ground plane for broad-phase box queries."""

from __future__ import annotations

import math
from collections import defaultdict

from .geometry import OrientedBox

# boxes whose AABBs are further apart than this cannot intersect
_AABB_SLACK = 1e-6


class GridIndex:
    """Buckets box ids by the xy cells their AABBs touch.

    Cells are hashed, so boxes outside any room extent are still indexed.
    """

    def __init__(self, cell_size: float = 0.5):
        if cell_size <= 0:
            raise ValueError("cell_size must be positive")
        self.cell_size = float(cell_size)
        self._cells: dict[tuple[int, int], list[str]] = defaultdict(list)
        self._boxes: dict[str, OrientedBox] = {}
        self._aabbs: dict[str, tuple] = {}

    def _cell_range(self, lo, hi):
        c = self.cell_size
        i0, i1 = math.floor((lo[0] - _AABB_SLACK) / c), math.floor((hi[0] + _AABB_SLACK) / c)
        j0, j1 = math.floor((lo[1] - _AABB_SLACK) / c), math.floor((hi[1] + _AABB_SLACK) / c)
        return ((i, j) for i in range(i0, i1 + 1) for j in range(j0, j1 + 1))

    def insert(self, key: str, box: OrientedBox) -> None:
        if key in self._boxes:
            raise KeyError(f"{key!r} already indexed")
        lo, hi = box.aabb()
        self._boxes[key] = box
        self._aabbs[key] = (lo, hi)
        for cell in self._cell_range(lo, hi):
            self._cells[cell].append(key)

    def query(self, box: OrientedBox, xy_only: bool = False) -> list[str]:
        """Ids whose AABB overlaps ``box``'s AABB (a superset of true intersections).

        With ``xy_only`` the vertical extent is ignored, which finds everything
        above or below the box's footprint.
        """
        lo, hi = box.aabb()
        dims = slice(0, 2) if xy_only else slice(0, 3)
        seen: dict[str, None] = {}
        for cell in self._cell_range(lo, hi):
            for key in self._cells.get(cell, ()):
                if key in seen:
                    continue
                olo, ohi = self._aabbs[key]
                if (olo[dims] <= hi[dims] + _AABB_SLACK).all() and (lo[dims] <= ohi[dims] + _AABB_SLACK).all():
                    seen[key] = None
        return list(seen)

    def __contains__(self, key: str) -> bool:
        return key in self._boxes

    def __len__(self) -> int:
        return len(self._boxes)

    def keys(self) -> list[str]:
        return list(self._boxes)

    def box(self, key: str) -> OrientedBox:
        return self._boxes[key]
