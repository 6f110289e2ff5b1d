"""Scalar potentials sampled on masked uniform grids.

The domain is a ball carved out of a uniform box grid by a boolean mask;
"interior" always means the full 3^dim finite-difference stencil lies in the
mask. Grids in slope (gradient) space reuse the same type with
``ball_radius=None``, in which case the mask covers the whole box.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .errors import FieldError, GridError

_FACE_STRUCTURE = {
    2: ndimage.generate_binary_structure(2, 1),
    3: ndimage.generate_binary_structure(3, 1),
}


@dataclass(frozen=True)
class GridSpec:
    """Uniform box grid, optionally carrying a centered ball domain.

    Parameters
    ----------
    dim : 2 or 3.
    shape : per-axis node counts (>= 3 each).
    spacing : uniform node spacing h > 0, identical on all axes.
    origin : coordinates of the node with index (0, ..., 0).
    ball_radius : radius of the masked ball around the coordinate origin, or
        None for grids (e.g. slope-space grids) whose mask is the whole box.
    """

    dim: int
    shape: tuple[int, ...]
    spacing: float
    origin: tuple[float, ...]
    ball_radius: float | None = None

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise GridError(f"dim must be 2 or 3, got {self.dim}")
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))
        if len(self.shape) != self.dim or len(self.origin) != self.dim:
            raise GridError("shape/origin length must equal dim")
        if min(self.shape) < 3:
            raise GridError(f"need at least 3 nodes per axis, got {self.shape}")
        if not self.spacing > 0:
            raise GridError(f"spacing must be positive, got {self.spacing}")
        if self.ball_radius is not None:
            r = float(self.ball_radius)
            if not r > 0:
                raise GridError("ball_radius must be positive or None")
            for k in range(self.dim):
                lo = self.origin[k]
                hi = self.origin[k] + (self.shape[k] - 1) * self.spacing
                if lo > -r + 1e-12 or hi < r - 1e-12:
                    raise GridError(
                        f"box [{lo:.6g}, {hi:.6g}] on axis {k} does not contain "
                        f"the ball of radius {r:.6g}"
                    )

    @classmethod
    def ball_box(cls, dim: int, nodes: int, ball_radius: float = 1.0) -> "GridSpec":
        """Centered box [-R, R]^dim with `nodes` nodes per axis and the ball mask."""
        h = 2.0 * ball_radius / (nodes - 1)
        return cls(dim, (nodes,) * dim, h, (-ball_radius,) * dim, ball_radius)

    def axes(self) -> list[np.ndarray]:
        return [
            self.origin[k] + self.spacing * np.arange(self.shape[k])
            for k in range(self.dim)
        ]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape (*shape, dim)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def ball_mask(self) -> np.ndarray:
        if self.ball_radius is None:
            return np.ones(self.shape, dtype=bool)
        c = self.coords()
        r2 = np.sum(c * c, axis=-1)
        return r2 <= self.ball_radius**2 * (1.0 + 1e-14) + 1e-30

    def node_coords(self, index: Sequence[int]) -> np.ndarray:
        return np.array(
            [self.origin[k] + self.spacing * index[k] for k in range(self.dim)]
        )

    def nearest_node(self, point: Sequence[float]) -> tuple[int, ...]:
        idx = []
        for k in range(self.dim):
            i = int(round((point[k] - self.origin[k]) / self.spacing))
            idx.append(min(max(i, 0), self.shape[k] - 1))
        return tuple(idx)

    def n_nodes(self) -> int:
        return int(np.prod(self.shape))


def erode_mask(mask: np.ndarray, cells: int = 1) -> np.ndarray:
    """Erode by the full 3^dim (corner-including) neighborhood, `cells` times.

    Nodes on the grid border are never in the eroded set.
    """
    if cells <= 0:
        return mask.copy()
    structure = np.ones((3,) * mask.ndim, dtype=bool)
    return ndimage.binary_erosion(
        mask, structure=structure, iterations=cells, border_value=0
    )


def connected_components(mask: np.ndarray) -> int:
    """Number of face-connected components of the mask."""
    _, count = ndimage.label(mask, structure=_FACE_STRUCTURE[mask.ndim])
    return int(count)


@dataclass
class PotentialField:
    """Scalar potential on a masked grid.

    `values` is a full box array (row-major, last index fastest); only masked
    entries are meaningful and are required to be finite. Fields are treated
    as immutable after construction.
    """

    grid: GridSpec
    values: np.ndarray
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise FieldError(
                f"values shape {self.values.shape} != grid shape {self.grid.shape}"
            )
        if self.mask is None:
            self.mask = self.grid.ball_mask()
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.grid.shape:
            raise FieldError("mask shape does not match grid shape")
        if not self.mask.any():
            raise FieldError("mask is empty")
        bad = ~np.isfinite(self.values) & self.mask
        if bad.any():
            node = tuple(int(i) for i in np.argwhere(bad)[0])
            raise FieldError("non-finite value inside mask", node=node)
        if connected_components(self.mask) != 1:
            raise FieldError("mask is not face-connected")

    @property
    def spacing(self) -> float:
        return self.grid.spacing

    def interior_mask(self, cells: int = 1) -> np.ndarray:
        """Nodes whose full second-difference stencil lies in the mask."""
        return erode_mask(self.mask, cells)

    def masked_points(self) -> tuple[np.ndarray, np.ndarray]:
        """(coords (N, dim), values (N,)) over masked nodes, row-major order."""
        coords = self.grid.coords()[self.mask]
        return coords, self.values[self.mask]

    def with_values(self, values: np.ndarray) -> "PotentialField":
        return PotentialField(self.grid, values, self.mask.copy())

    def shifted(self, constant: float) -> "PotentialField":
        return self.with_values(self.values + constant)


def sample_potential(
    formula: Callable[[np.ndarray], np.ndarray | float], grid: GridSpec
) -> PotentialField:
    """Sample a pointwise formula on every grid node.

    `formula` receives coordinates of shape (..., dim) and may evaluate
    vectorized; a plain scalar function is accepted as fallback. Non-finite
    output at a masked node is rejected with that node's index.
    """
    coords = grid.coords()
    try:
        values = np.asarray(formula(coords), dtype=float)
        if values.shape != grid.shape:
            raise ValueError
    except Exception:
        values = np.empty(grid.shape)
        for idx in product(*(range(n) for n in grid.shape)):
            values[idx] = float(formula(coords[idx]))
    mask = grid.ball_mask()
    bad = ~np.isfinite(values) & mask
    if bad.any():
        node = tuple(int(i) for i in np.argwhere(bad)[0])
        raise FieldError("formula produced a non-finite value", node=node)
    return PotentialField(grid, values, mask)


def osc(u: PotentialField) -> float:
    """Oscillation max - min of the field over its mask."""
    vals = u.values[u.mask]
    return float(vals.max() - vals.min())
