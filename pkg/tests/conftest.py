import numpy as np
import pytest

from slag_lab import GridSpec, sample_potential
from slag_lab.formulas import iso_quad, quad_form


@pytest.fixture
def grid65():
    return GridSpec.ball_box(2, 65)


@pytest.fixture
def grid33():
    return GridSpec.ball_box(2, 33)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def field_from(formula, grid):
    return sample_potential(formula, grid)


def make_iso_quad(grid, k):
    return sample_potential(iso_quad(k), grid)


def make_quad(grid, matrix):
    return sample_potential(quad_form(matrix), grid)


def smooth_max_affine_anchors(grid, slopes, offsets, rng, count,
                              margin_cells=3):
    """Masked nodes whose active piece wins on a whole stencil neighborhood.

    Near a crease the grid cannot tell which piece is active, so set-valued
    comparisons sample anchors where the winner is locally unambiguous.
    """
    from scipy import ndimage

    coords = grid.coords()
    vals = np.tensordot(coords, np.asarray(slopes), axes=([-1], [1])) + offsets
    active = vals.argmax(axis=-1)
    mask = grid.ball_mask()
    for _ in range(margin_cells):
        mask = ndimage.binary_erosion(
            mask, structure=np.ones((3,) * grid.dim, bool), border_value=0
        )
    stable = mask.copy()
    footprint = np.ones((3,) * grid.dim, dtype=bool)
    local_min = ndimage.minimum_filter(active, footprint=footprint)
    local_max = ndimage.maximum_filter(active, footprint=footprint)
    stable &= local_min == local_max
    nodes = np.argwhere(stable)
    picks = nodes[rng.choice(len(nodes), size=count, replace=False)]
    return [grid.node_coords(n) for n in picks]
