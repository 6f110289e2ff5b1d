"""Discrete Legendre-Fenchel transforms, subdifferentials and slope domains.

The transform of a masked field is f*(y) = max over masked nodes x of
y.x - f(x), i.e. the conjugate of the piecewise-linear interpolant. Three
evaluation routes exist:

* `conjugate_brute`  - chunked O(N^2) reference,
* `conjugate_fast`   - per-axis factorization with a linear-time 1-D hull
                       transform (contract: equals brute to 1e-12),
* `refined_sup`      - sup over local second-order node models, exact on
                       quadratics; the rotation operator builds on this.

Slope grids are sized automatically from attained first differences plus a
two-cell margin, with a node pinned at the slope-space origin.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import ndimage

from .eigen import eigvals_sym
from .errors import ConvexityError, SlopeGridError
from .fields import GridSpec, PotentialField, erode_mask
from .hessians import (
    directional_convexity_deficit,
    fourth_order_jet,
    gradient_field,
    hessian_matrices,
    semiconvexity_modulus,
    taylor_tensors,
)
from .reports import AuditReport

_CHUNK_FLOATS = 8_000_000


def _require_convex(f: PotentialField, tol: float = 1e-8) -> None:
    # directional second differences, not matrix eigenvalues: sampled convex
    # functions with creases have exactly nonnegative directional curvature
    # while their assembled cross-stencil Hessian can be indefinite
    worst, node = directional_convexity_deficit(f)
    if worst < -tol:
        raise ConvexityError("field is not convex", node=node, modulus=worst)


def auto_slope_grid(f: PotentialField, margin: int = 2,
                    spacing: float | None = None) -> GridSpec:
    """Slope-space grid covering the attained gradient range plus a margin.

    The spacing defaults to h times the largest attained slope-to-coordinate
    range ratio, and the grid is aligned so that 0 is a node.
    """
    grads, valid = gradient_field(f)
    if not valid.any():
        raise SlopeGridError("no interior node to estimate the slope range")
    g = grads[valid]
    lo = g.min(axis=0)
    hi = g.max(axis=0)
    scale = float(np.abs(g).max())
    if float((hi - lo).max()) <= 1e-12 * (1.0 + scale):
        raise SlopeGridError("attained slope range is degenerate")
    if spacing is None:
        coords = f.grid.coords()[valid]
        span = coords.max(axis=0) - coords.min(axis=0)
        ratio = (hi - lo) / span
        spacing = float(ratio.max()) * f.grid.spacing
    if not spacing > 0:
        raise SlopeGridError(f"slope spacing must be positive, got {spacing}")
    shape = []
    origin = []
    for k in range(f.grid.dim):
        lo_node = int(np.floor(lo[k] / spacing)) - margin
        hi_node = int(np.ceil(hi[k] / spacing)) + margin
        while hi_node - lo_node + 1 < 5:
            lo_node -= 1
            hi_node += 1
        shape.append(hi_node - lo_node + 1)
        origin.append(lo_node * spacing)
    return GridSpec(f.grid.dim, tuple(shape), spacing, tuple(origin), None)


def sup_with_argmax(f: PotentialField, slopes: GridSpec,
                    interior_cells: int = 1):
    """Chunked node suprema of y.x - f(x) over the mask.

    Returns (values, argmax flat index into masked nodes, interior values)
    where the interior values max only over the mask eroded by
    `interior_cells`; their gap to `values` tells whether the sup is forced
    to the mask boundary.
    """
    xs, fs = f.masked_points()
    inner = erode_mask(f.mask, interior_cells)[f.mask]
    ys = slopes.coords().reshape(-1, slopes.dim)
    m = ys.shape[0]
    vals = np.empty(m)
    arg = np.empty(m, dtype=np.int64)
    vals_in = np.full(m, -np.inf)
    has_inner = bool(inner.any())
    chunk = max(1, _CHUNK_FLOATS // max(1, xs.shape[0]))
    for a in range(0, m, chunk):
        b = min(a + chunk, m)
        w = ys[a:b] @ xs.T
        w -= fs[None, :]
        vals[a:b] = w.max(axis=1)
        arg[a:b] = w.argmax(axis=1)
        if has_inner:
            vals_in[a:b] = w[:, inner].max(axis=1)
    return vals, arg, vals_in


def conjugate_brute(f: PotentialField, slopes: GridSpec | None = None,
                    convexity_tol: float = 1e-8) -> PotentialField:
    """Reference O(N^2) transform; raises on nonconvex input."""
    _require_convex(f, convexity_tol)
    if slopes is None:
        slopes = auto_slope_grid(f)
    vals, _, _ = sup_with_argmax(f, slopes)
    return PotentialField(slopes, vals.reshape(slopes.shape))


def _hull_transform_1d(xs, vs, ys):
    """max_i (y * xs[i] - vs[i]) for ascending xs and ys, via the lower hull.

    Linear in len(xs) + len(ys): a monotone-chain hull followed by a
    searchsorted merge against the hull's breakpoint slopes. Grid abscissae
    are strictly increasing, so no duplicate handling is needed.
    """
    hx: list[float] = []
    hv: list[float] = []
    for x, v in zip(xs, vs):
        while len(hx) >= 2 and (
            (hv[-1] - hv[-2]) * (x - hx[-1]) >= (v - hv[-1]) * (hx[-1] - hx[-2])
        ):
            hx.pop()
            hv.pop()
        hx.append(x)
        hv.append(v)
    ax = np.array(hx)
    av = np.array(hv)
    if len(ax) == 1:
        return ys * ax[0] - av[0]
    slopes = np.diff(av) / np.diff(ax)
    j = np.searchsorted(slopes, ys, side="right")
    return ys * ax[j] - av[j]


def _transform_axis(work: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                    axis: int) -> np.ndarray:
    """Apply the 1-D transform along one axis; non-finite entries are missing."""
    moved = np.moveaxis(work, axis, -1)
    lead = moved.shape[:-1]
    flat = moved.reshape(-1, moved.shape[-1])
    out = np.full((flat.shape[0], ys.size), -np.inf)
    for r in range(flat.shape[0]):
        row = flat[r]
        ok = np.isfinite(row)
        if ok.any():
            out[r] = _hull_transform_1d(xs[ok], row[ok], ys)
    return np.moveaxis(out.reshape(lead + (ys.size,)), -1, axis)


def conjugate_fast(f: PotentialField, slopes: GridSpec | None = None,
                   convexity_tol: float = 1e-8) -> PotentialField:
    """Factorized transform; values match `conjugate_brute` to 1e-12."""
    _require_convex(f, convexity_tol)
    if slopes is None:
        slopes = auto_slope_grid(f)
    d = f.grid.dim
    xaxes = f.grid.axes()
    yaxes = slopes.axes()
    work = np.where(f.mask, f.values, np.inf)
    work = _transform_axis(work, xaxes[d - 1], yaxes[d - 1], d - 1)
    for axis in range(d - 2, -1, -1):
        work = _transform_axis(-work, xaxes[axis], yaxes[axis], axis)
    if not np.isfinite(work).all():
        raise SlopeGridError("factorized transform hit an empty mask section")
    return PotentialField(slopes, work)


def refined_sup(f: PotentialField, slopes: GridSpec, window: int = 2,
                psd_floor: float = 1e-10, order: int = 4):
    """Sup of y.x - f over local Taylor-model node maxima.

    Around each slope node's brute argmax, every interior node within
    `window` cells contributes the maximum of its local Taylor model over
    its own half-cell box (argmax from the quadratic part, value corrected
    by the cubic/quartic terms when order = 4). Exact on polynomial fields
    up to the model order, where plain node suprema carry quantization
    ripple whose repeated second differences do not vanish. Returns
    (values, argmax, interior node values, node values); attainment tests
    must compare the last two (refined values exceed node suprema off the
    lattice).
    """
    vals, arg, vals_in = sup_with_argmax(f, slopes)
    grid = f.grid
    d = grid.dim
    grads, gvalid = gradient_field(f)
    mats, hvalid = hessian_matrices(f, stride=1)
    usable = hvalid & gvalid
    if order >= 4:
        # degree-4-exact jets where the wide stencils fit; the one-cell rim
        # ring degrades to the plain quadratic model
        tens3, tens4, _ = taylor_tensors(f)
        g4, h4, valid2 = fourth_order_jet(f)
        grads = np.where(valid2[..., None], g4, grads)
        mats = np.where(valid2[..., None, None], h4, mats)
    lam_min = np.full(grid.shape, -np.inf)
    lam_min[hvalid] = eigvals_sym(mats[hvalid])[..., -1]
    usable &= lam_min > psd_floor
    inv = np.zeros_like(mats)
    inv[usable] = np.linalg.inv(mats[usable])

    node_idx = np.argwhere(f.mask)          # (N, dim)
    anchors = node_idx[arg]                 # (M, dim)
    ys = slopes.coords().reshape(-1, d)
    coords = grid.coords()
    best = vals.copy()
    half = grid.spacing / 2.0
    for offset in product(range(-window, window + 1), repeat=d):
        cand = anchors + np.array(offset)
        ok = np.ones(len(cand), dtype=bool)
        for k in range(d):
            ok &= (cand[:, k] >= 0) & (cand[:, k] < grid.shape[k])
        cidx = tuple(cand[ok].T)
        sub = usable[cidx]
        sel = np.flatnonzero(ok)[sub]
        if sel.size == 0:
            continue
        cidx = tuple(cand[sel].T)
        x0 = coords[cidx]
        g0 = grads[cidx]
        h0 = mats[cidx]
        dy = ys[sel] - g0
        step = np.einsum("nij,nj->ni", inv[cidx], dy)
        np.clip(step, -half, half, out=step)
        if order >= 4:
            t3 = tens3[cidx]
            t4 = tens4[cidx]
            # Newton-polish the box-clamped maximizer of the quartic model
            # with the true model Jacobian; exact-polynomial inputs converge
            # to round-off in a few steps
            for _ in range(3):
                grad_tail = (
                    0.5 * np.einsum("nabc,nb,nc->na", t3, step, step)
                    + np.einsum("nabcd,nb,nc,nd->na", t4, step, step, step)
                    / 6.0
                )
                resid = dy - np.einsum("nij,nj->ni", h0, step) - grad_tail
                jac = (
                    h0
                    + np.einsum("nabc,nc->nab", t3, step)
                    + 0.5 * np.einsum("nabcd,nc,nd->nab", t4, step, step)
                )
                good = np.linalg.det(jac) > 1e-14
                delta = np.einsum("nij,nj->ni", inv[cidx], resid)
                if good.any():
                    delta[good] = np.linalg.solve(
                        jac[good], resid[good][..., None]
                    )[..., 0]
                step = step + delta
                np.clip(step, -half, half, out=step)
        model = (
            np.einsum("ni,ni->n", ys[sel], x0 + step)
            - f.values[cidx]
            - np.einsum("ni,ni->n", g0, step)
            - 0.5 * np.einsum("ni,nij,nj->n", step, h0, step)
        )
        if order >= 4:
            model -= np.einsum(
                "nabc,na,nb,nc->n", t3, step, step, step
            ) / 6.0
            model -= np.einsum(
                "nabcd,na,nb,nc,nd->n", t4, step, step, step, step
            ) / 24.0
        best[sel] = np.maximum(best[sel], model)
    return best, arg, vals_in, vals


@dataclass
class SlopeSet:
    """Discrete subdifferential: slope nodes nearly attaining Fenchel equality."""

    anchor: np.ndarray
    members: np.ndarray  # (k, dim)
    tolerance: float

    def __post_init__(self):
        self.anchor = np.asarray(self.anchor, dtype=float)
        self.members = np.asarray(self.members, dtype=float).reshape(
            -1, self.anchor.size
        )
        if len(self.members) == 0:
            raise ConvexityError(
                "internal error: empty subdifferential for convex input"
            )


@dataclass
class DomainMask:
    """Slope nodes where the sup is attained away from the mask boundary."""

    slope_grid: GridSpec
    inside: np.ndarray

    def __post_init__(self):
        self.inside = np.asarray(self.inside, dtype=bool)
        if not self.inside.any():
            raise SlopeGridError("slope domain is empty")

    def interior(self, cells: int = 1) -> np.ndarray:
        return erode_mask(self.inside, cells)


def _locate_node(f: PotentialField, point) -> tuple[int, ...]:
    idx = f.grid.nearest_node(point)
    x = f.grid.node_coords(idx)
    if np.abs(x - np.asarray(point, dtype=float)).max() > 1e-9 * (1 + np.abs(x).max()):
        raise ConvexityError(f"point {tuple(point)} is not a grid node")
    if not f.mask[idx]:
        raise ConvexityError(f"point {tuple(point)} is outside the mask")
    return idx


def _lipschitz_at(f: PotentialField, idx: tuple[int, ...]) -> float:
    h = f.grid.spacing
    best = 0.0
    for k in range(f.grid.dim):
        for s in (-1, 1):
            j = list(idx)
            j[k] += s
            if 0 <= j[k] < f.grid.shape[k] and f.mask[tuple(j)]:
                best = max(best, abs(f.values[tuple(j)] - f.values[idx]) / h)
    return best


def _fenchel_gap(f: PotentialField, a, slopes: GridSpec | None,
                 convexity_tol: float = 1e-8):
    idx = _locate_node(f, a)
    anchor = f.grid.node_coords(idx)
    star = conjugate_fast(f, slopes, convexity_tol)
    ys = star.grid.coords().reshape(-1, f.grid.dim)
    gap = f.values[idx] + star.values.reshape(-1) - ys @ anchor
    return idx, anchor, ys, gap


def subdifferential(f: PotentialField, a, tol: float | None = None,
                    slopes: GridSpec | None = None,
                    convexity_tol: float = 1e-8) -> SlopeSet:
    """Slope nodes y with f(a) + f*(y) - y.a <= tol.

    The default tol = 2h(1 + local Lipschitz estimate) guarantees a nonempty
    result on any auto-sized slope grid; pass a tighter tolerance to localize
    smooth-point gradients.
    """
    idx, anchor, ys, gap = _fenchel_gap(f, a, slopes, convexity_tol)
    if tol is None:
        tol = 2.0 * f.grid.spacing * (1.0 + _lipschitz_at(f, idx))
    members = ys[gap <= tol]
    return SlopeSet(anchor=anchor, members=members, tolerance=float(tol))


def tight_subdifferential(f: PotentialField, a,
                          slopes: GridSpec | None = None,
                          slack: float | None = None,
                          convexity_tol: float = 1e-8) -> SlopeSet:
    """Argmin-localized subdifferential: gap <= min gap + O(h^2) slack.

    The fixed default tolerance makes member sets curvature-dependent
    sublevel blobs of radius O(sqrt(h)); set comparisons (sum rule, ball
    inclusions) need the gap minimizer neighborhood instead. Exact kinks
    (gap identically zero on the subdifferential) are unaffected.
    """
    idx, anchor, ys, gap = _fenchel_gap(f, a, slopes, convexity_tol)
    if slack is None:
        # a quarter of the one-cell gap increment keeps smooth-point sets at
        # the argmin node; exact kink plateaus (gap == 0) are kept whole
        h = f.grid.spacing
        scale = 1.0 + abs(float(f.values[idx]))
        slack = 0.25 * (1.0 + _lipschitz_at(f, idx)) * h * h + 1e-12 * scale
    cut = float(gap.min()) + slack
    members = ys[gap <= cut]
    return SlopeSet(anchor=anchor, members=members, tolerance=float(cut))


def slope_domain(f: PotentialField, slopes: GridSpec | None = None,
                 convexity_tol: float = 1e-8,
                 tie_tol: float = 1e-12) -> DomainMask:
    """Slope nodes whose sup is attained at an interior node of the mask."""
    _require_convex(f, convexity_tol)
    if slopes is None:
        slopes = auto_slope_grid(f)
    vals, _, vals_in = sup_with_argmax(f, slopes)
    inside = vals_in >= vals - tie_tol * (1.0 + np.abs(vals))
    return DomainMask(slopes, inside.reshape(slopes.shape))


def _hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    forward = np.sqrt(d2.min(axis=1)).max()
    backward = np.sqrt(d2.min(axis=0)).max()
    return float(max(forward, backward))


def check_sum_rule(v: PotentialField, kappa: float, samples,
                   tol: float = 1e-9,
                   subdiff_tol: float | None = None) -> AuditReport:
    """Subdifferential sum rule against the quadratic Q = kappa/2 |x|^2.

    At each sample point a, the Hausdorff distance between the (tight)
    subdifferential of v + Q and the kappa*a translate of the tight
    subdifferential of v must be at most two slope cells plus `tol`;
    `subdiff_tol` overrides the gap slack of the tight sets.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    coords = v.grid.coords()
    q = 0.5 * kappa * np.sum(coords**2, axis=-1)
    vq = v.with_values(v.values + q)
    grid_sum = auto_slope_grid(vq)
    grid_v = auto_slope_grid(v)
    allowance = 2.0 * max(grid_sum.spacing, grid_v.spacing) + tol
    violations = []
    min_margin = np.inf
    worst = (None, -np.inf)
    for a in samples:
        s_sum = tight_subdifferential(vq, a, slopes=grid_sum, slack=subdiff_tol)
        s_v = tight_subdifferential(v, a, slopes=grid_v, slack=subdiff_tol)
        dist = _hausdorff(s_sum.members, s_v.members + kappa * s_sum.anchor)
        margin = allowance - dist
        min_margin = min(min_margin, margin)
        node = v.grid.nearest_node(a)
        if margin < 0:
            violations.append((node, "hausdorff_distance", dist))
        if dist > worst[1]:
            worst = (tuple(float(x) for x in s_sum.anchor), dist)
    violations.sort(key=lambda t: t[0])
    return AuditReport(
        name="sum-rule",
        checked_nodes=len(list(samples)),
        violations=violations,
        min_margin=float(min_margin),
        details={"worst_point": worst[0], "worst_distance": worst[1],
                 "allowance": allowance},
    )


def check_slope_increase(f: PotentialField, s_delta: float, samples,
                         modulus_tol: float = 1e-8) -> AuditReport:
    """Ball inclusion of the slope domain around sampled subdifferentials.

    For each sample a, the slope-domain mask must contain the ball of radius
    s_delta * (R - |a|) - 2h around every member of the subdifferential at a.
    Uncovered nodes adjacent to the domain boundary are flagged in details
    (not violations); deeper uncovered nodes fail the audit. min_margin is
    the smallest verified ball radius.
    """
    mod = semiconvexity_modulus(f)
    if mod < s_delta - modulus_tol:
        raise ConvexityError(
            f"field is not {s_delta:.3g}-uniformly convex", modulus=mod
        )
    radius = f.grid.ball_radius if f.grid.ball_radius is not None else 0.0
    h = f.grid.spacing
    dm = slope_domain(f)
    slopes = dm.slope_grid
    ys = slopes.coords().reshape(-1, f.grid.dim)
    inside_flat = dm.inside.reshape(-1)
    structure = np.ones((3,) * f.grid.dim, dtype=bool)
    near_rim = (
        ~dm.inside
        & ndimage.binary_dilation(dm.inside, structure=structure)
    ).reshape(-1)
    violations = []
    rim_flags = 0
    checked = 0
    min_margin = np.inf
    for a in samples:
        a = np.asarray(a, dtype=float)
        r = s_delta * (radius - float(np.linalg.norm(a))) - 2.0 * h
        if r <= 0:
            continue
        min_margin = min(min_margin, r)
        sd = tight_subdifferential(f, a, slopes=slopes)
        for member in sd.members:
            dist = np.linalg.norm(ys - member, axis=1)
            required = dist <= r
            checked += int(required.sum())
            for flat in np.flatnonzero(required & ~inside_flat):
                if near_rim[flat]:
                    rim_flags += 1
                else:
                    node = np.unravel_index(flat, slopes.shape)
                    violations.append(
                        (tuple(int(i) for i in node), "uncovered_slope",
                         float(dist[flat]))
                    )
    violations.sort(key=lambda t: t[0])
    return AuditReport(
        name="slope-increase",
        checked_nodes=checked,
        violations=violations,
        min_margin=float(min_margin),
        details={"rim_flagged": rim_flags},
    )
