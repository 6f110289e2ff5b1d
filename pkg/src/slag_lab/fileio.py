"""PF1 field files and CSV import/export.

A PF1 file is one JSON header line (dim, shape, spacing, origin, ball_radius,
value_kind) followed by the raw 64-bit little-endian float payload in
row-major order. Masks travel either implicitly (ball grids) or as companion
files with value_kind "mask". CSV rows carry index tuple, coordinates, value
and mask flag at 17 significant digits, so PF1 -> CSV -> PF1 round-trips are
bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import FileFormatError
from .fields import GridSpec, PotentialField

VALUE_KINDS = ("potential", "conjugate", "mask")


def _header_dict(grid: GridSpec, value_kind: str) -> dict:
    return {
        "dim": grid.dim,
        "shape": list(grid.shape),
        "spacing": grid.spacing,
        "origin": list(grid.origin),
        "ball_radius": grid.ball_radius,
        "value_kind": value_kind,
    }


def write_pf1(path, grid: GridSpec, values: np.ndarray, value_kind: str = "potential"):
    if value_kind not in VALUE_KINDS:
        raise FileFormatError(f"unknown value_kind {value_kind!r}")
    header = json.dumps(_header_dict(grid, value_kind)) + "\n"
    payload = np.ascontiguousarray(values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload)


def read_pf1(path) -> tuple[GridSpec, np.ndarray, str]:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FileFormatError("no header line terminator found", offset=len(raw))
    try:
        header = json.loads(raw[:nl].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        offset = getattr(exc, "pos", 0)
        raise FileFormatError(f"malformed PF1 header: {exc}", offset=offset) from exc
    try:
        grid = GridSpec(
            dim=int(header["dim"]),
            shape=tuple(header["shape"]),
            spacing=float(header["spacing"]),
            origin=tuple(header["origin"]),
            ball_radius=(
                None if header["ball_radius"] is None else float(header["ball_radius"])
            ),
        )
        value_kind = header["value_kind"]
    except KeyError as exc:
        raise FileFormatError(f"PF1 header missing key {exc}", offset=nl) from exc
    if value_kind not in VALUE_KINDS:
        raise FileFormatError(f"unknown value_kind {value_kind!r}", offset=nl)
    expected = grid.n_nodes() * 8
    payload = raw[nl + 1 :]
    if len(payload) != expected:
        raise FileFormatError(
            f"payload has {len(payload)} bytes, expected {expected}", offset=nl + 1
        )
    values = np.frombuffer(payload, dtype="<f8").reshape(grid.shape).copy()
    return grid, values, value_kind


def save_field(path, field: PotentialField, value_kind: str = "potential",
               mask_path=None):
    """Write a field; an explicit (non-ball) mask goes to a companion file."""
    write_pf1(path, field.grid, field.values, value_kind)
    implicit = np.array_equal(field.mask, field.grid.ball_mask())
    if mask_path is None and not implicit:
        mask_path = Path(path).with_suffix(".mask.pf1")
    if mask_path is not None:
        write_pf1(mask_path, field.grid, field.mask.astype(float), "mask")


def load_field(path, mask_path=None) -> PotentialField:
    grid, values, kind = read_pf1(path)
    if kind == "mask":
        return PotentialField(grid, values, values > 0.5)
    if mask_path is not None:
        mgrid, mvals, mkind = read_pf1(mask_path)
        if mkind != "mask" or mgrid.shape != grid.shape:
            raise FileFormatError("companion mask file does not match the field")
        return PotentialField(grid, values, mvals > 0.5)
    return PotentialField(grid, values)


def write_csv(path, field: PotentialField):
    grid = field.grid
    d = grid.dim
    idx_cols = [f"i{k}" for k in range(d)]
    coord_cols = [f"x{k}" for k in range(d)]
    coords = grid.coords()
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# PF1 " + json.dumps(_header_dict(grid, "potential")) + "\n")
        fh.write(",".join(idx_cols + coord_cols + ["value", "mask"]) + "\n")
        for idx in np.ndindex(grid.shape):
            row = [str(i) for i in idx]
            row += [f"{coords[idx][k]:.17g}" for k in range(d)]
            row.append(f"{field.values[idx]:.17g}")
            row.append("1" if field.mask[idx] else "0")
            fh.write(",".join(row) + "\n")


def read_csv(path) -> PotentialField:
    with open(path, "r", encoding="ascii") as fh:
        first = fh.readline()
        if not first.startswith("# PF1 "):
            raise FileFormatError("CSV missing '# PF1' grid header", offset=0)
        header = json.loads(first[len("# PF1 ") :])
        grid = GridSpec(
            dim=int(header["dim"]),
            shape=tuple(header["shape"]),
            spacing=float(header["spacing"]),
            origin=tuple(header["origin"]),
            ball_radius=(
                None if header["ball_radius"] is None else float(header["ball_radius"])
            ),
        )
        fh.readline()  # column names
        values = np.empty(grid.shape)
        mask = np.zeros(grid.shape, dtype=bool)
        d = grid.dim
        for line in fh:
            parts = line.strip().split(",")
            idx = tuple(int(p) for p in parts[:d])
            values[idx] = float(parts[2 * d])
            mask[idx] = parts[2 * d + 1] == "1"
    return PotentialField(grid, values, mask)


def convert(in_path, out_path):
    """Lossless conversion between PF1 and CSV, dispatched by suffix."""
    src = Path(in_path)
    dst = Path(out_path)
    if src.suffix == ".pf1" and dst.suffix == ".csv":
        write_csv(dst, load_field(src))
    elif src.suffix == ".csv" and dst.suffix == ".pf1":
        save_field(dst, read_csv(src))
    elif src.suffix == dst.suffix == ".pf1":
        grid, values, kind = read_pf1(src)
        write_pf1(dst, grid, values, kind)
    else:
        raise FileFormatError(
            f"unsupported conversion {src.suffix!r} -> {dst.suffix!r}"
        )
