"""Binary snapshot of a solved problem: value cube plus policy cube.

Layout (little-endian):

    bytes 0..7    magic  b"TESDPSN1"
    bytes 8..11   uint32 header length H
    bytes 12..    UTF-8 JSON header of length H
    then          value cube,  float64 row-major, (N_t+1, N_z+1, N_q+1)
    then          policy cube, float64 row-major, (N_t,   N_z+1, N_q+1)

The header records the grid, the terminal kind, and the content hash of the
configuration document that produced the solve, so a simulation run can
refuse a snapshot that does not match its config.  Cubes are memory-mapped
on open; a full-year snapshot is about 1 GB and never needs to be resident
at once.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .costs import TerminalSpec
from .grid import Grid3

__all__ = ["Snapshot", "SnapshotError", "create_snapshot", "open_snapshot"]

_MAGIC = b"TESDPSN1"


class SnapshotError(ValueError):
    """Snapshot file is missing, truncated, or inconsistent with its header."""


@dataclass
class Snapshot:
    path: Path
    grid: Grid3
    terminal: TerminalSpec
    config_sha256: str
    values: np.ndarray  # memmap (N_t+1, N_z+1, N_q+1)
    policy: np.ndarray  # memmap (N_t,   N_z+1, N_q+1)


def _header_dict(grid: Grid3, terminal: TerminalSpec, config_sha256: str) -> dict:
    return {
        "format": "tessolve-snapshot",
        "version": 1,
        "config_sha256": config_sha256,
        "terminal": terminal.kind,
        "grid": {
            "N_t": grid.N_t, "N_z": grid.N_z, "N_q": grid.N_q,
            "dt": grid.dt, "dz": grid.dz, "dq": grid.dq,
            "z_min": grid.z_min, "z_max": grid.z_max,
            "q_min": grid.q_min, "q_max": grid.q_max,
            "t0": grid.t0, "T": grid.T,
        },
    }


def _cube_shapes(grid: Grid3) -> tuple[tuple[int, ...], tuple[int, ...]]:
    L, J = grid.N_z + 1, grid.N_q + 1
    return (grid.N_t + 1, L, J), (grid.N_t, L, J)


def create_snapshot(path: str | Path, grid: Grid3, terminal: TerminalSpec,
                    config_sha256: str) -> Snapshot:
    """Create a zero-filled snapshot file and return it with writable memmaps."""
    path = Path(path)
    header = json.dumps(_header_dict(grid, terminal, config_sha256), sort_keys=True).encode()
    vshape, pshape = _cube_shapes(grid)
    v_bytes = int(np.prod(vshape)) * 8
    p_bytes = int(np.prod(pshape)) * 8
    v_off = len(_MAGIC) + 4 + len(header)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.truncate(v_off + v_bytes + p_bytes)
    values = np.memmap(path, dtype="<f8", mode="r+", offset=v_off, shape=vshape)
    policy = np.memmap(path, dtype="<f8", mode="r+", offset=v_off + v_bytes, shape=pshape)
    return Snapshot(path=path, grid=grid, terminal=terminal,
                    config_sha256=config_sha256, values=values, policy=policy)


def open_snapshot(path: str | Path, mode: str = "r") -> Snapshot:
    """Open an existing snapshot with memory-mapped cubes."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            magic = f.read(len(_MAGIC))
            if magic != _MAGIC:
                raise SnapshotError(f"{path}: not a snapshot file (bad magic)")
            (hlen,) = struct.unpack("<I", f.read(4))
            raw = f.read(hlen)
            if len(raw) != hlen:
                raise SnapshotError(f"{path}: truncated header")
            header = json.loads(raw.decode())
    except OSError as e:
        raise SnapshotError(f"cannot read snapshot: {e}") from e
    except (struct.error, json.JSONDecodeError) as e:
        raise SnapshotError(f"{path}: corrupt snapshot header ({e})") from e
    if header.get("format") != "tessolve-snapshot" or header.get("version") != 1:
        raise SnapshotError(f"{path}: unsupported snapshot format/version")
    g = header["grid"]
    grid = Grid3(N_t=int(g["N_t"]), N_z=int(g["N_z"]), N_q=int(g["N_q"]),
                 dt=float(g["dt"]), dz=float(g["dz"]), dq=float(g["dq"]),
                 z_min=float(g["z_min"]), z_max=float(g["z_max"]),
                 q_min=float(g["q_min"]), q_max=float(g["q_max"]),
                 t0=float(g["t0"]), T=float(g["T"]))
    terminal = TerminalSpec(kind=header["terminal"])
    vshape, pshape = _cube_shapes(grid)
    v_off = len(_MAGIC) + 4 + hlen
    v_bytes = int(np.prod(vshape)) * 8
    expected = v_off + v_bytes + int(np.prod(pshape)) * 8
    actual = path.stat().st_size
    if actual != expected:
        raise SnapshotError(f"{path}: size {actual} does not match header (expected {expected})")
    values = np.memmap(path, dtype="<f8", mode=mode, offset=v_off, shape=vshape)
    policy = np.memmap(path, dtype="<f8", mode=mode, offset=v_off + v_bytes, shape=pshape)
    return Snapshot(path=path, grid=grid, terminal=terminal,
                    config_sha256=header["config_sha256"], values=values, policy=policy)
