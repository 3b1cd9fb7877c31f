"""Artifact file formats.

PNFLD1 field files: text header terminated by a blank line, then raw
little-endian float64 data, voxel-major with x varying fastest and the
unknown index minor:

    PNFLD1
    dim 3
    res 32 32 32
    order 1
    unknowns 4
    endian little
    <blank line><raw float64 ...>

Profile CSVs carry 'r,value' (plus 'stderr' for Monte Carlo curves) with no
locale-dependent formatting.  Run configs are flat key=value text files;
unknown keys are rejected at parse time.
"""

from __future__ import annotations

import numpy as np

MAGIC = "PNFLD1"


def write_field(path, collocated, order):
    """Write a collocated coefficient grid of shape (*res, U)."""
    res = collocated.shape[:-1]
    n_unknowns = collocated.shape[-1]
    header = [
        MAGIC,
        f"dim {len(res)}",
        "res " + " ".join(str(r) for r in res),
        f"order {order}",
        f"unknowns {n_unknowns}",
        "endian little",
        "",
    ]
    # data index = voxel_flat * U + comp with x fastest
    nvox = int(np.prod(res))
    flat = collocated.reshape(nvox, n_unknowns, order="F")
    data = np.ascontiguousarray(flat, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write("\n".join(header).encode("ascii"))
        fh.write(data.tobytes())


def read_field(path):
    """Read a PNFLD1 file; returns (meta dict, array of shape (*res, U))."""
    with open(path, "rb") as fh:
        blob = fh.read()
    head, _, rest = blob.partition(b"\n\n")
    lines = head.decode("ascii").splitlines()
    if lines[0] != MAGIC:
        raise ValueError(f"not a {MAGIC} file: {path}")
    meta = {}
    for line in lines[1:]:
        key, _, val = line.partition(" ")
        meta[key] = val
    res = tuple(int(v) for v in meta["res"].split())
    n_unknowns = int(meta["unknowns"])
    order = int(meta["order"])
    nvox = int(np.prod(res))
    data = np.frombuffer(rest, dtype="<f8", count=nvox * n_unknowns)
    coll = np.empty(res + (n_unknowns,))
    for comp in range(n_unknowns):
        coll[..., comp] = data[comp::n_unknowns].reshape(res, order="F")
    return {"dim": len(res), "res": res, "order": order,
            "unknowns": n_unknowns}, coll


def write_profile(path, rows, with_stderr=False):
    """rows: iterable of (r, value[, stderr])."""
    with open(path, "w", newline="") as fh:
        fh.write("r,value,stderr\n" if with_stderr else "r,value\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_profile(path):
    """Returns (r, value[, stderr]) as float arrays."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        cols = [[] for _ in header]
        for line in fh:
            if not line.strip():
                continue
            for c, v in zip(cols, line.strip().split(",")):
                c.append(float(v))
    return tuple(np.asarray(c) for c in cols)


def write_config(path, pairs):
    with open(path, "w") as fh:
        for key, val in pairs.items():
            fh.write(f"{key}={val}\n")


def read_config(path):
    out = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected key=value")
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out
