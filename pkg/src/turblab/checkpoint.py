"""Binary field checkpoints ("TLB1") with a text metadata sidecar.

Layout, little-endian::

    b"TLB1" | u32 rank | u32 dims[rank] | u8 domain kind | f64 params[...] | f64 payload

The number of domain parameters is fixed by the kind tag (see ``PARAM_COUNT``).
Resolution is recovered from ``dims``: the trailing axes are the grid, a
leading extra axis (if any) is the component axis of a vector field.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import ContractViolation
from .fields import ChannelDomain, PeriodicBox, ScalarField, StripDomain, VectorField

MAGIC = b"TLB1"
PARAM_COUNT = {1: 2, 2: 2, 3: 3}


def _domain_from(kind, params, grid):
    if kind == 1:
        dim, side = int(params[0]), params[1]
        return PeriodicBox(dim=dim, n=tuple(grid[-dim:]), side=side)
    if kind == 2:
        return StripDomain(X=params[0], nx=grid[-2], ny=grid[-1], height=params[1])
    if kind == 3:
        dim, L, Ly = int(params[0]), params[1], params[2]
        if dim == 2:
            return ChannelDomain(L=L, nx=grid[-2], nz=grid[-1] - 1)
        return ChannelDomain(L=L, nx=grid[-3], ny=grid[-2], nz=grid[-1] - 1, Ly=Ly)
    raise ContractViolation(f"unknown domain kind tag {kind}")


def write_checkpoint(path, fld, meta=None):
    """Write ``fld`` to ``path`` and ``meta`` (a flat dict) to ``path + '.meta'``."""
    path = Path(path)
    vals = np.ascontiguousarray(fld.values, dtype="<f8")
    dom = fld.domain
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", vals.ndim))
        fh.write(struct.pack(f"<{vals.ndim}I", *vals.shape))
        fh.write(struct.pack("<B", dom.kind_tag))
        fh.write(struct.pack(f"<{PARAM_COUNT[dom.kind_tag]}d", *dom.params()))
        fh.write(vals.tobytes(order="C"))
    if meta is not None:
        lines = [f"{k}: {v}" for k, v in meta.items()]
        Path(str(path) + ".meta").write_text("\n".join(lines) + "\n")
    return path


def read_checkpoint(path):
    """Return ``(field, meta)``; ``meta`` is {} when no sidecar exists."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise ContractViolation(f"{path}: bad magic {raw[:4]!r}")
    pos = 4
    (rank,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    dims = struct.unpack_from(f"<{rank}I", raw, pos)
    pos += 4 * rank
    (kind,) = struct.unpack_from("<B", raw, pos)
    pos += 1
    npar = PARAM_COUNT.get(kind)
    if npar is None:
        raise ContractViolation(f"{path}: unknown domain kind tag {kind}")
    params = struct.unpack_from(f"<{npar}d", raw, pos)
    pos += 8 * npar
    payload = np.frombuffer(raw, dtype="<f8", offset=pos)
    if payload.size != int(np.prod(dims)):
        raise ContractViolation(f"{path}: payload has {payload.size} values, expected {np.prod(dims)}")
    payload = payload.reshape(dims).astype(np.float64)
    dom = _domain_from(kind, params, dims)
    if len(dims) == dom.dim:
        fld = ScalarField(dom, payload)
    else:
        fld = VectorField(dom, payload)
    meta = {}
    side = Path(str(path) + ".meta")
    if side.exists():
        for line in side.read_text().splitlines():
            if ":" in line:
                k, v = line.split(":", 1)
                meta[k.strip()] = v.strip()
    return fld, meta
