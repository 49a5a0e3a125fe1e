"""The ``.fld`` field dump format.

One line of JSON header terminated by ``\\n``, then raw little-endian float64
values with real and imaginary parts interleaved, sites in row-major order and
components innermost (form component, then matrix row, then matrix column).
"""

import json

import numpy as np

from .lattice import FormField, LatticeDomain

MAGIC = "higgslab-fld"


def _header(domain, values, bidegree, fiber):
    return {
        "format": MAGIC,
        "version": 1,
        "domain": domain.to_dict(),
        "shape": list(domain.shape),
        "spacing": list(domain.spacing),
        "kind": domain.kind,
        "bidegree": list(bidegree),
        "ncomp": int(values.shape[domain.ndim]) if bidegree is not None else 1,
        "rank": int(fiber[0]) if fiber else 1,
        "fiber": "endo" if fiber else "scalar",
        "endianness": "little",
        "dtype": "float64-re-im-interleaved",
    }


def write_fld(path, domain, field):
    """Write a :class:`FormField` or a per-site matrix array ``grid + (r, r)``."""
    if isinstance(field, FormField):
        values, bidegree, fiber = field.values, field.bidegree, field.fiber
    else:
        # a bare per-site matrix field (e.g. a metric) is a (0,0) End form
        values = np.asarray(field)[..., None, :, :]
        bidegree, fiber = (0, 0), values.shape[-2:]
    if values.shape[: domain.ndim] != domain.shape:
        raise ValueError("field does not match domain shape")
    header = _header(domain, values, bidegree, fiber)
    data = np.ascontiguousarray(values, dtype="<c16").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(data)


def read_fld(path):
    """Return ``(domain, FormField, header)``."""
    with open(path, "rb") as fh:
        head = fh.readline()
        raw = fh.read()
    header = json.loads(head.decode("utf-8"))
    if header.get("format") != MAGIC:
        raise ValueError(f"{path}: not a field dump")
    if header.get("endianness") != "little":
        raise ValueError(f"{path}: unsupported endianness")
    domain = LatticeDomain.from_dict(header["domain"])
    fiber = (header["rank"], header["rank"]) if header["fiber"] == "endo" else ()
    shape = domain.shape + (header["ncomp"],) + fiber
    values = np.frombuffer(raw, dtype="<c16")
    if values.size != int(np.prod(shape)):
        raise ValueError(f"{path}: payload size does not match header")
    values = values.reshape(shape).astype(complex)
    return domain, FormField(values, tuple(header["bidegree"]), domain.n), header


def read_matrix_field(path):
    """Read a dump written from a bare ``grid + (r, r)`` array."""
    domain, f, header = read_fld(path)
    return domain, f.values[..., 0, :, :], header
