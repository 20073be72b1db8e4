"""Binary checkpoint format for :class:`~mmwave_dl.nn.network.Network`.

Layout (all integers little-endian)::

    8 bytes   magic  b"MMWDLNN\\x00"
    uint32    format version (currently 1)
    uint64    header length in bytes
    header    UTF-8 JSON: {"input_shape", "epoch", "layers": [spec dicts],
              "arrays": [{"layer", "name", "role", "shape"}, ...], "meta"}
    payload   every array listed in "arrays", in order, as '<f8'

Arrays are the trainable parameters of each layer followed by its
batch-norm running statistics, layer by layer in declaration order.
"""

import json
import struct

import numpy as np

from .layers import LayerSpec
from .network import Network

__all__ = ["CheckpointError", "save_network", "load_network", "FORMAT_VERSION"]

MAGIC = b"MMWDLNN\x00"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _arrays(net):
    out = []
    for i, layer in enumerate(net.layers):
        for name, arr in layer.params.items():
            out.append((i, name, "param", arr))
        for name, arr in layer.buffers.items():
            out.append((i, name, "buffer", arr))
    return out


def save_network(net, path, meta=None):
    arrays = _arrays(net)
    header = {
        "input_shape": list(net.input_shape),
        "epoch": int(net.epoch),
        "layers": [s.to_dict() for s in net.specs],
        "arrays": [{"layer": i, "name": n, "role": r, "shape": list(a.shape)}
                   for i, n, r, a in arrays],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for *_, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_header(fh):
    magic = fh.read(len(MAGIC))
    if magic != MAGIC:
        raise CheckpointError("not a network checkpoint (bad magic)")
    fixed = fh.read(12)
    if len(fixed) != 12:
        raise CheckpointError("truncated checkpoint header")
    version, n = struct.unpack("<IQ", fixed)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    blob = fh.read(n)
    if len(blob) != n:
        raise CheckpointError("truncated checkpoint header")
    try:
        return json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupted checkpoint header: {exc}") from None


def load_network(path):
    """Rebuild a network saved by :func:`save_network`.

    Returns
    -------
    net : Network
    meta : dict
    """
    with open(path, "rb") as fh:
        header = read_header(fh)
        try:
            specs = [LayerSpec.from_dict(d) for d in header["layers"]]
            net = Network(specs, header["input_shape"], np.random.default_rng(0))
            entries = header["arrays"]
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"corrupted checkpoint header: {exc}") from None
        expected = _arrays(net)
        if len(expected) != len(entries):
            raise CheckpointError("array table does not match layer specs")
        for (i, name, role, arr), entry in zip(expected, entries):
            if (entry["layer"], entry["name"], entry["role"]) != (i, name, role) \
                    or tuple(entry["shape"]) != arr.shape:
                raise CheckpointError(f"array table mismatch at layer {i} {name!r}")
            nbytes = 8 * arr.size
            raw = fh.read(nbytes)
            if len(raw) != nbytes:
                raise CheckpointError("truncated checkpoint payload")
            arr[...] = np.frombuffer(raw, dtype="<f8").reshape(arr.shape)
        if fh.read(1):
            raise CheckpointError("trailing bytes after checkpoint payload")
    net.epoch = int(header.get("epoch", 0))
    return net.eval(), header.get("meta", {})
