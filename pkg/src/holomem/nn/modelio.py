"""Model persistence.

Model files start with the magic "HMNET1\\0" and a little-endian u32 layer
count, then one block per layer:

    u8 type tag, u32 ndesc, ndesc x u32 shape descriptors,
    u64 nvalues, nvalues x little-endian float64 values

Tags and their descriptors/values:

    1 conv     desc (out_channels, in_channels, kernel); values: filters
               (row-major out, in, k, k) then biases
    2 dense    desc (out_units, in_units); values: weights row-major then
               biases
    3 leaky relu   values: (slope,)
    4 relu
    5 max pool 2x2
    6 dropout  values: (rate,)
    7 flatten
    8 softmax

Adam state is excluded from model files; a companion ".optstate" file uses
the same container with a u64 step counter inserted after the layer count,
and per trainable layer stores, for each parameter in order, its first
moment then its second moment (so nvalues is twice the parameter count).
"""

from __future__ import annotations

import struct

import numpy as np

from .adam import Adam
from .layers import Conv2D, Dense, Dropout, Flatten, Layer, LeakyReLU, MaxPool2x2, ReLU, Softmax
from .network import Network

__all__ = ["save_model", "load_model", "save_optstate", "load_optstate", "model_summary"]

NET_MAGIC = b"HMNET1\x00"

TAG_CONV = 1
TAG_DENSE = 2
TAG_LEAKY_RELU = 3
TAG_RELU = 4
TAG_MAXPOOL = 5
TAG_DROPOUT = 6
TAG_FLATTEN = 7
TAG_SOFTMAX = 8

_TAG_NAMES = {
    TAG_CONV: "conv",
    TAG_DENSE: "dense",
    TAG_LEAKY_RELU: "leaky_relu",
    TAG_RELU: "relu",
    TAG_MAXPOOL: "max_pool_2x2",
    TAG_DROPOUT: "dropout",
    TAG_FLATTEN: "flatten",
    TAG_SOFTMAX: "softmax",
}


def _layer_block(layer: Layer) -> tuple[int, list[int], np.ndarray]:
    """(tag, descriptors, value vector) for one layer."""
    empty = np.zeros(0)
    if isinstance(layer, Conv2D):
        values = np.concatenate([layer.filters.ravel(), layer.biases])
        return TAG_CONV, [layer.out_channels, layer.in_channels, layer.k], values
    if isinstance(layer, Dense):
        values = np.concatenate([layer.weights.ravel(), layer.biases])
        return TAG_DENSE, list(layer.weights.shape), values
    if isinstance(layer, LeakyReLU):
        return TAG_LEAKY_RELU, [], np.array([layer.slope])
    if isinstance(layer, ReLU):
        return TAG_RELU, [], empty
    if isinstance(layer, MaxPool2x2):
        return TAG_MAXPOOL, [], empty
    if isinstance(layer, Dropout):
        return TAG_DROPOUT, [], np.array([layer.rate])
    if isinstance(layer, Flatten):
        return TAG_FLATTEN, [], empty
    if isinstance(layer, Softmax):
        return TAG_SOFTMAX, [], empty
    raise TypeError(f"cannot serialize layer of type {type(layer).__name__}")


def _write_block(fh, tag: int, desc: list[int], values: np.ndarray) -> None:
    fh.write(struct.pack("<BI", tag, len(desc)))
    if desc:
        fh.write(struct.pack(f"<{len(desc)}I", *desc))
    fh.write(struct.pack("<Q", values.size))
    fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def _read_block(fh) -> tuple[int, list[int], np.ndarray]:
    head = fh.read(5)
    if len(head) != 5:
        raise ValueError("truncated layer block header")
    tag, ndesc = struct.unpack("<BI", head)
    desc = list(struct.unpack(f"<{ndesc}I", fh.read(4 * ndesc))) if ndesc else []
    (nvalues,) = struct.unpack("<Q", fh.read(8))
    raw = fh.read(8 * nvalues)
    if len(raw) != 8 * nvalues:
        raise ValueError("truncated layer values")
    return tag, desc, np.frombuffer(raw, dtype="<f8").copy()


def save_model(network: Network, path) -> None:
    with open(path, "wb") as fh:
        fh.write(NET_MAGIC)
        fh.write(struct.pack("<I", len(network.layers)))
        for layer in network.layers:
            _write_block(fh, *_layer_block(layer))


def _rebuild_layer(tag: int, desc: list[int], values: np.ndarray) -> Layer:
    if tag == TAG_CONV:
        m, c, k = desc
        layer = Conv2D(c, m, k, rng=np.random.default_rng(0))
        nf = m * c * k * k
        if values.size != nf + m:
            raise ValueError(f"conv block has {values.size} values, expected {nf + m}")
        layer.filters = values[:nf].reshape(m, c, k, k).copy()
        layer.biases = values[nf:].copy()
        return layer
    if tag == TAG_DENSE:
        out_u, in_u = desc
        layer = Dense(in_u, out_u, rng=np.random.default_rng(0))
        nw = out_u * in_u
        if values.size != nw + out_u:
            raise ValueError(f"dense block has {values.size} values, expected {nw + out_u}")
        layer.weights = values[:nw].reshape(out_u, in_u).copy()
        layer.biases = values[nw:].copy()
        return layer
    if tag == TAG_LEAKY_RELU:
        return LeakyReLU(float(values[0]) if values.size else 0.01)
    if tag == TAG_RELU:
        return ReLU()
    if tag == TAG_MAXPOOL:
        return MaxPool2x2()
    if tag == TAG_DROPOUT:
        return Dropout(float(values[0]))
    if tag == TAG_FLATTEN:
        return Flatten()
    if tag == TAG_SOFTMAX:
        return Softmax()
    raise ValueError(f"unknown layer tag {tag}")


def load_model(path) -> Network:
    with open(path, "rb") as fh:
        magic = fh.read(len(NET_MAGIC))
        if magic != NET_MAGIC:
            raise ValueError(f"{path}: not a model file (bad magic {magic!r})")
        (count,) = struct.unpack("<I", fh.read(4))
        layers = [_rebuild_layer(*_read_block(fh)) for _ in range(count)]
    return Network(layers)


def save_optstate(network: Network, path) -> None:
    opt: Adam | None = getattr(network, "adam", None)
    if opt is None:
        raise ValueError("network has no optimizer state to save")
    with open(path, "wb") as fh:
        fh.write(NET_MAGIC)
        fh.write(struct.pack("<IQ", len(network.layers), opt.t))
        i = 0
        for layer in network.layers:
            tag, desc, _ = _layer_block(layer)
            nparams = len(layer.params())
            moments = []
            for _ in range(nparams):
                moments.append(opt.m[i].ravel())
                moments.append(opt.v[i].ravel())
                i += 1
            values = np.concatenate(moments) if moments else np.zeros(0)
            _write_block(fh, tag, desc, values)


def load_optstate(network: Network, path) -> None:
    """Restore Adam moments saved for an identical architecture."""
    with open(path, "rb") as fh:
        magic = fh.read(len(NET_MAGIC))
        if magic != NET_MAGIC:
            raise ValueError(f"{path}: not an optimizer-state file (bad magic {magic!r})")
        count, step = struct.unpack("<IQ", fh.read(12))
        if count != len(network.layers):
            raise ValueError(f"optimizer state has {count} layers, network has {len(network.layers)}")
        opt = Adam(network.params())
        opt.t = step
        i = 0
        for layer in network.layers:
            tag, desc, values = _read_block(fh)
            want_tag, want_desc, _ = _layer_block(layer)
            if tag != want_tag or desc != want_desc:
                raise ValueError("optimizer state does not match the network architecture")
            offset = 0
            for p in layer.params():
                opt.m[i] = values[offset:offset + p.size].reshape(p.shape).copy()
                offset += p.size
                opt.v[i] = values[offset:offset + p.size].reshape(p.shape).copy()
                offset += p.size
                i += 1
            if offset != values.size:
                raise ValueError("optimizer state block size mismatch")
    network.adam = opt


def model_summary(path) -> list[dict]:
    """Header-level dump of a model or optimizer-state file."""
    with open(path, "rb") as fh:
        magic = fh.read(len(NET_MAGIC))
        if magic != NET_MAGIC:
            raise ValueError(f"{path}: not a model file (bad magic {magic!r})")
        is_optstate = str(path).endswith(".optstate")
        if is_optstate:
            count, step = struct.unpack("<IQ", fh.read(12))
        else:
            (count,) = struct.unpack("<I", fh.read(4))
            step = None
        rows = []
        for _ in range(count):
            tag, desc, values = _read_block(fh)
            rows.append({"type": _TAG_NAMES.get(tag, f"tag{tag}"), "shape": desc, "values": int(values.size)})
    if step is not None:
        rows.insert(0, {"type": "adam_step", "shape": [], "values": int(step)})
    return rows
