"""
Versioned binary checkpoint container.

Layout: magic (8 bytes), format version (u32), robot model sha256 (32 bytes), header
length (u64), JSON header, then the raw little-endian arrays the header describes
by name, dtype, shape and offset. Writes go to a temporary file replaced atomically.
"""

import json
import os
import struct
from collections import OrderedDict

import numpy as np
import torch

from zml_util import Util

zlog = Util.get_logger(module=__name__)

MAGIC = b"ZMLCKPT\0"
FORMAT_VERSION = 1
PREAMBLE = struct.Struct("<8sI32sQ")


class CheckpointError(Exception):
    pass


class PolicyCheckpoint(object):
    """
    Named arrays plus a JSON-serializable `meta` mapping (network shapes, curriculum
    levels, RNG states, resolved config).
    """

    def __init__(self, model_hash, iteration=0, arrays=None, meta=None):
        self.model_hash = model_hash
        self.iteration = int(iteration)
        self.arrays = OrderedDict(arrays or {})
        self.meta = dict(meta or {})

    def prefixed(self, prefix):
        return OrderedDict(
            (name[len(prefix) :], array)
            for name, array in self.arrays.items()
            if name.startswith(prefix)
        )


def save_checkpoint(path, checkpoint):
    entries = []
    offset = 0
    blobs = []
    for name, array in checkpoint.arrays.items():
        array = np.ascontiguousarray(array)
        data = array.astype(array.dtype.newbyteorder("<"), copy=False).tobytes()
        entries.append(
            {
                "name": name,
                "dtype": array.dtype.newbyteorder("<").str,
                "shape": list(array.shape),
                "offset": offset,
                "nbytes": len(data),
            }
        )
        blobs.append(data)
        offset += len(data)

    header = json.dumps(
        {"iteration": checkpoint.iteration, "arrays": entries, "meta": checkpoint.meta},
        sort_keys=True,
    ).encode("utf-8")
    try:
        digest = bytes.fromhex(checkpoint.model_hash)
    except ValueError:
        raise CheckpointError("Model hash is not a hex digest: {}".format(checkpoint.model_hash))
    if len(digest) != 32:
        raise CheckpointError("Model hash must be a sha256 digest")

    Util.ensure_directory(os.path.dirname(os.path.abspath(path)))
    temporary = path + ".tmp"
    try:
        with open(temporary, "wb") as f:
            f.write(PREAMBLE.pack(MAGIC, FORMAT_VERSION, digest, len(header)))
            f.write(header)
            for data in blobs:
                f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(temporary, path)
    except OSError:
        zlog.error("Error writing checkpoint '{}'".format(path))
        raise
    zlog.info("Wrote checkpoint {} (iteration {})".format(path, checkpoint.iteration))
    return path


def load_checkpoint(path, model_hash=None):
    """
    Read a checkpoint. With `model_hash`, refuse checkpoints trained on another model.
    """
    try:
        with open(path, "rb") as f:
            content = f.read()
    except OSError as e:
        raise CheckpointError("Cannot read checkpoint '{}': {}".format(path, e))

    if len(content) < PREAMBLE.size:
        raise CheckpointError("Checkpoint '{}' is truncated".format(path))
    magic, version, digest, header_length = PREAMBLE.unpack_from(content, 0)
    if magic != MAGIC:
        raise CheckpointError("'{}' is not a checkpoint file".format(path))
    if version != FORMAT_VERSION:
        raise CheckpointError(
            "Checkpoint format version {} not supported (expected {})".format(
                version, FORMAT_VERSION
            )
        )
    stored_hash = digest.hex()
    if model_hash is not None and stored_hash != model_hash:
        raise CheckpointError(
            "Checkpoint '{}' was trained on model {} but the configured model is {}".format(
                path, stored_hash[:12], model_hash[:12]
            )
        )

    start = PREAMBLE.size
    try:
        header = json.loads(content[start : start + header_length].decode("utf-8"))
    except ValueError:
        raise CheckpointError("Checkpoint '{}' has a corrupt header".format(path))
    blob = content[start + header_length :]

    arrays = OrderedDict()
    for entry in header["arrays"]:
        end = entry["offset"] + entry["nbytes"]
        if end > len(blob):
            raise CheckpointError("Checkpoint '{}' is truncated".format(path))
        dtype = np.dtype(entry["dtype"])
        array = np.frombuffer(blob[entry["offset"] : end], dtype=dtype).copy()
        arrays[entry["name"]] = array.reshape(entry["shape"])
    return PolicyCheckpoint(stored_hash, header["iteration"], arrays, header["meta"])


def capture(net, model_hash, iteration=0, meta=None, optimizer=None, generator=None):
    """
    Snapshot network (with normalizers), optimizer and torch generator state.
    """
    arrays = OrderedDict()
    for name, tensor in net.state_dict().items():
        arrays["net." + name] = tensor.detach().cpu().numpy()
    meta = dict(meta or {})
    if optimizer is not None:
        state = optimizer.state_dict()
        scalars = {}
        for index, values in state["state"].items():
            for key, value in values.items():
                name = "{}.{}".format(index, key)
                if torch.is_tensor(value):
                    arrays["optimizer." + name] = value.detach().cpu().numpy()
                else:
                    scalars[name] = value
        meta["optimizer"] = {"param_groups": state["param_groups"], "scalars": scalars}
    if generator is not None:
        arrays["rng.torch"] = generator.get_state().numpy()
    return PolicyCheckpoint(model_hash, iteration, arrays, meta)


def restore_network(net, checkpoint):
    state = OrderedDict(
        (name, torch.as_tensor(array)) for name, array in checkpoint.prefixed("net.").items()
    )
    try:
        net.load_state_dict(state)
    except RuntimeError as e:
        raise CheckpointError("Checkpoint does not match the network: {}".format(e))
    return net


def restore_optimizer(optimizer, checkpoint):
    saved = checkpoint.meta.get("optimizer")
    if saved is None:
        return optimizer
    state = {}
    for name, array in checkpoint.prefixed("optimizer.").items():
        index, key = name.split(".", 1)
        state.setdefault(int(index), {})[key] = torch.as_tensor(array)
    for name, value in saved["scalars"].items():
        index, key = name.split(".", 1)
        state.setdefault(int(index), {})[key] = value
    optimizer.load_state_dict({"state": state, "param_groups": saved["param_groups"]})
    return optimizer


def restore_generator(generator, checkpoint):
    if "rng.torch" in checkpoint.arrays:
        generator.set_state(torch.as_tensor(checkpoint.arrays["rng.torch"], dtype=torch.uint8))
    return generator
