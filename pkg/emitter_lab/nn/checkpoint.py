"""SEIW checkpoint files.

Layout (little-endian):

    4s   magic b'SEIW'
    u16  format version
    u16  config-hash length, then the ASCII config hash
    u32  layer-table length, then the layer table as canonical JSON
    u32  parameter tensor count
    per tensor: u8 ndim, ndim x u32 extents, f32 values in row-major order
"""
import json
import logging
import struct
from pathlib import Path

import numpy as np

from ..exceptions import DatasetFormatError, MissingPrerequisite
from .layers import LayerSpec
from .network import Network

logger = logging.getLogger(__name__)

MAGIC = b'SEIW'
FORMAT_VERSION = 1


def layer_table(net, extra=None):
    table = {
        'name': net.name,
        'input_shape': list(net.input_shape),
        'seed': net.seed,
        'layers': [spec.to_dict() for spec in net.specs],
    }
    if extra:
        table['extra'] = extra
    return table


def encode_network(net, config_hash='', extra=None):
    """Serialize ``net`` to SEIW bytes. Identical networks encode to identical bytes."""
    hash_bytes = config_hash.encode('ascii')
    table = json.dumps(layer_table(net, extra), sort_keys=True, separators=(',', ':')).encode('utf-8')
    parts = [
        struct.pack('<4sH', MAGIC, FORMAT_VERSION),
        struct.pack('<H', len(hash_bytes)), hash_bytes,
        struct.pack('<I', len(table)), table,
        struct.pack('<I', len(net.params)),
    ]
    for param in net.params:
        parts.append(struct.pack('<B', param.ndim))
        parts.append(struct.pack(f'<{param.ndim}I', *param.shape))
        parts.append(np.ascontiguousarray(param, dtype='<f4').tobytes())
    return b''.join(parts)


def save_network(net, path, config_hash='', extra=None):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_network(net, config_hash, extra))
    except OSError as exc:
        raise OSError(f"cannot write checkpoint {path}: {exc}") from exc
    logger.info(f"Saved {net.name} checkpoint to {path}")
    return path


class _Reader:

    def __init__(self, payload, path):
        self.payload = payload
        self.offset = 0
        self.path = path

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.payload):
            raise DatasetFormatError(f"{self.path}: truncated checkpoint at byte {self.offset}")
        values = struct.unpack_from(fmt, self.payload, self.offset)
        self.offset += size
        return values

    def raw(self, size):
        if self.offset + size > len(self.payload):
            raise DatasetFormatError(f"{self.path}: truncated checkpoint at byte {self.offset}")
        chunk = self.payload[self.offset:self.offset + size]
        self.offset += size
        return chunk


def decode_network(payload, path='<bytes>', dtype=np.float32):
    """Rebuild a network from SEIW bytes; returns ``(network, config_hash, extra)``."""
    reader = _Reader(payload, path)
    magic, version = reader.take('<4sH')
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: not a SEIW checkpoint (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported checkpoint version {version}")
    (hash_len,) = reader.take('<H')
    config_hash = reader.raw(hash_len).decode('ascii')
    (table_len,) = reader.take('<I')
    try:
        table = json.loads(reader.raw(table_len).decode('utf-8'))
        specs = [LayerSpec.from_dict(item) for item in table['layers']]
    except (ValueError, KeyError) as exc:
        raise DatasetFormatError(f"{path}: corrupt layer table: {exc}") from exc

    net = Network(specs, table['input_shape'], seed=table['seed'], dtype=dtype, name=table.get('name', 'network'))
    (count,) = reader.take('<I')
    if count != len(net.params):
        raise DatasetFormatError(f"{path}: {count} parameter tensors stored, layer table needs {len(net.params)}")
    weights = []
    for _ in range(count):
        (ndim,) = reader.take('<B')
        shape = reader.take(f'<{ndim}I') if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        weights.append(np.frombuffer(reader.raw(4 * size), dtype='<f4').reshape(shape))
    net.set_weights(weights)
    return net, config_hash, table.get('extra', {})


def load_network(path, dtype=np.float32, hint=None, expected_hash=None):
    """Load a checkpoint; with ``expected_hash``, refuse one written under another config."""
    path = Path(path)
    if not path.exists():
        raise MissingPrerequisite(f"checkpoint not found: {path}", hint=hint)
    net, config_hash, extra = decode_network(path.read_bytes(), path, dtype)
    if expected_hash and config_hash != expected_hash:
        raise MissingPrerequisite(
            f"{path} was trained under config {config_hash[:12] or '<none>'}, not {expected_hash[:12]}", hint=hint)
    return net, config_hash, extra
