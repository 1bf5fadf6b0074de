"""Binary checkpoint for an ensemble model plus its replay buffer.

Layout (all little-endian)::

    b"AUIM"                      magic
    u32 version
    u32 B, u32 n_sizes, u32 * n_sizes layer sizes
    u32 n_angles, u32 * n_angles angle state indices
    f64 logvar_min, f64 logvar_max
    f32 * d_in  input mean,  f32 * d_in  input std
    f32 * d_s   target mean, f32 * d_s   target std
    for each member, for each layer: f32 W (n_in x n_out, row-major), f32 b (n_out)
    u64 count, u32 d_s, u32 d_a
    f32 * count * (2 d_s + d_a + 1) transition rows [s, a, s_next, reward]
"""

import struct
from pathlib import Path

import numpy as np

from .core import ReplayBuffer
from .dynamics import EnsembleModel, Normalizer
from .errors import CorruptCheckpointError, InvalidArgumentError, MissingArtifactError

MAGIC = b"AUIM"
VERSION = 1
F32 = np.dtype("<f4")


def _f32(v):
    return np.ascontiguousarray(v, dtype=F32).tobytes()


def dumps(model, buf):
    sizes = model.layer_sizes
    parts = [
        MAGIC,
        struct.pack("<III", VERSION, model.n_members, len(sizes)),
        struct.pack(f"<{len(sizes)}I", *sizes),
        struct.pack("<I", len(model.angle_dims)),
        struct.pack(f"<{len(model.angle_dims)}I", *model.angle_dims),
        struct.pack("<dd", model.logvar_min, model.logvar_max),
    ]
    norm = model.norm
    parts += [_f32(norm.in_mean), _f32(norm.in_std), _f32(norm.out_mean), _f32(norm.out_std)]
    for b in range(model.n_members):
        for W, bias in model.params:
            parts += [_f32(W[b]), _f32(bias[b].reshape(-1))]
    d_s = buf.d_s if buf.d_s is not None else model.d_s
    d_a = buf.d_a if buf.d_a is not None else model.d_a
    parts.append(struct.pack("<QII", len(buf), d_s, d_a))
    parts.append(_f32(buf.rows()))
    return b"".join(parts)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CorruptCheckpointError("checkpoint is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, *shape):
        n = int(np.prod(shape))
        return np.frombuffer(self.take(4 * n), dtype=F32).astype(np.float32).reshape(shape)


def loads(data):
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CorruptCheckpointError("bad magic string")
    version, n_members, n_sizes = r.unpack("<III")
    if version != VERSION:
        raise CorruptCheckpointError(f"unsupported checkpoint version {version}")
    if n_members < 2 or not 2 <= n_sizes <= 64:
        raise CorruptCheckpointError("implausible model header")
    sizes = r.unpack(f"<{n_sizes}I")
    (n_angles,) = r.unpack("<I")
    if n_angles > sizes[-1]:
        raise CorruptCheckpointError("implausible angle count")
    angle_dims = r.unpack(f"<{n_angles}I")
    lo, hi = r.unpack("<dd")
    d_in, d_out = sizes[0], sizes[-1]
    if d_out % 2:
        raise CorruptCheckpointError("output layer must hold mean and log-variance")
    d_s = d_out // 2
    d_a = d_in - d_s - n_angles
    if d_a < 1 or any(i >= d_s for i in angle_dims):
        raise CorruptCheckpointError("layer sizes disagree with the state layout")
    norm = Normalizer(r.floats(d_in), r.floats(d_in), r.floats(d_s), r.floats(d_s))
    per_member = []
    for _ in range(n_members):
        per_member.append([
            (r.floats(n_in, n_out), r.floats(1, n_out))
            for n_in, n_out in zip(sizes[:-1], sizes[1:])
        ])
    params = [
        (np.stack([m[i][0] for m in per_member]), np.stack([m[i][1] for m in per_member]))
        for i in range(len(sizes) - 1)
    ]
    try:
        model = EnsembleModel(
            d_s, d_a, n_members, logvar_min=float(lo), logvar_max=float(hi),
            params=params, norm=norm, angle_dims=angle_dims,
        )
    except InvalidArgumentError as exc:
        raise CorruptCheckpointError(str(exc)) from None
    count, buf_ds, buf_da = r.unpack("<QII")
    if buf_ds != d_s or buf_da != d_a:
        raise CorruptCheckpointError("buffer dimensions disagree with the model")
    buf = ReplayBuffer(buf_ds, buf_da)
    rows = r.floats(count, 2 * buf_ds + buf_da + 1)
    if r.pos != len(data):
        raise CorruptCheckpointError("trailing bytes after transition block")
    for row in rows:
        buf.push_row(row)
    return model, buf


def save_checkpoint(model, buf, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(model, buf))


def load_checkpoint(path):
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"no checkpoint at {path}")
    return loads(path.read_bytes())
