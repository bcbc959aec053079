"""Binary checkpoint container.

Layout (all integers little-endian):
    b"ANCH" | u32 version | u32 tensor count
    per tensor: u16 name length | UTF-8 name | u8 rank | u32 dims[rank] | f32 payload
    u32 echo length | UTF-8 YAML echo {kind, step, config, extra}

Optimizer moments are stored as ordinary tensors named ``optim.<param>.<slot>``;
the torch RNG state is stored as ``rng.torch`` (one byte per float).
"""
from __future__ import annotations
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import numpy as np
import torch
import torch.nn as nn
import yaml

from .errors import DataError, FormatError

MAGIC = b"ANCH"
VERSION = 1
_HEADER = struct.Struct("<4sII")
_NAME_LEN = struct.Struct("<H")
_RANK = struct.Struct("<B")
_U32 = struct.Struct("<I")

OPTIM_PREFIX = "optim."
RNG_KEY = "rng.torch"


@dataclass(eq=False)
class Checkpoint:
    kind: str
    step: int
    config: Dict[str, Any]
    tensors: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    extra: Dict[str, Any] = field(default_factory=dict)

    def section(self, prefix: str) -> Dict[str, np.ndarray]:
        """Tensors under ``prefix.`` with the prefix stripped."""
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.tensors.items() if k.startswith(p)}


def tensor_record_size(name: str, shape) -> int:
    return _NAME_LEN.size + len(name.encode("utf-8")) + _RANK.size + _U32.size * len(shape) + 4 * int(np.prod(shape, dtype=np.int64))


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, len(ckpt.tensors))]
    for name, arr in ckpt.tensors.items():
        raw = name.encode("utf-8")
        a = np.require(np.asarray(arr, dtype="<f4"), requirements="C")
        if len(raw) > 0xFFFF or a.ndim > 0xFF:
            raise FormatError(f"tensor {name!r} cannot be stored (name or rank too large)")
        parts.append(_NAME_LEN.pack(len(raw)) + raw + _RANK.pack(a.ndim))
        parts.append(b"".join(_U32.pack(d) for d in a.shape))
        parts.append(a.tobytes())
    echo = yaml.safe_dump({"kind": ckpt.kind, "step": int(ckpt.step), "config": ckpt.config,
                           "extra": ckpt.extra}, sort_keys=False).encode("utf-8")
    parts.append(_U32.pack(len(echo)) + echo)
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data, self.pos, self.source = data, 0, source

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.source}: truncated while reading {what} at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, s: struct.Struct, what: str):
        return s.unpack(self.take(s.size, what))


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> Checkpoint:
    r = _Reader(data, source)
    magic, version, count = r.unpack(_HEADER, "header")
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported checkpoint version {version}")
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for i in range(count):
        (n,) = r.unpack(_NAME_LEN, f"name length of tensor {i}")
        try:
            name = r.take(n, f"name of tensor {i}").decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"{source}: tensor {i} name is not UTF-8: {e}")
        (rank,) = r.unpack(_RANK, f"rank of {name}")
        shape = tuple(r.unpack(_U32, f"dims of {name}")[0] for _ in range(rank))
        numel = int(np.prod(shape, dtype=np.int64))
        payload = r.take(4 * numel, f"payload of {name}")
        if name in tensors:
            raise FormatError(f"{source}: duplicate tensor name {name!r}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    (echo_len,) = r.unpack(_U32, "config echo length")
    try:
        echo = yaml.safe_load(r.take(echo_len, "config echo").decode("utf-8")) or {}
    except (UnicodeDecodeError, yaml.YAMLError) as e:
        raise FormatError(f"{source}: config echo unreadable: {e}")
    if r.pos != len(data):
        raise FormatError(f"{source}: {len(data) - r.pos} trailing byte(s) after config echo")
    if not isinstance(echo, dict) or "kind" not in echo:
        raise FormatError(f"{source}: config echo lacks 'kind'")
    return Checkpoint(kind=str(echo["kind"]), step=int(echo.get("step", 0)), config=echo.get("config") or {},
                      tensors=tensors, extra=echo.get("extra") or {})


def save_checkpoint(ckpt: Checkpoint, path: Path) -> Path:
    path = Path(path)
    data = encode_checkpoint(ckpt)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(data)
        tmp.replace(path)
    except OSError as e:
        raise DataError(f"cannot write checkpoint {path}: {e}", code="E480")
    return path


def load_checkpoint(path: Path, kind: Optional[str] = None) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}", code="E401")
    ckpt = decode_checkpoint(path.read_bytes(), str(path))
    if kind is not None and ckpt.kind != kind:
        raise FormatError(f"{path}: checkpoint holds a {ckpt.kind!r} model, expected {kind!r}")
    return ckpt


# ---------- torch state <-> named tensors ----------

def module_tensors(module: nn.Module, prefix: str) -> "OrderedDict[str, np.ndarray]":
    out: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, t in module.state_dict().items():
        out[f"{prefix}.{name}"] = t.detach().to(torch.float32).cpu().numpy()
    return out


def load_module_tensors(module: nn.Module, tensors: Mapping[str, np.ndarray], source: str = "checkpoint") -> None:
    """Strict: every state entry must be present with the same shape, nothing extra."""
    state = module.state_dict()
    missing = sorted(set(state) - set(tensors))
    unexpected = sorted(set(tensors) - set(state))
    if missing or unexpected:
        raise FormatError(f"{source}: tensor mismatch, missing={missing[:5]} unexpected={unexpected[:5]}")
    new_state = {}
    for name, ref in state.items():
        arr = tensors[name]
        if tuple(arr.shape) != tuple(ref.shape):
            raise FormatError(f"{source}: {name} has shape {tuple(arr.shape)}, model expects {tuple(ref.shape)}")
        new_state[name] = torch.as_tensor(np.array(arr), dtype=ref.dtype)
    module.load_state_dict(new_state)


def optimizer_tensors(opt: torch.optim.Optimizer, module: nn.Module, prefix: str) -> "OrderedDict[str, np.ndarray]":
    names = {id(p): n for n, p in module.named_parameters()}
    out: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for p, st in opt.state.items():
        for slot, value in st.items():
            t = value if torch.is_tensor(value) else torch.tensor(float(value))
            out[f"{OPTIM_PREFIX}{prefix}.{names[id(p)]}.{slot}"] = t.detach().to(torch.float32).cpu().numpy()
    return out


def load_optimizer_tensors(opt: torch.optim.Optimizer, module: nn.Module, tensors: Mapping[str, np.ndarray],
                           prefix: str) -> None:
    head = f"{OPTIM_PREFIX}{prefix}."
    by_param: Dict[str, Dict[str, np.ndarray]] = {}
    for key, arr in tensors.items():
        if key.startswith(head):
            pname, slot = key[len(head):].rsplit(".", 1)
            by_param.setdefault(pname, {})[slot] = arr
    params = dict(module.named_parameters())
    unknown = sorted(set(by_param) - set(params))
    if unknown:
        raise FormatError(f"optimizer state for unknown parameter(s): {unknown[:5]}")
    opt.state.clear()
    for pname, slots in by_param.items():
        p = params[pname]
        st = {}
        for slot, arr in slots.items():
            t = torch.as_tensor(np.array(arr))
            st[slot] = t.to(torch.float32) if slot == "step" else t.to(p.dtype).reshape(p.shape)
        opt.state[p] = st


def rng_tensor(generator: torch.Generator) -> np.ndarray:
    return generator.get_state().numpy().astype(np.float32)


def restore_rng(generator: torch.Generator, arr: np.ndarray) -> torch.Generator:
    generator.set_state(torch.as_tensor(np.asarray(arr).astype(np.uint8)))
    return generator
