import struct
from collections import OrderedDict

import numpy as np
import pytest
import torch

from anchorpipe.checkpoint import (MAGIC, Checkpoint, decode_checkpoint, encode_checkpoint, load_checkpoint,
                                   load_module_tensors, load_optimizer_tensors, module_tensors,
                                   optimizer_tensors, restore_rng, rng_tensor, save_checkpoint,
                                   tensor_record_size)
from anchorpipe.errors import DataError, FormatError
from anchorpipe.seq2au import Seq2AU, init_params, make_optimizer


def _ckpt():
    rng = np.random.default_rng(0)
    tensors = OrderedDict([
        ("model.w", rng.standard_normal((3, 4)).astype(np.float32)),
        ("model.b", rng.standard_normal(4).astype(np.float32)),
        ("scalar", np.array(2.5, dtype=np.float32)),
        ("empty", np.zeros((0, 3), dtype=np.float32)),
    ])
    return Checkpoint("seq2au", 17, {"seed": 3, "image_hw": [16, 16]}, tensors, {"vocab": ["a", "b"]})


def test_round_trip_is_bitwise():
    ck = _ckpt()
    back = decode_checkpoint(encode_checkpoint(ck))
    assert (back.kind, back.step, back.config, back.extra) == (ck.kind, ck.step, ck.config, ck.extra)
    assert list(back.tensors) == list(ck.tensors)
    for name, arr in ck.tensors.items():
        assert back.tensors[name].shape == arr.shape
        assert back.tensors[name].tobytes() == arr.tobytes()
    assert encode_checkpoint(back) == encode_checkpoint(ck)


def test_file_size_matches_record_arithmetic():
    ck = _ckpt()
    data = encode_checkpoint(ck)
    body = 12 + sum(tensor_record_size(n, a.shape) for n, a in ck.tensors.items())
    (echo_len,) = struct.unpack_from("<I", data, body)
    assert len(data) == body + 4 + echo_len


def test_scalar_is_stored_with_rank_zero():
    ck = Checkpoint("gan", 0, {}, OrderedDict([("s", np.array(2.5, dtype=np.float32))]))
    data = encode_checkpoint(ck)
    assert data[12:20] == struct.pack("<H", 1) + b"s" + b"\x00" + struct.pack("<f", 2.5)
    assert tensor_record_size("s", ()) == 2 + 1 + 1 + 4
    back = decode_checkpoint(data).tensors["s"]
    assert back.shape == () and float(back) == 2.5


def test_header_fields():
    data = encode_checkpoint(_ckpt())
    magic, version, count = struct.unpack_from("<4sII", data, 0)
    assert (magic, version, count) == (MAGIC, 1, 4)


def _patched(data: bytes, offset: int, fmt: str, value) -> bytes:
    buf = bytearray(data)
    struct.pack_into(fmt, buf, offset, value)
    return bytes(buf)


@pytest.mark.parametrize("mutate", [
    lambda d: b"XNCH" + d[4:],
    lambda d: _patched(d, 4, "<I", 2),
    lambda d: _patched(d, 8, "<I", 5),
    lambda d: d[:-1],
    lambda d: d[:40],
    lambda d: d + b"\x00",
], ids=["magic", "version", "count", "truncated-echo", "truncated-tensor", "trailing"])
def test_corruption_is_a_format_error(mutate):
    with pytest.raises(FormatError):
        decode_checkpoint(mutate(encode_checkpoint(_ckpt())))


def test_save_and_load_file(tmp_path):
    path = save_checkpoint(_ckpt(), tmp_path / "sub" / "m.anch")
    assert not path.with_suffix(".anch.tmp").exists()
    assert load_checkpoint(path, "seq2au").step == 17
    with pytest.raises(FormatError):
        load_checkpoint(path, "gan")
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "none.anch")


def _trained_model():
    model = init_params(Seq2AU(embed_dim=4, hidden_size=6), seed=1)
    opt = make_optimizer(model, 1e-2, (0.9, 0.999))
    x = torch.randn(2, 3, 4, generator=torch.Generator().manual_seed(0))
    h, _ = model.encode(x)
    h.pow(2).sum().backward()
    opt.step()
    return model, opt


def test_module_and_optimizer_state_survive_the_container():
    model, opt = _trained_model()
    tensors = module_tensors(model, "model")
    tensors.update(optimizer_tensors(opt, model, "model"))
    back = decode_checkpoint(encode_checkpoint(Checkpoint("seq2au", 1, {}, tensors)))

    fresh = init_params(Seq2AU(embed_dim=4, hidden_size=6), seed=99)
    fresh_opt = make_optimizer(fresh, 1e-2, (0.9, 0.999))
    load_module_tensors(fresh, back.section("model"))
    load_optimizer_tensors(fresh_opt, fresh, back.tensors, "model")
    for a, b in zip(model.state_dict().values(), fresh.state_dict().values()):
        assert torch.equal(a, b)
    for p, q in zip(model.parameters(), fresh.parameters()):
        if p not in opt.state:
            assert q not in fresh_opt.state
            continue
        for slot in ("exp_avg", "exp_avg_sq"):
            assert torch.equal(opt.state[p][slot], fresh_opt.state[q][slot])
        assert float(fresh_opt.state[q]["step"]) == 1.0
        assert fresh_opt.state[q]["step"].shape == opt.state[p]["step"].shape == ()


def test_module_loading_is_strict():
    model, _ = _trained_model()
    tensors = dict(module_tensors(model, "model"))
    other = Seq2AU(embed_dim=4, hidden_size=5)
    with pytest.raises(FormatError):
        load_module_tensors(other, {k[len("model."):]: v for k, v in tensors.items()})
    partial = {k[len("model."):]: v for k, v in list(tensors.items())[1:]}
    with pytest.raises(FormatError):
        load_module_tensors(model, partial)


def test_rng_state_round_trip():
    g = torch.Generator().manual_seed(5)
    torch.rand(7, generator=g)
    saved = rng_tensor(g)
    expected = torch.rand(4, generator=g)
    restored = restore_rng(torch.Generator(), saved)
    assert torch.equal(torch.rand(4, generator=restored), expected)
