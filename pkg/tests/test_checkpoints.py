import struct

import numpy as np
import pytest

from models.reranker import Reranker
from models.retriever import Retriever
from models.user_encoder import UserEncoder
from pipeline.checkpoints import (
    copy_module, load_checkpoint, load_reranker, load_retriever, load_user_encoder, save_checkpoint,
    save_reranker, save_retriever, save_user_encoder,
)
from utils.constants import RERANKER_MAGIC, RETRIEVER_MAGIC
from utils.errors import CheckpointError
from utils.helpers import make_rng


def assert_same_weights(first, second):
    a, b = first.state_dict(), second.state_dict()
    assert a.keys() == b.keys()
    for name in a:
        assert np.array_equal(a[name], b[name]), name


def test_generic_round_trip(tmp_path):
    path = str(tmp_path / "t.ckpt")
    tensors = {"w": np.arange(6.0).reshape(2, 3), "b": np.array([0.5]), "s": np.array(2.0)}
    save_checkpoint(path, RETRIEVER_MAGIC, 8, tensors)
    loaded = load_checkpoint(path, RETRIEVER_MAGIC, 8)
    assert list(loaded) == ["w", "b", "s"]
    assert np.array_equal(loaded["w"], tensors["w"])
    assert loaded["s"].shape == ()


def test_user_encoder_round_trip(tmp_path):
    path = str(tmp_path / "enc.ckpt")
    encoder = UserEncoder(16, 6, make_rng(3), heads=2, layers=2)
    save_user_encoder(path, encoder)
    assert_same_weights(encoder, load_user_encoder(path, 16, 6, 2, 2))


def test_retriever_keeps_alpha(tmp_path):
    path = str(tmp_path / "ret.ckpt")
    retriever = Retriever(16, make_rng(4), alpha=0.3)
    save_retriever(path, retriever)
    loaded = load_retriever(path, 16)
    assert loaded.alpha == pytest.approx(0.3)
    assert_same_weights(retriever, loaded)


def test_reranker_round_trip(tmp_path):
    path = str(tmp_path / "rr.ckpt")
    reranker = Reranker(16, make_rng(5))
    save_reranker(path, reranker)
    assert_same_weights(reranker, load_reranker(path, 16))


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_reranker(str(tmp_path / "nothing.ckpt"), 16)


def test_wrong_magic(tmp_path):
    path = str(tmp_path / "rr.ckpt")
    save_reranker(path, Reranker(16, make_rng(5)))
    with pytest.raises(CheckpointError):
        load_retriever(path, 16)


def test_wrong_dimension(tmp_path):
    path = str(tmp_path / "rr.ckpt")
    save_reranker(path, Reranker(16, make_rng(5)))
    with pytest.raises(CheckpointError):
        load_reranker(path, 32)


def test_wrong_version(tmp_path):
    path = tmp_path / "rr.ckpt"
    save_checkpoint(str(path), RERANKER_MAGIC, 4, {})
    payload = bytearray(path.read_bytes())
    struct.pack_into("<I", payload, 8, 99)
    path.write_bytes(bytes(payload))
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path), RERANKER_MAGIC, 4)


def test_truncated_file(tmp_path):
    path = tmp_path / "rr.ckpt"
    save_reranker(str(path), Reranker(16, make_rng(5)))
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(CheckpointError):
        load_reranker(str(path), 16)


def test_architecture_mismatch(tmp_path):
    path = str(tmp_path / "enc.ckpt")
    save_user_encoder(path, UserEncoder(16, 6, make_rng(3), heads=2, layers=2))
    with pytest.raises(CheckpointError):
        load_user_encoder(path, 16, 6, 2, 1)
    with pytest.raises(CheckpointError):
        load_user_encoder(path, 16, 8, 2, 2)


def test_copy_module_is_independent():
    source = Retriever(16, make_rng(1))
    clone = copy_module(source, Retriever(16, make_rng(2)))
    assert_same_weights(source, clone)
    next(iter(dict(clone.named_parameters()).values())).data += 1.0
    with pytest.raises(AssertionError):
        assert_same_weights(source, clone)
