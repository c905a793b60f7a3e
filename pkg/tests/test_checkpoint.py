import os
import struct
from tempfile import TemporaryDirectory
from unittest import mock

import numpy as np
import pytest
import torch

from zml_learn import Checkpoint, Networks

MODEL_HASH = "ab" * 32
OTHER_HASH = "cd" * 32


def small_net(seed=0):
    torch.manual_seed(seed)
    return Networks.ActorCritic(5, 7, 2, 3, (8,), (8,), 0.7)


def sample_checkpoint():
    return Checkpoint.PolicyCheckpoint(
        MODEL_HASH,
        12,
        {
            "weights": np.arange(6, dtype=np.float32).reshape(2, 3),
            "steps": np.array([1, 2, 3], dtype=np.int64),
            "scalar": np.array(2.5),
        },
        {"curriculum": {"levels": [0, 3]}, "note": "resume"},
    )


def test_save_and_load():
    with TemporaryDirectory() as tmpdir:
        path = Checkpoint.save_checkpoint(os.path.join(tmpdir, "run.ckpt"), sample_checkpoint())
        assert not os.path.exists(path + ".tmp")
        loaded = Checkpoint.load_checkpoint(path, MODEL_HASH)
    assert loaded.model_hash == MODEL_HASH
    assert loaded.iteration == 12
    assert list(loaded.arrays) == ["weights", "steps", "scalar"]
    np.testing.assert_array_equal(loaded.arrays["weights"], np.arange(6).reshape(2, 3))
    assert loaded.arrays["weights"].dtype == np.float32
    assert loaded.arrays["steps"].dtype == np.int64
    assert loaded.arrays["scalar"].shape == ()
    assert loaded.meta == {"curriculum": {"levels": [0, 3]}, "note": "resume"}


def test_save_creates_the_directory():
    with TemporaryDirectory() as tmpdir:
        path = os.path.join(tmpdir, "checkpoints", "final.ckpt")
        Checkpoint.save_checkpoint(path, sample_checkpoint())
        assert os.path.isfile(path)


def test_load_without_hash_accepts_any_model():
    with TemporaryDirectory() as tmpdir:
        path = Checkpoint.save_checkpoint(os.path.join(tmpdir, "run.ckpt"), sample_checkpoint())
        assert Checkpoint.load_checkpoint(path).model_hash == MODEL_HASH


def test_model_hash_mismatch():
    with TemporaryDirectory() as tmpdir:
        path = Checkpoint.save_checkpoint(os.path.join(tmpdir, "run.ckpt"), sample_checkpoint())
        with pytest.raises(Checkpoint.CheckpointError, match="was trained on model abababababab"):
            Checkpoint.load_checkpoint(path, OTHER_HASH)


@pytest.mark.parametrize("model_hash", ["not-hex", "abcd"])
def test_invalid_model_hash(model_hash):
    checkpoint = sample_checkpoint()
    checkpoint.model_hash = model_hash
    with TemporaryDirectory() as tmpdir:
        with pytest.raises(Checkpoint.CheckpointError, match="Model hash"):
            Checkpoint.save_checkpoint(os.path.join(tmpdir, "run.ckpt"), checkpoint)


def _rewrite(path, transform):
    with open(path, "rb") as f:
        content = f.read()
    with open(path, "wb") as f:
        f.write(transform(content))


@pytest.mark.parametrize(
    "transform,message",
    [
        (lambda c: b"NOTACKPT" + c[8:], "is not a checkpoint file"),
        (lambda c: c[:8] + struct.pack("<I", 99) + c[12:], "format version 99 not supported"),
        (lambda c: c[:20], "is truncated"),
        (lambda c: c[:-4], "is truncated"),
    ],
)
def test_corrupt_files(transform, message):
    with TemporaryDirectory() as tmpdir:
        path = Checkpoint.save_checkpoint(os.path.join(tmpdir, "run.ckpt"), sample_checkpoint())
        _rewrite(path, transform)
        with pytest.raises(Checkpoint.CheckpointError, match=message):
            Checkpoint.load_checkpoint(path)


def test_missing_file():
    with pytest.raises(Checkpoint.CheckpointError, match="Cannot read checkpoint"):
        Checkpoint.load_checkpoint("/nonexistent/run.ckpt")


@mock.patch("zml_learn.Checkpoint.zlog.error")
def test_failed_write_keeps_the_old_file(mocked_error):
    with TemporaryDirectory() as tmpdir:
        path = Checkpoint.save_checkpoint(os.path.join(tmpdir, "run.ckpt"), sample_checkpoint())
        newer = sample_checkpoint()
        newer.iteration = 13
        with mock.patch("zml_learn.Checkpoint.os.replace", side_effect=OSError("disk full")):
            with pytest.raises(OSError):
                Checkpoint.save_checkpoint(path, newer)
        assert Checkpoint.load_checkpoint(path).iteration == 12
    assert "Error writing checkpoint" in mocked_error.call_args[0][0]


def test_network_round_trip():
    net = small_net()
    net.update_normalization(torch.randn(20, 5), torch.randn(20, 7))
    with TemporaryDirectory() as tmpdir:
        path = os.path.join(tmpdir, "run.ckpt")
        Checkpoint.save_checkpoint(path, Checkpoint.capture(net, MODEL_HASH, 3))
        restored = Checkpoint.restore_network(small_net(seed=1), Checkpoint.load_checkpoint(path))
    for name, tensor in net.state_dict().items():
        assert torch.equal(tensor, restored.state_dict()[name])


def test_restore_into_another_network():
    checkpoint = Checkpoint.capture(small_net(), MODEL_HASH)
    other = Networks.ActorCritic(5, 7, 2, 3, (4,), (8,), 0.7)
    with pytest.raises(Checkpoint.CheckpointError, match="does not match the network"):
        Checkpoint.restore_network(other, checkpoint)


def test_optimizer_round_trip():
    net = small_net()
    optimizer = torch.optim.Adam(net.parameters(), lr=3e-4)
    for _ in range(3):
        optimizer.zero_grad()
        net.value_total(torch.randn(4, 7)).sum().backward()
        optimizer.step()
    with TemporaryDirectory() as tmpdir:
        path = os.path.join(tmpdir, "run.ckpt")
        Checkpoint.save_checkpoint(path, Checkpoint.capture(net, MODEL_HASH, optimizer=optimizer))
        loaded = Checkpoint.load_checkpoint(path)
    fresh = torch.optim.Adam(small_net().parameters(), lr=1.0)
    Checkpoint.restore_optimizer(fresh, loaded)
    assert fresh.param_groups[0]["lr"] == 3e-4
    original = optimizer.state_dict()["state"]
    restored = fresh.state_dict()["state"]
    assert set(original) == set(restored)
    for index, values in original.items():
        torch.testing.assert_close(values["exp_avg"], restored[index]["exp_avg"])
        torch.testing.assert_close(values["exp_avg_sq"], restored[index]["exp_avg_sq"])


def test_generator_round_trip():
    generator = torch.Generator().manual_seed(5)
    torch.rand(3, generator=generator)
    checkpoint = Checkpoint.capture(small_net(), MODEL_HASH, generator=generator)
    expected = torch.rand(4, generator=generator)
    restored = Checkpoint.restore_generator(torch.Generator(), checkpoint)
    assert torch.equal(torch.rand(4, generator=restored), expected)


def test_restore_without_optimizer_state():
    checkpoint = Checkpoint.capture(small_net(), MODEL_HASH)
    optimizer = torch.optim.Adam(small_net().parameters(), lr=0.5)
    assert Checkpoint.restore_optimizer(optimizer, checkpoint) is optimizer
    assert optimizer.param_groups[0]["lr"] == 0.5
