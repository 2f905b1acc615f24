import numpy as np
import pytest

from auvpilot.checkpoint import load_checkpoint, save_checkpoint
from auvpilot.nets import ActorCritic


@pytest.fixture
def policy():
    return ActorCritic(hidden=(32, 32), rng=np.random.default_rng(99))


class TestRoundTrip:
    def test_bit_identical_parameters(self, tmp_path, policy):
        path = tmp_path / "p.ckpt"
        save_checkpoint(path, policy, config_hash="abc123")
        loaded, meta = load_checkpoint(path)
        for (n1, p1), (n2, p2) in zip(policy.named_parameters(), loaded.named_parameters()):
            assert n1 == n2
            assert np.array_equal(p1, p2)
        assert meta["config_hash"] == "abc123"
        assert meta["activation"] == "elu"

    def test_forward_bit_identical(self, tmp_path, policy):
        path = tmp_path / "p.ckpt"
        save_checkpoint(path, policy)
        loaded, _ = load_checkpoint(path)
        obs = np.random.default_rng(3).standard_normal((17, 16)).astype(np.float32)
        assert np.array_equal(policy.action_mean(obs), loaded.action_mean(obs))
        assert np.array_equal(policy.value(obs), loaded.value(obs))

    def test_save_load_save_is_byte_identical(self, tmp_path, policy):
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        save_checkpoint(p1, policy, "h")
        loaded, _ = load_checkpoint(p1)
        save_checkpoint(p2, loaded, "h")
        assert p1.read_bytes() == p2.read_bytes()


class TestRejection:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOT-A-CHECKPOINT 1\n{}\n\n")
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path, policy):
        path = tmp_path / "p.ckpt"
        save_checkpoint(path, policy)
        blob = path.read_bytes()
        path.write_bytes(blob[:-100])
        with pytest.raises(ValueError, match="truncated"):
            load_checkpoint(path)

    def test_unsupported_version(self, tmp_path, policy):
        path = tmp_path / "p.ckpt"
        save_checkpoint(path, policy)
        blob = path.read_bytes().replace(b"AUVPILOT-POLICY 1", b"AUVPILOT-POLICY 9", 1)
        path.write_bytes(blob)
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(path)
