"""Binary checkpoint format: round trips and corruption detection."""

import hashlib

import pytest
import torch

from metarh.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from metarh.exceptions import CheckpointError
from metarh.model import MetaRHModule

torch.set_num_threads(1)

VOCAB_HASH = hashlib.sha256(b"test vocabulary").digest()


def _model(seed=0, **kwargs):
    torch.manual_seed(seed)
    defaults = dict(n_entities=9, n_relations=5, dim=6, depth=2, n_heads=2)
    defaults.update(kwargs)
    return MetaRHModule(**defaults)


class TestRoundTrip:
    def test_state_and_metadata_bit_identical(self, tmp_path):
        model = _model(tau=0.4, margin=2.0, first_order=True)
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, VOCAB_HASH, path, step=123,
                        extra={"note": "smoke"})
        loaded, meta = load_checkpoint(path, expected_vocab_hash=VOCAB_HASH)
        assert meta["step"] == 123
        assert meta["extra"] == {"note": "smoke"}
        assert meta["vocab_hash"] == VOCAB_HASH.hex()
        assert loaded.config() == model.config()
        saved = model.state_dict()
        restored = loaded.state_dict()
        assert saved.keys() == restored.keys()
        for name in saved:
            assert torch.equal(saved[name], restored[name]), name

    def test_rewrite_is_byte_identical(self, tmp_path):
        model = _model(seed=3)
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(model, VOCAB_HASH, a, step=7)
        save_checkpoint(model, VOCAB_HASH, b, step=7)
        assert a.read_bytes() == b.read_bytes()

    def test_magic_leads_the_file(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(_model(), VOCAB_HASH, path)
        assert path.read_bytes()[:4] == MAGIC

    def test_bad_vocab_hash_length_rejected_on_save(self, tmp_path):
        with pytest.raises(CheckpointError, match="32 bytes"):
            save_checkpoint(_model(), b"short", tmp_path / "x.ckpt")


class TestCorruptionDetection:
    def _saved(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(_model(seed=1), VOCAB_HASH, path, step=5)
        return path

    def test_flipped_body_byte_detected(self, tmp_path):
        path = self._saved(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="checksum"):
            load_checkpoint(path)

    def test_flipped_trailer_byte_detected(self, tmp_path):
        path = self._saved(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[-1] ^= 0x01
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="checksum"):
            load_checkpoint(path)

    def test_truncation_detected(self, tmp_path):
        path = self._saved(tmp_path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_tiny_file_rejected(self, tmp_path):
        path = tmp_path / "stub.ckpt"
        path.write_bytes(b"MRH1")
        with pytest.raises(CheckpointError, match="too short"):
            load_checkpoint(path)

    def test_wrong_magic_rejected(self, tmp_path):
        path = self._saved(tmp_path)
        raw = bytearray(path.read_bytes())
        body = bytes(b"XXXX") + bytes(raw[4:-32])
        path.write_bytes(body + hashlib.sha256(body).digest())
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_vocabulary_mismatch_rejected(self, tmp_path):
        path = self._saved(tmp_path)
        other = hashlib.sha256(b"another vocabulary").digest()
        with pytest.raises(CheckpointError, match="different vocabulary"):
            load_checkpoint(path, expected_vocab_hash=other)
        load_checkpoint(path)    # no expectation, no complaint
