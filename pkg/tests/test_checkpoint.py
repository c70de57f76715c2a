import numpy as np
import pytest

from grouped_hoi.checkpoint import MAGIC, load_checkpoint, read_checkpoint, save_checkpoint
from grouped_hoi.errors import ConfigError, DataError
from grouped_hoi.gradcheck import micro_config
from grouped_hoi.model import HOIModel


def test_round_trip_restores_every_tensor(tmp_path):
    cfg = micro_config(sem_norm="batch")
    a, b = HOIModel(cfg), HOIModel(micro_config(sem_norm="batch", init_seed=9))
    a.store.buffers["probe"] = np.arange(3.0)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, a.store, cfg.architecture(), "abc", {"step": 4})
    header = load_checkpoint(path, b.store, cfg.architecture())
    assert header["config_hash"] == "abc" and header["meta"] == {"step": 4}
    for k, t in a.store.params.items():
        np.testing.assert_array_equal(b.store.params[k].data, t.data)
    np.testing.assert_array_equal(b.store.buffers["probe"], np.arange(3.0))
    assert path.read_bytes()[:8] == MAGIC


def test_save_is_byte_deterministic(tmp_path):
    cfg = micro_config()
    m = HOIModel(cfg)
    save_checkpoint(tmp_path / "a", m.store, cfg.architecture())
    save_checkpoint(tmp_path / "b", m.store, cfg.architecture())
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_architecture_mismatch_refused(tmp_path):
    cfg = micro_config()
    save_checkpoint(tmp_path / "m", HOIModel(cfg).store, cfg.architecture())
    other = micro_config(n_queries=3)
    with pytest.raises(ConfigError, match="n_queries"):
        load_checkpoint(tmp_path / "m", HOIModel(other).store, other.architecture())


def test_corrupt_files_raise_data_error(tmp_path):
    cfg = micro_config()
    path = tmp_path / "m"
    save_checkpoint(path, HOIModel(cfg).store, cfg.architecture())
    blob = path.read_bytes()
    (tmp_path / "trunc").write_bytes(blob[:-8])
    (tmp_path / "magic").write_bytes(b"XXXXXXXX" + blob[8:])
    for name in ("trunc", "magic", "missing"):
        with pytest.raises(DataError):
            read_checkpoint(tmp_path / name)
