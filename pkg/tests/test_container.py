"""The NTA1 container format: round trips and malformed-file handling."""

import struct

import numpy as np
import pytest

from miniclr.container import MAGIC, ContainerError, load_container, save_container


class TestRoundTrip:
    def test_empty_container(self, tmp_path):
        path = tmp_path / "empty.nta"
        save_container(path, {})
        tensors, meta = load_container(path)
        assert tensors == {}
        assert meta == {}
        assert path.read_bytes() == MAGIC + struct.pack("<I", 0)

    def test_single_tensor(self, tmp_path):
        path = tmp_path / "one.nta"
        value = np.array([[1.0, 2.0], [3.0, 4.0]])
        save_container(path, {"w": value})
        tensors, _ = load_container(path)
        assert np.array_equal(tensors["w"], value)

    def test_metadata_round_trip(self, tmp_path):
        path = tmp_path / "meta.nta"
        meta = {"spec": {"latent_dim": 32}, "note": "ünïcode ok"}
        save_container(path, {"x": np.zeros(3)}, metadata=meta)
        _, loaded = load_container(path)
        assert loaded == meta

    def test_integer_tensors_exact(self, tmp_path):
        path = tmp_path / "ints.nta"
        labels = np.array([0, 5, -3, 2**40], dtype=np.int64)
        save_container(path, {"labels": labels})
        tensors, _ = load_container(path)
        assert tensors["labels"].dtype == np.int64
        assert np.array_equal(tensors["labels"], labels)

    def test_thousand_random_tensors_within_f32(self, tmp_path):
        """Values survive the 32-bit store to <= 2^-24 relative error."""
        rng = np.random.default_rng(0)
        tensors = {}
        for i in range(1000):
            ndim = int(rng.integers(0, 4))
            shape = tuple(int(rng.integers(1, 5)) for _ in range(ndim))
            tensors[f"t{i}"] = rng.uniform(-100.0, 100.0, size=shape)
        path = tmp_path / "many.nta"
        save_container(path, tensors)
        loaded, _ = load_container(path)
        assert set(loaded) == set(tensors)
        for name, value in tensors.items():
            assert loaded[name].shape == np.asarray(value).shape
            err = np.abs(loaded[name] - value) / np.maximum(np.abs(value), 1e-30)
            assert np.max(err) <= 2.0**-24

    def test_one_third_precision_bound(self, tmp_path):
        path = tmp_path / "third.nta"
        save_container(path, {"x": np.array(1.0 / 3.0)})
        loaded, _ = load_container(path)
        rel = abs(loaded["x"] - 1.0 / 3.0) / (1.0 / 3.0)
        assert rel <= 2.0**-24


class TestMalformed:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.nta"
        path.write_bytes(b"XXXX" + struct.pack("<I", 0))
        with pytest.raises(ContainerError, match="magic"):
            load_container(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "v2.nta"
        path.write_bytes(b"NTA2" + struct.pack("<I", 0))
        with pytest.raises(ContainerError, match="version"):
            load_container(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "trunc.nta"
        save_container(path, {"x": np.ones((4, 4))})
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(ContainerError, match="truncated"):
            load_container(path)

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "extra.nta"
        save_container(path, {"x": np.ones(2)})
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(ContainerError, match="trailing"):
            load_container(path)

    def test_duplicate_names_on_load(self, tmp_path):
        path = tmp_path / "dup.nta"
        save_container(path, {"x": np.ones(1)})
        blob = path.read_bytes()
        entry = blob[8:]
        path.write_bytes(MAGIC + struct.pack("<I", 2) + entry + entry)
        with pytest.raises(ContainerError, match="duplicate"):
            load_container(path)

    def test_reserved_name_on_save(self, tmp_path):
        with pytest.raises(ContainerError, match="reserved"):
            save_container(tmp_path / "r.nta", {"__meta__": np.ones(1)})

    def test_empty_name_on_save(self, tmp_path):
        with pytest.raises(ContainerError, match="non-empty"):
            save_container(tmp_path / "e.nta", {"": np.ones(1)})

    def test_unknown_dtype_code(self, tmp_path):
        path = tmp_path / "dtype.nta"
        entry = struct.pack("<H", 1) + b"x" + struct.pack("<BB", 9, 0)
        path.write_bytes(MAGIC + struct.pack("<I", 1) + entry)
        with pytest.raises(ContainerError, match="dtype"):
            load_container(path)
