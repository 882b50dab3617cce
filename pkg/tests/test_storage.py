"""Round trips and corruption handling for the on-disk formats."""

import json

import numpy as np
import pytest

from romforge.storage import (
    SnapshotDataset,
    StorageError,
    load_dataset,
    read_checkpoint,
    read_json,
    save_dataset,
    sha256_bytes,
    write_checkpoint,
    write_json,
)


def small_dataset(with_solutions=True, count=3, n=8, seed=11):
    rng = np.random.default_rng(seed)
    params = rng.normal(size=(count, 2)).astype(np.float32)
    masks = (rng.random((count, n, n)) > 0.2).astype(np.uint8)
    solutions = (
        rng.normal(size=(count, n, n)).astype(np.float32) if with_solutions else None
    )
    return SnapshotDataset(
        problem="holes",
        seed=seed,
        grid_hw=(n, n),
        param_schema=("phi", "beta"),
        params=params,
        masks=masks,
        solutions=solutions,
        hole_counts=(1,) * count,
    )


class TestDataset:
    def test_round_trip(self, tmp_path):
        ds = small_dataset()
        save_dataset(ds, tmp_path / "ds")
        back = load_dataset(tmp_path / "ds")
        assert back.problem == ds.problem
        assert back.seed == ds.seed
        assert back.grid_hw == ds.grid_hw
        assert back.param_schema == ds.param_schema
        assert back.hole_counts == ds.hole_counts
        np.testing.assert_array_equal(back.params, ds.params)
        np.testing.assert_array_equal(back.masks, ds.masks)
        np.testing.assert_array_equal(back.solutions, ds.solutions)

    def test_round_trip_without_solutions(self, tmp_path):
        ds = small_dataset(with_solutions=False)
        save_dataset(ds, tmp_path / "ds")
        back = load_dataset(tmp_path / "ds")
        assert not back.has_solutions
        assert back.solutions is None
        assert not (tmp_path / "ds" / "solutions.f32le").exists()

    def test_save_is_deterministic(self, tmp_path):
        ds = small_dataset()
        save_dataset(ds, tmp_path / "a")
        save_dataset(ds, tmp_path / "b")
        for name in ("manifest.json", "params.f32le", "masks.u8", "solutions.f32le"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_fingerprint_tracks_content(self, tmp_path):
        ds = small_dataset()
        fp = ds.fingerprint()
        assert fp == small_dataset().fingerprint()
        other = small_dataset(seed=12)
        assert other.fingerprint() != fp

    def test_tampered_array_rejected(self, tmp_path):
        save_dataset(small_dataset(), tmp_path / "ds")
        raw = bytearray((tmp_path / "ds" / "params.f32le").read_bytes())
        raw[0] ^= 0xFF
        (tmp_path / "ds" / "params.f32le").write_bytes(bytes(raw))
        with pytest.raises(StorageError):
            load_dataset(tmp_path / "ds")

    def test_truncated_array_rejected(self, tmp_path):
        save_dataset(small_dataset(), tmp_path / "ds")
        raw = (tmp_path / "ds" / "masks.u8").read_bytes()
        (tmp_path / "ds" / "masks.u8").write_bytes(raw[:-1])
        with pytest.raises(StorageError):
            load_dataset(tmp_path / "ds")

    def test_manifest_shape_mismatch_rejected(self, tmp_path):
        save_dataset(small_dataset(), tmp_path / "ds")
        doc = read_json(tmp_path / "ds" / "manifest.json")
        doc["count"] = 5
        (tmp_path / "ds" / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(StorageError):
            load_dataset(tmp_path / "ds")

    def test_no_paths_in_manifest(self, tmp_path):
        out = tmp_path / "deeply" / "nested" / "ds"
        save_dataset(small_dataset(), out)
        text = (out / "manifest.json").read_text()
        assert str(tmp_path) not in text
        assert "deeply" not in text


class TestCheckpoint:
    def test_round_trip_all_dtypes(self, tmp_path):
        rng = np.random.default_rng(0)
        arrays = {
            "w": rng.normal(size=(3, 4)).astype(np.float32),
            "stats": rng.normal(size=(2,)).astype(np.float64),
            "mask": (rng.random((5,)) > 0.5).astype(np.uint8),
            "steps": np.arange(4, dtype=np.int64),
            "scalar": np.float64(2.5),
        }
        meta = {"kind": "test", "epoch": 3}
        write_checkpoint(tmp_path / "c.ckpt", arrays, meta)
        back_arrays, back_meta = read_checkpoint(tmp_path / "c.ckpt")
        assert back_meta == meta
        assert set(back_arrays) == set(arrays)
        for name, arr in arrays.items():
            got = back_arrays[name]
            assert got.dtype == np.asarray(arr).dtype
            np.testing.assert_array_equal(got, np.asarray(arr))

    def test_rank_zero_survives(self, tmp_path):
        write_checkpoint(tmp_path / "c.ckpt", {"mu": np.float32(1.25)}, {})
        arrays, _ = read_checkpoint(tmp_path / "c.ckpt")
        assert arrays["mu"].shape == ()
        assert float(arrays["mu"]) == 1.25

    def test_bytes_deterministic(self, tmp_path):
        arrays = {"b": np.ones(3, dtype=np.float32), "a": np.zeros(2, dtype=np.int64)}
        write_checkpoint(tmp_path / "x.ckpt", arrays, {"z": 1, "a": 2})
        write_checkpoint(tmp_path / "y.ckpt", dict(reversed(arrays.items())),
                         {"a": 2, "z": 1})
        assert (tmp_path / "x.ckpt").read_bytes() == (tmp_path / "y.ckpt").read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        write_checkpoint(tmp_path / "c.ckpt", {"w": np.zeros(2, np.float32)}, {})
        raw = bytearray((tmp_path / "c.ckpt").read_bytes())
        raw[0] = ord("X")
        (tmp_path / "c.ckpt").write_bytes(bytes(raw))
        with pytest.raises(StorageError):
            read_checkpoint(tmp_path / "c.ckpt")

    def test_truncation_rejected(self, tmp_path):
        write_checkpoint(tmp_path / "c.ckpt", {"w": np.zeros(100, np.float32)}, {})
        raw = (tmp_path / "c.ckpt").read_bytes()
        (tmp_path / "c.ckpt").write_bytes(raw[: len(raw) // 2])
        with pytest.raises(StorageError):
            read_checkpoint(tmp_path / "c.ckpt")

    def test_unsupported_dtype_rejected(self, tmp_path):
        with pytest.raises(StorageError):
            write_checkpoint(
                tmp_path / "c.ckpt", {"w": np.zeros(2, dtype=np.complex64)}, {}
            )


class TestJson:
    def test_canonical_form(self, tmp_path):
        write_json(tmp_path / "a.json", {"b": 1, "a": [np.float32(0.5), np.int64(2)]})
        text = (tmp_path / "a.json").read_text()
        assert text.endswith("\n")
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text) == {"b": 1, "a": [0.5, 2]}

    def test_numpy_values_jsonified(self, tmp_path):
        doc = {
            "arr": np.arange(3, dtype=np.float32),
            "flag": np.bool_(True),
            "n": np.int32(7),
        }
        write_json(tmp_path / "b.json", doc)
        assert read_json(tmp_path / "b.json") == {"arr": [0.0, 1.0, 2.0],
                                                  "flag": True, "n": 7}

    def test_sha256_known_value(self):
        # sha256("") is a published constant
        assert sha256_bytes(b"") == (
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        )
