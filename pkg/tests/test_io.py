import json
import struct

import numpy as np
import pytest

from vprd import io
from vprd.data_model import Dataset, Standardization, default_parameter_names
from vprd.mlp import forward, init_weights
from vprd.synthetic import SynthConfig, gen_dataset, gen_phase_images


def test_matrix_layout_by_hand():
    buf = io.matrix_bytes(np.array([[1.0, 2.0]]))
    assert buf[:16] == struct.pack("<QQ", 1, 2)
    assert buf[16:] == struct.pack("<dd", 1.0, 2.0)


def test_matrix_roundtrip_bit_exact(tmp_path, rng):
    a = rng.normal(size=(7, 13)) * 10.0 ** rng.integers(-300, 300, size=(7, 13))
    a[0, 0] = -0.0
    io.write_matrix(tmp_path / "m.bin", a)
    b = io.read_matrix(tmp_path / "m.bin")
    assert a.tobytes() == b.tobytes()


def test_truncated_matrix_names_byte_counts(tmp_path):
    io.write_matrix(tmp_path / "m.bin", np.ones((3, 4)))
    raw = (tmp_path / "m.bin").read_bytes()
    (tmp_path / "m.bin").write_bytes(raw[:-5])
    with pytest.raises(io.FormatError, match="expected 96 data bytes .* found 91"):
        io.read_matrix(tmp_path / "m.bin")
    (tmp_path / "m.bin").write_bytes(raw[:10])
    with pytest.raises(io.FormatError, match="header"):
        io.read_matrix(tmp_path / "m.bin")
    (tmp_path / "m.bin").write_bytes(raw + b"x")
    with pytest.raises(io.FormatError, match="trailing"):
        io.read_matrix(tmp_path / "m.bin")


def test_params_csv_roundtrip(tmp_path, rng):
    names = default_parameter_names(22)
    p = rng.normal(size=(5, 22)) * 1e3
    io.write_params_csv(tmp_path / "p.csv", names, p)
    n2, p2 = io.read_params_csv(tmp_path / "p.csv")
    assert n2 == names and p.tobytes() == p2.tobytes()


def test_params_csv_errors(tmp_path):
    (tmp_path / "a.csv").write_text("a,b\n1,2\n3\n")
    with pytest.raises(io.FormatError, match=":3"):
        io.read_params_csv(tmp_path / "a.csv")
    (tmp_path / "b.csv").write_text("a,b\n1,x\n")
    with pytest.raises(io.FormatError):
        io.read_params_csv(tmp_path / "b.csv")
    (tmp_path / "c.csv").write_text("")
    with pytest.raises(io.FormatError):
        io.read_params_csv(tmp_path / "c.csv")


def test_dataset_roundtrip(tmp_path):
    ds, _ = gen_dataset(SynthConfig(n_samples=15, d_out=20))
    io.write_dataset(tmp_path / "d", ds)
    back = io.read_dataset(tmp_path / "d")
    assert np.array_equal(back.params, ds.params) and np.array_equal(back.profiles, ds.profiles)
    assert back.param_names == ds.param_names and back.time_bin_fs == ds.time_bin_fs
    assert np.array_equal(back.shot_index, ds.shot_index) and back.provenance == ds.provenance
    meta = json.loads((tmp_path / "d" / "meta.json").read_text())
    assert list(meta) == sorted(meta)


def test_dataset_mismatch_and_version(tmp_path):
    ds, _ = gen_dataset(SynthConfig(n_samples=6, d_out=8))
    io.write_dataset(tmp_path / "d", ds)
    io.write_matrix(tmp_path / "d" / "profiles.bin", ds.profiles[:5])
    with pytest.raises(io.FormatError, match="expected 6 shots"):
        io.read_dataset(tmp_path / "d")
    meta = json.loads((tmp_path / "d" / "meta.json").read_text())
    meta["version"] = 99
    io.write_json(tmp_path / "d" / "meta.json", meta)
    with pytest.raises(io.FormatError, match="version"):
        io.read_dataset(tmp_path / "d")


def test_images_roundtrip(tmp_path):
    ds, _ = gen_dataset(SynthConfig(n_samples=4, d_out=30))
    images, _ = gen_phase_images(SynthConfig(image_rows=6), ds.profiles)
    io.write_images(tmp_path / "im", images, ds.param_names, ds.params, ds.shot_index)
    back, names, params, shots = io.read_images(tmp_path / "im")
    assert len(back) == 4 and names == ds.param_names and shots == [0, 1, 2, 3]
    for a, b in zip(images, back):
        assert np.array_equal(a.charge, b.charge) and np.array_equal(a.energy_axis, b.energy_axis)
        assert a.time_calibration_fs_per_px == b.time_calibration_fs_per_px


def _checkpoint(stdz=True):
    model = init_weights((5, 8, 4), 3)
    model.b1[:] = np.arange(8) / 7
    st = Standardization(np.arange(5.0), np.arange(1.0, 6.0)) if stdz else None
    return io.Checkpoint(model, np.linspace(0, 1, 4), st, 1.13, default_parameter_names(5),
                         0.45, 42, (0.8, 0.1, 0.1), {"hidden": 8})


@pytest.mark.parametrize("stdz", [True, False])
def test_checkpoint_roundtrip(tmp_path, stdz):
    ck = _checkpoint(stdz)
    io.write_checkpoint(tmp_path / "m.ckpt", ck)
    back = io.read_checkpoint(tmp_path / "m.ckpt")
    for name, p in ck.model.params().items():
        assert p.tobytes() == back.model.params()[name].tobytes()
    assert np.array_equal(back.label_mean, ck.label_mean)
    probe = np.linspace(-1, 1, 5)
    assert np.array_equal(forward(ck.model, probe)[0], forward(back.model, probe)[0])
    assert back.param_names == ck.param_names and back.split_fractions == (0.8, 0.1, 0.1)
    assert back.train_config == {"hidden": 8}
    if stdz:
        assert np.array_equal(back.standardization.std, ck.standardization.std)
    else:
        assert back.standardization is None
    # re-serialising gives the same bytes
    assert io.checkpoint_bytes(back) == (tmp_path / "m.ckpt").read_bytes()


def test_checkpoint_format_errors(tmp_path):
    raw = io.checkpoint_bytes(_checkpoint())
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b"NOTACKPT" + raw[8:])
    with pytest.raises(io.FormatError, match="magic"):
        io.read_checkpoint(p)
    p.write_bytes(raw[:8] + struct.pack("<IIQ", 7, 0, 0) + raw[24:])
    with pytest.raises(io.FormatError, match="version 7"):
        io.read_checkpoint(p)
    p.write_bytes(raw[:-3])
    with pytest.raises(io.FormatError, match="found"):
        io.read_checkpoint(p)


def test_json_stable_and_strict(tmp_path):
    assert io.dumps({"b": 1, "a": [1.5]}) == '{\n  "a": [\n    1.5\n  ],\n  "b": 1\n}\n'
    with pytest.raises(ValueError):
        io.dumps({"x": float("nan")})
    (tmp_path / "j.json").write_text("{nope")
    with pytest.raises(io.FormatError):
        io.read_json(tmp_path / "j.json")


def test_manifest(tmp_path):
    d = tmp_path / "data"
    d.mkdir()
    (d / "a.txt").write_text("hello")
    m = io.write_manifest(d / io.MANIFEST_NAME, "synth", {"seed": 1}, {}, {"dataset": d})
    h = m["outputs"]["dataset"]["sha256"]
    # the manifest itself is excluded from the directory hash
    assert io.content_hash(d) == h
    assert m["code_version"] and m["timestamp_utc"].endswith("+00:00")
    assert io.content_hash(tmp_path / "missing") is None
