import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ovaib import autodiff as ad
from ovaib.checkpoint import MAGIC, load_models, read_tensors, save_models, write_tensors
from ovaib.config import RunConfig, load_config
from ovaib.errors import ConfigError
from ovaib.losses import LossConfig
from ovaib.synth_data import GeneratorSpec


class TestRunConfig:
    def test_default_round_trip(self):
        cfg = RunConfig()
        assert RunConfig.from_json(cfg.to_json()) == cfg

    @settings(max_examples=50, deadline=None)
    @given(
        st.integers(2, 5), st.integers(1, 16), st.floats(1e-4, 1.0), st.floats(0, 5),
        st.booleans(), st.booleans(), st.booleans(), st.sampled_from(["ovaib", "clip"]),
        st.lists(st.integers(1, 32), min_size=0, max_size=3), st.integers(0, 2**31),
    )
    def test_round_trip(self, M, d, tau, beta, bz, mlp, pos, objective, hidden, seed):
        cfg = RunConfig(
            generator=GeneratorSpec(M=M, seed=seed), embed_dim=d, encoder_hidden=hidden,
            loss=LossConfig(tau=tau, beta=beta), beta_zero=bz, mlp_projector=mlp,
            include_positive=pos, objective=objective, seed=seed,
        )
        back = RunConfig.from_json(cfg.to_json())
        assert back == cfg
        assert back.to_json() == cfg.to_json()

    def test_per_modality_hidden(self):
        cfg = RunConfig(encoder_hidden=[[8], [16, 4], []])
        assert cfg.encoder_widths(1) == [32, 16, 4, 32]
        assert RunConfig.from_json(cfg.to_json()) == cfg

    @pytest.mark.parametrize("kwargs", [
        {"steps": 0}, {"batch_size": 1}, {"batch_size": 5000}, {"objective": "simclr"}, {"lr": 0.0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            RunConfig(**kwargs)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"stepz": 10})

    def test_nested_error_is_config_error(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"loss": {"tau": -1}})

    def test_bad_json(self):
        with pytest.raises(ConfigError):
            RunConfig.from_json("{not json")

    def test_load_config(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"steps": 7, "generator": {"M": 4}}))
        cfg = load_config(path)
        assert cfg.steps == 7 and cfg.generator.M == 4
        assert load_config(None) == RunConfig()
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")

    def test_effective_loss(self):
        cfg = RunConfig(beta_zero=True, mlp_projector=True, include_positive=True)
        eff = cfg.effective_loss()
        assert eff.beta == 0 and eff.scorer == "mlp" and eff.include_positive_in_denominator
        assert cfg.loss.beta == 1.0

    def test_with_seed(self):
        cfg = RunConfig().with_seed(7)
        assert cfg.seed == 7 and cfg.generator.seed == 7


class TestCheckpoint:
    def test_tensor_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        tensors = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=5), "c": np.array(2.5)}
        write_tensors(tmp_path / "t.bin", tensors, seed=9, meta={"x": 1})
        back, header = read_tensors(tmp_path / "t.bin")
        assert list(back) == ["a", "b", "c"]
        for k in tensors:
            assert back[k].tobytes() == np.asarray(tensors[k], dtype=np.float64).tobytes()
        assert header["seed"] == 9 and header["meta"] == {"x": 1}

    def test_layout(self, tmp_path):
        path = write_tensors(tmp_path / "t.bin", {"w": np.array([1.0, 2.0])})
        raw = path.read_bytes()
        assert raw[:8] == MAGIC
        version, hlen = struct.unpack("<IQ", raw[8:20])
        header = json.loads(raw[20:20 + hlen])
        assert version == 1 and header["tensors"] == [{"name": "w", "shape": [2], "offset": 0}]
        np.testing.assert_array_equal(np.frombuffer(raw[20 + hlen:], "<f8"), [1.0, 2.0])

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"NOTACKPT" + b"\0" * 20)
        with pytest.raises(ConfigError):
            read_tensors(tmp_path / "x.bin")

    def test_truncated(self, tmp_path):
        path = write_tensors(tmp_path / "t.bin", {"w": np.ones(10)})
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ConfigError):
            read_tensors(path)

    def test_models(self, tmp_path):
        rng = np.random.default_rng(1)
        encs = [ad.init_mlp([4, 3, 2], rng) for _ in range(3)]
        projs = [ad.init_mlp([4, 2], rng) for _ in range(3)]
        save_models(tmp_path / "m.bin", encs, projs, seed=5, config={"k": "v"})
        e2, p2, header = load_models(tmp_path / "m.bin")
        assert header["seed"] == 5 and header["meta"]["config"] == {"k": "v"}
        x = rng.normal(size=(6, 4))
        for a, b in zip(encs + projs, e2 + p2):
            assert a.activations == b.activations
            np.testing.assert_array_equal(ad.mlp_apply(a, x), ad.mlp_apply(b, x))

    def test_models_without_projectors(self, tmp_path):
        encs = [ad.init_mlp([2, 2], np.random.default_rng(0))]
        save_models(tmp_path / "m.bin", encs)
        assert load_models(tmp_path / "m.bin")[1] is None
