from __future__ import annotations

import numpy as np
import pytest

from stfactor.blocks import BlockKind
from stfactor.errors import ShapeError, UsageError
from stfactor.layers import LSTM, BatchNorm, Dropout, Linear, ReLU
from stfactor.models import (
    ARCH_NAMES,
    VIDEO_ARCHS,
    AudioDNN,
    InputKind,
    SequenceLSTM,
    VideoNet,
    build_arch,
    canonical_name,
    input_kind,
    network_arch,
)
from stfactor.tensor import Rng

SMALL = (3, 2, 3, 2, 4)


class TestNames:
    def test_seven_video_rows(self):
        assert list(VIDEO_ARCHS) == [
            "fully3d",
            "two-block1",
            "two-block2",
            "two-block2plus",
            "three-block2",
            "three-block2plus",
            "two-block3",
        ]

    def test_aliases(self):
        assert canonical_name("audio-dnn-512-256") == "audio-dnn-512"

    def test_unknown_name(self):
        with pytest.raises(UsageError):
            build_arch("four-block9", None)

    def test_three_block2plus_layout(self):
        kinds = [spec.kind for spec in network_arch("three-block2plus").blocks]
        assert kinds == [BlockKind.fully3d] + [BlockKind.block2plus] * 3

    def test_channel_ladder_validated(self):
        with pytest.raises(UsageError):
            network_arch("fully3d", (3, 64, 64))

    @pytest.mark.parametrize(
        "name,kind",
        [
            ("fully3d", InputKind.video),
            ("audio-dnn-256", InputKind.pooled_audio),
            ("audio-lstm-fixed", InputKind.fixed_segments),
            ("audio-lstm-variable", InputKind.variable_segments),
            ("feat-lstm", InputKind.frame_features),
        ],
    )
    def test_input_kinds(self, name, kind):
        assert input_kind(name) is kind


class TestVideoNet:
    def test_zero_input_gives_even_odds(self):
        model = build_arch("fully3d", Rng(0), channels=SMALL)
        p = model.predict_proba(np.zeros((1, 3, 4, 8, 8), dtype=np.float32))
        assert np.allclose(p, 0.5)

    @pytest.mark.parametrize("name", list(VIDEO_ARCHS))
    def test_drop_in_shapes(self, name):
        model = build_arch(name, Rng(1), channels=SMALL)
        x = Rng(2).normal(2 * 3 * 8 * 32 * 32).reshape(2, 3, 8, 32, 32).astype(np.float32)
        logits = model.forward(x)
        assert logits.shape == (2, 2)
        assert np.allclose(model.predict_proba(x).sum(axis=1), 1.0, atol=1e-6)

    def test_full_size_block_extents(self):
        model = build_arch("fully3d", None)
        assert isinstance(model, VideoNet)
        x = np.zeros((1, 3, 16, 64, 64), dtype=np.float32)
        shapes = []
        for block in model.block_layers():
            x = block.forward(x)
            shapes.append(x.shape[2:])
        assert shapes == [(4, 16, 16), (1, 4, 4), (1, 1, 1), (1, 1, 1)]

    def test_rejects_wrong_channel_count(self):
        model = build_arch("two-block3", None, channels=SMALL)
        with pytest.raises(ShapeError):
            model.forward(np.zeros((1, 1, 4, 8, 8), dtype=np.float32))

    def test_seeded_init_is_deterministic(self):
        a = build_arch("two-block2", Rng(5), channels=SMALL).state_dict()
        b = build_arch("two-block2", Rng(5), channels=SMALL).state_dict()
        assert a.keys() == b.keys()
        assert all(np.array_equal(a[k], b[k]) for k in a)


class TestAudioModels:
    def test_dnn_layout(self):
        model = build_arch("audio-dnn-512", Rng(0), input_dim=6)
        assert isinstance(model, AudioDNN)
        layers = list(model.net.children.values())
        assert [type(layer) for layer in layers] == [Linear, BatchNorm, ReLU, Dropout] * 2 + [Linear]
        assert (layers[0].out_features, layers[4].out_features) == (512, 256)

    def test_dnn_hidden_linears_have_no_bias(self):
        model = build_arch("audio-dnn-512", Rng(0), input_dim=6)
        children = model.net.children
        assert set(children["0"].params) == {"weight"}
        assert set(children["4"].params) == {"weight"}
        assert "bias" in children["8"].params

    def test_small_dnn(self):
        model = build_arch("audio-dnn-256", Rng(0), input_dim=4)
        assert model.net.children["0"].out_features == 256
        assert model.forward(np.ones((3, 4), dtype=np.float32)).shape == (3, 2)

    def test_dnn_requires_input_dim(self):
        with pytest.raises(UsageError):
            build_arch("audio-dnn-512", None)

    def test_dnn_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            build_arch("audio-dnn-256", None, input_dim=4).forward(np.zeros((2, 5), dtype=np.float32))

    def test_audio_lstm_needs_87_segments(self):
        model = build_arch("audio-lstm-fixed", Rng(0), input_dim=3, hidden=4)
        assert model.forward(np.zeros((2, 87, 3), dtype=np.float32)).shape == (2, 2)
        with pytest.raises(ShapeError):
            model.forward(np.zeros((2, 86, 3), dtype=np.float32))

    def test_zero_lstm_gives_even_odds(self):
        model = build_arch("audio-lstm-variable", None, input_dim=3, hidden=4)
        assert np.allclose(model.predict_proba(np.zeros((1, 87, 3), dtype=np.float32)), 0.5)

    def test_feature_lstm_normalizes_and_accepts_any_length(self):
        model = build_arch("feat-lstm", Rng(0), input_dim=5, hidden=4)
        assert isinstance(model, SequenceLSTM)
        assert isinstance(model.net.children["bn"], BatchNorm)
        assert isinstance(model.net.children["lstm"], LSTM)
        model.eval()
        assert model.forward(np.ones((1, 3, 5), dtype=np.float32)).shape == (1, 2)

    def test_feature_lstm_default_dim(self):
        assert build_arch("feat-lstm", None, hidden=2).arch.input_dim == 4096

    @pytest.mark.parametrize("name", [n for n in ARCH_NAMES if n not in VIDEO_ARCHS])
    def test_every_audio_name_builds(self, name):
        model = build_arch(name, None, input_dim=3, hidden=2)
        assert model.arch_name == name
