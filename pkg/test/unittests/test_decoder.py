"""Unit tests for the multi-object decoder and the MODW container"""

import struct

import numpy as np
import pytest
from scenereg.decoder import (
    DECODE_WIDTH, MODW_MAGIC, AttentionWeights, ModWeights, ResidualPose, TokenSet, apply_residual, attention,
    init_weights, mod_forward, multi_object_cross_attention, random_tokens, read_modw, softmax, write_modw
)
from scenereg.errors import ContainerFormatError, QuaternionDegenerate, ScaleNonPositive, ShapeMismatch
from scenereg.pose import Pose7DoF, quat_from_rotvec
from scenereg.rng import make_rng


def averaging(channels):
    zero = np.zeros((channels, channels))
    eye = np.eye(channels)
    return AttentionWeights(zero, zero, eye, eye)


def zero_decode(weights: ModWeights) -> ModWeights:
    return ModWeights(weights.heads, weights.blocks, np.zeros_like(weights.decode_weight))


class TestAttention:
    def test_softmax_rows_sum_to_one(self):
        scores = np.array([[1000.0, 1000.0], [0.0, np.log(3.0)]])
        probs = softmax(scores)
        np.testing.assert_allclose(probs, [[0.5, 0.5], [0.25, 0.75]])

    def test_zero_queries_average_values(self):
        keys = make_rng(0).standard_normal((2, 5, 4))
        queries = make_rng(1).standard_normal((2, 3, 4))
        out, weights = attention(queries, keys, averaging(4), heads=2, return_weights=True)
        assert weights.shape == (2, 2, 3, 5)
        np.testing.assert_allclose(out, np.broadcast_to(keys.mean(axis=1, keepdims=True), out.shape))

    def test_heads_must_divide_channels(self):
        x = np.zeros((1, 2, 6))
        with pytest.raises(ShapeMismatch):
            attention(x, x, averaging(6), heads=4)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeMismatch):
            attention(np.zeros((1, 2, 3)), np.zeros((1, 2, 3)), averaging(4), heads=1)

    def test_cross_attention_sees_every_object(self):
        pose = np.zeros((2, 1, 2))
        shape = np.array([[[1.0, 0.0]], [[3.0, 2.0]]])
        out = multi_object_cross_attention(pose, shape, averaging(2), heads=1)
        np.testing.assert_allclose(out, [[[2.0, 1.0]], [[2.0, 1.0]]])


class TestWeights:
    def test_non_square_projection(self):
        with pytest.raises(ShapeMismatch):
            AttentionWeights(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 3)))

    def test_heads_must_divide_channels(self):
        weights = init_weights(1, 2, 6, 2, seed=0)
        with pytest.raises(ShapeMismatch):
            ModWeights(4, weights.blocks, weights.decode_weight)

    def test_decode_width(self):
        weights = init_weights(1, 2, 4, 3, seed=0)
        assert weights.decode_weight.shape == (DECODE_WIDTH, 12)
        assert weights.pose_length == 3
        with pytest.raises(ShapeMismatch):
            ModWeights(2, weights.blocks, np.zeros((7, 12)))

    def test_seeded_initialization(self):
        a = init_weights(2, 2, 4, 2, seed=5)
        b = init_weights(2, 2, 4, 2, seed=5)
        np.testing.assert_array_equal(a.decode_weight, b.decode_weight)
        np.testing.assert_array_equal(a.blocks[1].cross_attention.wq, b.blocks[1].cross_attention.wq)

    def test_token_shapes(self):
        with pytest.raises(ShapeMismatch):
            TokenSet(np.zeros((2, 3, 4)), np.zeros((3, 5, 4)))
        with pytest.raises(ShapeMismatch):
            TokenSet(np.zeros((2, 3, 4)), np.zeros((2, 5, 6)))


class TestForward:
    def test_one_residual_per_object(self):
        weights = init_weights(2, 2, 8, 3, seed=1)
        residuals = mod_forward(random_tokens(4, 3, 5, 8, seed=2), weights)
        assert len(residuals) == 4
        assert residuals[0].dq.shape == (4,)
        assert residuals[0].dt.shape == (3,)
        assert set(residuals[0].to_dict()) == {"dq", "dt", "dsigma"}

    def test_permutation_equivariant(self):
        weights = init_weights(2, 2, 8, 3, seed=1)
        tokens = random_tokens(4, 3, 5, 8, seed=2)
        order = [2, 0, 3, 1]
        base = mod_forward(tokens, weights)
        permuted = mod_forward(tokens.permuted(order), weights)
        for position, index in enumerate(order):
            np.testing.assert_allclose(permuted[position].dq, base[index].dq, atol=1e-10)
            np.testing.assert_allclose(permuted[position].dt, base[index].dt, atol=1e-10)
            assert permuted[position].dsigma == pytest.approx(base[index].dsigma, abs=1e-10)

    def test_zero_decode_keeps_poses(self):
        weights = zero_decode(init_weights(1, 1, 4, 2, seed=3))
        pose = Pose7DoF(quat_from_rotvec([0.1, 0.2, 0.3]), [1.0, 2.0, 3.0], 1.5)
        for residual in mod_forward(random_tokens(3, 2, 2, 4, seed=4), weights):
            refined = apply_residual(pose, residual)
            np.testing.assert_allclose(refined.as_matrix(), pose.as_matrix(), atol=1e-12)

    def test_tokens_must_match_weights(self):
        weights = init_weights(1, 2, 4, 2, seed=0)
        with pytest.raises(ShapeMismatch):
            mod_forward(random_tokens(2, 3, 2, 4, seed=0), weights)


class TestApplyResidual:
    pose = Pose7DoF([1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0], 1.0)

    def test_renormalizes(self):
        refined = apply_residual(self.pose, ResidualPose(np.array([1.0, 0.0, 0.0, 0.0]), np.ones(3), 0.5))
        np.testing.assert_allclose(refined.q, [1.0, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(refined.t, [1.0, 1.0, 1.0])
        assert refined.sigma == 1.5

    def test_non_positive_scale(self):
        with pytest.raises(ScaleNonPositive):
            apply_residual(self.pose, ResidualPose(np.zeros(4), np.zeros(3), -1.0))

    def test_cancelled_quaternion(self):
        with pytest.raises(QuaternionDegenerate):
            apply_residual(self.pose, ResidualPose(np.array([-1.0, 0.0, 0.0, 0.0]), np.zeros(3), 0.0))


class TestContainer:
    @pytest.fixture
    def container(self, tmp_path):
        path = tmp_path / "model.modw"
        tokens = random_tokens(3, 2, 4, 4, seed=6)
        weights = init_weights(2, 2, 4, 2, seed=7)
        write_modw(path, tokens, weights)
        return path, tokens, weights

    def test_contents_survive_a_file(self, container):
        path, tokens, weights = container
        loaded_tokens, loaded_weights = read_modw(path)
        np.testing.assert_array_equal(loaded_tokens.shape_tokens, tokens.shape_tokens)
        assert loaded_weights.heads == 2
        assert loaded_weights.block_count == 2
        base = mod_forward(tokens, weights)
        again = mod_forward(loaded_tokens, loaded_weights)
        np.testing.assert_array_equal(again[1].dt, base[1].dt)

    def test_tokens_only(self, tmp_path):
        path = tmp_path / "tokens.modw"
        write_modw(path, tokens=random_tokens(1, 2, 2, 4, seed=0))
        tokens, weights = read_modw(path)
        assert tokens.objects == 1
        assert weights is None

    def test_bad_magic(self, container):
        path = container[0]
        path.write_bytes(b"MODW v2\n" + path.read_bytes()[8:])
        with pytest.raises(ContainerFormatError) as exc_info:
            read_modw(path)
        assert exc_info.value.offset == 0
        assert exc_info.value.exit_code == 65

    def test_truncated(self, container):
        path = container[0]
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(ContainerFormatError, match="Truncated"):
            read_modw(path)
        path.write_bytes(data[:20])
        with pytest.raises(ContainerFormatError, match="Truncated header"):
            read_modw(path)

    def test_trailing_bytes(self, container):
        path = container[0]
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(ContainerFormatError, match="trailing"):
            read_modw(path)

    def test_unknown_flags(self, container):
        path = container[0]
        data = bytearray(path.read_bytes())
        data[8 + 48] = 4
        path.write_bytes(bytes(data))
        with pytest.raises(ContainerFormatError, match="flag"):
            read_modw(path)

    def test_oversized_dims(self, tmp_path):
        path = tmp_path / "huge.modw"
        dims = struct.pack("<6q", 0, 0, 2**31, 2**31, 1, 2**31)
        path.write_bytes(MODW_MAGIC + dims + struct.pack("<q", 1) + bytes(64))
        with pytest.raises(ContainerFormatError, match="Truncated payload") as exc_info:
            read_modw(path)
        assert exc_info.value.offset == len(MODW_MAGIC) + 56
