"""
Unit tests for the temporal convolutional encoders and their checkpoints
"""

import shutil
import struct
import tempfile
import unittest
from pathlib import Path

import numpy as np

from cocoa.batching import ModalityBatch
from cocoa.constants import CHECKPOINT_NAME
from cocoa.encoder import (
    EncoderConfig, EncoderParams, encode, encode_concat, init_params, load_checkpoint,
    parameter_count, params_hash, project, read_tensors, save_checkpoint, write_tensors,
)
from cocoa.errors import ConfigurationError, CorruptionError, InputError, VersionError
from cocoa.tensor import DiffTensor, GradientTape, tensor_sum

SMALL = dict(kernel_sizes=(3, 3, 2), filter_counts=(4, 5, 3), projection_dim=6, fusion_dim=5)


def small_config(names=("acc", "gyro"), channels=(2, 3), window=12):
    return EncoderConfig(modality_names=names, input_channels=channels, window_length=window, **SMALL)


def random_batch(config, n=4, seed=0):
    rng = np.random.default_rng(seed)
    return ModalityBatch(
        modalities=[(name, rng.normal(size=(n, config.window_length, c)))
                    for name, c in zip(config.modality_names, config.input_channels)],
        window_ids=np.arange(n),
    )


class TestEncoderConfig(unittest.TestCase):
    """Architecture validation and parameter counts"""

    def test_parameter_count(self):
        config = small_config()
        # conv(k*c_in*c_out + c_out) + layer norm (2*c_out) per layer, then projection, then fusion
        acc = (3 * 2 * 4 + 4 + 8) + (3 * 4 * 5 + 5 + 10) + (2 * 5 * 3 + 3 + 6) + (3 * 6 + 6)
        gyro = (3 * 3 * 4 + 4 + 8) + (3 * 4 * 5 + 5 + 10) + (2 * 5 * 3 + 3 + 6) + (3 * 6 + 6)
        fusion = 6 * 5 + 5
        self.assertEqual(parameter_count(config), acc + gyro + fusion)
        self.assertEqual(init_params(config).num_values(), parameter_count(config))

    def test_default_architecture(self):
        config = EncoderConfig(modality_names=("m0",), input_channels=(3,), window_length=64)
        self.assertEqual(config.kernel_sizes, (10, 8, 4))
        self.assertEqual(config.filter_counts, (24, 48, 20))
        self.assertEqual(config.output_length, 64 - 22 + 3)

    def test_invalid_configs(self):
        cases = [
            dict(names=("a",), channels=(2,), window=5),      # no time step left
            dict(names=("a", "a"), channels=(2, 2), window=12),
            dict(names=("a", "b"), channels=(2,), window=12),
            dict(names=("a",), channels=(0,), window=12),
        ]
        for case in cases:
            with self.subTest(case=case):
                with self.assertRaises(ConfigurationError):
                    small_config(**case)

    def test_dict_round_trip(self):
        config = small_config()
        self.assertEqual(EncoderConfig.from_dict(config.to_dict()), config)
        with self.assertRaises(ConfigurationError):
            EncoderConfig.from_dict({**config.to_dict(), "depth": 4})


class TestEncode(unittest.TestCase):
    """Forward pass properties"""

    def setUp(self):
        self.config = small_config()
        self.params = init_params(self.config, seed=3)

    def test_output_shapes(self):
        z = encode(self.params, random_batch(self.config, n=5))
        self.assertEqual(z.num_modalities, 2)
        for embedding in z.embeddings:
            self.assertEqual(embedding.shape, (5, 5))
        self.assertEqual(encode_concat(self.params, random_batch(self.config, n=5)).shape, (5, 10))

    def test_zero_input_gives_fusion_bias(self):
        self.params["fusion.bias"].data = np.arange(5.0)
        batch = ModalityBatch([("acc", np.zeros((3, 12, 2))), ("gyro", np.zeros((3, 12, 3)))], np.arange(3))
        for embedding in encode(self.params, batch).embeddings:
            np.testing.assert_allclose(embedding.data, np.tile(np.arange(5.0), (3, 1)), atol=1e-12)

    def test_identical_windows_identical_rows(self):
        batch = random_batch(self.config, n=3)
        for _, array in batch.modalities:
            array[2] = array[0]
        for embedding in encode(self.params, batch).embeddings:
            np.testing.assert_array_equal(embedding.data[0], embedding.data[2])

    def test_concat_ordering(self):
        batch = random_batch(self.config, n=4)
        z = encode(self.params, batch)
        concat = encode_concat(self.params, batch).data
        np.testing.assert_array_equal(concat[:, :5], z.embeddings[0].data)
        np.testing.assert_array_equal(concat[:, 5:], z.embeddings[1].data)

        single = small_config(names=("acc",), channels=(2,))
        single_params = init_params(single, seed=1)
        single_batch = random_batch(single, n=4)
        np.testing.assert_array_equal(encode_concat(single_params, single_batch).data,
                                      encode(single_params, single_batch).embeddings[0].data)

    def test_modality_order_permutes_blocks(self):
        batch = random_batch(self.config, n=4)
        reversed_config = small_config(names=("gyro", "acc"), channels=(3, 2))
        reversed_params = EncoderParams(reversed_config, self.params.tensors)
        reversed_batch = ModalityBatch(list(reversed(batch.modalities)), batch.window_ids)
        original = encode_concat(self.params, batch).data
        swapped = encode_concat(reversed_params, reversed_batch).data
        np.testing.assert_array_equal(swapped, np.concatenate([original[:, 5:], original[:, :5]], axis=1))

    def test_batch_equivariance(self):
        batch = random_batch(self.config, n=6, seed=4)
        order = np.random.default_rng(5).permutation(6)
        base = encode_concat(self.params, batch).data
        permuted = encode_concat(self.params, batch.permute(order)).data
        np.testing.assert_allclose(permuted, base[order], atol=1e-12)

    def test_modality_isolation(self):
        batch = random_batch(self.config, n=3)
        gyro_params = list(self.params.branch("gyro").values())
        with GradientTape() as tape:
            loss = tensor_sum(project(self.params, "acc", batch.modalities[0][1]))
        for grad in tape.backward(loss, gyro_params):
            np.testing.assert_array_equal(grad, np.zeros_like(grad))

        before = project(self.params, "acc", batch.modalities[0][1]).data
        self.params["gyro.conv0.kernel"].data += 1.0
        np.testing.assert_array_equal(project(self.params, "acc", batch.modalities[0][1]).data, before)

    def test_shape_mismatch_names_modality(self):
        batch = ModalityBatch([("acc", np.zeros((2, 12, 2))), ("gyro", np.zeros((2, 11, 3)))], np.arange(2))
        with self.assertRaisesRegex(ConfigurationError, "gyro"):
            encode(self.params, batch)
        wrong_order = ModalityBatch(list(reversed(random_batch(self.config).modalities)), np.arange(4))
        with self.assertRaises(ConfigurationError):
            encode(self.params, wrong_order)

    def test_fusion_gradient(self):
        config = small_config(names=("acc",), channels=(2,))
        params = init_params(config, seed=6)
        batch = random_batch(config, n=3, seed=7)
        weight = params["fusion.weight"]

        def loss_value():
            return float(np.sum(encode_concat(params.freeze(), batch).data ** 2))

        with GradientTape() as tape:
            out = encode_concat(params, batch)
            loss = tensor_sum(out * out)
        (grad,) = tape.backward(loss, [weight])
        numeric = np.zeros_like(weight.data)
        h = 1e-5
        for pos in np.ndindex(weight.shape):
            original = weight.data[pos]
            weight.data[pos] = original + h
            up = loss_value()
            weight.data[pos] = original - h
            down = loss_value()
            weight.data[pos] = original
            numeric[pos] = (up - down) / (2 * h)
        error = np.linalg.norm(grad - numeric) / (np.linalg.norm(grad) + np.linalg.norm(numeric))
        self.assertLessEqual(error, 1e-4)


class TestCheckpoint(unittest.TestCase):
    """Binary checkpoint container"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.params = init_params(small_config(), seed=9)

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_round_trip(self):
        save_checkpoint(self.params, self.test_dir)
        loaded = load_checkpoint(self.test_dir)
        self.assertEqual(params_hash(loaded), params_hash(self.params))
        self.assertEqual(loaded.config, self.params.config)
        self.assertEqual(loaded.names, self.params.names)

    def test_header_layout(self):
        path = write_tensors(Path(self.test_dir) / "t.bin", {"w": np.ones((2, 3))})
        blob = path.read_bytes()
        self.assertEqual(blob[:4], b"COCO")
        self.assertEqual(struct.unpack("<I", blob[4:8])[0], 1)
        np.testing.assert_array_equal(read_tensors(path)["w"], np.ones((2, 3)))

    def test_truncated_file(self):
        path = save_checkpoint(self.params, self.test_dir)
        blob = path.read_bytes()
        path.write_bytes(blob[:-5])
        with self.assertRaises(CorruptionError):
            load_checkpoint(self.test_dir)

    def test_bad_magic_and_version(self):
        path = save_checkpoint(self.params, self.test_dir)
        blob = path.read_bytes()
        path.write_bytes(b"XXXX" + blob[4:])
        with self.assertRaises(CorruptionError):
            load_checkpoint(self.test_dir)
        path.write_bytes(blob[:4] + struct.pack("<I", 99) + blob[8:])
        with self.assertRaises(VersionError):
            load_checkpoint(self.test_dir)

    def test_missing_checkpoint(self):
        with self.assertRaises(InputError):
            load_checkpoint(Path(self.test_dir) / "nowhere")
        save_checkpoint(self.params, self.test_dir)
        (Path(self.test_dir) / CHECKPOINT_NAME).unlink()
        with self.assertRaises(InputError):
            load_checkpoint(self.test_dir)

    def test_frozen_copy_is_not_recorded(self):
        frozen = self.params.freeze()
        self.assertTrue(all(not t.requires_grad for t in frozen))
        self.assertEqual(params_hash(frozen), params_hash(self.params))
        batch = random_batch(self.params.config, n=2)
        with GradientTape() as tape:
            out = encode_concat(frozen, batch)
        self.assertEqual(len(tape.nodes), 0)
        self.assertIsInstance(out, DiffTensor)


if __name__ == '__main__':
    unittest.main()
