#  Copyright 2022 Upstream Data Inc
#
#  Licensed under the Apache License, Version 2.0 (the "License");
#  you may not use this file except in compliance with the License.
#  You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
#  Unless required by applicable law or agreed to in writing, software
#  distributed under the License is distributed on an "AS IS" BASIS,
#  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#  See the License for the specific language governing permissions and
#  limitations under the License.

import struct
import tempfile
import unittest
from pathlib import Path

import numpy as np

from pyuvos.errors import CheckpointError, ShapeError, TensorError
from pyuvos.settings import PyuvosSettings
from pyuvos.tensor import MultiplyCounter, Tensor, gradcheck, no_grad, ops
from pyuvos.tensor.checkpoint import dumps, load_checkpoint, loads, save_checkpoint
from tests.test_data import bilinear_scalar, naive_conv2d, naive_matmul


def t64(array, requires_grad=False) -> Tensor:
    return Tensor(np.asarray(array, dtype=np.float64), requires_grad=requires_grad)


class ElementwiseTest(unittest.TestCase):
    def test_elementwise_values(self):
        a = np.array([[1.0, -2.0], [3.0, 0.5]])
        b = np.array([[2.0, 4.0], [-1.0, 0.25]])
        cases = {
            "add": (ops.add, a + b),
            "sub": (ops.sub, a - b),
            "mul": (ops.mul, a * b),
        }
        for name, (op, expected) in cases.items():
            with self.subTest(msg=f"{name}", op=name):
                self.assertTrue(np.allclose(op(t64(a), t64(b)).data, expected))

    def test_elementwise_dispatch(self):
        x = t64([-1.0, 0.0, 2.0])
        self.assertTrue(np.array_equal(ops.elementwise("relu", x).data, [0.0, 0.0, 2.0]))
        self.assertTrue(np.allclose(ops.elementwise("sigmoid", x).data, 1 / (1 + np.exp(-x.data))))
        with self.assertRaises(TensorError):
            ops.elementwise("tanh", x)

    def test_broadcast_mismatch(self):
        with self.assertRaises(ShapeError):
            ops.add(t64(np.zeros((2, 3))), t64(np.zeros((4, 3))))

    def test_mul_grad_is_other_operand(self):
        a = t64([1.0, 2.0, 3.0], requires_grad=True)
        b = t64([4.0, -5.0, 6.0])
        ops.mul(a, b).sum().backward()
        self.assertTrue(np.array_equal(a.grad, b.data))

    def test_sigmoid_extremes(self):
        out = ops.sigmoid(Tensor(np.array([-1000.0, 0.0, 1000.0], dtype=np.float32))).data
        self.assertTrue(np.all(np.isfinite(out)))
        self.assertTrue(np.allclose(out, [0.0, 0.5, 1.0]))

    def test_check_finite(self):
        settings = PyuvosSettings()
        settings.check_finite = True
        try:
            with self.assertRaises(TensorError):
                ops.power(t64([0.0]), -1.0)
        finally:
            settings.check_finite = False


class MatmulTest(unittest.TestCase):
    def test_identity(self):
        x = np.random.default_rng(0).normal(size=(5, 5))
        self.assertTrue(np.allclose(ops.matmul(t64(np.eye(5)), t64(x)).data, x))

    def test_against_loops(self):
        rng = np.random.default_rng(1)
        for m, k, n in [(1, 1, 1), (3, 4, 2), (6, 5, 7)]:
            with self.subTest(msg=f"{m}x{k} @ {k}x{n}", m=m, k=k, n=n):
                a, b = rng.normal(size=(m, k)), rng.normal(size=(k, n))
                self.assertTrue(np.allclose(ops.matmul(t64(a), t64(b)).data, naive_matmul(a, b)))

    def test_inner_mismatch(self):
        with self.assertRaises(ShapeError):
            ops.matmul(t64(np.zeros((2, 3))), t64(np.zeros((4, 2))))

    def test_multiply_counter(self):
        a, b = t64(np.ones((2, 3, 4))), t64(np.ones((2, 4, 5)))
        with MultiplyCounter() as counter:
            ops.matmul(a, b, tag="matmul")
            ops.matmul(a, b)
        self.assertEqual(counter["matmul"], 2 * 3 * 4 * 5)
        self.assertEqual(counter["other"], 0)


class SoftmaxTest(unittest.TestCase):
    def test_examples(self):
        cases = [
            ([0.0, 0.0, 0.0], [1 / 3, 1 / 3, 1 / 3]),
            ([1000.0, 1000.0], [0.5, 0.5]),
        ]
        for row, expected in cases:
            with self.subTest(msg=f"{row}", row=row):
                out = ops.softmax(Tensor(np.array([row], dtype=np.float32)), axis=-1).data
                self.assertTrue(np.all(np.isfinite(out)))
                self.assertTrue(np.allclose(out[0], expected, atol=1e-7))

    def test_against_float64(self):
        row = np.array([1.0, 2.0, 3.0])
        expected = np.exp(row) / np.exp(row).sum()
        out = ops.softmax(Tensor(row.astype(np.float32)[None]), axis=-1).data[0]
        self.assertTrue(np.allclose(out, expected, atol=1e-6))

    def test_rows_sum_to_one(self):
        x = np.random.default_rng(2).uniform(-1e3, 1e3, size=(16, 32)).astype(np.float32)
        out = ops.softmax(Tensor(x), axis=-1).data
        self.assertTrue(np.allclose(out.sum(axis=-1), 1.0, atol=1e-6))

    def test_mask(self):
        x = t64([[1.0, 2.0, 3.0]])
        out = ops.softmax(x, axis=-1, mask=np.array([[True, False, True]])).data
        self.assertEqual(out[0, 1], 0.0)
        self.assertAlmostEqual(out.sum(), 1.0)
        with self.assertRaises(TensorError):
            ops.softmax(x, axis=-1, mask=np.zeros((1, 3), dtype=bool))


class ConvolutionTest(unittest.TestCase):
    def test_identity_kernel(self):
        x = np.random.default_rng(3).normal(size=(2, 3, 5, 5))
        w = np.eye(3).reshape(3, 3, 1, 1)
        self.assertTrue(np.allclose(ops.conv2d(t64(x), t64(w)).data, x))

    def test_all_ones_3x3(self):
        out = ops.conv2d(t64(np.ones((1, 1, 5, 5))), t64(np.ones((1, 1, 3, 3))), padding=1).data
        self.assertEqual(out[0, 0, 2, 2], 9.0)
        self.assertEqual(out[0, 0, 0, 0], 4.0)

    def test_against_loops(self):
        rng = np.random.default_rng(4)
        cases = [
            dict(c=2, o=3, k=3, stride=1, padding=1, groups=1),
            dict(c=4, o=4, k=2, stride=2, padding=0, groups=1),
            dict(c=4, o=6, k=3, stride=1, padding=1, groups=2),
            dict(c=3, o=3, k=7, stride=1, padding=3, groups=3),
        ]
        for case in cases:
            with self.subTest(msg=f"{case}", **case):
                x = rng.normal(size=(2, case["c"], 6, 6))
                w = rng.normal(size=(case["o"], case["c"] // case["groups"], case["k"], case["k"]))
                b = rng.normal(size=(case["o"],))
                out = ops.conv2d(t64(x), t64(w), t64(b), case["stride"], case["padding"], case["groups"]).data
                expected = naive_conv2d(x, w, b, case["stride"], case["padding"], case["groups"])
                self.assertTrue(np.allclose(out, expected))

    def test_depthwise_is_per_channel(self):
        rng = np.random.default_rng(5)
        x, w = rng.normal(size=(1, 4, 6, 6)), rng.normal(size=(4, 1, 3, 3))
        out = ops.conv2d(t64(x), t64(w), padding=1, groups=4).data
        for c in range(4):
            single = ops.conv2d(t64(x[:, c : c + 1]), t64(w[c : c + 1]), padding=1).data
            self.assertTrue(np.allclose(out[:, c : c + 1], single))

    def test_bad_extents(self):
        with self.assertRaises(ShapeError):
            ops.conv2d(t64(np.zeros((1, 1, 5, 5))), t64(np.zeros((1, 1, 2, 2))), stride=2)
        with self.assertRaises(ShapeError):
            ops.conv2d(t64(np.zeros((1, 3, 5, 5))), t64(np.zeros((1, 2, 3, 3))))

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        x, w = Tensor(rng.normal(size=(2, 3, 8, 8))), Tensor(rng.normal(size=(4, 3, 3, 3)))
        self.assertTrue(np.array_equal(ops.conv2d(x, w, padding=1).data, ops.conv2d(x, w, padding=1).data))


class PoolingTest(unittest.TestCase):
    def test_global_average_of_constant(self):
        out = ops.global_avg_pool(t64(np.full((2, 3, 4, 4), 2.5))).data
        self.assertEqual(out.shape, (2, 3, 1, 1))
        self.assertTrue(np.all(out == 2.5))

    def test_max_2x2(self):
        out = ops.pool2d(t64([[[[1.0, 2.0], [3.0, 4.0]]]]), "max", 2).data
        self.assertEqual(out.reshape(-1).tolist(), [4.0])

    def test_channel_mean(self):
        x = np.stack([np.full((3, 3), 1.0), np.full((3, 3), 5.0)])[None]
        self.assertTrue(np.all(ops.reduce(t64(x), "mean", axis=1).data == 3.0))

    def test_window_too_large(self):
        with self.assertRaises(ShapeError):
            ops.pool2d(t64(np.zeros((1, 1, 2, 2))), "avg", 3)


class ResampleTest(unittest.TestCase):
    def test_scale_one_is_identity(self):
        x = t64(np.random.default_rng(7).normal(size=(1, 2, 3, 3)))
        self.assertIs(ops.upsample_bilinear(x, 1), x)

    def test_constant_stays_constant(self):
        out = ops.upsample_bilinear(t64(np.full((1, 1, 3, 3), 0.7)), 4).data
        self.assertTrue(np.allclose(out, 0.7))

    def test_against_scalar_oracle(self):
        x = np.array([[0.0, 1.0], [2.0, 3.0]])
        out = ops.upsample_bilinear(t64(x[None, None]), 2).data[0, 0]
        self.assertTrue(np.allclose(out, bilinear_scalar(x, 4, 4)))
        self.assertTrue(np.allclose(out[0], [0.0, 0.25, 0.75, 1.0]))

    def test_bad_scale(self):
        for scale in (0, 1.5):
            with self.subTest(msg=f"scale {scale}", scale=scale):
                with self.assertRaises(ShapeError):
                    ops.upsample_bilinear(t64(np.zeros((1, 1, 2, 2))), scale)


class NormalizationTest(unittest.TestCase):
    def test_layer_norm_statistics(self):
        x = np.random.default_rng(8).normal(3.0, 5.0, size=(2, 16, 4, 4))
        out = ops.layer_norm(t64(x), t64(np.ones(16)), t64(np.zeros(16))).data
        self.assertTrue(np.allclose(out.mean(axis=1), 0.0, atol=1e-6))
        self.assertTrue(np.allclose(out.var(axis=1), 1.0, atol=1e-4))

    def test_layer_norm_of_normalized_input(self):
        x = np.random.default_rng(9).normal(size=(2, 8, 3, 3))
        x = (x - x.mean(axis=1, keepdims=True)) / x.std(axis=1, keepdims=True)
        out = ops.layer_norm(t64(x), t64(np.ones(8)), t64(np.zeros(8))).data
        self.assertTrue(np.allclose(out, x, atol=1e-5))

    def test_layer_norm_affine_shape(self):
        with self.assertRaises(ShapeError):
            ops.layer_norm(t64(np.zeros((1, 4, 2, 2))), t64(np.ones(3)), t64(np.zeros(3)))


class ShapeOpsTest(unittest.TestCase):
    def test_concat_split(self):
        rng = np.random.default_rng(10)
        parts = [t64(rng.normal(size=(2, c, 3, 3))) for c in (1, 3, 2)]
        joined = ops.concat(parts, axis=1)
        for part, back in zip(parts, ops.split(joined, [1, 3, 2], axis=1)):
            self.assertTrue(np.array_equal(part.data, back.data))
        with self.assertRaises(ShapeError):
            ops.split(joined, 4, axis=1)

    def test_window_roundtrip(self):
        x = t64(np.random.default_rng(11).normal(size=(2, 4, 6, 4)))
        tokens = ops.window_partition(x, 2)
        self.assertEqual(tokens.shape, (6, 2 * 2 * 2, 4))
        self.assertTrue(np.array_equal(ops.window_unpartition(tokens, 2, 2, 6, 4).data, x.data))


class BackwardTest(unittest.TestCase):
    def test_sum_gives_ones(self):
        x = t64(np.random.default_rng(12).normal(size=(3, 4)), requires_grad=True)
        x.sum().backward()
        self.assertTrue(np.array_equal(x.grad, np.ones((3, 4))))

    def test_square(self):
        x = t64([1.0, 2.0], requires_grad=True)
        (x * x).sum().backward()
        self.assertTrue(np.allclose(x.grad, [2.0, 4.0]))

    def test_shared_input_accumulates(self):
        x = t64([3.0], requires_grad=True)
        (x * 2.0 + x * 5.0).sum().backward()
        self.assertTrue(np.allclose(x.grad, [7.0]))

    def test_errors(self):
        x = t64([1.0, 2.0], requires_grad=True)
        with self.assertRaises(TensorError):
            (x * 2.0).backward()
        loss = (x * x).sum()
        loss.backward()
        with self.assertRaises(TensorError):
            loss.backward()
        with self.assertRaises(TensorError):
            t64([1.0]).sum().backward()

    def test_no_grad(self):
        x = t64([1.0], requires_grad=True)
        with no_grad():
            y = x * 2.0
        self.assertFalse(y.requires_grad)
        self.assertIsNone(y.creator)


class GradcheckTest(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(13)

    def leaf(self, *shape) -> Tensor:
        return t64(self.rng.normal(size=shape), requires_grad=True)

    def weights(self, shape) -> Tensor:
        return t64(self.rng.normal(size=shape))

    def test_ops(self):
        x, y = self.leaf(2, 3, 4, 4), self.leaf(2, 3, 4, 4)
        w, b = self.leaf(5, 3, 3, 3), self.leaf(5)
        w2 = self.leaf(5, 3, 2, 2)
        dw = self.leaf(3, 1, 3, 3)
        gamma, beta = self.leaf(3), self.leaf(3)
        a, m = self.leaf(2, 4, 5), self.leaf(2, 5, 3)
        s = self.leaf(4, 6)
        pos = t64(self.rng.uniform(0.5, 2.0, size=(2, 3)), requires_grad=True)
        cases = {
            "add": (lambda: ops.add(x, y), [x, y]),
            "mul": (lambda: ops.mul(x, y), [x, y]),
            "power": (lambda: ops.power(pos, 3.0), [pos]),
            "divide": (lambda: x / (y * y + 1.0), [x, y]),
            "sigmoid": (lambda: ops.sigmoid(x), [x]),
            "relu": (lambda: ops.relu(x), [x]),
            "matmul": (lambda: ops.matmul(a, m), [a, m]),
            "softmax": (lambda: ops.softmax(s, axis=-1), [s]),
            "conv2d": (lambda: ops.conv2d(x, w, b, padding=1), [x, w, b]),
            "conv2d strided": (lambda: ops.conv2d(x, w2, None, stride=2), [x, w2]),
            "depthwise": (lambda: ops.conv2d(x, dw, padding=1, groups=3), [x, dw]),
            "avg pool": (lambda: ops.pool2d(x, "avg", 2), [x]),
            "max pool": (lambda: ops.pool2d(x, "max", 2), [x]),
            "global max": (lambda: ops.global_max_pool(x), [x]),
            "channel max": (lambda: ops.reduce(x, "max", axis=1), [x]),
            "upsample": (lambda: ops.upsample_bilinear(x, 2), [x]),
            "layer norm": (lambda: ops.layer_norm(x, gamma, beta), [x, gamma, beta]),
            "batch norm": (lambda: ops.batch_norm(x, gamma, beta), [x, gamma, beta]),
            "concat": (lambda: ops.concat([x, y], axis=1), [x, y]),
            "window partition": (lambda: ops.window_partition(x, 2), [x]),
            "pad": (lambda: ops.pad2d(x, (0, 1, 1, 0)), [x]),
        }
        for name, (fn, leaves) in cases.items():
            with self.subTest(msg=f"gradcheck {name}", op=name):
                out_shape = fn().shape
                weights = self.weights(out_shape)
                result = gradcheck(lambda: (fn() * weights).sum(), leaves)
                self.assertTrue(result.passed, f"{name}: {result.failures[:3]}")

    def test_bce(self):
        logits = self.leaf(2, 1, 4, 4)
        target = t64((self.rng.random((2, 1, 4, 4)) > 0.5).astype(np.float64))
        result = gradcheck(lambda: ops.binary_cross_entropy(logits, target), [logits])
        self.assertTrue(result.passed)

    def test_rejects_float32(self):
        x = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
        with self.assertRaises(TensorError):
            gradcheck(lambda: x.sum(), [x])


class CheckpointTest(unittest.TestCase):
    def test_layout(self):
        blob = dumps({"a": np.array([1.5], dtype=np.float32)})
        u32 = struct.Struct("<I").pack
        expected = b"MTNK" + u32(1) + u32(1) + u32(1) + b"a" + u32(1) + u32(1) + np.float32(1.5).tobytes()
        self.assertEqual(blob, expected)

    def test_roundtrip(self):
        tensors = {
            "encoder.weight": np.random.default_rng(14).normal(size=(4, 3, 2, 2)).astype(np.float32),
            "bias": np.zeros(4, dtype=np.float32),
        }
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "model.mtnk"
            save_checkpoint(path, tensors)
            loaded = load_checkpoint(path)
        self.assertEqual(list(loaded), list(tensors))
        for name in tensors:
            self.assertTrue(np.array_equal(loaded[name], tensors[name]))

    def test_corrupt(self):
        blob = dumps({"a": np.ones((2, 2), dtype=np.float32)})
        cases = {
            "magic": b"XXXX" + blob[4:],
            "version": blob[:4] + struct.pack("<I", 2) + blob[8:],
            "truncated": blob[:-3],
            "trailing": blob + b"\x00",
            "name length past the end": blob[:12] + struct.pack("<I", 1000) + blob[16:],
            "undecodable name": blob[:16] + b"\xff" + blob[17:],
        }
        for name, data in cases.items():
            with self.subTest(msg=f"{name}", case=name):
                with self.assertRaises(CheckpointError):
                    loads(data)
        with self.assertRaisesRegex(CheckpointError, "bad tensor name at byte 16"):
            loads(blob[:16] + b"\xff" + blob[17:])

    def test_missing_file(self):
        with self.assertRaises(CheckpointError):
            load_checkpoint("/nonexistent/model.mtnk")


if __name__ == "__main__":
    unittest.main()
