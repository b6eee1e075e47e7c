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

import asyncio
import io
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

import numpy as np

from pyuvos.cli import main
from pyuvos.config import ModelConfig, dump_config
from pyuvos.data.flow import encode_flow, make_color_wheel, wheel_position
from pyuvos.data.io import VideoSequence, list_images, read_mask, write_mask, write_saliency
from pyuvos.data.synthetic import SyntheticClipSpec, make_clip, write_clip
from pyuvos.errors import CheckpointError, ConfigError, DataError
from pyuvos.models import MTNet
from pyuvos.pipeline import (
    ClipLengthSweep,
    evaluate,
    infer,
    infer_arrays,
    infer_sequences,
    load_model,
    plan_clips,
    sweep_clip_length,
    sweep_values,
    write_predictions,
)
from pyuvos.tensor import save_checkpoint
from tests.test_data import square_mask, tiny_model, tiny_model_config, toy_config_toml


def small_clip(frames: int, seed: int = 1):
    return make_clip(SyntheticClipSpec(seed=seed, canvas=32, size=8, distractors=0), frames)


class TempDirTestCase(unittest.TestCase):
    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.tmp = Path(tmp.name)


class ClipPlanTest(unittest.TestCase):
    def test_examples(self):
        cases = [
            (12, 4, [(0, 4), (4, 8), (8, 12)]),
            (10, 4, [(0, 4), (4, 8), (8, 10)]),
            (3, 12, [(0, 3)]),
            (1, 1, [(0, 1)]),
            (5, 1, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]),
        ]
        for frames, clip_len, bounds in cases:
            with self.subTest(msg=f"N={frames}, T={clip_len}", frames=frames, clip_len=clip_len):
                self.assertEqual(plan_clips(frames, clip_len).bounds, bounds)

    def test_random_plans_cover_every_frame_once(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            frames, clip_len = int(rng.integers(1, 60)), int(rng.integers(1, 20))
            plan = plan_clips(frames, clip_len)
            with self.subTest(msg=f"N={frames}, T={clip_len}", frames=frames, clip_len=clip_len):
                covered = [t for start, stop in plan for t in range(start, stop)]
                self.assertEqual(covered, list(range(frames)))
                self.assertTrue(all(stop - start == clip_len for start, stop in plan.bounds[:-1]))
                self.assertEqual(plan.count, -(-frames // clip_len))

    def test_invalid(self):
        with self.assertRaises(ConfigError):
            plan_clips(0, 4)
        with self.assertRaises(ConfigError):
            plan_clips(4, 0)


class FlowEncodingTest(unittest.TestCase):
    def test_zero_flow_is_white(self):
        self.assertTrue(np.all(encode_flow(np.zeros((4, 5)), np.zeros((4, 5))) == 255))

    def test_wheel(self):
        wheel = make_color_wheel()
        self.assertEqual(wheel.shape, (55, 3))
        self.assertEqual(wheel[0].tolist(), [255, 0, 0])

    def test_leftward_flow(self):
        image = encode_flow(np.full((2, 2), -1.0), np.zeros((2, 2)))
        self.assertEqual(image[0, 0].tolist(), [0, 209, 255])
        self.assertEqual(int(image.min()), 0)

    def test_opposite_directions(self):
        rng = np.random.default_rng(1)
        u, v = rng.normal(size=(8, 8)), rng.normal(size=(8, 8))
        shift = (wheel_position(-u, -v) - wheel_position(u, v)) % 54
        self.assertTrue(np.allclose(shift, 27.0))

    def test_magnitude_fades_to_white(self):
        u = np.array([[0.0, 0.5, 1.0]])
        image = encode_flow(u, np.zeros_like(u)).astype(int)
        self.assertTrue(np.all(image[0, 0] == 255))
        self.assertTrue(np.all(image[0, 1] >= image[0, 2]))

    def test_invalid(self):
        with self.assertRaises(DataError):
            encode_flow(np.zeros((2, 3)), np.zeros((3, 2)))
        with self.assertRaises(DataError):
            encode_flow(np.full((2, 2), np.nan), np.zeros((2, 2)))


class InferenceTest(TempDirTestCase):
    def setUp(self):
        super().setUp()
        self.model = MTNet(tiny_model(), seed=0).eval()
        self.clip = small_clip(7)
        write_clip(self.clip, self.tmp / "clip")
        self.sequence = VideoSequence.from_dirs(self.tmp / "clip" / "frames", self.tmp / "clip" / "flows", self.tmp / "clip" / "masks")

    def test_sequence_from_dirs(self):
        self.assertEqual(len(self.sequence), 7)
        self.assertEqual(self.sequence.size, (32, 32))
        self.assertEqual(self.sequence.name, "frames")
        self.assertEqual(len(self.sequence.masks), 7)

    def test_missing_last_flow_is_duplicated(self):
        (self.tmp / "clip" / "flows" / "00006.png").unlink()
        sequence = VideoSequence.from_dirs(self.tmp / "clip" / "frames", self.tmp / "clip" / "flows")
        self.assertEqual(sequence.flows[-1], sequence.flows[-2])
        (self.tmp / "clip" / "flows" / "00005.png").unlink()
        with self.assertRaises(DataError):
            VideoSequence.from_dirs(self.tmp / "clip" / "frames", self.tmp / "clip" / "flows")

    def test_one_mask_per_frame(self):
        prediction = infer(self.sequence, self.model)
        self.assertEqual(len(prediction), 7)
        self.assertEqual(prediction.stems, [f"{t:05d}" for t in range(7)])
        self.assertEqual(prediction.masks.shape, (7, 32, 32))
        self.assertTrue(set(np.unique(prediction.masks)) <= {0, 1})
        self.assertTrue(np.all((prediction.probabilities >= 0) & (prediction.probabilities <= 1)))

    def test_deterministic(self):
        first = infer(self.sequence, self.model, clip_len=3)
        second = infer(self.sequence, self.model, clip_len=3)
        self.assertTrue(np.array_equal(first.probabilities, second.probabilities))
        from_arrays = infer_arrays(self.model, self.clip.frames, self.clip.flows, clip_len=3)
        self.assertTrue(np.allclose(from_arrays.probabilities, first.probabilities))

    def test_single_frame(self):
        prediction = infer_arrays(self.model, self.clip.frames[:1], self.clip.flows[:1])
        self.assertEqual(len(prediction), 1)

    def test_any_clip_length(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            frames, clip_len = int(rng.integers(1, 8)), int(rng.integers(1, 9))
            with self.subTest(msg=f"N={frames}, T={clip_len}", frames=frames, clip_len=clip_len):
                prediction = infer_arrays(self.model, self.clip.frames[:frames], self.clip.flows[:frames], clip_len)
                self.assertEqual(len(prediction), frames)

    def test_original_size_restored(self):
        frames = np.repeat(np.repeat(self.clip.frames[:2], 2, axis=1), 3, axis=2)
        flows = np.repeat(np.repeat(self.clip.flows[:2], 2, axis=1), 3, axis=2)
        prediction = infer_arrays(self.model, frames, flows)
        self.assertEqual(prediction.masks.shape, (2, 64, 96))

    def test_frame_independent_model_ignores_clip_length(self):
        config = ModelConfig().from_dict({**tiny_model_config, "use_mtt": False})
        model = MTNet(config, seed=0).eval()
        reference = infer_arrays(model, self.clip.frames, self.clip.flows, clip_len=7)
        for clip_len in (1, 2, 3, 5):
            with self.subTest(msg=f"T={clip_len}", clip_len=clip_len):
                prediction = infer_arrays(model, self.clip.frames, self.clip.flows, clip_len=clip_len)
                self.assertTrue(np.allclose(prediction.probabilities, reference.probabilities, atol=1e-5))
                decided = np.abs(reference.probabilities - 0.5) > 1e-4
                self.assertTrue(np.array_equal(prediction.masks[decided], reference.masks[decided]))

    def test_infer_sequences_keeps_order(self):
        other = small_clip(4, seed=5)
        write_clip(other, self.tmp / "other")
        second = VideoSequence.from_dirs(self.tmp / "other" / "frames", self.tmp / "other" / "flows")
        results = asyncio.run(infer_sequences([self.sequence, second], self.model))
        self.assertEqual([len(r) for r in results], [7, 4])

    def test_write_predictions(self):
        prediction = infer(self.sequence, self.model)
        write_predictions(prediction, self.tmp / "pred")
        masks = list_images(self.tmp / "pred" / "masks")
        self.assertEqual([p.stem for p in masks], self.sequence.stems)
        self.assertTrue(set(np.unique(read_mask(masks[0]))) <= {0, 255})
        self.assertEqual(len(list_images(self.tmp / "pred" / "saliency")), 7)

    def test_load_model(self):
        ckpt = self.tmp / "model.ckpt"
        save_checkpoint(ckpt, self.model.state_dict())
        with self.assertRaises(CheckpointError):
            load_model(ckpt)
        Path(f"{ckpt}.toml").write_text(dump_config(tiny_model()))
        loaded = load_model(ckpt)
        for name, array in self.model.state_dict().items():
            with self.subTest(msg=name, name=name):
                self.assertTrue(np.array_equal(loaded.state_dict()[name], array))
        wrong = ModelConfig().from_dict({**tiny_model_config, "stage_channels": [8, 16, 32, 64]})
        with self.assertRaises(CheckpointError):
            load_model(ckpt, wrong)


class EvaluateTest(TempDirTestCase):
    def setUp(self):
        super().setUp()
        self.gts = [square_mask(32, 4 + 2 * t, 6, 10) for t in range(5)]
        for t, gt in enumerate(self.gts):
            write_mask(self.tmp / "gt" / f"{t:05d}.png", gt)

    def write_preds(self, masks, subdir="masks", root=None):
        root = root or self.tmp / "pred"
        for t, mask in enumerate(masks):
            if subdir == "saliency":
                write_saliency(root / subdir / f"{t:05d}.png", mask)
            else:
                write_mask(root / subdir / f"{t:05d}.png", mask)

    def test_perfect_predictions(self):
        self.write_preds(self.gts)
        report = evaluate(self.tmp / "pred", self.tmp / "gt")
        self.assertEqual(len(report.sequences), 1)
        self.assertEqual(report.aggregate.j_mean, 1.0)
        self.assertEqual(report.aggregate.f_mean, 1.0)
        self.assertEqual(report.aggregate.mae, 0.0)

    def test_inverted_predictions(self):
        self.write_preds([1 - g for g in self.gts])
        report = evaluate(self.tmp / "pred", self.tmp / "gt")
        self.assertEqual(report.aggregate.mae, 1.0)
        self.assertEqual(report.aggregate.j_mean, 0.0)

    def test_background_saliency(self):
        self.write_preds([np.zeros((32, 32))] * 5, subdir="saliency")
        report = evaluate(self.tmp / "pred", self.tmp / "gt", mode="vsod")
        self.assertAlmostEqual(report.aggregate.mae, 100 / 1024)
        self.assertEqual(report.aggregate.j_mean, 0.0)

    def test_several_sequences(self):
        for name in ("b", "a"):
            for t, gt in enumerate(self.gts):
                write_mask(self.tmp / "multi" / name / f"{t:05d}.png", gt)
            self.write_preds(self.gts, root=self.tmp / "pred" / name)
        report = evaluate(self.tmp / "pred", self.tmp / "multi")
        self.assertEqual([row.name for row in report.sequences], ["a", "b"])
        self.assertEqual(report.aggregate.frames, 10)
        self.assertEqual(report.as_csv().count("\n"), 4)

    def test_errors(self):
        (self.tmp / "empty").mkdir()
        with self.subTest(msg="no ground truth"):
            with self.assertRaises(DataError):
                evaluate(self.tmp / "pred", self.tmp / "empty")
        with self.subTest(msg="missing ground-truth directory"):
            with self.assertRaises(DataError):
                evaluate(self.tmp / "pred", self.tmp / "nowhere")
        with self.subTest(msg="missing prediction"):
            self.write_preds(self.gts[:4])
            with self.assertRaises(DataError):
                evaluate(self.tmp / "pred", self.tmp / "gt")
        with self.subTest(msg="size mismatch"):
            write_mask(self.tmp / "pred" / "masks" / "00004.png", np.zeros((16, 32)))
            with self.assertRaises(DataError):
                evaluate(self.tmp / "pred", self.tmp / "gt")
        with self.subTest(msg="unknown mode"):
            with self.assertRaises(ConfigError):
                evaluate(self.tmp / "pred", self.tmp / "gt", mode="sod")


class SweepTest(TempDirTestCase):
    def test_sweep_values(self):
        self.assertEqual(sweep_values([4, 1, 4, 2], default=12), [1, 2, 4, 12])
        self.assertEqual(sweep_values([], default=12), [12])
        with self.assertRaises(ConfigError):
            sweep_values([0, 2])

    def test_single_frame_video(self):
        model = MTNet(tiny_model(), seed=0).eval()
        write_clip(small_clip(1), self.tmp / "one")
        sequence = VideoSequence.from_dirs(self.tmp / "one" / "frames", self.tmp / "one" / "flows", self.tmp / "one" / "masks")
        table = sweep_clip_length([sequence], model, [1, 2, 8], default=4)
        self.assertEqual(table.clip_lengths, [1, 2, 4, 8])
        scores = {row.metrics.jf_mean for row in table.rows}
        self.assertEqual(len(scores), 1)
        self.assertTrue(table.as_csv().startswith(ClipLengthSweep.CSV_HEADER + "\n"))
        self.assertEqual(table[4].metrics.frames, 1)
        with self.assertRaises(KeyError):
            table[3]

    def test_needs_ground_truth(self):
        model = MTNet(tiny_model(), seed=0).eval()
        write_clip(small_clip(2), self.tmp / "two")
        sequence = VideoSequence.from_dirs(self.tmp / "two" / "frames", self.tmp / "two" / "flows")
        with self.assertRaises(DataError):
            sweep_clip_length([sequence], model, [1])


class CommandLineTest(TempDirTestCase):
    def run_cli(self, *argv) -> int:
        with redirect_stdout(io.StringIO()), redirect_stderr(io.StringIO()):
            return main([str(a) for a in argv])

    def test_end_to_end(self):
        spec = self.tmp / "clip.toml"
        spec.write_text("seed = 3\ncanvas = 32\nsize = 8\nframes = 5\n")
        self.assertEqual(self.run_cli("make-data", "--spec", spec, "--out", self.tmp / "data"), 0)
        self.assertEqual(len(list_images(self.tmp / "data" / "frames")), 5)

        config = self.tmp / "toy.toml"
        config.write_text(toy_config_toml)
        ckpt = self.tmp / "model.ckpt"
        self.assertEqual(self.run_cli("train", "--config", config, "--steps", 1, "--out", ckpt), 0)
        for path in (ckpt, Path(f"{ckpt}.toml"), Path(f"{ckpt}.csv")):
            with self.subTest(msg=path.name, path=path.name):
                self.assertTrue(path.is_file())

        data = self.tmp / "data"
        code = self.run_cli("infer", "--ckpt", ckpt, "--frames", data / "frames", "--flows", data / "flows", "--out", self.tmp / "pred", "--clip-len", 2)
        self.assertEqual(code, 0)
        self.assertEqual(len(list_images(self.tmp / "pred" / "masks")), 5)

        report = self.tmp / "report.csv"
        self.assertEqual(self.run_cli("eval", "--pred", self.tmp / "pred", "--gt", data / "masks", "--report", report), 0)
        self.assertEqual(len(report.read_text().splitlines()), 3)
        self.assertTrue(report.with_suffix(".json").is_file())

        sweep = self.tmp / "sweep.csv"
        code = self.run_cli(
            "sweep", "--ckpt", ckpt, "--frames", data / "frames", "--flows", data / "flows", "--gt", data / "masks", "--t", "1,2", "--report", sweep
        )
        self.assertEqual(code, 0)
        self.assertEqual(sweep.read_text().splitlines()[0], ClipLengthSweep.CSV_HEADER)
        self.assertEqual(len(sweep.read_text().splitlines()), 4)

    def test_error_exit(self):
        stderr = io.StringIO()
        with redirect_stdout(io.StringIO()), redirect_stderr(stderr):
            code = main(["eval", "--pred", str(self.tmp / "p"), "--gt", str(self.tmp / "g")])
        self.assertEqual(code, 1)
        self.assertIn("error: DataError", stderr.getvalue())

    def test_bad_clip_spec(self):
        spec = self.tmp / "clip.toml"
        spec.write_text("seed = 3\ncolour = 1\n")
        self.assertEqual(self.run_cli("make-data", "--spec", spec, "--out", self.tmp / "data"), 1)


if __name__ == "__main__":
    unittest.main()
