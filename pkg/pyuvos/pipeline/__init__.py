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


from pyuvos.pipeline.clips import ClipPlan, plan_clips
from pyuvos.pipeline.evaluate import evaluate, evaluate_sequence
from pyuvos.pipeline.infer import (
    config_sidecar,
    infer,
    infer_arrays,
    infer_sequences,
    load_model,
    run_inference,
    write_predictions,
)
from pyuvos.pipeline.sweep import ClipLengthSweep, sweep_clip_length, sweep_values

__all__ = [
    "ClipLengthSweep",
    "ClipPlan",
    "config_sidecar",
    "evaluate",
    "evaluate_sequence",
    "infer",
    "infer_arrays",
    "infer_sequences",
    "load_model",
    "plan_clips",
    "run_inference",
    "sweep_clip_length",
    "sweep_values",
    "write_predictions",
]
