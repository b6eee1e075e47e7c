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


class PyuvosError(Exception):
    default_message = "Unknown pyuvos error."

    def __init__(self, *args):
        if args:
            self.message = args[0]
        else:
            self.message = None

    def __str__(self):
        if self.message:
            return f"{self.message}"
        else:
            return self.default_message


class TensorError(PyuvosError):
    default_message = "Invalid tensor operation."


class ShapeError(PyuvosError):
    default_message = "Incompatible tensor shapes."


class ConfigError(PyuvosError):
    default_message = "Invalid configuration."


class CheckpointError(PyuvosError):
    default_message = "Invalid or incompatible checkpoint."


class DataError(PyuvosError):
    default_message = "Invalid input data."


class TrainingError(PyuvosError):
    default_message = "Training failed."


class MetricError(PyuvosError):
    default_message = "Invalid metric input."
