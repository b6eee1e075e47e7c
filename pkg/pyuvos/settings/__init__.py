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

from dataclasses import dataclass

from pyuvos.misc import Singleton


@dataclass
class PyuvosSettings(metaclass=Singleton):
    """Process-wide runtime switches.

    Attributes:
        default_dtype: Float type used for new tensors and parameters.
        check_finite: Raise `TensorError` as soon as any op produces NaN or Inf.
        eval_workers: How many sequences are evaluated or inferred at once.
        debug: Log at DEBUG level.
        logfile: Write logs to `logfile.txt` instead of stderr.
    """

    default_dtype: str = "float32"
    check_finite: bool = False

    eval_workers: int = 4

    debug: bool = False
    logfile: bool = False
