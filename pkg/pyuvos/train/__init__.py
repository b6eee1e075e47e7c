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


from pyuvos.train.loss import BCE_EPS, bce_multilevel
from pyuvos.train.optim import AdamW, adamw_step
from pyuvos.train.trainer import Trainer, train

__all__ = ["AdamW", "BCE_EPS", "Trainer", "adamw_step", "bce_multilevel", "train"]
