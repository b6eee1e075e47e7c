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

"""Named-tensor checkpoint container.

Layout, all integers little-endian u32:

    b"MTNK" | version | entry count
    per entry: name length | UTF-8 name | rank | extents... | f32 payload
"""

import logging
import struct
from pathlib import Path
from typing import Dict, Union

import numpy as np

from pyuvos.errors import CheckpointError

MAGIC = b"MTNK"
VERSION = 1

_U32 = struct.Struct("<I")


def dumps(tensors: Dict[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, _U32.pack(VERSION), _U32.pack(len(tensors))]
    for name, array in tensors.items():
        encoded = name.encode("utf-8")
        array = np.ascontiguousarray(array, dtype="<f4")
        chunks.append(_U32.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_U32.pack(array.ndim))
        chunks.extend(_U32.pack(extent) for extent in array.shape)
        chunks.append(array.tobytes(order="C"))
    return b"".join(chunks)


def loads(blob: bytes) -> Dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {blob[:4]!r}")
    offset = 4

    def read_u32() -> int:
        nonlocal offset
        if offset + 4 > len(blob):
            raise CheckpointError("checkpoint truncated")
        (value,) = _U32.unpack_from(blob, offset)
        offset += 4
        return value

    version = read_u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    tensors = {}
    for _ in range(read_u32()):
        name_len = read_u32()
        if offset + name_len > len(blob):
            raise CheckpointError(f"checkpoint truncated inside the tensor name at byte {offset}")
        try:
            name = blob[offset : offset + name_len].decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"bad tensor name at byte {offset}")
        offset += name_len
        shape = tuple(read_u32() for _ in range(read_u32()))
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 4 * count
        if end > len(blob):
            raise CheckpointError(f"checkpoint truncated inside {name}")
        tensors[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shape).astype(np.float32)
        offset = end
    if offset != len(blob):
        raise CheckpointError(f"{len(blob) - offset} trailing bytes after last entry")
    return tensors


def save_checkpoint(path: Union[str, Path], tensors: Dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(tensors))
    logging.debug(f"{path}: wrote {len(tensors)} tensors")


def load_checkpoint(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}")
    return loads(blob)
