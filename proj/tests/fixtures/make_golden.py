# SPDX-License-Identifier: Apache-2.0
"""Writes golden_v1.icpr with an encoder independent of the C++ code.

Two records at d = 2: one labeled single-token record and one unlabeled
two-token record.
"""
import pathlib
import struct

UNLABELED = 0xFFFFFFFF
records = [
    (1, [[1.0, -2.5]]),
    (UNLABELED, [[0.5, 0.25], [-0.125, 3.0]]),
]

out = bytearray(b"ICPR")
out += struct.pack("<IIIQ", 1, 0, 2, len(records))
for label, rows in records:
    out += struct.pack("<II", len(rows), label)
    for row in rows:
        out += struct.pack("<%df" % len(row), *row)

pathlib.Path(__file__).with_name("golden_v1.icpr").write_bytes(bytes(out))
