"""Writer for the NICF feature file format consumed by the nicap toolkit.

Layout (little-endian): magic "NICF", u32 version=1, u32 record count N,
u32 D_f, u32 R, u32 D_a; then N records of u64 image_id followed by D_f
float32 global features and R*D_a float32 region features, row-major.
"""

import struct

import numpy as np

MAGIC = b"NICF"
VERSION = 1


def write_nicf(path, records):
    """records: iterable of (image_id, global_feature[D_f], regions[R, D_a])."""
    records = list(records)
    if not records:
        raise ValueError("write_nicf: no records")
    d_f = records[0][1].shape[0]
    r, d_a = records[0][2].shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIIII", VERSION, len(records), d_f, r, d_a))
        for image_id, global_feature, regions in records:
            if global_feature.shape != (d_f,) or regions.shape != (r, d_a):
                raise ValueError(
                    f"record {image_id}: shapes {global_feature.shape}/"
                    f"{regions.shape} do not match header {d_f}/{r}x{d_a}")
            if not (np.isfinite(global_feature).all() and np.isfinite(regions).all()):
                raise ValueError(f"record {image_id}: non-finite features")
            fh.write(struct.pack("<Q", int(image_id)))
            fh.write(np.ascontiguousarray(global_feature, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(regions, dtype="<f4").tobytes())
