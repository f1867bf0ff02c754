"""Binary and CSV storage for records, carrier photocurrents and trajectories.

Binary layout (little endian)::

    magic     4s   b"QTRK"
    version   u2
    kind      u2   1 record, 2 carrier, 3 predicted, 4 retrodicted
    dt        f8   sample spacing in s
    aux       f8   Omega_m in rad/s for carriers, else 0
    n         u8   samples per channel
    channels  u4
    n_invalid u4   leading filter-transient samples
    seed      i8   -1 when unknown
    params    u8   params_hash, 0 when unknown

followed by ``n * channels`` float64 samples, channel-interleaved
(sample 0 of every channel, then sample 1, ...).
Trajectory payloads carry four channels: rX, rY, V, conditioned.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .filters import StateTrajectory
from .simulate import CarrierRecord, MeasurementRecord

MAGIC = b"QTRK"
VERSION = 1
HEADER = struct.Struct("<4sHHddQIIqQ")

KIND_RECORD = 1
KIND_CARRIER = 2
KIND_PREDICTED = 3
KIND_RETRODICTED = 4
_TRAJECTORY_KINDS = {"predicted": KIND_PREDICTED, "retrodicted": KIND_RETRODICTED}


class RecordFormatError(ValueError):
    pass


def _header(kind, dt, aux, n, channels, n_invalid, seed, params_hash):
    return HEADER.pack(
        MAGIC, VERSION, kind, float(dt), float(aux), int(n), int(channels), int(n_invalid),
        -1 if seed is None else int(seed), 0 if params_hash is None else int(params_hash),
    )


def _write(path, header, samples):
    """``samples`` has shape (channels, n); written sample-major."""
    data = np.ascontiguousarray(np.asarray(samples, dtype="<f8").T)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def write_record(path, record: MeasurementRecord):
    if record.i.ndim != 2:
        raise ValueError("write one realization per file (record.i must be (2, n))")
    header = _header(
        KIND_RECORD, record.dt, 0.0, record.n, 2, record.n_invalid,
        record.seed, record.params_hash,
    )
    _write(path, header, record.i)


def write_carrier(path, carrier: CarrierRecord):
    if carrier.current.ndim != 1:
        raise ValueError("write one realization per file (carrier.current must be 1-D)")
    header = _header(
        KIND_CARRIER, 1.0 / carrier.fs, carrier.omega_m, carrier.n, 1, 0,
        carrier.seed, carrier.params_hash,
    )
    _write(path, header, carrier.current[None, :])


def write_trajectory(path, traj: StateTrajectory, seed=None, params_hash=None):
    if traj.mean.ndim != 2:
        raise ValueError("write one realization per file (mean must be (2, n))")
    kind = _TRAJECTORY_KINDS[traj.kind]
    samples = np.vstack([traj.mean, traj.variance, traj.conditioned.astype(np.float64)])
    header = _header(kind, traj.dt, 0.0, traj.t.size, 4, 0, seed, params_hash)
    _write(path, header, samples)


def read_header(buf):
    if len(buf) < HEADER.size:
        raise RecordFormatError("file shorter than the header")
    magic, version, kind, dt, aux, n, channels, n_invalid, seed, params_hash = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise RecordFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise RecordFormatError(f"unsupported version {version}")
    return {
        "kind": kind, "dt": dt, "aux": aux, "n": n, "channels": channels,
        "n_invalid": n_invalid,
        "seed": None if seed < 0 else seed,
        "params_hash": None if params_hash == 0 else params_hash,
    }


def read(path):
    """Load any container; returns a MeasurementRecord, CarrierRecord or StateTrajectory."""
    buf = Path(path).read_bytes()
    h = read_header(buf)
    expected = HEADER.size + 8 * h["n"] * h["channels"]
    if len(buf) != expected:
        raise RecordFormatError(f"{path}: expected {expected} bytes, found {len(buf)}")
    samples = np.frombuffer(buf, dtype="<f8", offset=HEADER.size)
    samples = samples.reshape(h["n"], h["channels"]).T.astype(np.float64)
    kind = h["kind"]
    if kind == KIND_RECORD:
        return MeasurementRecord(h["dt"], samples, h["seed"], h["params_hash"], h["n_invalid"])
    if kind == KIND_CARRIER:
        return CarrierRecord(1.0 / h["dt"], samples[0], h["aux"], h["seed"], h["params_hash"])
    if kind in (KIND_PREDICTED, KIND_RETRODICTED):
        name = "predicted" if kind == KIND_PREDICTED else "retrodicted"
        t = np.arange(h["n"]) * h["dt"]
        return StateTrajectory(t, samples[:2], samples[2], name, samples[3] != 0)
    raise RecordFormatError(f"unknown payload kind {kind}")


def read_records(paths):
    """Stack single-realization record files into one batched MeasurementRecord."""
    records = [read(p) for p in paths]
    if not records:
        raise ValueError("no record files")
    first = records[0]
    for rec in records:
        if not isinstance(rec, MeasurementRecord):
            raise RecordFormatError("expected baseband record files")
        if rec.n != first.n or rec.dt != first.dt or rec.params_hash != first.params_hash:
            raise RecordFormatError("record files differ in length, dt or parameters")
    return MeasurementRecord(
        first.dt, np.stack([r.i for r in records]), first.seed, first.params_hash,
        max(r.n_invalid for r in records),
    )


# --- CSV ------------------------------------------------------------------


def write_csv(path, columns: dict, fmt="%.10g"):
    """Write equal-length columns with a one-line header of their names."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=np.float64) for k in names])
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt=fmt)


def read_csv(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


def record_to_csv(path, record: MeasurementRecord):
    write_csv(path, {"t_s": record.t, "i_x": record.i[0], "i_y": record.i[1]})


def trajectory_to_csv(path, traj: StateTrajectory):
    write_csv(path, {
        "t_s": traj.t, "rX": traj.mean[0], "rY": traj.mean[1],
        "V": traj.variance, "conditioned": traj.conditioned.astype(int),
    })
