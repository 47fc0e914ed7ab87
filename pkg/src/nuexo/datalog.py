"""Synchronized multi-stream binary recorder, deterministic replayer, and a
strapdown odometry integrator.

File layout (little-endian; frozen, see docs/logformat.md):

    header   magic "NXLG" | version u8=1 | stream_count u8 | directory
    directory entry: id u16 | dims u16 | name_len u8 | name | units_len u8 | units
    record   rec_len u16 | stream_id u16 | timestamp_us u64 | payload f64 * dims
             (rec_len counts the bytes after the prefix: 10 + 8*dims)
    footer   magic "NXFT" | record_count u64 | crc32 u32 over everything
             before the footer

Per-stream timestamps are non-decreasing; appends that regress are rejected
without touching the file. Non-finite payloads are rejected at append so the
on-disk format round-trips bit-exactly.
"""

from __future__ import annotations

import struct
import time
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, NamedTuple

import numpy as np

from . import quat

LOG_MAGIC = b"NXLG"
FOOTER_MAGIC = b"NXFT"
LOG_VERSION = 1
_REC_PREFIX = struct.Struct("<H")
_REC_HEAD = struct.Struct("<HQ")
_FOOTER = struct.Struct("<4sQI")

# the six canonical session streams: id -> (name, dims, units)
SESSION_STREAMS = {
    1: ("teleop-cmd", 14, "id,N*m"),
    2: ("exo-kinematics", 16, "quat,rad,rad/s"),
    3: ("finger", 12, "rad,rad/s"),
    4: ("odometry", 10, "m,quat,m/s"),
    5: ("binding-force", 12, "N,N*m"),
    6: ("follower-state", 27, "id,rad,rad/s"),
}


class LogError(Exception):
    """Log file structure or ordering problem."""


class LogCorruptionError(LogError):
    """Unreadable or inconsistent bytes, reported with a file position."""

    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"{message} (at byte {position})")


@dataclass(frozen=True)
class StreamInfo:
    stream_id: int
    name: str
    dims: int
    units: str = ""


class LogRecord(NamedTuple):
    stream_id: int
    timestamp_us: int
    payload: np.ndarray


class LogWriter:
    """Append-only writer; one writer owns a file until close() seals it."""

    def __init__(self, path: str | Path, streams: Iterable[StreamInfo],
                 flush_interval: int = 256):
        self.path = Path(path)
        self.streams = {s.stream_id: s for s in streams}
        if not self.streams:
            raise LogError("at least one stream must be registered")
        self._flush_interval = max(int(flush_interval), 1)
        self._since_flush = 0
        self._last_ts: dict[int, int] = {}
        self._count = 0
        self._crc = 0
        self._fh = open(self.path, "wb")
        self._write(self._header_bytes())
        self._closed = False

    def _header_bytes(self) -> bytes:
        out = bytearray(LOG_MAGIC)
        out += struct.pack("<BB", LOG_VERSION, len(self.streams))
        for sid in sorted(self.streams):
            s = self.streams[sid]
            name = s.name.encode()
            units = s.units.encode()
            out += struct.pack("<HH", sid, s.dims)
            out += struct.pack("<B", len(name)) + name
            out += struct.pack("<B", len(units)) + units
        return bytes(out)

    def _write(self, data: bytes):
        self._fh.write(data)
        self._crc = zlib.crc32(data, self._crc)

    def append(self, stream_id: int, timestamp_us: int, payload) -> None:
        """Durably append one record; order is validated before any bytes move."""
        if self._closed:
            raise LogError("writer is closed")
        info = self.streams.get(stream_id)
        if info is None:
            raise LogError(f"stream {stream_id} is not registered")
        payload = np.asarray(payload, dtype="<f8").reshape(-1)
        if len(payload) != info.dims:
            raise LogError(f"stream {stream_id} ({info.name}) expects {info.dims} "
                           f"values, got {len(payload)}")
        if not np.all(np.isfinite(payload)):
            raise LogError(f"non-finite payload rejected on stream {stream_id}")
        last = self._last_ts.get(stream_id)
        if last is not None and timestamp_us < last:
            raise LogError(f"timestamp regression on stream {stream_id}: "
                           f"{timestamp_us} < {last}")
        body = _REC_HEAD.pack(stream_id, timestamp_us) + payload.tobytes()
        self._write(_REC_PREFIX.pack(len(body)) + body)
        self._last_ts[stream_id] = timestamp_us
        self._count += 1
        self._since_flush += 1
        if self._since_flush >= self._flush_interval:
            self._fh.flush()
            self._since_flush = 0

    def append_record(self, record: LogRecord) -> None:
        self.append(record.stream_id, record.timestamp_us, record.payload)

    @property
    def record_count(self) -> int:
        return self._count

    def close(self) -> None:
        if self._closed:
            return
        self._fh.write(_FOOTER.pack(FOOTER_MAGIC, self._count, self._crc))
        self._fh.flush()
        self._fh.close()
        self._closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class LogReader:
    """Loads and validates a sealed log file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        data = self.path.read_bytes()
        if len(data) < 6 + _FOOTER.size:
            raise LogCorruptionError("file too short for header and footer", len(data))
        if data[:4] != LOG_MAGIC:
            raise LogCorruptionError(f"bad log magic {data[:4]!r}", 0)
        version, n_streams = struct.unpack_from("<BB", data, 4)
        if version != LOG_VERSION:
            raise LogError(f"unsupported log version {version}")
        pos = 6
        self.streams: dict[int, StreamInfo] = {}
        for _ in range(n_streams):
            sid, dims = struct.unpack_from("<HH", data, pos)
            pos += 4
            (nlen,) = struct.unpack_from("<B", data, pos)
            name = data[pos + 1:pos + 1 + nlen].decode()
            pos += 1 + nlen
            (ulen,) = struct.unpack_from("<B", data, pos)
            units = data[pos + 1:pos + 1 + ulen].decode()
            pos += 1 + ulen
            self.streams[sid] = StreamInfo(sid, name, dims, units)
        magic, count, crc = _FOOTER.unpack_from(data, len(data) - _FOOTER.size)
        if magic != FOOTER_MAGIC:
            raise LogCorruptionError("missing footer (file not finalized?)",
                                     len(data) - _FOOTER.size)
        body_end = len(data) - _FOOTER.size
        if zlib.crc32(data[:body_end]) != crc:
            raise LogCorruptionError("crc mismatch over log body", body_end)
        self._records: list[LogRecord] = []
        while pos < body_end:
            if pos + _REC_PREFIX.size > body_end:
                raise LogCorruptionError("trailing bytes before footer", pos)
            (blen,) = _REC_PREFIX.unpack_from(data, pos)
            start = pos + _REC_PREFIX.size
            if start + blen > body_end:
                raise LogCorruptionError("record overruns log body", pos)
            sid, ts = _REC_HEAD.unpack_from(data, start)
            payload = np.frombuffer(data[start + _REC_HEAD.size:start + blen],
                                    dtype="<f8").copy()
            info = self.streams.get(sid)
            if info is None:
                raise LogCorruptionError(f"record on unregistered stream {sid}", pos)
            if len(payload) != info.dims:
                raise LogCorruptionError(
                    f"stream {sid} record has {len(payload)} values, expected {info.dims}", pos)
            self._records.append(LogRecord(sid, ts, payload))
            pos = start + blen
        if len(self._records) != count:
            raise LogCorruptionError(
                f"footer count {count} != records found {len(self._records)}", body_end)

    def records(self) -> list[LogRecord]:
        """Records in file order."""
        return list(self._records)

    def stream_records(self, stream_id: int) -> list[LogRecord]:
        return [r for r in self._records if r.stream_id == stream_id]

    def stream_counts(self) -> dict[int, int]:
        counts = {sid: 0 for sid in self.streams}
        for r in self._records:
            counts[r.stream_id] += 1
        return counts

    def __len__(self) -> int:
        return len(self._records)


def replay(log: LogReader | str | Path, sink: Callable[[LogRecord], None],
           realtime: bool = False) -> int:
    """Emit records in global timestamp order (ties: stream id, then file order).

    realtime paces emission by the recorded timestamp deltas; the default
    replays as fast as possible. Returns the number of records emitted.
    """
    reader = log if isinstance(log, LogReader) else LogReader(log)
    ordered = sorted(enumerate(reader.records()),
                     key=lambda item: (item[1].timestamp_us, item[1].stream_id, item[0]))
    start_wall = time.monotonic()
    t0 = ordered[0][1].timestamp_us if ordered else 0
    for _, rec in ordered:
        if realtime:
            target = start_wall + (rec.timestamp_us - t0) * 1e-6
            delay = target - time.monotonic()
            if delay > 0:
                time.sleep(delay)
        sink(rec)
    return len(ordered)


# ---------------------------------------------------------------------------
# IMU strapdown odometry (stream 4)


class OdometryIntegrator:
    """Gyro-quaternion strapdown with gravity-compensated double integration.

    Accelerometer samples are specific force in the body frame (a stationary,
    level sensor reads +9.81 on z). Drift is expected and accepted: this
    exists to populate the odometry stream, not to navigate.
    """

    def __init__(self, gravity: float = 9.81):
        self.g_world = np.array([0.0, 0.0, -gravity])
        self.orientation = quat.IDENTITY.copy()
        self.velocity = np.zeros(3)
        self.position = np.zeros(3)

    def step(self, gyro, accel, dt: float) -> np.ndarray:
        gyro = np.asarray(gyro, dtype=float)
        accel = np.asarray(accel, dtype=float)
        self.orientation = quat.normalize(
            quat.multiply(self.orientation, quat.exp_map(gyro * dt)))
        a_world = quat.rotate(self.orientation, accel) + self.g_world
        self.velocity = self.velocity + a_world * dt
        self.position = self.position + self.velocity * dt
        return self.pose_vector()

    def pose_vector(self) -> np.ndarray:
        """Stream-4 payload: position(3), orientation quaternion(4), velocity(3)."""
        return np.concatenate([self.position, self.orientation, self.velocity])


def odometry_integrate(gyro_samples, accel_samples, dt: float) -> np.ndarray:
    """Integrate IMU sample arrays (N, 3) into an (N, 10) pose trajectory."""
    gyro_samples = np.atleast_2d(np.asarray(gyro_samples, dtype=float))
    accel_samples = np.atleast_2d(np.asarray(accel_samples, dtype=float))
    if gyro_samples.shape != accel_samples.shape or gyro_samples.shape[1] != 3:
        raise ValueError("gyro and accel sample arrays must both be (N, 3)")
    if not (np.all(np.isfinite(gyro_samples)) and np.all(np.isfinite(accel_samples))):
        raise ValueError("IMU samples must be finite")
    integ = OdometryIntegrator()
    out = np.empty((len(gyro_samples), 10))
    for k in range(len(gyro_samples)):
        out[k] = integ.step(gyro_samples[k], accel_samples[k], dt)
    return out
