import numpy as np
import pytest

from nuexo import datalog as D


def std_streams():
    return [D.StreamInfo(sid, name, dims, units)
            for sid, (name, dims, units) in D.SESSION_STREAMS.items()]


def two_streams():
    return [D.StreamInfo(1, "a", 2, "rad"), D.StreamInfo(2, "b", 3, "m")]


def test_write_read_round_trip(tmp_path):
    path = tmp_path / "s.nxlg"
    with D.LogWriter(path, two_streams()) as w:
        w.append(1, 10, [1.0, 2.0])
        w.append(2, 11, [0.5, -0.5, 0.25])
        w.append(1, 12, [3.0, 4.0])
    reader = D.LogReader(path)
    recs = reader.records()
    assert len(recs) == 3
    assert recs[0].stream_id == 1 and recs[0].timestamp_us == 10
    assert np.array_equal(recs[0].payload, [1.0, 2.0])
    assert np.array_equal(recs[1].payload, [0.5, -0.5, 0.25])
    assert reader.streams[2].name == "b" and reader.streams[2].units == "m"


def test_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    values = rng.normal(size=(50, 2))
    path = tmp_path / "bits.nxlg"
    with D.LogWriter(path, two_streams()) as w:
        for k, v in enumerate(values):
            w.append(1, k, v)
    back = np.array([r.payload for r in D.LogReader(path).records()])
    assert back.tobytes() == values.astype("<f8").tobytes()


def test_out_of_order_timestamp_rejected_file_unchanged(tmp_path):
    path = tmp_path / "o.nxlg"
    with D.LogWriter(path, two_streams()) as w:
        w.append(1, 100, [0.0, 0.0])
        with pytest.raises(D.LogError, match="regression"):
            w.append(1, 99, [0.0, 0.0])
        w.append(1, 100, [1.0, 1.0])  # equal timestamps allowed
    assert len(D.LogReader(path)) == 2


def test_unregistered_stream_rejected(tmp_path):
    with D.LogWriter(tmp_path / "u.nxlg", two_streams()) as w:
        with pytest.raises(D.LogError, match="not registered"):
            w.append(9, 0, [0.0])


def test_non_finite_payload_rejected(tmp_path):
    with D.LogWriter(tmp_path / "n.nxlg", two_streams()) as w:
        with pytest.raises(D.LogError, match="non-finite"):
            w.append(1, 0, [np.nan, 0.0])
        with pytest.raises(D.LogError, match="non-finite"):
            w.append(1, 0, [np.inf, 0.0])


def test_wrong_dims_rejected(tmp_path):
    with D.LogWriter(tmp_path / "d.nxlg", two_streams()) as w:
        with pytest.raises(D.LogError, match="expects 2"):
            w.append(1, 0, [0.0, 0.0, 0.0])


def test_interleaved_streams_preserve_per_stream_order(tmp_path):
    path = tmp_path / "i.nxlg"
    rng = np.random.default_rng(1)
    with D.LogWriter(path, two_streams()) as w:
        t1 = t2 = 0
        for _ in range(200):
            if rng.random() < 0.5:
                t1 += int(rng.integers(0, 5))
                w.append(1, t1, [t1, 0.0])
            else:
                t2 += int(rng.integers(0, 5))
                w.append(2, t2, [t2, 0.0, 0.0])
    reader = D.LogReader(path)
    for sid in (1, 2):
        ts = [r.timestamp_us for r in reader.stream_records(sid)]
        assert ts == sorted(ts)


def test_corrupt_byte_reports_position(tmp_path):
    path = tmp_path / "c.nxlg"
    with D.LogWriter(path, two_streams()) as w:
        for k in range(10):
            w.append(1, k, [k, k])
    raw = bytearray(path.read_bytes())
    raw[40] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(D.LogCorruptionError, match="at byte"):
        D.LogReader(path)


def test_unfinalized_file_rejected(tmp_path):
    path = tmp_path / "open.nxlg"
    w = D.LogWriter(path, two_streams())
    w.append(1, 0, [0.0, 0.0])
    w._fh.flush()
    data = path.read_bytes()
    trunc = tmp_path / "trunc.nxlg"
    trunc.write_bytes(data + b"\x00" * 16)  # wrong footer
    with pytest.raises(D.LogCorruptionError):
        D.LogReader(trunc)
    w.close()


def test_footer_count_checked(tmp_path):
    path = tmp_path / "f.nxlg"
    with D.LogWriter(path, two_streams()) as w:
        w.append(1, 0, [0.0, 0.0])
    raw = bytearray(path.read_bytes())
    # bump the footer count and refresh nothing else: count check fires first
    raw[-12] += 1
    path.write_bytes(bytes(raw))
    with pytest.raises(D.LogCorruptionError):
        D.LogReader(path)


# --- replay -------------------------------------------------------------------

def test_replay_empty_log(tmp_path):
    path = tmp_path / "e.nxlg"
    D.LogWriter(path, two_streams()).close()
    seen = []
    assert D.replay(path, seen.append) == 0
    assert seen == []


def test_replay_global_order_with_tie_rule(tmp_path):
    path = tmp_path / "r.nxlg"
    with D.LogWriter(path, two_streams()) as w:
        w.append(2, 5, [0.0, 0.0, 0.0])
        w.append(1, 3, [1.0, 0.0])
        w.append(1, 5, [0.0, 0.0])
        w.append(2, 8, [1.0, 0.0, 0.0])
    seen = []
    D.replay(path, lambda r: seen.append((r.timestamp_us, r.stream_id)))
    assert seen == [(3, 1), (5, 1), (5, 2), (8, 2)]


def test_replay_deterministic(tmp_path):
    path = tmp_path / "det.nxlg"
    rng = np.random.default_rng(2)
    with D.LogWriter(path, two_streams()) as w:
        t = 0
        for _ in range(300):
            t += int(rng.integers(0, 3))
            sid = int(rng.integers(1, 3))
            w.append(sid, t, np.zeros(w.streams[sid].dims))
    runs = []
    for _ in range(3):
        seen = []
        D.replay(path, lambda r: seen.append((r.timestamp_us, r.stream_id)))
        runs.append(seen)
    assert runs[0] == runs[1] == runs[2]


# --- odometry -------------------------------------------------------------------

def test_odometry_stationary_under_gravity():
    n = 1000
    gyro = np.zeros((n, 3))
    accel = np.tile([0.0, 0.0, 9.81], (n, 1))
    traj = D.odometry_integrate(gyro, accel, 0.001)
    assert np.allclose(traj[-1, :3], 0.0, atol=1e-12)
    assert np.allclose(traj[-1, 7:], 0.0, atol=1e-12)


def test_odometry_constant_acceleration_displacement():
    # 1 m/s^2 along x for 1 s -> 0.5 m (within integrator truncation)
    n = 1000
    gyro = np.zeros((n, 3))
    accel = np.tile([1.0, 0.0, 9.81], (n, 1))
    traj = D.odometry_integrate(gyro, accel, 0.001)
    assert traj[-1, 0] == pytest.approx(0.5, abs=1e-3)
    assert traj[-1, 7] == pytest.approx(1.0, abs=1e-6)


def test_odometry_pure_yaw_rate():
    n = 10000
    gyro = np.tile([0.0, 0.0, 0.1], (n, 1))
    accel = np.tile([0.0, 0.0, 9.81], (n, 1))  # gravity rotates with z-yaw: still cancels
    traj = D.odometry_integrate(gyro, accel, 0.001)
    from nuexo import quat
    yaw = quat.to_euler_zyx(traj[-1, 3:7])[0]
    assert yaw == pytest.approx(1.0, abs=1e-6)


def test_odometry_rejects_bad_input():
    with pytest.raises(ValueError):
        D.odometry_integrate(np.zeros((5, 3)), np.zeros((4, 3)), 0.001)
    with pytest.raises(ValueError):
        D.odometry_integrate(np.full((2, 3), np.nan), np.zeros((2, 3)), 0.001)
