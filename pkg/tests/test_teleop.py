import numpy as np
import pytest

from nuexo import follower_sim as F
from nuexo import quat, session
from nuexo.datalog import LogReader
from nuexo.nodes import (ExoTrajectorySource, MasterPose, SinusoidSource,
                         SinusoidWrench, SmoothedDifferentiator, StepSource,
                         TeleopController, WrenchPair, follower_command,
                         follower_state_payload, measurement_from_payload)


@pytest.fixture(scope="module")
def model():
    return F.make_model("default")


def make_controller(system_config, model, **kw):
    return TeleopController(system_config.gains, system_config.tremor, {1: model}, **kw)


# --- payload packing ----------------------------------------------------------

def test_master_pose_payload_round_trip():
    rng = np.random.default_rng(0)
    m = MasterPose(
        shoulder_q=quat.random_unit(rng), wrist_q=quat.random_unit(rng),
        elbow=0.4, fingers=rng.normal(size=6), shoulder_w=rng.normal(size=3),
        wrist_w=rng.normal(size=3), elbow_v=-0.2, finger_v=rng.normal(size=6))
    back = MasterPose.from_payload(m.to_payload())
    assert np.array_equal(back.to_payload(), m.to_payload())
    rebuilt = MasterPose.from_stream_payloads(m.kinematic_payload(), m.finger_payload())
    assert np.array_equal(rebuilt.to_payload(), m.to_payload())


def test_follower_payload_round_trip(model):
    state = F.initial_state(model)
    meas = F.measure(state, model)
    payload = follower_state_payload(meas)
    back = measurement_from_payload(payload, model)
    assert np.array_equal(back.config.angles, meas.config.angles)
    assert np.allclose(back.shoulder_pose, meas.shoulder_pose, atol=1e-12)


# --- controller tick -----------------------------------------------------------

def test_zero_torque_when_master_equals_follower(system_config, model):
    ctl = make_controller(system_config, model)
    ctl.update_follower(1, F.measure(F.initial_state(model), model), 0)
    result = ctl.tick(0, MasterPose.rest())
    assert np.allclose(result.commands[1], np.zeros(F.N_JOINTS), atol=1e-12)


def test_fanout_identical_followers_identical_commands(system_config, model):
    ctl = TeleopController(system_config.gains, system_config.tremor,
                           {1: model, 2: model})
    meas = F.measure(F.initial_state(model), model)
    ctl.update_follower(1, meas, 0)
    ctl.update_follower(2, meas, 0)
    master = SinusoidSource().sample(0.35)
    result = ctl.tick(0, master)
    assert result.commands[1].tobytes() == result.commands[2].tobytes()


def test_staleness_withholds_and_emits_once(system_config, model):
    ctl = make_controller(system_config, model)
    ctl.update_follower(1, F.measure(F.initial_state(model), model), 0)
    master = MasterPose.rest()
    for k in range(6):   # ages 0..5: still fresh enough
        result = ctl.tick(k, master)
        assert 1 in result.commands
    result = ctl.tick(6, master)   # age 6 > 5: withheld
    assert result.commands == {}
    assert result.events == ["stale-follower:1"]
    result = ctl.tick(7, master)
    assert result.events == []     # one event per staleness episode
    ctl.update_follower(1, F.measure(F.initial_state(model), model), 8)
    result = ctl.tick(8, master)
    assert 1 in result.commands    # recovers


def test_tick_without_master_sends_nothing(system_config, model):
    ctl = make_controller(system_config, model)
    ctl.update_follower(1, F.measure(F.initial_state(model), model), 0)
    result = ctl.tick(0, None)
    assert result.commands == {} and result.reference is None


def test_tremor_filter_applied_to_master_stream(system_config, model):
    ctl = make_controller(system_config, model)
    ctl.update_follower(1, F.measure(F.initial_state(model), model), 0)
    ctl.tick(0, MasterPose.rest())
    wiggle = StepSource(magnitude=0.01).sample(1.0)   # below the 0.015 deadband
    result = ctl.tick(1, wiggle)
    assert np.allclose(result.reference.shoulder_q, quat.IDENTITY, atol=1e-12)
    step = StepSource(magnitude=0.1).sample(1.0)
    result = ctl.tick(2, step)
    assert quat.rotation_angle(result.reference.shoulder_q) == pytest.approx(0.1, abs=1e-9)


def test_follower_command_respects_torque_limits(system_config, model):
    meas = F.measure(F.initial_state(model), model)
    master = StepSource(magnitude=2.5).sample(1.0)
    tau = follower_command(master, meas, model, system_config.gains)
    assert np.all(np.abs(tau[F.SHOULDER]) <= system_config.gains["shoulder"].torque_limit)


def test_wrench_injection_appears_in_command(system_config, model):
    meas = F.measure(F.initial_state(model), model)
    wrench = WrenchPair(upper=np.array([0, 0, 0, 0, 0, 1.0]),
                        forearm=np.array([0, 0, 0, 0, 0, 0.5]))
    tau = follower_command(MasterPose.rest(), meas, model, system_config.gains, wrench)
    lam = system_config.gains["shoulder"].lam
    assert tau[2] == pytest.approx(lam * 1.0, abs=1e-12)       # shoulder z joint
    assert tau[F.ELBOW] == pytest.approx(system_config.gains["elbow"].lam * 0.5, abs=1e-12)


# --- closed-loop sessions -------------------------------------------------------

def test_step_regulation_short(system_config, model):
    res = session.run_session(StepSource(magnitude=0.3), system_config, {1: model},
                              duration=1.5)
    assert res.shoulder_error[1][-1] < 1e-3


def test_all_joint_groups_stable_at_lowest_tick_rate(system_config, model):
    # 50 Hz is the lowest allowed controller rate; tick-held damping must not
    # ring any joint group (wrist/finger plants are the tight ones)
    src = SinusoidSource(amplitude=0.3, frequency=0.5, elbow_amplitude=0.3,
                         finger_amplitude=0.3)
    res = session.run_session(src, system_config, {1: model}, duration=3.0,
                              control_hz=50)
    final = res.final_states[1]
    assert np.all(np.abs(final.config.velocities) < 5.0)
    assert np.max(np.abs(final.config.angles[4:7])) < 0.05   # wrist near identity
    for heavy in (F.make_model("heavy"),):
        res = session.run_session(src, system_config, {1: heavy}, duration=3.0,
                                  control_hz=50)
        assert np.all(np.abs(res.final_states[1].config.velocities) < 5.0)


def test_heavy_preset_same_interface(system_config):
    heavy = F.make_model("heavy")
    res = session.run_session(StepSource(magnitude=0.3), system_config, {1: heavy},
                              duration=1.5)
    assert res.shoulder_error[1][-1] < res.shoulder_error[1][0]


def test_session_records_all_six_streams(system_config, model, tmp_path):
    path = tmp_path / "s.nxlg"
    session.run_session(ExoTrajectorySource(system_config), system_config, {1: model},
                        duration=0.5, log_path=path, wrench_source=SinusoidWrench())
    counts = LogReader(path).stream_counts()
    assert set(counts) == {1, 2, 3, 4, 5, 6}
    assert all(c > 0 for c in counts.values())


def test_replay_reproduces_torque_stream(system_config, model, tmp_path):
    a = tmp_path / "a.nxlg"
    b = tmp_path / "b.nxlg"
    session.run_session(ExoTrajectorySource(system_config), system_config,
                        {1: model}, duration=0.6, log_path=a,
                        wrench_source=SinusoidWrench())
    session.run_replay(a, system_config, {1: model}, out_log_path=b)
    assert session.torque_stream_bytes(a) == session.torque_stream_bytes(b)
    assert len(session.torque_stream_bytes(a)) > 0


def test_identical_sessions_identical_log_files(system_config, model, tmp_path):
    paths = [tmp_path / "r1.nxlg", tmp_path / "r2.nxlg"]
    for p in paths:
        session.run_session(ExoTrajectorySource(system_config), system_config,
                            {1: model}, duration=0.4, log_path=p,
                            wrench_source=SinusoidWrench())
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_replay_needs_master_records(system_config, model, tmp_path):
    from nuexo.datalog import LogError, LogWriter
    path = tmp_path / "empty.nxlg"
    LogWriter(path, session.session_streams()).close()
    with pytest.raises(LogError):
        session.run_replay(path, system_config, {1: model})


def test_smoothed_differentiator():
    d = SmoothedDifferentiator(window=3)
    assert np.array_equal(d.update([0.0], 0.01), [0.0])
    d.update([0.01], 0.01)
    d.update([0.02], 0.01)
    vel = d.update([0.03], 0.01)
    assert vel[0] == pytest.approx(1.0, rel=1e-9)
