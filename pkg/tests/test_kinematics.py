import math

import numpy as np
import pytest

import oracles
from nuexo import kinematics as K
from nuexo import quat

DEG = math.pi / 180.0
COUPLING = K.ShoulderCoupling()
CHAIN = K.build_exo_chain()


def random_in_rom(rng):
    lo = np.array([-1.0471975511965976, -0.5235987755982988, -0.5235987755982988, -1.5, -0.2, -1.5])
    hi = np.array([3.141592653589793, 2.6179938779914944, 2.356194490192345, 1.5, 2.4, 1.5])
    return rng.uniform(lo, hi)


# --- linkage coupling ------------------------------------------------------

def test_coupling_table_values():
    t21, t22, t3 = K.coupled_linkage_angles(0.0, COUPLING)
    assert t21 + t3 == pytest.approx(0.938, abs=1e-15)
    t21, t22, t3 = K.coupled_linkage_angles(0.5, COUPLING)
    assert t21 + t3 == pytest.approx(1.444 * 0.5 + 0.938, abs=1e-15)
    root = -0.938 / 1.444
    t21, t22, t3 = K.coupled_linkage_angles(root, COUPLING)
    assert t21 + t3 == pytest.approx(0.0, abs=1e-12)


def test_coupling_interior_angle_is_constant():
    vals = [K.coupled_linkage_angles(t, COUPLING)[1] for t in (-2.0, 0.0, 1.3)]
    assert vals[0] == vals[1] == vals[2] == pytest.approx(2.508 - math.pi)


def test_coupling_affine_difference():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a, b = rng.uniform(-3, 3, 2)
        ta = sum(K.coupled_linkage_angles(a, COUPLING)[::2])
        tb = sum(K.coupled_linkage_angles(b, COUPLING)[::2])
        assert abs((ta - tb) - 1.444 * (a - b)) <= 1e-12


# --- forward kinematics ----------------------------------------------------

# end transform at all-zero active angles, composed by hand from the DH table
# (tests/oracles.py exo_frame); rotation block plus translation, frozen.
ZERO_END_R0 = np.array([0.29972782168457435, -0.95402475487181149, 0.0])
ZERO_END_T = np.array([0.18039294545442713, -0.29310255718510403, -0.25])


def test_fk_zero_config_matches_hand_composition():
    frames = K.forward_kinematics(K.JointConfig(np.zeros(6)), CHAIN)
    end = frames[-1].matrix()
    assert np.allclose(end[:3, 0], ZERO_END_R0, atol=1e-12)
    assert np.allclose(end[:3, 3], ZERO_END_T, atol=1e-12)
    # full cross-check against the independent composition
    assert np.allclose(end, oracles.exo_frame(np.zeros(6)), atol=1e-12)


def test_fk_matches_oracle_on_random_configs():
    rng = np.random.default_rng(11)
    for _ in range(50):
        q = random_in_rom(rng)
        got = K.fk_matrices(K.JointConfig(q), CHAIN)[-1]
        assert np.allclose(got, oracles.exo_frame(q), atol=1e-10)


def test_fk_rotations_orthonormal():
    rng = np.random.default_rng(5)
    for _ in range(25):
        cfg = K.JointConfig(random_in_rom(rng))
        for frame in K.forward_kinematics(cfg, CHAIN):
            r = quat.to_matrix(frame.rotation)
            assert np.allclose(r @ r.T, np.eye(3), atol=1e-9)
            assert abs(np.linalg.det(r) - 1.0) <= 1e-9


def test_fk_rejects_wrong_config_length():
    with pytest.raises(ValueError, match="active joint"):
        K.forward_kinematics(K.JointConfig(np.zeros(4)), CHAIN)


# --- humeral pose ----------------------------------------------------------

def test_humeral_rest_pose_frozen():
    hp = K.humeral_pose(K.JointConfig(np.zeros(6)), CHAIN)
    # frozen from the hand-composed humeral frame at rest
    ref = np.array([0.0, -0.80614137149899912, 0.59172298346245833, 0.0])
    assert np.allclose(np.abs(hp.pose), np.abs(ref), atol=1e-9)
    assert not hp.gimbal_adjacent


def test_humeral_euler_round_trip():
    rng = np.random.default_rng(2)
    for _ in range(50):
        hp = K.humeral_pose(K.JointConfig(random_in_rom(rng)), CHAIN)
        if abs(abs(hp.euler[1]) - math.pi / 2) < 1e-3:
            continue
        back = quat.canonical(quat.from_euler_zyx(hp.euler))
        assert np.allclose(back, hp.pose, atol=1e-9)


def test_base_motor_moves_single_euler_axis():
    rest = K.humeral_pose(K.JointConfig(np.zeros(6)), CHAIN)
    moved = K.humeral_pose(K.JointConfig([0.3, 0, 0, 0, 0, 0]), CHAIN)
    delta = moved.euler - rest.euler
    assert delta[0] == pytest.approx(0.3, abs=1e-12)
    assert abs(delta[1]) < 1e-12 and abs(delta[2]) < 1e-12


def test_gimbal_adjacent_flagged():
    # the humeral-rotation joint tips the arm x-axis vertical at +-pi/2
    for q3 in (math.pi / 2, -math.pi / 2, math.pi / 2 - 5e-7):
        hp = K.humeral_pose(K.JointConfig([0, 0, 0, q3, 0, 0]), CHAIN)
        assert hp.gimbal_adjacent
        assert np.linalg.norm(hp.pose) == pytest.approx(1.0, abs=1e-9)
    hp = K.humeral_pose(K.JointConfig([0, 0, 0, math.pi / 2 - 1e-3, 0, 0]), CHAIN)
    assert not hp.gimbal_adjacent


# --- jacobian ---------------------------------------------------------------

def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(17)
    for _ in range(100):
        q = random_in_rom(rng)
        jac = K.jacobian(K.JointConfig(q), CHAIN)
        ref = oracles.numeric_jacobian(lambda qq: oracles.exo_frame(qq), q)
        rel = np.linalg.norm(jac - ref) / max(np.linalg.norm(ref), 1e-12)
        assert rel < 1e-5


def test_jacobian_driver_column_carries_coupling_gain():
    # linkage rows keep their axes parallel, so the angular column of the
    # driver sums to 1 + (gain - 1) = gain about one axis
    for q in (np.zeros(6), np.array([0.2, -0.3, 0.7, 0.1, 0.5, -0.2])):
        jac = K.jacobian(K.JointConfig(q), CHAIN)
        assert np.linalg.norm(jac[:3, 2]) == pytest.approx(1.444, abs=1e-12)


def test_jacobian_zero_velocity_maps_to_zero_twist():
    jac = K.jacobian(K.JointConfig(np.zeros(6)), CHAIN)
    assert np.array_equal(jac @ np.zeros(6), np.zeros(6))


# --- GH center displacement -------------------------------------------------

def test_gh_reference_point_is_zero():
    disp = K.gh_center_displacement([0.0], COUPLING)
    assert np.array_equal(disp[0], np.zeros(3))


def test_gh_forward_component_monotone():
    sweep = np.arange(0.0, 1.0 + 1e-9, 1e-3)
    disp = K.gh_center_displacement(sweep, COUPLING)
    fwd = disp[:, 0]
    assert np.all(np.diff(fwd) > 0)
    assert fwd[-1] > 0.01


def test_gh_rigid_baseline_is_identically_zero():
    rigid = K.ShoulderCoupling(gain=0.0, offset=0.938)
    disp = K.gh_center_displacement(np.linspace(-1, 2, 301), rigid)
    assert np.array_equal(disp, np.zeros_like(disp))


# --- range of motion ---------------------------------------------------------

@pytest.fixture
def rom(system_config):
    return system_config.rom


@pytest.mark.parametrize("axis,angle,expect", [
    ("flexion", 180 * DEG, True),
    ("flexion", -60 * DEG, True),      # extension extreme
    ("flexion", 190 * DEG, False),
    ("abduction", 150 * DEG, True),
    ("abduction", -30 * DEG, True),    # adduction extreme
    ("abduction", -31 * DEG, False),
    ("horizontal", 135 * DEG, True),   # horizontal extension
    ("horizontal", -30 * DEG, True),   # horizontal flexion
    ("horizontal", 136 * DEG, False),
])
def test_check_rom_extremes(rom, axis, angle, expect):
    q = np.zeros(6)
    q[rom.axes[axis].joint] = angle
    report = K.check_rom(K.JointConfig(q), rom)
    assert report.axes[axis].within is expect
    assert report.ok is expect


def test_check_rom_overall_is_conjunction(rom):
    q = np.zeros(6)
    q[rom.axes["flexion"].joint] = 0.5
    q[rom.axes["abduction"].joint] = -0.6  # outside adduction range
    report = K.check_rom(K.JointConfig(q), rom)
    assert report.axes["flexion"].within and not report.axes["abduction"].within
    assert not report.ok


# --- type invariants ----------------------------------------------------------

def test_joint_config_validation():
    with pytest.raises(ValueError):
        K.JointConfig([0.0, 1.0], [0.0])
    with pytest.raises(ValueError):
        K.JointConfig([np.nan])


def test_coupling_validation():
    with pytest.raises(ValueError):
        K.ShoulderCoupling(l1=0.0)
    with pytest.raises(ValueError):
        K.ShoulderCoupling(offset=math.inf)


def test_axis_limit_validation():
    with pytest.raises(ValueError):
        K.AxisLimit(1.0, 1.0, 0)
