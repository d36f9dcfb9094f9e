import numpy as np

from rvcsim.dynamics import (
    InertiaParams,
    RigidBodyState,
    acceleration,
    state_derivative,
    step,
)
from rvcsim.se3 import Pose

rng = np.random.default_rng(7)


def test_rest_zero_derivative():
    x = RigidBodyState.at_rest(Pose.identity())
    pose_rate, accel = state_derivative(x, np.zeros(6), InertiaParams())
    assert np.array_equal(pose_rate, np.zeros((4, 4)))
    assert np.array_equal(accel, np.zeros(6))


def test_newton_translation():
    x = RigidBodyState.at_rest(Pose.identity())
    _, accel = state_derivative(x, [1.0, 0, 0, 0, 0, 0], InertiaParams(m=2.0))
    np.testing.assert_allclose(accel, [0.5, 0, 0, 0, 0, 0], atol=1e-15)


def test_euler_equations_hand_values():
    # J=(1,2,3), w=(1,1,1), u=0 -> wdot = ((2-3)/1, (3-1)/2, (1-2)/3)
    inertia = InertiaParams(J=[1.0, 2.0, 3.0])
    x = RigidBodyState(Pose.identity(), [0, 0, 0, 1.0, 1.0, 1.0])
    _, accel = state_derivative(x, np.zeros(6), inertia)
    np.testing.assert_allclose(accel[3:], [-1.0, 1.0, -1.0 / 3.0], atol=1e-15)


def test_step_at_rest_unchanged():
    x = RigidBodyState.at_rest(Pose.identity())
    y = step(x, np.zeros(6), InertiaParams(), 0.1)
    assert np.array_equal(y.g.p, x.g.p)
    assert np.array_equal(y.g.R, x.g.R)
    assert np.array_equal(y.V, x.V)


def test_straight_line_descent():
    # constant v = (0, 0, -1) mm/s, dt = 0.1 s, 10 steps -> -1 mm in z
    x = RigidBodyState(Pose.identity(), [0, 0, -1e-3, 0, 0, 0])
    for _ in range(10):
        x = step(x, np.zeros(6), InertiaParams(), 0.1)
    np.testing.assert_allclose(x.g.p, [0, 0, -1e-3], atol=1e-15)


def test_torque_free_top_conservation():
    # asymmetric top: energy and |J w| must be conserved by the integrator
    inertia = InertiaParams(J=[1.0, 2.0, 3.0])
    x = RigidBodyState(Pose.identity(), [0, 0, 0, 1.0, 1.0, 1.0])
    J = inertia.J

    def energy(w):
        return 0.5 * float(w @ (J * w))

    def momentum(w):
        return float(np.linalg.norm(J * w))

    e0, m0 = energy(x.w), momentum(x.w)
    for _ in range(10_000):
        x = step(x, np.zeros(6), inertia, 1e-4)
    assert abs(energy(x.w) - e0) / e0 < 1e-6
    assert abs(momentum(x.w) - m0) / m0 < 1e-6


def test_group_preservation_many_steps():
    inertia = InertiaParams(J=[1.0, 2.0, 3.0])
    x = RigidBodyState(Pose.identity(), rng.normal(size=6))
    for _ in range(5000):
        x = step(x, rng.normal(size=6) * 0.1, inertia, 1e-3)
    R = x.g.R
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-9)


def test_symmetric_inertia_constant_omega():
    inertia = InertiaParams(J=[2.0, 2.0, 2.0])
    w0 = np.array([0.3, -0.7, 0.2])
    x = RigidBodyState(Pose.identity(), np.concatenate([np.zeros(3), w0]))
    for _ in range(100):
        x = step(x, np.zeros(6), inertia, 0.01)
    assert np.array_equal(x.w, w0)


def test_step_deterministic():
    inertia = InertiaParams(J=[1.0, 2.0, 3.0])
    x = RigidBodyState(Pose.identity(), rng.normal(size=6))
    u = rng.normal(size=6)
    a = step(x, u, inertia, 1 / 30)
    b = step(x, u, inertia, 1 / 30)
    assert np.array_equal(a.g.p, b.g.p)
    assert np.array_equal(a.g.R, b.g.R)
    assert np.array_equal(a.V, b.V)


def test_acceleration_matches_derivative():
    inertia = InertiaParams(m=1.7, J=[0.4, 1.1, 2.2])
    V = rng.normal(size=6)
    u = rng.normal(size=6)
    x = RigidBodyState(Pose.identity(), V)
    _, accel = state_derivative(x, u, inertia)
    np.testing.assert_allclose(accel, acceleration(V, u, inertia), atol=1e-15)
