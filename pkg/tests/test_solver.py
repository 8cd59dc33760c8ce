
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contact_retarget.contact import (
    ANTIPODAL_HALF_ANGLE,
    GripperConfig,
    antipodal_residuals,
    gripper_at_tip,
    ground_residual,
    wall_residual,
)
from contact_retarget.errors import Infeasible
from contact_retarget.geometry import Pose
from contact_retarget.retarget import antipodal_config
from contact_retarget.scene import GripperModel, ObjectModel, Scene, Wall
from contact_retarget.solver import ConstraintSystem, SolverConfig, position_objective, solve_feasible, solve_pose

BOX = ObjectModel.from_half_extents("box", (0.1, 0.075, 0.03))
SCENE = Scene(Wall(0.75, 0.0))


def ground_wall(scene=SCENE, obj=BOX):
    cs = ConstraintSystem()
    # both the lowest corner and the tilt: a flat box touching the ground
    cs.equalities.append(lambda p: [ground_residual(p, obj), p.rotation[2, 0], p.rotation[2, 1]])
    cs.equalities.append(lambda p: wall_residual(p, obj, scene))
    return cs


def test_feasible_guess_is_returned():
    g = Pose.from_xyz_yaw(0.65, 0.0, 0.03)
    assert solve_pose(position_objective(g), ground_wall(), g) == g


def test_projects_onto_wall():
    g = Pose.from_xyz_yaw(0.60, 0.0, 0.03)
    p = solve_pose(position_objective(g), ground_wall(), g)
    assert np.allclose(p.position, [0.65, 0.0, 0.03], atol=1e-7)
    assert np.linalg.norm(p.position - g.position) == pytest.approx(0.05, abs=1e-7)


def test_contradiction_is_infeasible():
    cs = ground_wall(Scene(Wall(0.95, 0.0)))
    cs.inequalities.append(lambda p: 0.5 - p.position[0])
    g = Pose.from_xyz_yaw(0.45, 0.0, 0.03)
    with pytest.raises(Infeasible):
        solve_pose(position_objective(g), cs, g, SolverConfig(multistart=3, max_outer=4))


def test_inequalities_respected():
    g = Pose.from_xyz_yaw(0.60, 0.0, 0.03)
    cs = ConstraintSystem(inequalities=[lambda p: p.position[1] - 0.1])
    p = solve_pose(position_objective(g), cs, g)
    assert p.position[1] == pytest.approx(0.1, abs=1e-6)
    assert p.position[0] == pytest.approx(0.60, abs=1e-6)


def test_empty_system_returns_seed():
    seed = gripper_at_tip((0.5, 0, 0.2), GripperModel())
    assert solve_feasible(ConstraintSystem(), seed) is seed


def test_antipodal_solution_rechecked_independently():
    x = Pose.from_xyz_yaw(0.65, 0.0, 0.03)
    g = antipodal_config(x, BOX, SCENE)
    d, a = antipodal_residuals(g, x, BOX, SCENE)
    assert d <= 1e-6
    assert a <= ANTIPODAL_HALF_ANGLE + 1e-9


def test_unreachable_top_is_infeasible():
    gm = GripperModel()
    seed = gripper_at_tip((0.5, 0, 0.3), gm)

    def tip_z(g: GripperConfig):
        return g.tip_center(gm)[2]

    # fingertip must touch the top face at 6 cm while staying above a 16 cm overhang
    cs = ConstraintSystem(equalities=[lambda g: tip_z(g) - 0.06], inequalities=[lambda g: tip_z(g) - 0.16])
    with pytest.raises(Infeasible):
        solve_feasible(cs, seed, SolverConfig(multistart=2, max_outer=3))


def test_deterministic():
    g = Pose.from_xyz_yaw(0.57, 0.03, 0.05, 0.3)
    cs = ground_wall(Scene(Wall(0.78, 6.0)))
    a = solve_pose(position_objective(g), cs, g)
    b = solve_pose(position_objective(g), cs, g)
    assert a == b


@settings(max_examples=15)
@given(st.floats(0.70, 0.85), st.floats(-10, 10), st.floats(0.3, 0.55), st.floats(-0.2, 0.2),
       st.floats(-0.2, 0.2))
def test_solution_satisfies_system(wx, yaw, x, y, psi):
    sc = Scene(Wall(wx, yaw))
    g = Pose.from_xyz_yaw(x, y, 0.03, sc.wall.yaw + psi)
    cs = ground_wall(sc)
    p = solve_pose(position_objective(g), cs, g)
    assert cs.violation(p) <= 1e-6


def test_objective_weights_orientation():
    t = Pose.from_xyz_yaw(0, 0, 0, 0.0)
    f = position_objective(t, orientation_weight=0.25)
    r = f(Pose.from_xyz_yaw(0.1, 0, 0, 0.2))
    assert float(r @ r) == pytest.approx(0.01 + 0.25 * 0.04)
