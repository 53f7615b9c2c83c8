"""Smoke test for the mrguide extension module. Run after `maturin develop` or
installing the wheel built from crates/python."""

import math

import mrguide


def main():
    ik = mrguide.solve_ik([10, 5, 0], [10, 5, -120])
    pose = ik["pose"]
    assert pose == mrguide.CarriagePose(10, 5, 10, 5), pose
    assert ik["incline_deg"] == 0.0

    origin, direction = mrguide.forward_kinematics(mrguide.CarriagePose(0, 0, 2, 0))
    assert direction[2] < 0 and abs(origin[2] + 36.5) < 1e-12

    tip, angle = mrguide.worst_case_errors(0.5, 100.0)
    assert abs(tip - 3.80) <= 0.02 and abs(angle - 1.772) <= 0.005, (tip, angle)

    try:
        mrguide.solve_ik([60, 0, 0], [60, 0, -100])
    except mrguide.MrguideError as e:
        assert e.kind == "OutOfTravel", e.kind
    else:
        raise AssertionError("out-of-travel plan accepted")

    mr = [[0, 0, 0], [50, 0, 10], [0, 40, -20], [10, 10, 10]]
    robot = [[-p[1] + 10, p[0] - 5, p[2] + 2] for p in mr]
    reg = mrguide.fit_rigid_transform(mr, robot)
    assert reg.rms_residual < 1e-9
    assert all(abs(a - b) < 1e-9 for a, b in zip(reg.apply([1, 2, 3]), [8, -4, 5]))

    assert mrguide.frustum_contains(0, 0, 50)
    assert not mrguide.frustum_contains(200, 0, 50)
    cloud = mrguide.sample_workspace(0, 40, 10)
    assert cloud and all(len(p) == 3 for p in cloud)

    cov = mrguide.coverage_ratio(pitch=4.0)
    assert 0.0 <= cov["ratio"] <= 1.0 and cov["pitch_mm"] == 4.0

    moves = mrguide.preview_plan(mrguide.CarriagePose(), mrguide.CarriagePose(12, 0, 3, 0))
    assert [a for a, _ in moves] == [1, 4, 1, 4, 3, 4, 1], moves

    sim = mrguide.Simulator()
    result = sim.move_to(mrguide.CarriagePose(5, -3, -2, 4), dt=0.1)
    assert result["reached"]
    assert all(s["delta"] <= 5.0 for s in result["steps"])
    assert abs(sim.pose.x_u - 5) < 0.5 and sim.incline <= 30.0
    t = mrguide.Simulator().settle_axis(2, 10.0)
    assert t > 0

    a = mrguide.run_experiment("default", seed=7, jobs=1)
    b = mrguide.run_experiment("default", seed=7, jobs=4)
    assert a == b and a["summary"]["trials"] == 234
    ideal = mrguide.run_experiment("ideal")
    assert ideal["summary"]["position_mm"]["mean"] < 1e-9
    assert not math.isnan(a["summary"]["position_mm"]["mean"])
    print("mrguide smoke test passed:", round(a["summary"]["position_mm"]["mean"], 3), "mm mean position error")


if __name__ == "__main__":
    main()
