"""Smoke test for the doe_py extension. Run after `maturin develop` or a wheel install."""

import math
import os
import tempfile

import doe_py


def main():
    y = doe_py.composite_response(0.5, 8.0, 3.0)
    assert math.isfinite(y) and y > 0

    try:
        doe_py.composite_response(1.0, 1.0, 0.0)
    except doe_py.DoeError as e:
        assert str(e).startswith("invalid geometry: "), e
    else:
        raise AssertionError("h=0 accepted")

    l25 = doe_py.orthogonal_array(5, 3)
    assert len(l25) == 25
    for a in range(3):
        for b in range(a + 1, 3):
            assert len({(r[a], r[b]) for r in l25}) == 25

    space = doe_py.DesignSpace.preset("waam-default")
    assert space.dims == 3 and space.grid_size == 125
    unit = doe_py.lhs(5, 3, seed=1)
    assert len(unit) == 5 and all(0 <= v < 1 for row in unit for v in row)
    snapped = doe_py.lhs(5, 3, seed=1, space=space)
    assert len(set(map(tuple, snapped))) == 5

    xs = [space.to_real(p) for p in space.enumerate_grid()[::9]]
    ys = [math.sin(x[0] / 40) + x[1] / 10 for x in xs]
    model = doe_py.GprModel.optimize(xs, ys)
    mean, std = model.predict(xs[0])
    assert abs(mean - ys[0]) < 0.5 and std >= 0
    assert len(model) == len(xs)

    taguchi = doe_py.Campaign("taguchi", seed=4)
    taguchi.run_to_completion()
    assert taguchi.status == "complete" and taguchi.runs == 25

    gpr = doe_py.Campaign("gpr-al", seed=4)
    steps = 0
    while gpr.suggest() is not None:
        steps += 1
    assert gpr.runs == 20, gpr.runs
    rmse, r2 = gpr.evaluate()
    assert rmse > 0 and r2 <= 1
    assert gpr.test_points() == taguchi.test_points()

    csv = taguchi.export_csv("parity", gpr)
    assert csv.splitlines()[0] == "strategy,point,predicted_y,actual_y"
    assert len(csv.splitlines()) == 31

    manual = doe_py.Campaign("taguchi", oracle="manual", id="bench")
    p = manual.suggest()
    assert manual.status == "awaiting_measurement"
    manual.record(p, 0.4, 7.5, 3.1)
    assert manual.runs == 1

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "bench.json")
        manual.save(path)
        again = doe_py.Campaign.load(path)
        assert again.to_json() == manual.to_json()
    assert doe_py.Campaign.from_json(gpr.to_json()).evaluate() == (rmse, r2)

    print(f"ok: taguchi rmse={taguchi.evaluate()[0]:.4f} gpr rmse={rmse:.4f}")


if __name__ == "__main__":
    main()
