"""Smoke test for the ridc_py extension module."""

import math

import ridc_py as ridc


def main():
    assert set(ridc.Problem.names()) >= {"auzinger", "lorenz", "orbit"}
    auz = ridc.Problem("auzinger")
    assert auz.interval == (0.0, 10.0)

    cfg = ridc.Config(levels=4, steps=400)
    serial = ridc.solve(auz, cfg, executor="serial")
    pipelined = ridc.solve(auz, cfg, executor="pipelined")
    assert serial.same_numbers(pipelined)
    errors = serial.errors(auz)
    assert all(a > b for a, b in zip(errors, errors[1:])), errors
    print("uniform errors", ["%.2e" % e for e in errors])

    rows = ridc.convergence_study(auz, ridc.Config(levels=2), [200, 400, 800])
    orders = sorted({(r[0], round(r[4], 2)) for r in rows})
    assert abs(orders[0][1] - 1) < 0.2 and abs(orders[1][1] - 2) < 0.3, orders
    print("fitted orders", orders)

    orbit = ridc.Problem("orbit")
    adaptive = ridc.Config(levels=3, mode="adaptive-pred", estimator="heun-euler", rtol=1e-4)
    trace = ridc.solve(orbit, adaptive)
    naccept = [c[0] for c in trace.counts]
    assert len(set(naccept)) == 1, naccept
    assert trace.nodes(0, 0.0) == trace.nodes(2, 0.0)
    print("orbit adaptive counts", trace.counts)

    merged = ridc.Config(levels=4).with_toml('mode = "random-grid"\nomega = 2.0\nsteps = 50')
    assert merged.mode == "random-grid" and merged.levels == 4
    assert trace.to_csv().startswith("level,n,t,dt,accepted,eps,y0,")

    alpha = ridc.quadrature_weights([0.0, 0.5, 1.0], 0.0, 1.0)
    assert all(math.isclose(a, b) for a, b in zip(alpha, [1 / 6, 2 / 3, 1 / 6]))
    gamma = ridc.interpolation_weights([0.0, 1.0, 3.0], 2.0)
    assert math.isclose(sum(gamma), 1.0)

    for bad in (lambda: ridc.Problem("nosuch"), lambda: ridc.Config(mode="sideways"),
                lambda: ridc.solve(auz, ridc.Config(levels=0))):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")
    print("smoke test passed")


if __name__ == "__main__":
    main()
