"""Quick end-to-end check of the Python bindings.

Build and install first:

    pip install --no-build-isolation -e crates/py
    python python/smoke_test.py
"""

import cmath
import math

import bicwg


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    single = bicwg.Geometry(cavity_count=1)
    e_c = single.cavity_energy(2, 3)
    assert close(e_c, 3.25 * math.pi**2, 1e-12)

    solver = bicwg.Solver(single)
    r, t = solver.scattering(20.0)
    assert close(abs(r) ** 2 + abs(t) ** 2, 1.0, 1e-8)

    lead = bicwg.Solver(bicwg.Geometry(cavity_count=0))
    assert all(close(x, 1.0, 1e-12) for x in lead.transmission_scan([12.0, 20.0, 30.0]))

    poles = bicwg.locate_poles(single, e_c - 1.5, e_c + 1.5, -1.6)
    assert len(poles) == 1, poles
    pole = poles[0]
    assert close(bicwg.to_ev(pole.energy), 0.2444, 0.01)
    assert pole.gamma > 0
    print("single-cavity pole", pole, f"{bicwg.to_ev(pole.energy):.5f} eV")

    pair = bicwg.Geometry(distance=5.6)
    bics = bicwg.find_bic(pair, 5.2, 6.5)
    assert [b.symmetry for b in bics] == ["symmetric", "antisymmetric"], bics
    assert close(bics[0].d, 5.60, 0.05) and close(bics[1].d, 6.26, 0.05)
    assert abs(bics[0].gamma) < 1e-8
    print("bound states", bics)

    # exactly at the bound state the pole cancels the zero; just off it the
    # transmission zero sits next to the bound-state energy
    near = bicwg.Solver(pair.with_distance(bics[0].d + 1e-3))
    grid = [bics[0].energy + (i - 200) * 1e-5 for i in range(401)]
    assert min(near.transmission_scan(grid)) < 1e-3

    model = bicwg.EffectiveModel.calibrate(pole.z, e_c0=e_c)
    d_plus, _ = model.bic_distance("plus", 4)
    d_minus, _ = model.bic_distance("minus", 5)
    assert close(d_plus, 6.0, 0.05) and close(d_minus, 6.67, 0.05)
    print(f"effective model d+ = {d_plus:.4f}, d- = {d_minus:.4f}")

    free = bicwg.EffectiveModel(e_c, 0.0, 40.0)
    assert free.pole("minus", 6.3) == complex(e_c, 0.0)

    gamma = pole.gamma
    times = [i * 0.5 / gamma for i in range(6)]
    trace = bicwg.survival(single, "single", times)
    assert close(trace.probability[0], 1.0, 1e-9)
    rate = -cmath.log(trace.probability[4] / trace.probability[2]).real / (times[4] - times[2])
    assert close(rate, 2 * gamma, 0.05 * 2 * gamma), rate
    print(f"single-cavity decay rate {rate:.4f} vs 2 gamma {2 * gamma:.4f}")

    try:
        bicwg.Geometry(cavity_count=3)
    except ValueError:
        pass
    else:
        raise AssertionError("invalid geometry accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
