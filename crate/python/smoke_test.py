"""Smoke test for the dualrep extension module."""

import math

import dualrep


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    sup = dualrep.Functional.sup(3)
    assert sup.evaluate([0.0, 1.0, -2.0]) == 1.0
    assert sup.subgradient([0.0, 2.0, 1.0]) == [0.0, 1.0, 0.0]
    assert sup.conjugate([0.2, 0.3, 0.5]) == 0.0
    assert math.isinf(sup.conjugate([0.5, 0.5, 0.5]))
    assert sup.translation_invariant

    p = [0.2, 0.3, 0.5]
    ent = dualrep.Functional.entropic(p)
    f = [0.4, -1.0, 0.7]
    z = sum(pi * math.exp(fi) for pi, fi in zip(p, f))
    assert close(ent.evaluate(f), math.log(z), 1e-12)
    gibbs = [pi * math.exp(fi) / z for pi, fi in zip(p, f)]
    mu = ent.subgradient(f)
    assert all(close(a, b, 1e-6) for a, b in zip(mu, gibbs))
    rep = ent.verify_maxrep(f, fy_samples=200)
    assert rep["certified"] and abs(rep["gap"]) <= 1e-6

    ind = dualrep.Functional.indicator_p(3)
    rep = ind.verify_maxrep([-1.0, -1.0, -1.0])
    assert rep["rhs"] == 0.0 and rep["witness"] == [0.0, 0.0, 0.0]
    assert math.isinf(ind.evaluate([1.0, 1.0, 1.0]))

    lin = dualrep.Functional.linear([0.1, 0.0, 2.0])
    assert close(lin.directional_derivative([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]), 2.1, 1e-12)

    wc = dualrep.Functional.worst_case([([0.5, 0.5, 0.0], 0.0), ([0.0, 0.0, 1.0], 0.1)])
    assert close(wc.evaluate([1.0, 1.0, 0.0]), 1.0, 1e-12)

    mix = dualrep.Functional.mixture(0.5, p)
    assert mix.kind == "combinator"

    levels, partition, g = dualrep.step_approximation([0.0, 0.3, 0.9], 0.5)
    assert levels == [0.0, 0.5] and partition == [[0, 1], [2]] and g == [0.0, 0.0, 0.5]

    esc = dualrep.mass_escape(6)
    assert esc["escape_detected"]
    assert esc["witness_dirac_index"] == [s - 1 for s in esc["rung_sizes"]]
    assert not dualrep.mass_escape(5, cap=3)["escape_detected"]

    top = dualrep.Functional.sup(64)
    passed, trace = dualrep.tightness(top, 2.0, [2, 4, 8, 16, 32, 64])
    assert not passed and trace == [2.0] * 5

    try:
        sup.evaluate([1.0])
    except ValueError:
        pass
    else:
        raise AssertionError("space mismatch must raise")

    print("smoke test passed")


if __name__ == "__main__":
    main()
