"""Smoke test for the ncdiff_py extension module.

Build and install first:
    cd crates/python && maturin build --release -o dist && pip install dist/*.whl
"""

import json
import math
import sys

import ncdiff_py as nd


def check(label, ok, detail=""):
    print(f"{'ok  ' if ok else 'FAIL'} {label} {detail}")
    return ok


def main():
    results = []
    scn = nd.Scenario.default()
    lin = nd.Scenario.linear()
    print(scn, lin)

    rep = scn.validate()
    results.append(check("default scenario validates", rep["passed"], f"beta1={rep['bounds']['beta1']:.6f}"))

    roundtrip = nd.Scenario.from_json(scn.to_json())
    results.append(check("json roundtrip", json.loads(roundtrip.to_json()) == json.loads(scn.to_json())))

    times, states = nd.simulate(lin, 5.0)
    y0 = states[0][0]
    err = max(abs(s[0] - y0 * math.exp(-t)) / (y0 * math.exp(-t)) for t, s in zip(times, states))
    results.append(check("linear closed form", err <= 1e-8, f"max rel err {err:.2e}"))

    b = nd.bounds(1.0, 1.0, 0.01, 0.25, 1.0)
    results.append(check("prefactor equals 2", abs(b["prefactor"] - 2.0) < 1e-13, f"{b['prefactor']!r}"))

    e = nd.energy(scn, 2.5)
    results.append(check("energy identity", e["max_relative"] <= 1e-6, f"{e['max_relative']:.2e}"))

    a = nd.absorption(scn, members=4, horizon=2.0)
    results.append(check("absorbing bound", a["min_relative_margin_r0"] >= -1e-8, f"{a['min_relative_margin_r0']:.3f}"))

    p = nd.pullback(lin, levels=4, cloud_size=3, envelope=True)
    results.append(check("pullback envelope", p["within_envelope"] is True))

    try:
        nd.Scenario.from_json("{")
        results.append(check("malformed json raises", False))
    except nd.NcdiffError:
        results.append(check("malformed json raises", True))

    print("smoke test:", "PASS" if all(results) else "FAIL")
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
