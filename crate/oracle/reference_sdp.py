"""Reference steerable weight and robustness for the fixture assemblages.

Formulated directly in cvxpy with complex Hermitian variables and solved by
Clarabel, independently of the Rust solver. Writes golden.json next to the
fixtures.

    python3 oracle/reference_sdp.py crates/core/tests/fixtures
"""

import itertools
import json
import sys
from pathlib import Path

import cvxpy as cp
import numpy as np

DATE = "2026-10-15"


def load(path):
    doc = json.loads(Path(path).read_text())
    assert doc["format"] == 1
    r, s, d = doc["r"], doc["s"], doc["d"]
    rho = {}
    for m in doc["members"]:
        mat = np.array([[complex(re, im) for re, im in row] for row in m["matrix"]])
        rho[(m["a"], m["x"])] = mat
    return r, s, d, rho


def solve(prob):
    # Tightest tolerance at which Clarabel reports a clean optimum.
    for tol in (1e-10, 1e-9, 1e-8):
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=tol, tol_gap_rel=tol, tol_feas=tol)
        if prob.status == cp.OPTIMAL:
            return tol
    raise RuntimeError(f"no clean optimum: {prob.status}")


def strategies(r, s):
    # response[x] = a
    return list(itertools.product(range(r), repeat=s))


def steerable_weight(r, s, d, rho):
    lam = strategies(r, s)
    omega = [cp.Variable((d, d), hermitian=True) for _ in lam]
    cons = [w >> 0 for w in omega]
    for x in range(s):
        for a in range(r):
            part = sum(w for w, resp in zip(omega, lam) if resp[x] == a)
            cons.append(rho[(a, x)] - part >> 0)
    prob = cp.Problem(cp.Maximize(cp.real(sum(cp.trace(w) for w in omega))), cons)
    tol = solve(prob)
    return 1.0 - prob.value, tol


def robustness(r, s, d, rho):
    lam = strategies(r, s)
    omega = [cp.Variable((d, d), hermitian=True) for _ in lam]
    cons = [w >> 0 for w in omega]
    for x in range(s):
        for a in range(r):
            part = sum(w for w, resp in zip(omega, lam) if resp[x] == a)
            cons.append(part - rho[(a, x)] >> 0)
    prob = cp.Problem(cp.Minimize(cp.real(sum(cp.trace(w) for w in omega))), cons)
    tol = solve(prob)
    return prob.value - 1.0, tol


def main():
    root = Path(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures")
    files = ["singlet_xz.json"] + sorted(p.name for p in root.glob("steerable_*.json"))
    entries = []
    tols = []
    for name in files:
        r, s, d, rho = load(root / name)
        w, wtol = steerable_weight(r, s, d, rho)
        rob, rtol = robustness(r, s, d, rho)
        tols.append(max(wtol, rtol))
        entries.append({"fixture": name, "steerable_weight": max(w, 0.0), "robustness": max(rob, 0.0)})
        print(f"{name}: W={entries[-1]['steerable_weight']:.12f} R={entries[-1]['robustness']:.12f}")
    golden = {
        "format": 1,
        "provenance": {
            "script": "oracle/reference_sdp.py",
            "solver": f"cvxpy {cp.__version__} / CLARABEL",
            "date": DATE,
            "note": "weight = 1 - max sum Tr w_l s.t. rho(a|x) >= sum_l D_l(a|x) w_l; "
            "robustness = min sum Tr w_l - 1 s.t. sum_l D_l(a|x) w_l >= rho(a|x); "
            f"clarabel gap/feasibility tolerance <= {max(tols):.0e}",
        },
        "entries": entries,
    }
    (root / "golden.json").write_text(json.dumps(golden, indent=2) + "\n")


if __name__ == "__main__":
    main()
