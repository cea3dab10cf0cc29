"""The ten acceptance criteria at their stated tolerances and default sizes.

Each test prints one PASS/FAIL line to the terminal (outside pytest's capture)
and fails when its criterion fails or overruns its runtime budget.  The
kinetic-trend criterion takes about twenty minutes on one core.
"""
import json

import pytest

from wavekin import checks as ck

# criterion number, check name, runtime budget in seconds (None when unstated)
CRITERIA = [
    (1, "equilibria", 300),
    (2, "conservation", None),
    (3, "structure", None),
    (4, "density", 120),
    (5, "hierarchy", None),
    (6, "diagrams", 180),
    (7, "molecules", None),
    (8, "cumulants", None),
    (9, "micro-diagram", 600),
    (10, "kinetic-trend", 1800),
]


@pytest.mark.parametrize("number,name,budget", CRITERIA, ids=[f"{n:02d}-{c}" for n, c, _ in CRITERIA])
def test_criterion(number, name, budget, capsys):
    res = ck.CHECKS[name]()
    within = budget is None or res.elapsed < budget
    line = f"criterion {number:2d}: {res.line()}" + ("" if within else f" over budget {budget}s")
    with capsys.disabled():
        print("\n" + line, flush=True)
    assert res.passed, json.dumps(res.to_dict()["metrics"], indent=1, default=str)
    assert within, line
