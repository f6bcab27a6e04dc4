"""Acceptance criteria 1-14 at their stated tolerances.

The whole suite runs once per session with a shared context (criterion 4
reads the product minima recorded by the combustion runs before it).  One
PASS/FAIL line per criterion is echoed as it finishes and repeated in the
terminal summary.
"""

import pytest

from turblab.acceptance import CRITERIA, Context, run_acceptance

LINES = []


@pytest.fixture(scope="session")
def results(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    found = run_acceptance("all", outdir=out, ctx=Context(), echo=LINES.append)
    return {r.id: r for r in found}


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"{c.id:02d}-{c.name.replace(' ', '_')}" for c in CRITERIA])
def test_criterion(results, criterion):
    r = results[criterion.id]
    print(r.line())
    assert r.passed, r.line()
