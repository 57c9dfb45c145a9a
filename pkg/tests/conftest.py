import os

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


# Every optimal LP answer produced anywhere in the suite must carry a valid
# certificate. The wrapper records offenders; a failing certificate fails the
# test that produced it.
import pytest  # noqa: E402

from qrisk import lp_solver  # noqa: E402

_raw_solve = lp_solver.solve
LP_LOG = {"optimal": 0, "uncertified": []}


def _recording_solve(lp, *args, **kwargs):
    sol = _raw_solve(lp, *args, **kwargs)
    if sol.optimal:
        LP_LOG["optimal"] += 1
        if sol.certificate is None or not sol.certificate.ok():
            LP_LOG["uncertified"].append(sol.certificate)
    return sol


lp_solver.solve = _recording_solve


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_call(item):
    before = len(LP_LOG["uncertified"])
    yield
    bad = LP_LOG["uncertified"][before:]
    if bad:
        raise AssertionError(f"{len(bad)} optimal LP solution(s) without a valid certificate: {bad[0]}")
