import csv
import json

import numpy as np
import pytest

from blowup.exceptions import GridMisalignment, InvalidArgument, UnknownSuite
from blowup.verify import (
    ANCHORS,
    DEFAULT_CONFIG,
    CheckResult,
    Report,
    check_contraction,
    check_scaling,
    config_digest,
    contraction_fields,
    effective_config,
    result,
    run_suite,
    scaling_pair,
)


@pytest.fixture(scope="module")
def profile_report():
    return run_suite("profile")


def test_check_result_invariant():
    CheckResult("a", "b", 0.5, 1.0, True)
    with pytest.raises(InvalidArgument):
        CheckResult("a", "b", 2.0, 1.0, True)
    with pytest.raises(InvalidArgument):
        CheckResult("a", "b", 1.0, 1.0, False)


def test_nan_violation_fails():
    res = result("x", "anchor", float("nan"), 1.0)
    assert not res.passed and res.max_violation == float("inf")


def test_report_needs_results():
    with pytest.raises(InvalidArgument):
        Report("profile", [], "digest")


def test_unknown_suite():
    with pytest.raises(UnknownSuite):
        run_suite("nope")


@pytest.mark.parametrize("config", [{"bogus": 1}, {"tolerance_scale": 0.0}])
def test_bad_config(config):
    with pytest.raises(InvalidArgument):
        effective_config(config)


def test_digest_stable_and_sensitive():
    assert config_digest("profile", effective_config({})) == config_digest("profile", dict(DEFAULT_CONFIG))
    assert config_digest("profile", effective_config(None)) != config_digest("elliptic", effective_config(None))
    assert (config_digest("profile", effective_config({"tolerance_scale": 2.0}))
            != config_digest("profile", effective_config({})))


def test_profile_suite_passes(profile_report):
    assert profile_report.passed
    assert profile_report.config_digest == config_digest("profile", effective_config({}))
    anchors = set(ANCHORS.values())
    assert all(r.paper_anchor in anchors for r in profile_report.results)


def test_reports_deterministic(profile_report):
    again = run_suite("profile")
    strip = lambda rep: [{k: v for k, v in r.items() if k != "runtime_seconds"}
                         for r in rep.to_dict()["results"]]
    assert strip(again) == strip(profile_report)


def test_tolerance_scale_applies(profile_report):
    tight = run_suite("profile", {"tolerance_scale": 0.5})
    for a, b in zip(profile_report.results, tight.results):
        assert b.tolerance == pytest.approx(0.5 * a.tolerance)


def test_json_and_csv(profile_report, tmp_path):
    profile_report.write_json(tmp_path / "r.json")
    data = json.loads((tmp_path / "r.json").read_text())
    assert set(data) == {"suite", "results", "config_digest"}
    assert set(data["results"][0]) == {"name", "paper_anchor", "max_violation", "tolerance",
                                       "passed", "runtime_seconds"}
    profile_report.write_csv(tmp_path / "r.csv")
    with (tmp_path / "r.csv").open(encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(profile_report.results)
    assert rows[0]["passed"] in {"true", "false"}


def test_infinite_violation_serialises():
    rep = Report("x", [result("a", "b", float("inf"), 1.0)], "d")
    data = json.loads(rep.to_json())
    assert data["results"][0]["max_violation"] == np.finfo(float).max


@pytest.mark.parametrize("initial", [None, lambda x: 0.0 * x, lambda x: 1e4 + 0.0 * x],
                         ids=["bump", "zero", "huge-constant"])
def test_contraction(initial):
    fields = contraction_fields(t_end=0.05, initial=initial)
    res = check_contraction(*fields)
    assert res.passed and res.max_violation <= 1e-8


@pytest.fixture(scope="module")
def scaling_runs():
    kw = dict(dt_max=0.005, t_end=0.05, snapshots=(0.025, 0.05))
    return scaling_pair(n=41, **kw), scaling_pair(n=81, dt_max=0.0025, t_end=0.05, snapshots=(0.025, 0.05))


def test_scaling_identity_and_refinement(scaling_runs):
    coarse, fine = scaling_runs
    assert check_scaling((coarse[0], coarse[0]), ell=1.0).max_violation == 0.0
    assert check_scaling(fine).max_violation < check_scaling(coarse).max_violation


def test_scaling_misaligned(scaling_runs):
    coarse, fine = scaling_runs
    with pytest.raises(GridMisalignment):
        check_scaling((coarse[0], fine[0]), ell=2.0)
