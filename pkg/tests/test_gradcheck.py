"""Model-level finite-difference suite tests (the full 20-point run is part
of the acceptance suite; here the machinery itself is exercised)."""

from paircl.errors import KinkPointError
from paircl.gradcheck import (
    CHECK_CONFIG,
    check_model_gradients,
    run_suite,
)
from paircl.train import TrainConfig


def test_single_point_all_groups_pass():
    results = check_model_gradients(seed=4)
    groups = {r.group for r in results}
    assert groups == {"encoder", "crossattn", "classifier"}
    for r in results:
        assert r.passed, f"{r.group}: {r.max_rel_err:.3e}"
        assert r.n_entries > 0


def test_suite_selects_differentiable_points():
    reports = run_suite(seed=0, points=3)
    assert set(reports) == {"encoder", "crossattn", "classifier"}
    for group, report in reports.items():
        assert report.passed, f"{group}: {report}"


def test_concat_wiring_suite():
    cfg = TrainConfig(**{**CHECK_CONFIG.to_dict(), "no_crossattn": True})
    reports = run_suite(seed=0, points=2, config=cfg)
    assert set(reports) == {"encoder", "classifier"}
    for report in reports.values():
        assert report.passed


def test_kink_points_raise_and_are_skipped():
    """Some seeds land on kinks; the suite must skip them, and direct checks
    must refuse them."""
    kinks = 0
    for seed in range(30):
        try:
            check_model_gradients(seed=seed)
        except KinkPointError:
            kinks += 1
    assert kinks > 0, "expected at least one resampled point in 30 seeds"
