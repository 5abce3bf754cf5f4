"""Path sampling, excursion counting, and the two estimators."""

import numpy as np
import pytest

from jointeec.common import ArgumentError
from jointeec.model import (
    BivariateModel,
    ShiftMixture,
    SquaredExponential,
    fixture,
)
from jointeec import montecarlo as mc


def test_sample_paths_deterministic():
    mod = fixture("diagonal")
    a = mc.sample_paths(mod, 128, 50, 11)
    b = mc.sample_paths(mod, 128, 50, 11)
    c = mc.sample_paths(mod, 128, 50, 12)
    assert np.array_equal(a.x_paths, b.x_paths)
    assert np.array_equal(a.y_paths, b.y_paths)
    assert not np.array_equal(a.x_paths, c.x_paths)
    assert a.factorization_cond > 0.0
    assert np.isfinite(a.factorization_cond)


def test_sample_paths_marginal_statistics():
    mod = fixture("diagonal")
    batch = mc.sample_paths(mod, 128, 4000, 5)
    var_x = batch.x_paths.var(axis=0)
    assert np.max(np.abs(var_x - 1.0)) < 0.08
    # same-time cross correlation should sit near c = 0.5
    k = 64
    corr = np.corrcoef(batch.x_paths[:, k], batch.y_paths[:, k])[0, 1]
    assert corr == pytest.approx(0.5, abs=0.05)


def test_sample_paths_rejects_bad_sizes():
    mod = fixture("diagonal")
    with pytest.raises(ArgumentError):
        mc.sample_paths(mod, 32, 10, 1)
    with pytest.raises(ArgumentError):
        mc.sample_paths(mod, 8192, 10, 1)
    with pytest.raises(ArgumentError):
        mc.sample_paths(mod, 128, 0, 1)


def test_count_excursion_components():
    t = np.linspace(0.0, 1.0, 512)
    wave = np.sin(4.0 * np.pi * t)
    assert mc.count_excursion_components(wave, 0.5) == 2
    assert mc.count_excursion_components(np.ones(16), 0.5) == 1
    assert mc.count_excursion_components(-np.ones(16), 0.5) == 0
    assert mc.count_excursion_components(np.array([0.6, 0.4, 0.6]), 0.5) == 2
    # touching the level counts: the excursion set is closed
    assert mc.count_excursion_components(np.array([0.0, 0.5, 0.0]), 0.5) == 1


def test_estimate_eec_against_expansion():
    from jointeec.kacrice import eec
    mod = fixture("diagonal")
    est = mc.estimate_eec(mod, 2.5, 512, 20000, 42)
    ref = eec(mod, 2.5).total.value
    assert est.method == "PlainMC"
    assert abs(est.value - ref) < 3.0 * est.error


def test_eec_dominates_hit_probability():
    # chi(A) chi(B) >= 1 whenever both sets are nonempty, pathwise, so the
    # estimator means are ordered with certainty on common samples
    mod = fixture("interior-point")
    batch = mc.sample_paths(mod, 256, 4000, 9)
    for u in (1.5, 2.0, 2.5):
        cx = mc._counts(batch.x_paths, u)
        cy = mc._counts(batch.y_paths, u)
        chi = float(np.mean(cx * cy))
        hit = float(np.mean((cx > 0) & (cy > 0)))
        assert chi >= hit


def test_grid_refinement_monotone_under_common_noise():
    # nested dyadic grids carry a subset property: every hit on a coarse
    # grid is a hit on the finer one when the same joint draw is reused.
    # a short length scale keeps the paths rough enough that refinement
    # actually finds new exceedances
    k = SquaredExponential(0.12)
    mod = BivariateModel(k, k, ShiftMixture(0.5, 0.0, k), label="rough")
    u = 2.0
    for seed in (11, 42):
        batch = mc.sample_paths(mod, 513, 30000, seed)
        hits = []
        for step in (8, 4, 2, 1):
            x = batch.x_paths[:, ::step]
            y = batch.y_paths[:, ::step]
            h = (x.max(axis=1) >= u) & (y.max(axis=1) >= u)
            hits.append(h)
        counts = [int(h.sum()) for h in hits]
        for coarse, fine in zip(hits, hits[1:]):
            assert np.all(fine[coarse])  # pathwise subset
        diffs = [b - a for a, b in zip(counts, counts[1:])]
        assert diffs[0] >= 1
        assert diffs[0] >= diffs[1] >= diffs[2] >= 0


def test_joint_excursion_plain():
    mod = fixture("diagonal")
    est = mc.estimate_joint_excursion(mod, 2.0, 128, 2000, 3)
    assert est.method == "PlainMC"
    assert 0.0 < est.value < 1.0
    assert est.error > 0.0


def test_conditional_mean_path_pins_level():
    mod = fixture("interior-point")
    grid = np.linspace(0.0, 1.0, 129)
    m = mc._conditional_mean_path(mod, grid, 0.5, 0.5, 3.0)
    k = 64  # grid point at t = 0.5
    assert m[k] == pytest.approx(3.0, rel=1e-12)        # X half
    assert m[129 + k] == pytest.approx(3.0, rel=1e-12)  # Y half
    # the tilt decays away from the pin (slowly, at this length scale)
    assert m[0] < m[k]
    assert m[129] < m[129 + k]


def test_importance_sampling_agrees_with_plain_when_independent():
    # with r = 0 the tilt is a legal change of measure and both estimators
    # target the same probability
    from jointeec.model import independent_model
    mod = independent_model()
    plain = mc.estimate_joint_excursion(mod, 2.0, 128, 4000, 17)
    tilted = mc.estimate_joint_excursion(mod, 2.0, 128, 4000, 17, shift=(0.5, 0.5))
    combined = np.hypot(plain.error, tilted.error)
    assert tilted.method == "ImportanceSampled"
    assert abs(plain.value - tilted.value) < 3.0 * combined


def test_importance_sampling_reports_effective_sample_size():
    mod = fixture("interior-point")
    est = mc.estimate_joint_excursion(mod, 3.0, 256, 4000, 11, shift=(0.5, 0.5))
    assert est.method == "ImportanceSampled"
    assert not est.low_confidence
    assert any("effective sample size" in n for n in est.notes)


def test_importance_sampling_flags_poor_shift():
    # shifting at the end of the diagonal ridge leaves most of the event
    # mass unsampled; the effective sample size collapses and the estimate
    # must say so rather than pretend to a small standard error
    mod = fixture("diagonal")
    est = mc.estimate_joint_excursion(mod, 3.0, 512, 5000, 7, shift=(0.0, 0.0))
    assert est.low_confidence
    assert any("effective sample size" in n for n in est.notes)
