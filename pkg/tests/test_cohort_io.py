import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurotree.cohort_io import (BoldSeries, Cohort, InvalidSynthSpec, ManifestError, NonFiniteSignal,
                                 RowCountMismatch, SubjectFileNotFound, SynthSpec,
                                 ZeroVarianceRegion, generate_synthetic, load_cohort, save_cohort,
                                 standardize_age, write_matrix)
from neurotree.fc_builder import pearson_fc


def _write_fixture(root, signals, ages=None, labels=None):
    root.mkdir(parents=True, exist_ok=True)
    lines = ["subject_id,age,label,file"]
    for n, sig in enumerate(signals):
        write_matrix(root / f"s{n}.csv", sig)
        age = 30 + n if ages is None else ages[n]
        label = n % 2 if labels is None else labels[n]
        lines.append(f"s{n},{age},{label},s{n}.csv")
    (root / "manifest.csv").write_text("\n".join(lines) + "\n")


def test_load_two_subjects(tmp_path, rng):
    _write_fixture(tmp_path, [rng.standard_normal((4, 40)) for _ in range(2)])
    cohort = load_cohort(tmp_path)
    assert len(cohort) == 2 and cohort.v == 4
    assert [s.subject_id for s in cohort.subjects] == ["s0", "s1"]


def test_missing_file(tmp_path, rng):
    _write_fixture(tmp_path, [rng.standard_normal((4, 40))])
    (tmp_path / "s0.csv").unlink()
    with pytest.raises(SubjectFileNotFound, match="subject file not found"):
        load_cohort(tmp_path)


def test_constant_row(tmp_path, rng):
    sig = rng.standard_normal((4, 40))
    sig[2] = 3.0
    _write_fixture(tmp_path, [sig])
    with pytest.raises(ZeroVarianceRegion, match="zero-variance region"):
        load_cohort(tmp_path)


def test_nan_signal(tmp_path, rng):
    sig = rng.standard_normal((4, 40))
    sig[1, 5] = np.nan
    _write_fixture(tmp_path, [sig])
    with pytest.raises(NonFiniteSignal):
        load_cohort(tmp_path)


def test_row_count_mismatch(tmp_path, rng):
    _write_fixture(tmp_path, [rng.standard_normal((4, 40)), rng.standard_normal((5, 40))])
    with pytest.raises(RowCountMismatch):
        load_cohort(tmp_path)


def test_missing_manifest_entry(tmp_path, rng):
    _write_fixture(tmp_path, [rng.standard_normal((4, 40))])
    (tmp_path / "manifest.csv").write_text("subject_id,age,label,file\ns0,,1,s0.csv\n")
    with pytest.raises(ManifestError):
        load_cohort(tmp_path)


def test_age_must_be_positive(rng):
    with pytest.raises(ValueError):
        BoldSeries("x", rng.standard_normal((3, 10)), 0.0, 1)


def test_save_load_round_trip(tmp_path):
    cohort = generate_synthetic(SynthSpec(v=5, T=30, n_per_class=3, seed=3))
    save_cohort(cohort, tmp_path)
    back = load_cohort(tmp_path)
    assert [s.subject_id for s in back.subjects] == [s.subject_id for s in cohort.subjects]
    for a, b in zip(cohort.subjects, back.subjects):
        assert np.array_equal(a.signal, b.signal)
        assert a.age == b.age and a.label == b.label
    assert back.region_labels == cohort.region_labels
    assert back.network_map == cohort.network_map


def test_seed_determinism():
    a = generate_synthetic(SynthSpec(seed=7, n_per_class=5))
    b = generate_synthetic(SynthSpec(seed=7, n_per_class=5))
    for x, y in zip(a.subjects, b.subjects):
        assert x.subject_id == y.subject_id and x.age == y.age
        assert np.array_equal(x.signal, y.signal)


def test_block_out_of_range():
    with pytest.raises(InvalidSynthSpec):
        generate_synthetic(SynthSpec(v=4, planted_blocks=[[2, 3, 4]]))


def test_overlapping_blocks():
    with pytest.raises(InvalidSynthSpec):
        generate_synthetic(SynthSpec(planted_blocks=[[0, 1], [1, 2]]))


def test_ages_in_range():
    c = generate_synthetic(SynthSpec(n_per_class=20))
    assert np.all((c.ages() >= 18) & (c.ages() <= 60))
    split = generate_synthetic(SynthSpec(n_per_class=20, age_split=True))
    ages, labels = split.ages(), split.labels()
    assert ages[labels == 0].max() <= ages[labels == 1].min()


def _within_block(cohort, block, label):
    idx = np.asarray(block)
    vals = []
    for s in cohort.subjects:
        if s.label == label:
            r = pearson_fc(s.signal).data[np.ix_(idx, idx)]
            vals.append(np.abs(r[~np.eye(len(idx), dtype=bool)]).mean())
    return np.array(vals)


def test_null_coupling_no_class_difference():
    c = generate_synthetic(SynthSpec(coupling_strength=0.0, n_per_class=50, seed=11))
    a = _within_block(c, [0, 1, 2], 0)
    b = _within_block(c, [0, 1, 2], 1)
    se = np.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
    assert abs(a.mean() - b.mean()) < 3 * se


def test_planted_block_stronger_in_class_one():
    c = generate_synthetic(SynthSpec(coupling_strength=0.4, n_per_class=50, seed=11))
    assert _within_block(c, [0, 1, 2], 1).mean() > _within_block(c, [0, 1, 2], 0).mean()


def test_standardized_age():
    assert standardize_age(50.0) == 0.5


@settings(max_examples=25, deadline=None)
@given(v=st.integers(2, 8), T=st.integers(4, 60), n=st.integers(1, 3),
       strength=st.floats(0, 2), sigma=st.floats(0.05, 3), seed=st.integers(0, 2**32 - 1))
def test_synthetic_cohorts_are_valid(v, T, n, strength, sigma, seed):
    spec = SynthSpec(v=v, T=T, n_per_class=n, coupling_strength=strength,
                     planted_blocks=[list(range(min(2, v)))], noise_sigma=sigma, seed=seed)
    cohort = generate_synthetic(spec)
    assert isinstance(cohort, Cohort) and len(cohort) == 2 * n
    for s in cohort.subjects:
        assert s.signal.shape == (v, T)
        assert np.all(np.isfinite(s.signal)) and np.all(s.signal.var(axis=1) > 0) and s.age > 0
