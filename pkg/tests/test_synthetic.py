import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chanmi import units
from chanmi.estimation import cross_entropy_of_log
from chanmi.infocore import LabelSpace, ValidationError
from chanmi.synthetic import (
    FIXTURES,
    Garbling,
    SyntheticSpec,
    bayes_posterior,
    bayes_prediction_log,
    column_map,
    exact_conditional_entropy,
    exact_feature_entropy,
    exact_mi,
    fixture_s1,
    fixture_s2,
    fixture_s3,
    garble,
    garble_samples,
    read_spec,
    s2_text_garbling,
    sample,
    write_spec,
)

# Oracle values computed by direct summation and frozen; any regression in
# the summation shows up as a mismatch against these constants.
S1_H = 1.0
S1_CE = 0.46899559358928117
S1_MI = 0.5310044064107189
S2_CE = 0.36417731598402575
S2_MI = 0.6358226840159744
S2_TEXT_MI = 0.5310044064107189
S2_COND_MI = 0.10481827760525553
S3_H = 2.876453681363911
S3_CE = 2.0945301762789477
S3_MI = 0.7819235050849633


def random_joint_specs():
    """Small strictly positive joints, normalized."""

    def build(shape_and_values):
        (n_f, n_c), values = shape_and_values
        arr = np.array(values[: n_f * n_c]).reshape(n_f, n_c)
        arr = arr / arr.sum()
        return SyntheticSpec(
            name="random",
            feature_space=LabelSpace(tuple(f"f{i}" for i in range(n_f))),
            channel_space=LabelSpace(tuple(f"c{i}" for i in range(n_c))),
            joint=arr,
        )

    shapes = st.tuples(st.integers(2, 4), st.integers(2, 4))
    return shapes.flatmap(
        lambda shape: st.tuples(
            st.just(shape),
            st.lists(
                st.floats(min_value=0.01, max_value=1.0),
                min_size=shape[0] * shape[1],
                max_size=shape[0] * shape[1],
            ),
        )
    ).map(build)


class TestOracleValues:
    def test_s1(self):
        s = fixture_s1()
        assert exact_feature_entropy(s) == pytest.approx(S1_H, abs=1e-12)
        assert exact_conditional_entropy(s) == pytest.approx(S1_CE, abs=1e-12)
        assert exact_mi(s) == pytest.approx(S1_MI, abs=1e-12)

    def test_s2(self):
        s = fixture_s2()
        assert exact_feature_entropy(s) == pytest.approx(1.0, abs=1e-12)
        assert exact_conditional_entropy(s) == pytest.approx(S2_CE, abs=1e-12)
        assert exact_mi(s) == pytest.approx(S2_MI, abs=1e-12)

    def test_s2_garbled_recovers_s1_channel(self):
        garbled = garble(fixture_s2(), s2_text_garbling())
        assert exact_mi(garbled) == pytest.approx(S2_TEXT_MI, abs=1e-12)
        assert exact_conditional_entropy(garbled) == pytest.approx(S1_CE, abs=1e-12)
        assert np.allclose(garbled.joint, fixture_s1().joint)

    def test_s2_conditional_mi(self):
        s = fixture_s2()
        garbled = garble(s, s2_text_garbling())
        assert exact_mi(s) - exact_mi(garbled) == pytest.approx(S2_COND_MI, abs=1e-12)

    def test_s3(self):
        s = fixture_s3()
        assert exact_feature_entropy(s) == pytest.approx(S3_H, abs=1e-12)
        assert exact_conditional_entropy(s) == pytest.approx(S3_CE, abs=1e-12)
        assert exact_mi(s) == pytest.approx(S3_MI, abs=1e-12)

    def test_registry_names(self):
        assert set(FIXTURES) == {"s1", "s2", "s3"}

    @pytest.mark.parametrize("name", sorted(FIXTURES))
    def test_identity_holds_exactly(self, name):
        s = FIXTURES[name]()
        gap = exact_feature_entropy(s) - exact_conditional_entropy(s) - exact_mi(s)
        assert abs(gap) <= 1e-12

    def test_nats_rescale(self):
        with units.using_unit("nats"):
            assert exact_mi(fixture_s1()) == pytest.approx(S1_MI * math.log(2.0))

    @given(random_joint_specs())
    @settings(max_examples=60)
    def test_identity_holds_for_random_joints(self, spec):
        gap = exact_feature_entropy(spec) - exact_conditional_entropy(spec) - exact_mi(spec)
        assert abs(gap) <= 1e-12
        assert 0.0 <= exact_mi(spec) <= exact_feature_entropy(spec) + 1e-12


class TestSpecValidation:
    def test_rejects_negative_entries(self):
        with pytest.raises(ValidationError, match=">= 0"):
            SyntheticSpec("x", LabelSpace(("a", "b")), LabelSpace(("c", "d")),
                          [[0.6, -0.1], [0.3, 0.2]])

    def test_rejects_bad_sum(self):
        with pytest.raises(ValidationError, match="sum to 1"):
            SyntheticSpec("x", LabelSpace(("a", "b")), LabelSpace(("c", "d")),
                          [[0.5, 0.2], [0.2, 0.2]])

    def test_rejects_zero_probability_feature(self):
        with pytest.raises(ValidationError, match="zero probability"):
            SyntheticSpec("x", LabelSpace(("a", "b")), LabelSpace(("c", "d")),
                          [[0.5, 0.5], [0.0, 0.0]])

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValidationError, match="shape"):
            SyntheticSpec("x", LabelSpace(("a", "b")), LabelSpace(("c",)),
                          [[0.5, 0.5]])

    def test_rejects_ragged(self):
        with pytest.raises(ValidationError):
            SyntheticSpec("x", LabelSpace(("a", "b")), LabelSpace(("c", "d")),
                          [[0.5, 0.5], [0.0]])

    def test_joint_is_read_only(self):
        s = fixture_s1()
        with pytest.raises(ValueError):
            s.joint[0, 0] = 0.9


class TestSampling:
    def test_deterministic_per_seed(self):
        s = fixture_s2()
        a = sample(s, 500, seed=7)
        b = sample(s, 500, seed=7)
        c = sample(s, 500, seed=8)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
        assert a.shape == (500, 2)

    def test_indices_in_range(self):
        s = fixture_s3()
        draws = sample(s, 2000, seed=1)
        assert draws[:, 0].min() >= 0 and draws[:, 0].max() < 10
        assert draws[:, 1].min() >= 0 and draws[:, 1].max() < 10

    def test_empirical_frequencies_converge(self):
        s = fixture_s1()
        draws = sample(s, 100_000, seed=3)
        counts = np.zeros_like(s.joint)
        np.add.at(counts, (draws[:, 0], draws[:, 1]), 1.0)
        tv = 0.5 * np.abs(counts / len(draws) - s.joint).sum()
        assert tv < 0.01

    def test_rejects_empty_draw(self):
        with pytest.raises(ValidationError):
            sample(fixture_s1(), 0, seed=0)


class TestBayesPosterior:
    def test_s1_posterior(self):
        assert bayes_posterior(fixture_s1(), 0).probs == pytest.approx((0.9, 0.1))
        assert bayes_posterior(fixture_s1(), "c1").probs == pytest.approx((0.1, 0.9))

    def test_zero_probability_symbol_rejected(self):
        s = SyntheticSpec("x", LabelSpace(("a", "b")), LabelSpace(("c", "d", "e")),
                          [[0.5, 0.0, 0.0], [0.25, 0.25, 0.0]])
        bayes_posterior(s, "d")
        with pytest.raises(ValidationError, match="zero probability"):
            bayes_posterior(s, "e")

    def test_out_of_range_index_rejected(self):
        with pytest.raises(ValidationError, match="out of range"):
            bayes_posterior(fixture_s1(), 5)


class TestGarbling:
    def test_unmapped_symbol_rejected(self):
        with pytest.raises(ValidationError, match="unmapped"):
            garble(fixture_s2(), Garbling({"c0": "g0", "c1": "g0", "c2": "g1"}))

    def test_coarse_order_is_first_appearance(self):
        g = Garbling({"c0": "late", "c1": "early", "c2": "early", "c3": "late"})
        _, coarse = column_map(fixture_s2(), g)
        assert coarse.labels == ("late", "early")

    def test_garble_samples_rewrites_channel_only(self):
        s = fixture_s2()
        draws = sample(s, 100, seed=5)
        coarse = garble_samples(s, s2_text_garbling(), draws)
        assert np.array_equal(draws[:, 0], coarse[:, 0])
        assert np.array_equal(coarse[:, 1], (draws[:, 1] >= 2).astype(int))

    @given(random_joint_specs(), st.data())
    @settings(max_examples=40)
    def test_merging_never_increases_information(self, spec, data):
        n_c = len(spec.channel_space)
        targets = data.draw(
            st.lists(st.integers(0, 1), min_size=n_c, max_size=n_c), label="targets"
        )
        g = Garbling({c: f"g{t}" for c, t in zip(spec.channel_space.labels, targets)})
        assert exact_mi(garble(spec, g)) <= exact_mi(spec) + 1e-9


class TestBayesPredictionLog:
    def test_structure_and_gold(self):
        s = fixture_s1()
        draws = sample(s, 50, seed=2)
        log = bayes_prediction_log(s, draws, channel="audio")
        assert len(log.records) == 50
        assert log.label_space == s.feature_space
        assert [r.gold for r in log.records] == draws[:, 0].tolist()
        assert log.records[0].split == "test"

    def test_rows_are_exact_posteriors(self):
        s = fixture_s1()
        draws = sample(s, 20, seed=2)
        log = bayes_prediction_log(s, draws)
        for rec, (_, c) in zip(log.records, draws):
            assert rec.predicted.probs == bayes_posterior(s, int(c)).probs

    def test_cross_entropy_approaches_exact_bound_from_above(self):
        # the strongest predictor's loss tracks the true conditional entropy
        s = fixture_s1()
        draws = sample(s, 50_000, seed=11)
        est = cross_entropy_of_log(bayes_prediction_log(s, draws))
        assert est.value == pytest.approx(S1_CE, abs=0.02)


class TestSpecIO:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "spec.json"
        write_spec(fixture_s2(), path)
        restored = read_spec(path)
        assert restored.name == "s2"
        assert restored.feature_space == fixture_s2().feature_space
        assert np.array_equal(restored.joint, fixture_s2().joint)

    def test_strict_keys(self, tmp_path):
        path = tmp_path / "bad.json"
        d = fixture_s1().to_dict()
        d["extra"] = 1
        path.write_text(json.dumps(d))
        with pytest.raises(ValidationError, match="unexpected keys"):
            read_spec(path)

    def test_missing_key(self, tmp_path):
        path = tmp_path / "bad.json"
        d = fixture_s1().to_dict()
        del d["joint"]
        path.write_text(json.dumps(d))
        with pytest.raises(ValidationError, match="missing keys"):
            read_spec(path)

    def test_not_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("not json at all")
        with pytest.raises(ValidationError, match="not valid JSON"):
            read_spec(path)

    def test_not_an_object(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("[1,2,3]")
        with pytest.raises(ValidationError, match="JSON object"):
            read_spec(path)
