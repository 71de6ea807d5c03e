import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metrics.rouge import lcs_length, rouge1, rougeL
from metrics.scoring import (
    classification_metrics, extract_json_field, extract_prediction, parse_rating, regression_metrics,
)
from utils.errors import ContractError

words = st.lists(st.sampled_from(["a", "b", "c", "d", "e"]), max_size=12).map(" ".join)


class TestRouge:
    def test_identical_texts(self):
        assert rouge1("the cat sat", "the cat sat").f1 == 1.0
        assert rougeL("the cat sat", "the cat sat").f1 == 1.0

    def test_disjoint_texts(self):
        assert rouge1("dog", "the cat").f1 == 0.0

    def test_partial_overlap(self):
        score = rouge1("the cat", "the cat sat down")
        assert score.precision == 1.0
        assert score.recall == 0.5
        assert score.f1 == pytest.approx(2 / 3)

    def test_clipped_counts(self):
        assert rouge1("the the the", "the cat").precision == pytest.approx(1 / 3)

    def test_lcs_respects_order(self):
        assert lcs_length("a b c d".split(), "a c b d".split()) == 3
        assert rougeL("d c b a", "a b c d").f1 == pytest.approx(0.25)

    def test_case_and_punctuation_are_ignored(self):
        assert rouge1("The Cat!", "the cat").f1 == 1.0

    def test_empty_texts(self):
        assert rouge1("", "").f1 == 1.0
        assert rouge1("", "cat").f1 == 0.0

    @settings(deadline=None, max_examples=80)
    @given(words, words)
    def test_bounds_and_symmetry(self, first, second):
        forward, backward = rouge1(first, second), rouge1(second, first)
        assert 0.0 <= forward.f1 <= 1.0
        assert forward.f1 == pytest.approx(backward.f1)
        assert rougeL(first, second).f1 <= forward.f1 + 1e-12


class TestClassification:
    def test_accuracy_and_macro_f1(self):
        accuracy, f1 = classification_metrics(["[1]", "[1]", "[2]"], ["[1]", "[2]", "[2]"], ["[1]", "[2]"])
        assert accuracy == pytest.approx(2 / 3)
        assert f1 == pytest.approx(2 / 3)

    def test_out_of_set_predictions_are_wrong(self):
        accuracy, f1 = classification_metrics(["maybe"], ["[1]"], ["[1]", "[2]"])
        assert accuracy == 0.0
        assert f1 == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            classification_metrics(["a"], [], ["a"])


class TestRating:
    def test_mae_and_rmse(self):
        mae, rmse = regression_metrics(["5", "1"], ["4", "4"])
        assert mae == pytest.approx(2.0)
        assert rmse == pytest.approx((5.0) ** 0.5)

    def test_unparseable_prediction_counts_as_midpoint(self):
        mae, _ = regression_metrics(["no idea"], ["5"])
        assert mae == pytest.approx(2.0)

    def test_parse_rating(self):
        assert parse_rating("I'd say 4 stars") == 4.0
        assert parse_rating("none") is None


class TestExtraction:
    def test_first_well_formed_object(self):
        assert extract_json_field('noise {"title": broken} then {"title": "Big News"} {"title": "later"}', "title") == "Big News"

    def test_first_object_without_the_field_falls_back(self):
        text = ' {"x": 1} then {"title": "Big News"} '
        assert extract_json_field(text, "title") == text.strip()

    def test_unquoted_value_is_not_json(self):
        assert extract_json_field('{"title": Finding Happiness}', "title") == '{"title": Finding Happiness}'

    def test_nested_braces_belong_to_the_outer_object(self):
        assert extract_json_field('{"title": "a {b} c", "meta": {"title": "inner"}}', "title") == "a {b} c"

    def test_falls_back_to_raw_text(self):
        assert extract_json_field("  just a title  ", "title") == "just a title"

    def test_per_task_fields(self):
        assert extract_prediction("LaMP-7", '{"tweet": "hello"}') == "hello"
        assert extract_prediction("LaMP-2", " comedy ") == "comedy"
