import numpy as np
import pytest

from permevade.detectors.trees import (
    ForestConfig,
    RandomForestDetector,
    TreeArrays,
    train_tree_family,
)
from permevade.featurespace import Category
from permevade.importance import (
    ImportanceError,
    category_report,
    oob_error,
    permutation_importance,
    perturbable_mask,
    select_perturbable_categories,
    ImportanceReport,
)
from permevade.synth import SynthSpec, generate


def stump(feat, value0, value1):
    return TreeArrays(
        feature=np.array([feat, -1, -1], dtype=np.int64),
        left=np.array([1, -1, -1], dtype=np.int64),
        right=np.array([2, -1, -1], dtype=np.int64),
        value=np.array([0.0, value0, value1]),
        n_node=np.array([0, 0, 0], dtype=np.int64),
    )


def hand_forest(n_train):
    """Three single-split trees with hand-picked bootstraps.

    Trees 0 and 1 split on feature 0 (bit predicts the class); tree 2
    splits on feature 1.
    """
    forest = RandomForestDetector(3, ForestConfig(n_trees=3, rng_seed=0))
    forest.trees = [stump(0, 0.0, 1.0), stump(0, 0.0, 1.0), stump(1, 0.0, 1.0)]
    forest.n_train = n_train
    forest.bootstrap_indices = [
        np.array([0, 0, 1, 2]),   # OOB: rows 3, 4, 5
        np.array([3, 4, 4, 5]),   # OOB: rows 0, 1, 2
        np.array([0, 1, 2, 3]),   # OOB: rows 4, 5
    ]
    return forest


class TestOobError:
    def test_hand_enumerated(self):
        # y equals feature 0; feature 1 is wrong for rows 2 and 4
        X = np.array([
            [0, 0, 0], [0, 0, 1], [1, 0, 0],
            [1, 1, 1], [0, 1, 0], [1, 1, 1],
        ], dtype=np.uint8)
        y = X[:, 0].astype(np.int64)
        forest = hand_forest(6)
        # row-by-row OOB votes:
        #  rows 0..2 -> tree 1 only (splits feat 0): all correct
        #  row 3 -> tree 0 only: correct
        #  rows 4,5 -> trees 0+1? no: tree 0 OOB {3,4,5}, tree 2 OOB {4,5}
        #    row 4: trees 0,2 vote (f1 means): tree0 0.0, tree2 1.0 -> 0.5 -> label 1, truth 0: wrong
        #    row 5: tree0 1.0, tree2 1.0 -> label 1, correct
        res = oob_error(forest, X, y)
        assert res.skipped == 0
        assert res.error == pytest.approx(1 / 6)

    def test_requires_bootstrap_records(self):
        forest = hand_forest(4)
        forest.bootstrap_indices = None
        with pytest.raises(ImportanceError):
            oob_error(forest, np.zeros((4, 3), dtype=np.uint8), np.zeros(4, dtype=np.int64))


class TestPermutationImportance:
    def make_planted(self, seed=0, n=300):
        """bit 0 fully determines the label; bit 1 is a coin flip."""
        rng = np.random.default_rng(seed)
        X = (rng.random((n, 6)) < 0.5).astype(np.uint8)
        X[:, 2] = 0  # never-used column
        y = X[:, 0].astype(np.int64)
        return X, y

    def test_planted_bit_beats_noise_with_margin(self):
        X, y = self.make_planted()
        forest = train_tree_family("random_forest", X, y,
                                   ForestConfig(min_samples_leaf=5, rng_seed=0), "")
        planted = permutation_importance(forest, X, y, 0, rng_seed=0)
        noise = permutation_importance(forest, X, y, 1, rng_seed=0)
        assert planted > noise + 0.1

    def test_null_feature_importance_exactly_zero(self):
        X, y = self.make_planted()
        forest = train_tree_family("random_forest", X, y,
                                   ForestConfig(min_samples_leaf=5, rng_seed=0), "")
        assert permutation_importance(forest, X, y, 2, rng_seed=0) == 0.0

    def test_seed_determinism(self):
        X, y = self.make_planted()
        forest = train_tree_family("random_forest", X, y,
                                   ForestConfig(min_samples_leaf=5, rng_seed=0), "")
        a = permutation_importance(forest, X, y, 0, rng_seed=42)
        b = permutation_importance(forest, X, y, 0, rng_seed=42)
        assert abs(a - b) <= 1e-12

    def test_joint_columns_one_shuffle(self):
        X, y = self.make_planted()
        forest = train_tree_family("random_forest", X, y,
                                   ForestConfig(min_samples_leaf=5, rng_seed=0), "")
        joint = permutation_importance(forest, X, y, [0, 1], rng_seed=0)
        solo = permutation_importance(forest, X, y, 0, rng_seed=0)
        # permuting the label-defining bit dominates either way
        assert joint > 0.1 and solo > 0.1

    def test_empty_target_rejected(self):
        forest = hand_forest(4)
        with pytest.raises(ImportanceError):
            permutation_importance(forest, np.zeros((4, 3), dtype=np.uint8),
                                   np.zeros(4, dtype=np.int64), [])


class TestCategorySelection:
    def test_sorted_and_filtered(self):
        report = ImportanceReport(per_category={
            Category.S1: 0.02, Category.S2: 0.3, Category.S3: 0.1, Category.S4: 0.05,
        })
        out = select_perturbable_categories(report, set(Category))
        assert [c.value for c in out] == ["S2", "S3", "S4", "S1"]
        out = select_perturbable_categories(report, {Category.S1, Category.S2})
        assert [c.value for c in out] == ["S2", "S1"]

    def test_all_equal_keeps_stable_order(self):
        report = ImportanceReport(per_category={c: 0.5 for c in list(Category)[:4]})
        out = select_perturbable_categories(report, set(Category))
        assert [c.value for c in out] == ["S1", "S2", "S3", "S4"]

    def test_code_categories_never_selected(self):
        report = ImportanceReport(per_category={Category.S5: 9.0, Category.S2: 0.1})
        out = select_perturbable_categories(report, set(Category))
        assert [c.value for c in out] == ["S2"]

    def test_mask_covers_category_block(self):
        corpus = generate(SynthSpec(rng_seed=0))
        mask = perturbable_mask(corpus.vocab, [Category.S2])
        start, stop = corpus.vocab.category_range[Category.S2]
        assert mask.sum() == stop - start
        assert mask[start:stop].all()


class TestReportOutput:
    def test_category_report_covers_present_categories(self):
        corpus = generate(SynthSpec(rng_seed=1))
        forest = train_tree_family("random_forest", corpus.X, corpus.y,
                                   ForestConfig(rng_seed=0), "")
        rep = category_report(forest, corpus.X, corpus.y, corpus.vocab, rng_seed=0)
        assert set(rep.per_category) == {Category.S1, Category.S2}
        csv_text = rep.to_csv()
        assert csv_text.startswith("category,importance\n")
        assert "S1" in csv_text and "S2" in csv_text
        assert "per_category" in rep.to_json()
