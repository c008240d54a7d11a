import numpy as np
import pytest
from numpy.testing import assert_array_equal

from src.data import (
    AttributeCorpus,
    ClassificationCorpus,
    accuracy_by_set_size,
    anomaly_count,
    anomaly_grid,
    attribute_box,
    auprc,
    bayes_accuracy,
    frozen_episodes,
    gen_attribute_corpus,
    gen_classification,
    load_corpus,
    make_anomaly_episode,
    mean_episode_auprc,
    same_class_sets,
    write_corpus,
)
from src.data.classification import class_specs, cue_box
from src.errors import DataError


class TestClassificationCorpus:

    def test_same_seed_is_bit_identical(self):
        first = gen_classification(4, 8, seed=11)
        second = gen_classification(4, 8, seed=11)
        assert_array_equal(first.images, second.images)
        assert_array_equal(first.labels, second.labels)
        assert_array_equal(first.cue_present, second.cue_present)

    def test_shapes_and_range(self, glyph_corpus):
        assert glyph_corpus.images.shape == (40, 16, 16, 1)
        assert glyph_corpus.images.dtype == np.float32
        assert glyph_corpus.images.min() >= 0.0 and glyph_corpus.images.max() <= 1.0
        assert np.bincount(glyph_corpus.labels).tolist() == [10, 10, 10, 10]

    def test_group_members_share_motif(self):
        specs = class_specs(10, 2, 0.5)
        for group in {s.ambiguity_group for s in specs}:
            members = [s for s in specs if s.ambiguity_group == group]
            assert len(members) == 2
            assert len({(s.shape_kind, s.thickness) for s in members}) == 1
            assert len({s.cue_slot for s in members}) == 2

    def test_bayes_accuracy_with_half_ambiguous_pairs(self):
        corpus = gen_classification(10, 100, p_ambiguous=0.5, seed=2)
        assert abs(corpus.cue_present.mean() - 0.5) < 0.05
        assert abs(bayes_accuracy(corpus) - 0.75) < 0.04

    def test_no_ambiguity_means_every_cue_shown(self):
        corpus = gen_classification(4, 10, p_ambiguous=0.0, seed=2)
        assert corpus.cue_present.all()
        assert bayes_accuracy(corpus) == 1.0

    def test_cue_is_painted(self):
        corpus = gen_classification(2, 6, p_ambiguous=0.0, seed=4)
        for image, label in zip(corpus.images, corpus.labels):
            r0, r1, c0, c1 = cue_box(corpus.class_specs[label].cue_slot, 16)
            assert np.all(image[r0:r1, c0:c1, 0] > 0.7)

    def test_splits_partition_every_image(self, glyph_corpus):
        parts = [glyph_corpus.splits[name] for name in ("train", "validation", "test")]
        joined = np.concatenate(parts)
        assert sorted(joined.tolist()) == list(range(40))
        for part in parts:
            assert set(glyph_corpus.labels[part].tolist()) == {0, 1, 2, 3}

    def test_rejects_small_images(self):
        with pytest.raises(DataError):
            gen_classification(4, 10, image_size=12)

    def test_rejects_fewer_images_than_set_size(self):
        with pytest.raises(DataError):
            gen_classification(4, 3, n_max=5)

    def test_same_class_sets(self, rng):
        labels = np.repeat(np.arange(3), [7, 9, 4])
        sets = same_class_sets(labels, 3, rng)
        assert len(sets) == 2 + 3 + 1
        for members in sets:
            assert len(set(labels[members].tolist())) == 1


class TestAnomalyEpisodes:

    def test_attribute_patches_do_not_overlap(self):
        mask = np.zeros((24, 24), dtype=int)
        for attribute in range(8):
            r0, r1, c0, c1 = attribute_box(attribute, 24)
            mask[r0:r1, c0:c1] += 1
        assert mask.max() == 1

    def test_anomaly_count(self):
        assert anomaly_count(10, 0.2) == 2
        assert anomaly_count(10, 0.3) == 3
        assert anomaly_count(10, 0.0) == 0

    def test_two_flagged_of_ten(self, attribute_corpus, rng):
        episode = make_anomaly_episode(attribute_corpus, 10, 0.2, rng)
        assert episode.size == 10
        assert int(episode.flags.sum()) == 2

    def test_no_anomalies(self, attribute_corpus, rng):
        episode = make_anomaly_episode(attribute_corpus, 10, 0.0, rng)
        a, b = episode.chosen_attrs
        assert episode.flags.sum() == 0
        assert np.all(attribute_corpus.attributes[episode.indices][:, [a, b]] == 1)

    def test_flags_follow_the_attribute_pair(self, attribute_corpus):
        rng = np.random.default_rng(8)
        for _ in range(200):
            episode = make_anomaly_episode(attribute_corpus, 10, float(rng.uniform(0, 0.4)), rng)
            a, b = episode.chosen_attrs
            pair = attribute_corpus.attributes[episode.indices][:, [a, b]]
            assert np.all(pair[episode.flags == 1] == 0)
            assert np.all(pair[episode.flags == 0] == 1)

    def test_prevalence_above_limit(self, attribute_corpus, rng):
        with pytest.raises(DataError):
            make_anomaly_episode(attribute_corpus, 10, 0.5, rng)

    def test_infeasible_pool_raises_after_retries(self, rng):
        corpus = AttributeCorpus(np.zeros((4, 16, 16, 1), np.float32), np.zeros((4, 8), np.uint8), {})
        with pytest.raises(DataError):
            make_anomaly_episode(corpus, 3, 0.0, rng, max_retries=3)

    def test_episodes_respect_the_pool(self, attribute_corpus, rng):
        pool = attribute_corpus.split_indices("train")
        episode = make_anomaly_episode(attribute_corpus, 10, 0.3, rng, pool=pool)
        assert set(episode.indices.tolist()) <= set(pool.tolist())

    def test_corpus_is_deterministic(self):
        first, second = gen_attribute_corpus(50, seed=1), gen_attribute_corpus(50, seed=1)
        assert_array_equal(first.images, second.images)
        assert_array_equal(first.attributes, second.attributes)


class TestStore:

    def test_round_trip(self, glyph_corpus, tmp_path):
        write_corpus(glyph_corpus, tmp_path)
        loaded = load_corpus(tmp_path)
        assert isinstance(loaded, ClassificationCorpus)
        assert_array_equal(loaded.images, glyph_corpus.images)
        assert_array_equal(loaded.labels, glyph_corpus.labels)
        assert_array_equal(loaded.splits["test"], glyph_corpus.splits["test"])
        assert loaded.class_specs == glyph_corpus.class_specs

    def test_attribute_round_trip(self, tmp_path):
        corpus = gen_attribute_corpus(30, seed=2)
        write_corpus(corpus, tmp_path)
        loaded = load_corpus(tmp_path)
        assert_array_equal(loaded.attributes, corpus.attributes)

    def test_identical_manifests(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        first = write_corpus(gen_classification(2, 6, seed=1), tmp_path / "a")
        second = write_corpus(gen_classification(2, 6, seed=1), tmp_path / "b")
        assert first == second

    def test_corrupted_block(self, glyph_corpus, tmp_path):
        write_corpus(glyph_corpus, tmp_path)
        block = tmp_path / "images.f32"
        raw = bytearray(block.read_bytes())
        raw[0] ^= 0x01
        block.write_bytes(bytes(raw))
        with pytest.raises(DataError):
            load_corpus(tmp_path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError):
            load_corpus(tmp_path)


def threshold_sweep_ap(scores, flags):
    """Average precision by enumerating every distinct threshold."""
    scores, flags = np.asarray(scores, float), np.asarray(flags)
    positives = flags.sum()
    ap, last_recall = 0.0, 0.0
    for threshold in sorted(set(scores.tolist()), reverse=True):
        chosen = scores >= threshold
        true_pos = flags[chosen].sum()
        recall = true_pos / positives
        ap += (recall - last_recall) * (true_pos / chosen.sum())
        last_recall = recall
    return ap


class TestAuprc:

    def test_perfect_separation(self):
        assert auprc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == pytest.approx(1.0)

    def test_constant_scores_give_prevalence(self):
        assert auprc([0.5] * 8, [1, 0, 0, 1, 0, 0, 0, 0]) == pytest.approx(0.25)

    def test_one_inversion_matches_threshold_sweep(self):
        scores = [0.95, 0.9, 0.8, 0.7, 0.6, 0.4, 0.2]
        flags = [1, 0, 1, 1, 0, 0, 0]
        assert auprc(scores, flags) == pytest.approx(threshold_sweep_ap(scores, flags), abs=1e-9)

    def test_ties_are_grouped(self):
        scores = [0.9, 0.5, 0.5, 0.5, 0.1]
        flags = [1, 0, 1, 0, 0]
        assert auprc(scores, flags) == pytest.approx(threshold_sweep_ap(scores, flags), abs=1e-9)

    def test_random_instances_match_threshold_sweep(self, rng):
        for _ in range(1000):
            n = int(rng.integers(1, 16))
            flags = rng.integers(0, 2, size=n)
            flags[rng.integers(n)] = 1
            # coarse grid so most instances contain ties
            scores = rng.integers(0, int(rng.integers(2, 8)), size=n) / 7.0
            assert abs(auprc(scores, flags) - threshold_sweep_ap(scores, flags)) <= 1e-9

    def test_no_positive(self):
        with pytest.raises(DataError):
            auprc([0.1, 0.2], [0, 0])


class UniformModel:
    head_mode = "cic"

    def __init__(self, classes):
        self.classes = classes

    def predict(self, images):
        return np.full(images.shape[:-3] + (self.classes,), 1.0 / self.classes)


class LabelReader:
    """Reads the label written into the first pixel of every image."""

    def __init__(self, classes, head_mode="cic"):
        self.classes = classes
        self.head_mode = head_mode

    def predict(self, images):
        labels = np.rint(images[..., 0, 0, 0]).astype(int)
        probs = np.eye(self.classes)[labels]
        return probs.mean(axis=-2) if self.head_mode == "sc_score_fusion" else probs


class PeekingScorer:
    """Scores anomalies by the brightness of the whole image (patches are bright)."""

    head_mode = "anomaly"

    def predict(self, images):
        return -images.mean(axis=(-3, -2, -1))


def labelled_corpus(classes=4, per_class=12):
    labels = np.repeat(np.arange(classes), per_class)
    images = np.zeros((len(labels), 2, 2, 1), np.float32)
    images[:, 0, 0, 0] = labels
    return ClassificationCorpus(images, labels, np.ones(len(labels), bool), [None] * classes, {})


class TestAccuracyBySetSize:

    def test_uniform_model_scores_one_over_k(self):
        table = accuracy_by_set_size(UniformModel(4), labelled_corpus(), [1, 2, 3], trials=2, seed=0)
        for accuracy in table.values():
            assert accuracy == pytest.approx(0.25)

    @pytest.mark.parametrize("head_mode", ["cic", "sc_score_fusion"])
    def test_label_reader_is_perfect(self, head_mode):
        table = accuracy_by_set_size(LabelReader(4, head_mode), labelled_corpus(), [1, 2, 3, 4, 5], seed=3)
        assert list(table) == [1, 2, 3, 4, 5]
        assert all(value == 1.0 for value in table.values())

    def test_deterministic_for_a_seed(self, glyph_corpus):
        model = UniformModel(4)
        assert accuracy_by_set_size(model, glyph_corpus, [2], seed=5) == accuracy_by_set_size(model, glyph_corpus, [2], seed=5)

    def test_size_larger_than_a_class(self):
        with pytest.raises(DataError):
            accuracy_by_set_size(UniformModel(4), labelled_corpus(per_class=3), [4])


class TestAnomalyMetrics:

    def test_grid_has_twelve_cells(self, attribute_corpus):
        rows = anomaly_grid(PeekingScorer(), attribute_corpus, trials=2, seed=1)
        assert [(n, p) for n, p, _ in rows] == [(n, p) for n in (10, 20, 40) for p in (0.1, 0.2, 0.3, 0.4)]
        assert all(0.0 <= value <= 1.0 for _, _, value in rows)

    def test_grid_is_deterministic(self, attribute_corpus):
        first = anomaly_grid(PeekingScorer(), attribute_corpus, sizes=(10,), prevalences=(0.2,), trials=3, seed=4)
        second = anomaly_grid(PeekingScorer(), attribute_corpus, sizes=(10,), prevalences=(0.2,), trials=3, seed=4)
        assert first == second

    def test_mean_episode_auprc_skips_clean_episodes(self, attribute_corpus):
        episodes = frozen_episodes(attribute_corpus, 10, (0.0, 0.2), 4, seed=0)
        value = mean_episode_auprc(PeekingScorer(), episodes)
        assert 0.0 <= value <= 1.0

    def test_only_clean_episodes(self, attribute_corpus):
        episodes = frozen_episodes(attribute_corpus, 10, (0.0,), 2, seed=0)
        with pytest.raises(DataError):
            mean_episode_auprc(PeekingScorer(), episodes)
