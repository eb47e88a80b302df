import json

import numpy as np
import pytest

from oodkit.data import (
    SyntheticSpec,
    config_from_dict,
    config_to_dict,
    dump_config,
    gen_synthetic,
    load_config,
    read_embeddings,
    write_embeddings,
)
from oodkit.errors import ConfigError, FormatError, InputError
from oodkit.metrics import auroc
from oodkit.seeding import make_rng


class TestSyntheticSpec:
    def test_defaults(self):
        spec = SyntheticSpec()
        assert (spec.dim, spec.k_known, spec.k_novel) == (8, 4, 2)
        assert (spec.n_per_class, spec.cluster_spread, spec.cluster_separation) == (
            500,
            1.0,
            6.0,
        )
        assert spec.modality_kind == "uniform_cube"

    def test_validation(self):
        with pytest.raises(InputError):
            SyntheticSpec(k_known=1)
        with pytest.raises(InputError):
            SyntheticSpec(n_per_class=5, dim=8)
        with pytest.raises(InputError):
            SyntheticSpec(modality_kind="nope")


class TestGenSynthetic:
    def test_shapes_and_disjoint_labels(self):
        spec = SyntheticSpec(n_per_class=50, seed=3)
        bundle = gen_synthetic(spec)
        assert bundle.train_x.shape == (4 * 45, 8)
        assert bundle.test_id_x.shape == (4 * 5, 8)
        assert bundle.test_semantic_x.shape == (2 * 50, 8)
        assert bundle.test_modality_x.shape == (2 * 50, 8)
        train_labels = set(bundle.train_y.tolist())
        novel_labels = set(bundle.test_semantic_y.tolist())
        assert train_labels == {0, 1, 2, 3}
        assert novel_labels == {4, 5}
        assert train_labels.isdisjoint(novel_labels)

    def test_split_is_stratified_within_one(self):
        spec = SyntheticSpec(n_per_class=53, seed=4)
        bundle = gen_synthetic(spec)
        for k in range(4):
            n_train = int(np.sum(bundle.train_y == k))
            n_test = int(np.sum(bundle.test_id_y == k))
            assert n_train + n_test == 53
            assert abs(n_train - 0.9 * 53) <= 1.0

    def test_deterministic_per_seed(self):
        spec = SyntheticSpec(n_per_class=40, seed=7)
        b1 = gen_synthetic(spec)
        b2 = gen_synthetic(spec)
        assert np.array_equal(b1.train_x, b2.train_x)
        assert np.array_equal(b1.test_modality_x, b2.test_modality_x)
        b3 = gen_synthetic(SyntheticSpec(n_per_class=40, seed=8))
        assert not np.array_equal(b1.train_x, b3.train_x)

    def test_cluster_moments_match_spec(self):
        spec = SyntheticSpec(n_per_class=400, cluster_spread=1.5, seed=9)
        bundle = gen_synthetic(spec)
        for k in range(4):
            pts = np.concatenate(
                [bundle.train_x[bundle.train_y == k], bundle.test_id_x[bundle.test_id_y == k]]
            )
            center = pts.mean(axis=0)
            assert np.linalg.norm(center) == pytest.approx(
                spec.cluster_separation, abs=5 * spec.cluster_spread / np.sqrt(400)
            )
            cov = np.cov(pts, rowvar=False)
            tol = 4.0 * spec.cluster_spread**2 / np.sqrt(400)
            assert np.abs(np.diag(cov) - spec.cluster_spread**2).max() < 1.5 * tol
            off = cov - np.diag(np.diag(cov))
            assert np.abs(off).max() < tol

    def test_pairwise_separation_honored(self):
        spec = SyntheticSpec(seed=10, n_per_class=12)
        bundle = gen_synthetic(spec)
        centers = []
        for k in range(4):
            pts = bundle.train_x[bundle.train_y == k]
            centers.append(pts.mean(axis=0))
        for i in range(4):
            for j in range(i + 1, 4):
                assert np.linalg.norm(centers[i] - centers[j]) > 0.8 * spec.cluster_separation

    def test_zero_separation_makes_semantic_shift_undetectable(self):
        spec = SyntheticSpec(cluster_separation=0.0, n_per_class=300, seed=11)
        bundle = gen_synthetic(spec)
        # score by distance to the pooled train mean: should be chance level
        center = bundle.train_x.mean(axis=0)
        id_scores = -np.linalg.norm(bundle.test_id_x - center, axis=1)
        ood_scores = -np.linalg.norm(bundle.test_semantic_x - center, axis=1)
        assert abs(auroc(id_scores, ood_scores) - 0.5) < 0.06

    def test_scaled_shifted_mixture_fills_expanded_box(self):
        spec = SyntheticSpec(modality_kind="scaled_shifted_mixture", n_per_class=100, seed=12)
        bundle = gen_synthetic(spec)
        data = np.concatenate([bundle.train_x, bundle.test_id_x, bundle.test_semantic_x])
        lo, hi = data.min(axis=0), data.max(axis=0)
        center, half = (lo + hi) / 2, (hi - lo) / 2
        assert np.all(bundle.test_modality_x.min(axis=0) >= center - 1.5 * half - 1e-9)
        assert np.all(bundle.test_modality_x.max(axis=0) <= center + 1.5 * half + 1e-9)
        # the mixture is rescaled to span beyond the data's own box
        assert bundle.test_modality_x.max() > data.max()


class TestEmbeddingFiles:
    def test_round_trip_bitwise(self, tmp_path):
        rng = make_rng(13)
        vectors = rng.standard_normal((1000, 16)).astype(np.float32).astype(np.float64)
        labels = rng.integers(0, 4, size=1000)
        p1 = tmp_path / "e.oode"
        p2 = tmp_path / "e2.oode"
        write_embeddings(p1, vectors, labels)
        got_v, got_l = read_embeddings(p1)
        write_embeddings(p2, got_v, got_l)
        assert p1.read_bytes() == p2.read_bytes()
        assert np.array_equal(got_v, vectors)
        assert np.array_equal(got_l, labels)

    def test_unlabeled_round_trip(self, tmp_path):
        rng = make_rng(14)
        vectors = rng.standard_normal((7, 3)).astype(np.float32).astype(np.float64)
        p = tmp_path / "u.oode"
        write_embeddings(p, vectors)
        got_v, got_l = read_embeddings(p)
        assert got_l is None
        assert np.array_equal(got_v, vectors)

    def test_empty_round_trip(self, tmp_path):
        p = tmp_path / "empty.oode"
        write_embeddings(p, np.zeros((0, 5)))
        got_v, got_l = read_embeddings(p)
        assert got_v.shape == (0, 5)
        assert got_l is None

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.oode"
        p.write_bytes(b"WHAT" + bytes(16))
        with pytest.raises(FormatError):
            read_embeddings(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "t.oode"
        write_embeddings(p, np.ones((4, 4)), np.zeros(4, dtype=int))
        p.write_bytes(p.read_bytes()[:-3])
        with pytest.raises(FormatError):
            read_embeddings(p)

    def test_label_length_mismatch(self, tmp_path):
        with pytest.raises(InputError):
            write_embeddings(tmp_path / "x.oode", np.ones((4, 4)), np.zeros(3, dtype=int))


class TestLabelsCsv:
    def test_round_trip(self, tmp_path):
        from oodkit.data import read_labels_csv, write_labels_csv

        p = tmp_path / "labels.csv"
        write_labels_csv(p, ["a.ppm", "b.ppm", "sub dir/c.ppm"], [0, 2, 1])
        names, labels = read_labels_csv(p)
        assert names == ["a.ppm", "b.ppm", "sub dir/c.ppm"]
        assert np.array_equal(labels, [0, 2, 1])
        assert p.read_text().splitlines()[0] == "filename,label"

    def test_rejects_bad_rows(self, tmp_path):
        from oodkit.data import read_labels_csv, write_labels_csv

        with pytest.raises(InputError):
            write_labels_csv(tmp_path / "x.csv", ["a,b.ppm"], [0])
        p = tmp_path / "bad.csv"
        p.write_text("filename,label\nimg.ppm,notanumber\n")
        with pytest.raises(FormatError):
            read_labels_csv(p)


class TestRunConfig:
    def test_empty_object_gives_defaults(self):
        config = config_from_dict({})
        assert config.train.m_id == -20.0
        assert config.train.m_ood == -7.0
        assert config.train.alpha == 0.1 and config.train.beta == 0.1
        assert config.tails.draws_n_total == 10000 and config.tails.rank_n == 64
        assert config.nda.augmix_severity == 11
        assert config.synthetic.dim == 8

    def test_unknown_top_level_key_rejected_by_name(self):
        with pytest.raises(ConfigError, match="unknown key: trian"):
            config_from_dict({"trian": {}})

    def test_unknown_nested_key_rejected_by_name(self):
        with pytest.raises(ConfigError, match="unknown key: train.learning_rate"):
            config_from_dict({"train": {"learning_rate": 0.1}})

    def test_margin_ordering_validated(self):
        with pytest.raises(ConfigError, match="train"):
            config_from_dict({"train": {"m_id": -5.0, "m_ood": -9.0}})

    def test_round_trip_idempotent(self, tmp_path):
        config = config_from_dict(
            {"train": {"epochs": 7, "mode": "NDA_ONLY"}, "synthetic": {"seed": 5}}
        )
        p1 = tmp_path / "c.json"
        p2 = tmp_path / "c2.json"
        dump_config(config, p1)
        loaded = load_config(p1)
        dump_config(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert loaded.train.epochs == 7
        assert loaded.synthetic.seed == 5

    def test_invalid_json_is_format_error(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(FormatError):
            load_config(p)

    def test_config_to_dict_uses_plain_types(self):
        payload = config_to_dict(config_from_dict({}))
        assert json.dumps(payload)  # serializable
        assert payload["nda"]["randconv_kernel_sizes"] == [9, 11, 13, 15, 17, 19]
