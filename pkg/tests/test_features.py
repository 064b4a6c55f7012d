import numpy as np
import pytest

from urbanseg.features import (DimensionMismatchError, FileProvider, OracleProvider, PointFeatures,
                               foreground_mask, instance_code, instance_codes, read_features, write_features)
from urbanseg.partition import Block, crop_blocks
from urbanseg.taxonomy import NO_INSTANCE, InvalidInputError, UrbanClass


def test_oracle_noise_free_definition(small_scene):
    block = Block.whole(small_scene)
    f = OracleProvider().provide(block, small_scene)
    assert np.array_equal(f.semantic_pred, small_scene.semantic)
    building = small_scene.instance != NO_INSTANCE
    assert np.all(f.offset[~building] == 0) and np.all(f.embedding[~building] == 0)
    ids = small_scene.instance_ids()
    for rank, iid in enumerate(ids):
        m = small_scene.instance == iid
        centroid = small_scene.positions[m].mean(axis=0)
        np.testing.assert_allclose(small_scene.positions[m] + f.offset[m], centroid[None].repeat(m.sum(), 0),
                                   atol=1e-9)
        assert np.all(f.embedding[m] == instance_code(rank, 16))
    assert np.array_equal(foreground_mask(f), building)


def test_instance_codes_distinct_and_separated():
    codes = instance_codes(np.arange(300), 16)
    d = np.linalg.norm(codes[:, None] - codes[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    assert d.min() >= 1.0
    assert np.array_equal(codes[37], instance_code(37, 16))


def test_oracle_embedding_noise_means_recover_codes(small_scene):
    sigma = 0.3
    block = Block.whole(small_scene)
    clean = OracleProvider().provide(block, small_scene)
    noisy = OracleProvider(noise_embedding=sigma, seed=4).provide(block, small_scene)
    resid = noisy.embedding - clean.embedding
    assert abs(resid.std() - sigma) < 0.01
    for iid in small_scene.instance_ids():
        m = small_scene.instance == iid
        bound = 5 * sigma / np.sqrt(m.sum())
        assert np.all(np.abs(noisy.embedding[m].mean(axis=0) - clean.embedding[m].mean(axis=0)) < bound)


def test_oracle_semantic_flips(small_scene):
    block = Block.whole(small_scene)
    f = OracleProvider(noise_semantic=0.2, seed=1).provide(block, small_scene)
    flipped = f.semantic_pred != small_scene.semantic
    assert abs(flipped.mean() - 0.2) < 0.01


def test_oracle_deterministic(small_scene):
    block = crop_blocks(small_scene, 20_000, seed=0)[1]
    p = OracleProvider(noise_embedding=0.2, noise_offset=0.5, noise_semantic=0.1, seed=9)
    a, b = p.provide(block, small_scene), p.provide(block, small_scene)
    for name in ("semantic_pred", "offset", "embedding"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_oracle_validates_parameters():
    with pytest.raises(InvalidInputError):
        OracleProvider(dim=0)
    with pytest.raises(InvalidInputError):
        OracleProvider(noise_semantic=1.5)


def test_foreground_mask_examples():
    n = 5
    ground = PointFeatures(np.zeros(n), np.zeros((n, 3)), np.zeros((n, 2)))
    assert not foreground_mask(ground).any()
    mixed = PointFeatures([6, 0, 6, 3, 6], np.zeros((n, 3)), np.zeros((n, 2)))
    assert foreground_mask(mixed).sum() == 3


def test_features_invariants():
    with pytest.raises(DimensionMismatchError):
        PointFeatures(np.zeros(3), np.zeros((2, 3)), np.zeros((3, 4)))
    with pytest.raises(DimensionMismatchError):
        PointFeatures(np.zeros(3), np.zeros((3, 3)), np.zeros((3, 0)))
    with pytest.raises(InvalidInputError):
        PointFeatures(np.zeros(1), np.full((1, 3), np.nan), np.zeros((1, 4)))
    with pytest.raises(InvalidInputError):
        PointFeatures([9], np.zeros((1, 3)), np.zeros((1, 4)))


def test_feature_file_round_trip_bit_identical(tmp_path, small_scene):
    f = OracleProvider(noise_embedding=0.1, noise_offset=0.1, seed=2).provide(Block.whole(small_scene), small_scene)
    write_features(f, tmp_path / "f.feat")
    g = read_features(tmp_path / "f.feat")
    for name in ("semantic_pred", "offset", "embedding", "category_pred"):
        assert getattr(g, name).tobytes() == getattr(f, name).tobytes()


def test_file_provider_slices_and_rejects_mismatch(tmp_path, small_scene):
    whole = Block.whole(small_scene)
    f = OracleProvider().provide(whole, small_scene)
    write_features(f, tmp_path / "f.feat")
    block = crop_blocks(small_scene, 20_000, seed=0)[0]
    got = FileProvider(tmp_path / "f.feat").provide(block, small_scene)
    assert np.array_equal(got.embedding, f.embedding[block.indices])
    write_features(f.subset(np.arange(10)), tmp_path / "short.feat")
    with pytest.raises(DimensionMismatchError):
        FileProvider(tmp_path / "short.feat").provide(block, small_scene)
