"""Tests for the synthetic corpus generator: determinism, planted structure,
and agreement with the real ingestion pipeline."""

import numpy as np
import pytest

from rumorgraph.fileio import DataError
from rumorgraph.graph import attach_features, build_static_graph, read_features
from rumorgraph.ingestion import (
    join_post_sets,
    label_post_sets,
    load_corpus,
)
from rumorgraph.synth import (
    CORPUS_FILES,
    FEATURES_FILE,
    SynthConfig,
    class_directions,
    generate_corpus,
    synth_featured_graphs,
    write_synth_corpus,
)

SMALL = SynthConfig(n_graphs=8, feature_dim=12, nodes_range=(3, 8), seed=5)


class TestGeneration:
    def test_deterministic(self):
        a = generate_corpus(SMALL)
        b = generate_corpus(SMALL)
        assert a.tweet_rows == b.tweet_rows
        assert a.comment_rows == b.comment_rows
        assert a.repost_rows == b.repost_rows
        np.testing.assert_array_equal(a.features, b.features)
        assert a.feature_ids == b.feature_ids

    def test_seed_changes_output(self):
        a = generate_corpus(SMALL)
        b = generate_corpus(SynthConfig(n_graphs=8, feature_dim=12,
                                        nodes_range=(3, 8), seed=6))
        assert not np.array_equal(a.features, b.features)

    def test_labels_cycle_through_classes(self):
        corpus = generate_corpus(SynthConfig(n_graphs=12, feature_dim=4,
                                             nodes_range=(2, 4), seed=0))
        assert [ps.label for ps in corpus.post_sets] == \
            [j % 5 for j in range(12)]

    def test_every_node_has_a_feature_row(self):
        corpus = generate_corpus(SMALL)
        ids = set(corpus.feature_ids)
        assert len(ids) == len(corpus.feature_ids)  # unique
        for ps in corpus.post_sets:
            assert ps.source_id in ids
            for m in ps.members:
                assert m.id in ids

    def test_member_parents_stay_in_set(self):
        corpus = generate_corpus(SMALL)
        for ps in corpus.post_sets:
            member_ids = {m.id for m in ps.members} | {ps.source_id}
            for m in ps.members:
                assert m.parent_id in member_ids

    def test_sets_build_valid_graphs(self):
        corpus = generate_corpus(SMALL)
        for ps in corpus.post_sets:
            g = build_static_graph(ps)  # validates internally
            assert g.n_nodes == len(ps.members) + 1

    def test_reposts_inherit_source_timestamp(self):
        corpus = generate_corpus(SynthConfig(n_graphs=20, feature_dim=4,
                                             nodes_range=(6, 12),
                                             repost_prob=0.5, seed=1))
        reposts = [m for ps in corpus.post_sets for m in ps.members
                   if m.kind == "retweet"]
        assert reposts, "config should have produced reposts"
        by_source = {ps.source_id: ps for ps in corpus.post_sets}
        for m in reposts:
            assert m.id.startswith("rt:")
            assert m.timestamp == by_source[m.parent_id].source_timestamp
            assert m.text == ""

    def test_first_member_is_always_a_comment(self):
        corpus = generate_corpus(SynthConfig(n_graphs=30, feature_dim=4,
                                             nodes_range=(2, 6),
                                             repost_prob=0.9, seed=2))
        for ps in corpus.post_sets:
            kinds = {m.kind for m in ps.members}
            assert "reply" in kinds

    def test_config_validation(self):
        with pytest.raises(DataError):
            SynthConfig(n_graphs=0)
        with pytest.raises(DataError):
            SynthConfig(signal_mode="sideways")
        with pytest.raises(DataError):
            SynthConfig(nodes_range=(5, 3))
        with pytest.raises(DataError):
            SynthConfig(n_classes=9)


class TestPlantedSignal:
    def test_node_mode_separates_classes(self):
        cfg = SynthConfig(n_graphs=20, feature_dim=16, nodes_range=(3, 6),
                          signal_strength=5.0, signal_mode="node",
                          base_scale=1.0, seed=3)
        corpus = generate_corpus(cfg)
        dirs = class_directions(cfg)
        for ps in corpus.post_sets:
            row = corpus.features[corpus.feature_ids.index(ps.source_id)]
            projections = dirs @ row
            assert int(np.argmax(projections)) == ps.label

    def test_edge_mode_differences_carry_class(self):
        cfg = SynthConfig(n_graphs=10, feature_dim=16, nodes_range=(4, 8),
                          signal_strength=3.0, signal_mode="edge",
                          edge_noise=0.05, base_scale=5.0, repost_prob=0.0,
                          seed=4)
        corpus = generate_corpus(cfg)
        dirs = class_directions(cfg)
        row_of = {nid: i for i, nid in enumerate(corpus.feature_ids)}
        for ps in corpus.post_sets:
            for m in ps.members:
                diff = corpus.features[row_of[m.id]] - corpus.features[row_of[m.parent_id]]
                projections = dirs @ diff
                assert int(np.argmax(projections)) == ps.label
                assert projections[ps.label] == pytest.approx(3.0, abs=0.5)

    def test_zero_signal_has_no_class_information(self):
        cfg = SynthConfig(n_graphs=20, feature_dim=8, nodes_range=(2, 4),
                          signal_strength=0.0, signal_mode="node", seed=5)
        corpus = generate_corpus(cfg)
        dirs = class_directions(cfg)
        hits = 0
        for ps in corpus.post_sets:
            row = corpus.features[corpus.feature_ids.index(ps.source_id)]
            if int(np.argmax(dirs @ row)) == ps.label:
                hits += 1
        assert hits < 12  # chance is 4/20


class TestFilesAndPipeline:
    def test_write_is_byte_stable(self, tmp_path):
        corpus = generate_corpus(SMALL)
        write_synth_corpus(corpus, tmp_path / "a")
        write_synth_corpus(corpus, tmp_path / "b")
        names = list(CORPUS_FILES.values()) + [FEATURES_FILE,
                                               FEATURES_FILE + ".ids.jsonl"]
        for name in names:
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes(), name

    def test_pipeline_reproduces_post_sets(self, tmp_path):
        corpus = generate_corpus(SMALL)
        out = write_synth_corpus(corpus, tmp_path)
        loaded = load_corpus({k: out["paths"][k] for k in CORPUS_FILES})
        assert not loaded.quarantine
        joined = join_post_sets(loaded)
        assert not joined.quarantine
        labeled = label_post_sets(joined.post_sets, loaded.factchecks)
        assert not labeled.quarantine
        direct = {ps.source_id: ps for ps in corpus.post_sets}
        assert len(labeled.post_sets) == len(direct)
        for ps in labeled.post_sets:
            ref = direct[ps.source_id]
            assert ps.label == ref.label
            assert ps.source_timestamp == ref.source_timestamp
            assert [(m.id, m.parent_id, m.kind, m.timestamp) for m in ps.members] == \
                [(m.id, m.parent_id, m.kind, m.timestamp) for m in ref.members]

    def test_file_features_match_in_memory_graphs(self, tmp_path):
        corpus = generate_corpus(SMALL)
        out = write_synth_corpus(corpus, tmp_path)
        table = read_features(out["paths"]["features"])
        direct = synth_featured_graphs(SMALL)
        for fg in direct:
            rebuilt = attach_features(fg.graph, table,
                                      expected_dim=SMALL.feature_dim)
            np.testing.assert_array_equal(rebuilt.features, fg.features)

    def test_featured_graphs_are_labeled(self):
        for fg in synth_featured_graphs(SMALL):
            assert fg.label is not None
            assert 0 <= fg.label < 5
