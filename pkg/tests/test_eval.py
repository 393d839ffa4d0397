"""Full-ranking evaluation tests against an independent brute-force oracle.

The oracle sorts explicit (score, index) pairs per user and never shares
code with the chunked evaluator.
"""

import numpy as np
import pytest

from cfseed.data import Interaction, _index_interactions, build_graph, leave_one_out_split
from cfseed.errors import ConfigError
from cfseed.evaluate import emit_report, full_rank_eval, load_report
from cfseed.model import ModelState, build_norm_adjacency


def _split_graph(triples):
    ds = _index_interactions([Interaction(u, i, t) for u, i, t in triples])
    split = leave_one_out_split(ds)
    return split, build_graph(split)


def _state(split, graph, user_table, item_table):
    # layers=0 keeps scores equal to raw table dot products
    return ModelState(
        user_table=np.asarray(user_table, dtype=np.float64),
        item_table=np.asarray(item_table, dtype=np.float64),
        layers=0,
        norm_adjacency=build_norm_adjacency(graph),
    )


def _single_user_setup(item_scores):
    """User u with train={i0}, val=i1, test=i2; padding user w touches all items.

    After masking, w's only candidate is its own test item, so w always lands
    rank 1; per-user assertions on u stay unpolluted.
    """
    n = len(item_scores)
    triples = [("u", "i0", 0), ("u", "i1", 1), ("u", "i2", 2)]
    triples += [("w", f"i{j}", j) for j in range(n)]
    split, graph = _split_graph(triples)
    user_table = np.zeros((split.n_users, 1))
    user_table[split.user_index["u"], 0] = 1.0
    item_table = np.zeros((split.n_items, 1))
    for j, s in enumerate(item_scores):
        item_table[split.item_index[f"i{j}"], 0] = s
    return split, graph, user_table, item_table


def _symmetric_setup(u_scores, w_scores):
    """Two users over items i0..i5 with disjoint train/val/test triples.

    u holds (i0 train, i1 val, i2 test); w holds (i3, i4, i5).  Orthogonal
    user vectors give independent per-user score control, so both users can
    be pinned to the same rank and aggregate metrics have exact closed forms.
    """
    triples = [("u", "i0", 0), ("u", "i1", 1), ("u", "i2", 2)]
    triples += [("w", "i3", 0), ("w", "i4", 1), ("w", "i5", 2)]
    split, graph = _split_graph(triples)
    user_table = np.zeros((split.n_users, 2))
    user_table[split.user_index["u"], 0] = 1.0
    user_table[split.user_index["w"], 1] = 1.0
    item_table = np.zeros((split.n_items, 2))
    for j in range(6):
        item_table[split.item_index[f"i{j}"]] = [u_scores[j], w_scores[j]]
    return split, graph, user_table, item_table


class TestClosedForm:
    def test_rank_one_gives_full_scores(self):
        # test item i2 has the highest unmasked score
        split, graph, u, v = _single_user_setup([0.0, 0.0, 10.0, 1.0, 2.0])
        report = full_rank_eval(_state(split, graph, u, v), split, cutoffs=(10,))
        uid = split.user_index["u"]
        assert dict(report.per_user)[uid] == 1
        assert report.recall[10] == pytest.approx(1.0)
        assert report.ndcg[10] == pytest.approx(1.0)

    def test_rank_three_ndcg_half(self):
        # both users' test items sit behind exactly two unmasked distractors
        split, graph, u, v = _symmetric_setup(
            u_scores=[0.0, 0.0, 10.0, 12.0, 11.0, 0.0],
            w_scores=[12.0, 11.0, 0.0, 0.0, 0.0, 10.0],
        )
        report = full_rank_eval(_state(split, graph, u, v), split, cutoffs=(10,))
        ranks = dict(report.per_user)
        assert ranks[split.user_index["u"]] == 3
        assert ranks[split.user_index["w"]] == 3
        # 1 / log2(3 + 1) = 0.5 exactly
        assert report.ndcg[10] == pytest.approx(0.5)
        assert report.recall[10] == pytest.approx(1.0)

    def test_rank_beyond_cutoff_scores_zero(self):
        split, graph, u, v = _symmetric_setup(
            u_scores=[0.0, 0.0, 10.0, 12.0, 11.0, 0.0],
            w_scores=[12.0, 11.0, 0.0, 0.0, 0.0, 10.0],
        )
        report = full_rank_eval(_state(split, graph, u, v), split, cutoffs=(2, 10))
        assert report.recall[2] == 0.0
        assert report.ndcg[2] == 0.0
        assert report.recall[10] == pytest.approx(1.0)


class TestMaskingAndTies:
    def test_train_item_masked(self):
        # train item i0 would outrank the test item if not masked
        split, graph, u, v = _single_user_setup([99.0, 0.0, 10.0, 1.0])
        report = full_rank_eval(_state(split, graph, u, v), split, cutoffs=(1,))
        assert dict(report.per_user)[split.user_index["u"]] == 1

    def test_validation_item_masked_for_test_target(self):
        split, graph, u, v = _single_user_setup([0.0, 99.0, 10.0, 1.0])
        report = full_rank_eval(_state(split, graph, u, v), split, cutoffs=(1,), target="test")
        assert dict(report.per_user)[split.user_index["u"]] == 1

    def test_validation_target_masks_train_only(self):
        # for validation eval, the test item stays a live (distractor) candidate
        split, graph, u, v = _single_user_setup([99.0, 10.0, 11.0, 1.0])
        report = full_rank_eval(
            _state(split, graph, u, v), split, cutoffs=(5,), target="validation"
        )
        # i2 (test item, score 11) outranks the validation item i1 (score 10)
        assert dict(report.per_user)[split.user_index["u"]] == 2

    def test_equal_scores_lower_index_wins(self):
        split, graph, u, v = _single_user_setup([0.0, 0.0, 10.0, 10.0, 10.0])
        report = full_rank_eval(_state(split, graph, u, v), split, cutoffs=(10,))
        uid = split.user_index["u"]
        # test item i2 shares its score with i3 and i4; dense ids follow
        # first appearance so i2 < i3 < i4 and the tie resolves in its favor
        assert dict(report.per_user)[uid] == 1


def brute_force_report(user_out, item_out, split, cutoffs, target="test"):
    """Reference evaluator: explicit sort with (score desc, index asc) keys."""
    masked = {u: set() for u in range(user_out.shape[0])}
    for it in split.train:
        masked[split.user_index[it.user_id]].add(split.item_index[it.item_id])
    if target == "test":
        for it in split.validation:
            masked[split.user_index[it.user_id]].add(split.item_index[it.item_id])
    held = split.test if target == "test" else split.validation
    ranks = {}
    for it in held:
        u = split.user_index[it.user_id]
        t = split.item_index[it.item_id]
        scores = [float(np.dot(user_out[u], item_out[j])) for j in range(item_out.shape[0])]
        candidates = [j for j in range(len(scores)) if j == t or j not in masked[u]]
        ordered = sorted(candidates, key=lambda j: (-scores[j], j))
        ranks[u] = ordered.index(t) + 1
    recall = {}
    ndcg = {}
    for k in cutoffs:
        hits = [1.0 if r <= k else 0.0 for r in ranks.values()]
        gains = [1.0 / np.log2(r + 1) if r <= k else 0.0 for r in ranks.values()]
        recall[k] = float(np.mean(hits))
        ndcg[k] = float(np.mean(gains))
    return ranks, recall, ndcg


class TestOracleEquivalence:
    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_random_instances(self, seed):
        rng = np.random.default_rng(seed)
        triples = []
        for u in range(20):
            items = rng.choice(30, size=6, replace=False)
            for t, i in enumerate(items):
                triples.append((f"u{u}", f"i{i}", t))
        split, graph = _split_graph(triples)
        user_table = rng.normal(size=(split.n_users, 8))
        item_table = rng.normal(size=(split.n_items, 8))
        state = _state(split, graph, user_table, item_table)
        for target in ("test", "validation"):
            report = full_rank_eval(state, split, cutoffs=(5, 10), target=target)
            ranks, recall, ndcg = brute_force_report(
                user_table, item_table, split, (5, 10), target
            )
            assert dict(report.per_user) == ranks
            for k in (5, 10):
                assert report.recall[k] == pytest.approx(recall[k], abs=1e-12)
                assert report.ndcg[k] == pytest.approx(ndcg[k], abs=1e-12)

    def test_quantized_scores_stress_ties(self):
        rng = np.random.default_rng(77)
        triples = []
        for u in range(15):
            items = rng.choice(20, size=5, replace=False)
            for t, i in enumerate(items):
                triples.append((f"u{u}", f"i{i}", t))
        split, graph = _split_graph(triples)
        # few distinct values force heavy score collisions
        user_table = rng.integers(0, 2, size=(split.n_users, 4)).astype(np.float64)
        item_table = rng.integers(0, 2, size=(split.n_items, 4)).astype(np.float64)
        state = _state(split, graph, user_table, item_table)
        report = full_rank_eval(state, split, cutoffs=(3,))
        ranks, _, _ = brute_force_report(user_table, item_table, split, (3,))
        assert dict(report.per_user) == ranks


class TestReportProperties:
    def _random_report(self, seed=9, cutoffs=(1, 5, 10, 20)):
        rng = np.random.default_rng(seed)
        triples = []
        for u in range(25):
            items = rng.choice(40, size=5, replace=False)
            for t, i in enumerate(items):
                triples.append((f"u{u}", f"i{i}", t))
        split, graph = _split_graph(triples)
        state = _state(
            split, graph,
            rng.normal(size=(split.n_users, 6)), rng.normal(size=(split.n_items, 6)),
        )
        return full_rank_eval(state, split, cutoffs=cutoffs)

    def test_monotone_in_cutoff(self):
        report = self._random_report()
        ks = report.cutoffs
        for a, b in zip(ks, ks[1:]):
            assert report.recall[a] <= report.recall[b]
            assert report.ndcg[a] <= report.ndcg[b]

    def test_ndcg_bounded_by_recall(self):
        report = self._random_report(seed=10)
        for k in report.cutoffs:
            assert 0.0 <= report.ndcg[k] <= report.recall[k] <= 1.0

    def test_skipped_users_counted(self):
        report = self._random_report()
        assert report.n_skipped == 0
        assert report.n_users == 25

    def test_user_without_held_out_item_skipped(self):
        import dataclasses

        split, graph, u, v = _single_user_setup([0.0, 0.0, 10.0, 1.0])
        uid = split.user_index["u"]
        # drop u's test interaction; u stays in the index but has no target
        stripped = dataclasses.replace(
            split, test=tuple(it for it in split.test if split.user_index[it.user_id] != uid)
        )
        report = full_rank_eval(_state(split, graph, u, v), stripped, cutoffs=(10,))
        assert report.n_skipped == 1
        assert report.n_users == 1
        assert uid not in dict(report.per_user)

    def test_bad_target_rejected(self):
        report = None
        split, graph = _split_graph(
            [("u", "a", 0), ("u", "b", 1), ("u", "c", 2)]
        )
        state = _state(split, graph, np.ones((1, 1)), np.ones((3, 1)))
        with pytest.raises(ConfigError):
            full_rank_eval(state, split, target="train")
        with pytest.raises(ConfigError):
            full_rank_eval(state, split, cutoffs=())
        with pytest.raises(ConfigError):
            full_rank_eval(state, split, cutoffs=(0,))


class TestEmitReport:
    def _report(self):
        split, graph, u, v = _single_user_setup([0.0, 0.0, 10.0, 12.0, 11.0])
        return full_rank_eval(_state(split, graph, u, v), split, cutoffs=(5, 10))

    def test_json_round_trip(self, tmp_path):
        report = self._report()
        path = str(tmp_path / "r.json")
        emit_report(report, path, fmt="json")
        back = load_report(path)
        assert back.cutoffs == report.cutoffs
        assert back.n_users == report.n_users
        assert back.n_skipped == report.n_skipped
        assert back.per_user == report.per_user
        for k in report.cutoffs:
            assert back.recall[k] == pytest.approx(report.recall[k], rel=1e-5)
            assert back.ndcg[k] == pytest.approx(report.ndcg[k], rel=1e-5)

    def test_csv_row_count(self, tmp_path):
        report = self._report()
        path = str(tmp_path / "r.csv")
        emit_report(report, path, fmt="csv")
        lines = open(path).read().strip().split("\n")
        assert len(lines) == len(report.cutoffs) + 1
        assert lines[0].startswith("cutoff,")

    def test_six_significant_digits(self, tmp_path):
        report = self._report()
        path = str(tmp_path / "r.csv")
        emit_report(report, path, fmt="csv")
        body = open(path).read()
        # 1/log2(4) = 0.5 exactly; check a known mean formats compactly
        for token in body.strip().split("\n")[1].split(",")[1:3]:
            assert len(token.split(".")[-1].rstrip("0") or "0") <= 6

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            emit_report(self._report(), str(tmp_path / "r.xml"), fmt="xml")
