"""Metric tests against hand-computed values.

The fixtures only use reactant pairs whose similarities are knowable by
hand: identical molecules (Tanimoto 1) and fingerprint-disjoint ones
(Tanimoto 0, asserted as a precondition).
"""

import math

import pytest

from synq.chem import morgan_fingerprint, parse_smiles, tanimoto
from synq.metrics import (
    EvalTable,
    MetricError,
    PredRow,
    ProductPredictions,
    diversity_at_n,
    format_report,
    map_at_n,
    metric_report,
    ndcg_at_n,
    pair_similarity,
    prediction_similarity,
    validity_at_n,
)

# Two structures with no shared fingerprint bits (checked below).
MOL_A = "CCCCC"
MOL_B = "O=S(=O)(O)O"


def test_fixture_molecules_are_fingerprint_disjoint():
    a = morgan_fingerprint(parse_smiles(MOL_A))
    b = morgan_fingerprint(parse_smiles(MOL_B))
    assert tanimoto(a, b) == 0.0


def table(*reward_lists, n_max=10):
    entries = []
    for i, rewards in enumerate(reward_lists):
        rows = [PredRow(["CC", "CO"], r) for r in rewards]
        entries.append(ProductPredictions(f"p{i}", rows))
    return EvalTable(entries, n_max=n_max)


class TestMap:
    def test_single_product_hand_value(self):
        assert map_at_n(table([1, 0, 1]), 3) == pytest.approx(2 / 3)

    def test_all_ones(self):
        t = table([1, 1, 1, 1])
        for n in (1, 2, 3, 4):
            assert map_at_n(t, n) == 1.0

    def test_two_products_map1(self):
        assert map_at_n(table([1], [0]), 1) == 0.5

    def test_short_lists_pad_with_zeros(self):
        assert map_at_n(table([1]), 5) == pytest.approx(1 / 5)

    def test_bad_n(self):
        with pytest.raises(MetricError):
            map_at_n(table([1]), 0)
        with pytest.raises(MetricError):
            map_at_n(table([1]), 11)

    def test_rank_insensitive_within_window(self):
        assert map_at_n(table([1, 0]), 2) == map_at_n(table([0, 1]), 2)


class TestNdcg:
    def test_hand_value(self):
        # rewards [0, 1]: DCG = 1/log2(3), IDCG = 1
        assert ndcg_at_n(table([0, 1]), 2) == pytest.approx(1 / math.log2(3))

    def test_sorted_rewards_score_one(self):
        assert ndcg_at_n(table([1, 1, 0]), 3) == 1.0

    def test_all_zero_rewards(self):
        assert ndcg_at_n(table([0, 0, 0]), 3) == 0.0

    def test_swap_improves(self):
        assert ndcg_at_n(table([1, 0]), 2) > ndcg_at_n(table([0, 1]), 2)


class TestPairSimilarity:
    def test_identical_pairs(self):
        pair = (parse_smiles("CCO"), parse_smiles("CN"))
        assert pair_similarity(pair, pair) == 1.0

    def test_symmetry(self):
        ri = (parse_smiles("CCO"), parse_smiles("CN"))
        rj = (parse_smiles("CCN"), parse_smiles("CO"))
        assert pair_similarity(ri, rj) == pair_similarity(rj, ri)

    def test_swapped_assignment_found(self):
        a, b = parse_smiles("CCO"), parse_smiles("CS(=O)(=O)O")
        assert pair_similarity((a, b), (b, a)) == 1.0

    def test_half_for_one_shared_one_disjoint(self):
        shared = parse_smiles("CC(=O)O")
        ri = (shared, parse_smiles(MOL_A))
        rj = (shared, parse_smiles(MOL_B))
        assert pair_similarity(ri, rj) == pytest.approx(0.5)

    def test_composite_fallback(self):
        one = [parse_smiles("CCO")]
        two = [parse_smiles("CC"), parse_smiles("O")]
        assert 0.0 <= prediction_similarity(one, two) <= 1.0
        with pytest.raises(MetricError):
            pair_similarity(one, two)


class TestDiversity:
    def test_at_one_always_zero(self):
        t = table([1], [1], [0])
        assert diversity_at_n(t, 1) == 0.0

    def test_single_correct_prediction(self):
        assert diversity_at_n(table([0, 1, 0]), 3) == 0.0

    def test_two_identical_correct(self):
        rows = [PredRow(["CC", "CO"], 1), PredRow(["CC", "CO"], 1)]
        t = EvalTable([ProductPredictions("p", rows)], n_max=10)
        assert diversity_at_n(t, 2) == 0.0

    def test_two_disjoint_correct(self):
        rows = [PredRow([MOL_A, MOL_A], 1), PredRow([MOL_B, MOL_B], 1)]
        t = EvalTable([ProductPredictions("p", rows)], n_max=10)
        # dsim contributions: 0 (rank 1) + 1 (fully dissimilar) over N=2
        assert diversity_at_n(t, 2) == pytest.approx(0.5)

    def test_incorrect_rows_contribute_nothing(self):
        rows = [PredRow([MOL_A, MOL_A], 1), PredRow([MOL_B, MOL_B], 0)]
        t = EvalTable([ProductPredictions("p", rows)], n_max=10)
        assert diversity_at_n(t, 2) == 0.0


class TestValidity:
    def test_all_valid(self):
        assert validity_at_n(table([1, 0, 1]), 3) == 1.0

    def test_unparseable_row(self):
        rows = [PredRow(["C(", "CC"], 0), PredRow(["CC", "CO"], 1)]
        t = EvalTable([ProductPredictions("p", rows)], n_max=10)
        assert validity_at_n(t, 2) == 0.5

    def test_empty_row_invalid(self):
        rows = [PredRow([], 0)]
        t = EvalTable([ProductPredictions("p", rows)], n_max=10)
        assert validity_at_n(t, 1) == 0.0


class TestTableAndReport:
    def test_rewards_must_be_binary(self):
        with pytest.raises(MetricError):
            PredRow(["C"], 2)

    def test_n_max_enforced(self):
        rows = [PredRow(["C"], 0)] * 3
        with pytest.raises(MetricError):
            EvalTable([ProductPredictions("p", rows)], n_max=2)

    def test_report_shape_and_formatting(self):
        t = table([1, 0, 1], [0, 1])
        report = metric_report(t, n_values=range(1, 4))
        assert set(report) == {"map", "ndcg", "diversity", "validity"}
        assert set(report["map"]) == {1, 2, 3}
        text = format_report(report)
        assert "map" in text and "@3" in text

    def test_product_permutation_invariance(self):
        a = table([1, 0], [0, 1], [1, 1])
        b = table([1, 1], [1, 0], [0, 1])
        for n in (1, 2):
            assert map_at_n(a, n) == pytest.approx(map_at_n(b, n))
            assert ndcg_at_n(a, n) == pytest.approx(ndcg_at_n(b, n))

    def test_from_prediction_records(self):
        records = [{"product": "CC", "predictions": [
            {"reactants": ["C", "C"], "score": 1.0, "reward": 1},
            {"reactants": ["CC", "O"], "score": 0.5, "reward": None},
        ]}]
        t = EvalTable.from_prediction_records(records, n_max=5)
        assert t.entries[0].rows[0].reward == 1
        assert t.entries[0].rows[1].reward == 0
