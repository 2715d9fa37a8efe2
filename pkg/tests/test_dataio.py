"""Ingestion, splitting, filtering and persistence tests."""

import numpy as np
import pytest

from synq.chem import parse_smiles, write_canonical_smiles
from synq.dataio import (
    DataError,
    Reaction,
    build_case,
    filter_reactions,
    load_bond_table,
    load_cases,
    load_checkpoint,
    load_episodes,
    load_predictions,
    load_reactions,
    save_bond_table,
    save_cases,
    save_checkpoint,
    save_episodes,
    save_predictions,
    split_product,
)
from synq.env import NOOP, Episode, add, bond_type_table, init_state, rollout_states
from synq.qfunc import FEATURE_DIM, init_qparams, q_forward

from helpers import isomorphic
from microcorpus import corpus_lines, write_corpus

GOOD_LINE = ("r1\t[CH3:3][C:1](=[O:4])O.[NH2:2][CH3:5]"
             ">>[CH3:3][C:1](=[O:4])[NH:2][CH3:5]\t1,2")


class TestLoadReactions:
    def test_single_valid_line(self, tmp_path):
        path = tmp_path / "rxn.tsv"
        path.write_text(GOOD_LINE + "\n")
        reactions = load_reactions(path)
        assert len(reactions) == 1
        assert len(reactions[0].reactants) == 2
        assert reactions[0].center == (1, 2)

    def test_missing_arrow_reported_and_skipped(self, tmp_path, caplog):
        path = tmp_path / "rxn.tsv"
        path.write_text("r1\tCC.CN\t1,2\n" + GOOD_LINE + "\n")
        with caplog.at_level("WARNING"):
            reactions = load_reactions(path)
        assert len(reactions) == 1
        assert "line 1" in caplog.text

    def test_strict_mode_raises_with_line_number(self, tmp_path):
        path = tmp_path / "rxn.tsv"
        path.write_text(GOOD_LINE + "\nr2\tgarbage\t1,2\n")
        with pytest.raises(DataError, match="line 2"):
            load_reactions(path, strict=True)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_reactions(tmp_path / "absent.tsv")

    def test_order_preserved(self, tmp_path):
        lines = corpus_lines(limit=20)
        path = tmp_path / "c.tsv"
        write_corpus(path, lines)
        reactions = load_reactions(path)
        assert [r.rid for r in reactions] == [l.split("\t")[0] for l in lines]


class TestSplitProduct:
    def test_amide_split(self):
        product = parse_smiles("[CH3:3][C:1](=[O:4])[NH:2][CH3:5]")
        s1, s2 = split_product(product, (1, 2))
        assert write_canonical_smiles(s1) == write_canonical_smiles(parse_smiles("CC=O"))
        assert write_canonical_smiles(s2) == write_canonical_smiles(parse_smiles("CN"))
        assert len(s1.marks) == 1 and len(s2.marks) == 1
        assert s1.atoms[next(iter(s1.marks))].atom_map == 1
        assert s2.atoms[next(iter(s2.marks))].atom_map == 2

    def test_center_not_a_bond(self):
        product = parse_smiles("[CH3:1]C[CH3:2]")
        with pytest.raises(DataError):
            split_product(product, (1, 2))

    def test_ring_center_rejected(self):
        product = parse_smiles("[CH2:1]1CC[CH2:2]CC1")
        with pytest.raises(DataError):
            split_product(product, (1, 2))

    def test_split_then_rebond_restores_product(self):
        product = parse_smiles("[CH3:3][C:1](=[O:4])[NH:2][CH3:5]")
        s1, s2 = split_product(product, (1, 2))
        # rejoin: concatenate graphs, bond the two marked atoms
        from synq.chem.graph import Bond, MolGraph
        off = len(s1.atoms)
        atoms = s1.atoms + s2.atoms
        bonds = list(s1.bonds) + [Bond(b.a + off, b.b + off, b.order) for b in s2.bonds]
        bonds.append(Bond(next(iter(s1.marks)), next(iter(s2.marks)) + off, 1.0))
        rejoined = MolGraph(atoms, bonds)
        assert isomorphic(rejoined.without_maps(), product.without_maps())


class TestFilterAndCases:
    def _reaction(self, line):
        import tempfile, os
        fd, path = tempfile.mkstemp()
        os.write(fd, (line + "\n").encode())
        os.close(fd)
        try:
            return load_reactions(path)[0]
        finally:
            os.unlink(path)

    def test_three_reactants_dropped(self):
        rxn = self._reaction(
            "r1\tC.[CH3:3][C:1](=[O:4])O.[NH2:2][CH3:5]"
            ">>[CH3:3][C:1](=[O:4])[NH:2][CH3:5]\t1,2")
        assert filter_reactions([rxn]) == []

    def test_oversized_leaving_group_dropped(self):
        # four added atoms on one synthon with T=3
        rxn = self._reaction(
            "r1\t[CH3:3][C:1](=[O:4])OCCC.[NH2:2][CH3:5]"
            ">>[CH3:3][C:1](=[O:4])[NH:2][CH3:5]\t1,2")
        assert filter_reactions([rxn], step_limit=3) == []
        assert len(filter_reactions([rxn], step_limit=4)) == 1

    def test_filter_idempotent(self, tmp_path):
        path = tmp_path / "c.tsv"
        write_corpus(path, corpus_lines(limit=30))
        reactions = load_reactions(path)
        once = filter_reactions(reactions)
        twice = filter_reactions(once)
        assert [r.rid for r in once] == [r.rid for r in twice]

    def test_build_case_aligns_reactants(self):
        rxn = self._reaction(GOOD_LINE)
        case = build_case(rxn)
        assert write_canonical_smiles(case.reactants[0]) == \
            write_canonical_smiles(parse_smiles("CC(O)=O"))
        assert write_canonical_smiles(case.reactants[1]) == \
            write_canonical_smiles(parse_smiles("CN"))


def _episodes():
    s0 = init_state(parse_smiles("[CH3:3][C:1]=[O:4]").with_marks([1]),
                    parse_smiles("[NH2:2][CH3:5]").with_marks([0]),
                    parse_smiles("[CH3:3][C:1](=[O:4])[NH:2][CH3:5]"), 3)
    acts1 = [(add("O", 1, 1), NOOP), (NOOP, NOOP), (NOOP, NOOP)]
    acts2 = [(NOOP, add("C", 1, 0)), (add("C", 1, 1), NOOP), (NOOP, NOOP)]
    return [
        Episode(s0.product, rollout_states(s0, acts1), tuple(acts1), reward=1),
        Episode(s0.product, rollout_states(s0, acts2), tuple(acts2), reward=0),
    ]


class TestEpisodeFiles:
    def test_round_trip(self, tmp_path):
        # attach indices are relabeled into canonical order on write, so
        # equality is canonical per-step state equality, not raw indices
        path = tmp_path / "eps.jsonl"
        episodes = _episodes()
        save_episodes(path, episodes)
        back = load_episodes(path)
        assert len(back) == 2
        for a, b in zip(episodes, back):
            assert a.reward == b.reward
            assert [(x.kind, x.element, x.order, y.kind, y.element, y.order)
                    for x, y in a.actions] == \
                   [(x.kind, x.element, x.order, y.kind, y.element, y.order)
                    for x, y in b.actions]
            for sa, sb in zip(a.states, b.states):
                assert write_canonical_smiles(sa.current1) == \
                    write_canonical_smiles(sb.current1)
                assert write_canonical_smiles(sa.current2) == \
                    write_canonical_smiles(sb.current2)

    def test_truncation_detected(self, tmp_path):
        path = tmp_path / "eps.jsonl"
        save_episodes(path, _episodes())
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(DataError, match="truncated"):
            load_episodes(path)

    def test_corrupt_record_detected(self, tmp_path):
        path = tmp_path / "eps.jsonl"
        save_episodes(path, _episodes())
        content = path.read_text().replace("}", "", 1)
        path.write_text(content)
        with pytest.raises(DataError):
            load_episodes(path)

    def test_wrong_format_rejected(self, tmp_path):
        path = tmp_path / "eps.jsonl"
        path.write_text('{"format": "other", "version": 1, "count": 0}\n')
        with pytest.raises(DataError, match="format"):
            load_episodes(path)


class TestCheckpoint:
    def test_bit_exact_round_trip(self, tmp_path):
        params = init_qparams((FEATURE_DIM, 8, 4, 1), seed=5, gamma=0.9,
                              alpha=2e-5, learning_rate=3e-4, dropout_rate=0.25)
        path = tmp_path / "ck.npz"
        save_checkpoint(path, params)
        back = load_checkpoint(path)
        assert back.layer_sizes == params.layer_sizes
        assert (back.gamma, back.alpha, back.learning_rate, back.dropout_rate,
                back.rng_seed) == (0.9, 2e-5, 3e-4, 0.25, 5)
        rng = np.random.default_rng(0)
        x = rng.normal(size=FEATURE_DIM)
        assert q_forward(back, x) == q_forward(params, x)  # bit-exact

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "ck.npz"
        save_checkpoint(path, init_qparams((8, 4, 1), seed=1))
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(DataError):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / "none.npz")


class TestCasesAndTables:
    def test_cases_round_trip(self, tmp_path):
        path_tsv = tmp_path / "c.tsv"
        write_corpus(path_tsv, corpus_lines(limit=10))
        cases = [build_case(r) for r in load_reactions(path_tsv)]
        path = tmp_path / "cases.jsonl"
        save_cases(path, cases)
        back = load_cases(path)
        assert len(back) == len(cases)
        for a, b in zip(cases, back):
            assert write_canonical_smiles(a.product) == write_canonical_smiles(b.product)
            assert [sorted(s.marks) for s in a.synthons] and \
                   [len(s.marks) for s in b.synthons] == [1, 1]
            assert [write_canonical_smiles(m) for m in a.reactants] == \
                   [write_canonical_smiles(m) for m in b.reactants]

    def test_bond_table_round_trip(self, tmp_path):
        path_tsv = tmp_path / "c.tsv"
        write_corpus(path_tsv, corpus_lines(limit=15))
        table = bond_type_table(load_reactions(path_tsv))
        path = tmp_path / "bonds.json"
        save_bond_table(path, table)
        assert load_bond_table(path) == table

    def test_predictions_round_trip(self, tmp_path):
        rows = [{"product": "CC", "predictions": [
            {"reactants": ["C", "C"], "score": 0.5, "reward": 1}]}]
        path = tmp_path / "preds.jsonl"
        save_predictions(path, rows)
        assert load_predictions(path) == rows
