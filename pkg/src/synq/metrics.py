"""Reward-based ranking metrics over predicted reactant pairs.

All metrics treat a prediction as correct when its recorded reward is 1.
Products with fewer than N rows are padded with zero-reward rows for MAP
and NDCG so short outputs are not silently favored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .chem import (
    Bond,
    MolGraph,
    SmilesParseError,
    morgan_fingerprint,
    parse_smiles,
    tanimoto,
)


class MetricError(ValueError):
    pass


@dataclass
class PredRow:
    reactants: list[str]
    reward: int
    score: float = 0.0

    def __post_init__(self) -> None:
        if self.reward not in (0, 1):
            raise MetricError("rewards must be 0 or 1")


@dataclass
class ProductPredictions:
    product: str
    rows: list[PredRow]


@dataclass
class EvalTable:
    entries: list[ProductPredictions]
    n_max: int = 10

    def __post_init__(self) -> None:
        for entry in self.entries:
            if len(entry.rows) > self.n_max:
                raise MetricError(
                    f"{entry.product}: {len(entry.rows)} rows exceed n_max={self.n_max}")

    @classmethod
    def from_prediction_records(cls, records: Sequence[dict], n_max: int = 10) -> "EvalTable":
        entries = []
        for rec in records:
            rows = [
                PredRow(list(p["reactants"]), int(p.get("reward") or 0),
                        float(p.get("score", 0.0)))
                for p in rec["predictions"][:n_max]
            ]
            entries.append(ProductPredictions(rec["product"], rows))
        return cls(entries, n_max)


def _check_n(table: EvalTable, n: int) -> None:
    if n < 1:
        raise MetricError("N must be at least 1")
    if n > table.n_max:
        raise MetricError(f"N={n} exceeds the table's n_max={table.n_max}")


def _padded(rows: list[PredRow], n: int) -> list[int]:
    rewards = [row.reward for row in rows[:n]]
    rewards.extend([0] * (n - len(rewards)))
    return rewards


def map_at_n(table: EvalTable, n: int) -> float:
    """Mean over products of the top-N reward fraction."""
    _check_n(table, n)
    if not table.entries:
        return 0.0
    total = sum(sum(_padded(e.rows, n)) / n for e in table.entries)
    return total / len(table.entries)


def ndcg_at_n(table: EvalTable, n: int) -> float:
    """NDCG with rewards as gains and 1/log2(rank+1) discounts; products
    with no correct prediction contribute 0."""
    _check_n(table, n)
    if not table.entries:
        return 0.0
    total = 0.0
    for entry in table.entries:
        gains = _padded(entry.rows, n)
        ideal = sorted((row.reward for row in entry.rows), reverse=True)[:n]
        ideal.extend([0] * (n - len(ideal)))
        dcg = sum(g / math.log2(rank + 2) for rank, g in enumerate(gains))
        idcg = sum(g / math.log2(rank + 2) for rank, g in enumerate(ideal))
        total += dcg / idcg if idcg > 0 else 0.0
    return total / len(table.entries)


def _composite(mols: Sequence[MolGraph]) -> MolGraph:
    atoms: list = []
    bonds: list = []
    offset = 0
    for mol in mols:
        atoms.extend(mol.atoms)
        bonds.extend(Bond(b.a + offset, b.b + offset, b.order) for b in mol.bonds)
        offset += len(mol.atoms)
    return MolGraph(atoms, bonds)


def pair_similarity(ri: Sequence[MolGraph], rj: Sequence[MolGraph]) -> float:
    """Similarity of two reactant pairs: best of the two assignments,
    averaging per-reactant Tanimoto values."""
    if len(ri) != 2 or len(rj) != 2:
        raise MetricError("pair_similarity needs exactly two reactants per side")
    f = [morgan_fingerprint(m) for m in ri]
    g = [morgan_fingerprint(m) for m in rj]
    straight = tanimoto(f[0], g[0]) + tanimoto(f[1], g[1])
    crossed = tanimoto(f[0], g[1]) + tanimoto(f[1], g[0])
    return max(straight, crossed) / 2.0


def prediction_similarity(ri: Sequence[MolGraph], rj: Sequence[MolGraph]) -> float:
    """Pair similarity when both sides have two reactants; otherwise the
    composite-molecule fallback used for external prediction files."""
    if len(ri) == 2 and len(rj) == 2:
        return pair_similarity(ri, rj)
    return tanimoto(morgan_fingerprint(_composite(ri)),
                    morgan_fingerprint(_composite(rj)))


def diversity_at_n(table: EvalTable, n: int) -> float:
    """Mean dissimilarity of correct predictions to higher-ranked correct
    ones; rank 1 and sole-correct rows contribute 0."""
    _check_n(table, n)
    if not table.entries:
        return 0.0
    total = 0.0
    for entry in table.entries:
        rows = entry.rows[:n]
        parsed: list[Optional[list[MolGraph]]] = [None] * len(rows)

        def mols(i: int) -> list[MolGraph]:
            if parsed[i] is None:
                parsed[i] = [parse_smiles(s) for s in rows[i].reactants]
            return parsed[i]

        for i in range(len(rows)):
            if rows[i].reward != 1 or i == 0:
                continue
            higher = [j for j in range(i) if rows[j].reward == 1]
            if not higher:
                continue
            dsim = min(1.0 - prediction_similarity(mols(i), mols(j)) for j in higher)
            total += dsim
    return total / (n * len(table.entries))


def validity_at_n(table: EvalTable, n: int) -> float:
    """Fraction of emitted top-N rows whose reactants all parse."""
    _check_n(table, n)
    considered = 0
    valid = 0
    for entry in table.entries:
        for row in entry.rows[:n]:
            considered += 1
            if row.reactants and all(_parses(s) for s in row.reactants):
                valid += 1
    return valid / considered if considered else 1.0


def _parses(smiles: str) -> bool:
    try:
        parse_smiles(smiles)
        return True
    except SmilesParseError:
        return False


def metric_report(table: EvalTable, n_values: Sequence[int] = tuple(range(1, 11))) -> dict:
    report = {"map": {}, "ndcg": {}, "diversity": {}, "validity": {}}
    for n in n_values:
        if n > table.n_max:
            continue
        report["map"][n] = map_at_n(table, n)
        report["ndcg"][n] = ndcg_at_n(table, n)
        report["diversity"][n] = diversity_at_n(table, n)
        report["validity"][n] = validity_at_n(table, n)
    return report


def format_report(report: dict) -> str:
    ns = sorted(report["map"])
    lines = ["metric    " + "".join(f"{f'@{n}':>8}" for n in ns)]
    for name in ("map", "ndcg", "diversity", "validity"):
        cells = "".join(f"{report[name][n]:8.4f}" for n in ns)
        lines.append(f"{name:<10}" + cells)
    return "\n".join(lines)
