"""Reaction ingestion, product splitting, and file persistence.

Reaction files are TSV: id, atom-mapped reaction SMILES
("reactants>>product"), and the reaction center as two product atom-map
numbers ("5,12"). Episodes and predictions are JSON-lines with a
versioned header; checkpoints are npz containers. Loads reject version
mismatches and truncation outright.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .chem import ChemError, MolGraph, parse_smiles, write_smiles
from .env import CompletionError, Episode, completion_plan, episode_from_record
from .qfunc import QParams

log = logging.getLogger(__name__)

EPISODE_FORMAT = "synq-episodes"
PREDICTION_FORMAT = "synq-predictions"
CASE_FORMAT = "synq-cases"
CHECKPOINT_FORMAT = "synq-checkpoint"
FORMAT_VERSION = 1


class DataError(ValueError):
    pass


@dataclass
class Reaction:
    rid: str
    reactants: list[MolGraph]
    product: MolGraph
    center: tuple[int, int]  # product atom-map numbers


@dataclass
class ProductCase:
    """A product with its marked synthons and aligned ground-truth reactants."""

    rid: str
    product: MolGraph
    synthons: tuple[MolGraph, MolGraph]
    reactants: tuple[MolGraph, MolGraph]


def load_reactions(path, strict: bool = False) -> list[Reaction]:
    """Parse a reaction TSV; malformed lines are reported and skipped,
    or fatal when ``strict``."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"reaction file not found: {path}")
    out: list[Reaction] = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            try:
                out.append(_parse_reaction_line(line, lineno))
            except (DataError, ChemError) as exc:
                if strict:
                    raise DataError(f"line {lineno}: {exc}") from exc
                log.warning("skipping malformed reaction line %d: %s", lineno, exc)
    return out


def _parse_reaction_line(line: str, lineno: int) -> Reaction:
    cols = line.split("\t")
    if len(cols) != 3:
        raise DataError(f"expected 3 tab-separated columns, got {len(cols)}")
    rid, rxn, center_text = (c.strip() for c in cols)
    if rxn.count(">>") != 1:
        raise DataError("reaction SMILES must contain exactly one '>>'")
    left, right = rxn.split(">>")
    if not left or not right:
        raise DataError("empty reactant or product side")
    reactants = [parse_smiles(part) for part in left.split(".") if part]
    product = parse_smiles(right)
    parts = center_text.replace("-", ",").split(",")
    if len(parts) != 2:
        raise DataError("center column must name two atom-map numbers")
    try:
        center = (int(parts[0]), int(parts[1]))
    except ValueError as exc:
        raise DataError("center column must be numeric") from exc
    return Reaction(rid or str(lineno), reactants, product, center)


def split_product(product: MolGraph, center: tuple[int, int]) -> tuple[MolGraph, MolGraph]:
    """Break the product at the center bond into two marked synthons.

    The synthon containing the first named atom comes first; each synthon
    keeps its atom maps and gets its former bond endpoint marked.
    """
    by_map = {a.atom_map: i for i, a in enumerate(product.atoms) if a.atom_map}
    m1, m2 = center
    if m1 not in by_map or m2 not in by_map:
        raise DataError(f"center atom maps {center} not present in product")
    i1, i2 = by_map[m1], by_map[m2]
    bond = product.bond_between(i1, i2)
    if bond is None:
        raise DataError(f"center {center} is not a bond of the product")
    remaining = tuple(b for b in product.bonds if b.key != bond.key)
    cut = MolGraph(product.atoms, remaining)
    comps = cut.components()
    if len(comps) != 2:
        raise DataError("removing the center bond does not split the product in two "
                        "(ring centers are out of scope)")
    if i1 in comps[1]:
        comps = [comps[1], comps[0]]
    synthons = []
    for comp, endpoint in zip(comps, (i1, i2)):
        sub = cut.subgraph(comp)
        synthons.append(sub.with_marks([comp.index(endpoint)]))
    return synthons[0], synthons[1]


def align_reactants(reaction: Reaction,
                    synthons: tuple[MolGraph, MolGraph]) -> tuple[MolGraph, MolGraph]:
    """Order the two reactants to match (synthon1, synthon2) via atom maps."""
    if len(reaction.reactants) != 2:
        raise DataError("alignment needs exactly two reactants")

    def maps(mol: MolGraph) -> set[int]:
        return {a.atom_map for a in mol.atoms if a.atom_map}

    r_maps = [maps(r) for r in reaction.reactants]
    ordered = []
    for syn in synthons:
        s_maps = maps(syn)
        hits = [idx for idx, rm in enumerate(r_maps) if s_maps <= rm]
        if len(hits) != 1:
            raise DataError("synthon atom maps do not identify a unique reactant")
        ordered.append(hits[0])
    if ordered[0] == ordered[1]:
        raise DataError("both synthons map into the same reactant")
    return (reaction.reactants[ordered[0]], reaction.reactants[ordered[1]])


def build_case(reaction: Reaction, step_limit: int = 3) -> ProductCase:
    """Validate and package one reaction for training/evaluation."""
    if len(reaction.reactants) != 2:
        raise DataError("reaction does not have exactly two reactants")
    synthons = split_product(reaction.product, reaction.center)
    truth = align_reactants(reaction, synthons)
    for syn, rea in zip(synthons, truth):
        plan = completion_plan(syn, rea)
        if len(plan) > step_limit:
            raise DataError(
                f"synthon needs {len(plan)} additions, over the limit {step_limit}")
    return ProductCase(reaction.rid, reaction.product, synthons, truth)


def filter_reactions(reactions: Sequence[Reaction], step_limit: int = 3) -> list[Reaction]:
    """Keep two-reactant records whose synthons reach their reactants
    within ``step_limit`` single-atom additions each."""
    kept = []
    for reaction in reactions:
        try:
            build_case(reaction, step_limit)
        except (DataError, ChemError, CompletionError) as exc:
            log.debug("filtered out %s: %s", reaction.rid, exc)
            continue
        kept.append(reaction)
    return kept


# ---------------------------------------------------------------------------
# JSON-lines containers


def _write_jsonl(path, fmt: str, records: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(json.dumps({"format": fmt, "version": FORMAT_VERSION,
                             "count": len(records)}) + "\n")
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def _read_jsonl(path, fmt: str) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with path.open() as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: corrupt header") from exc
    if header.get("format") != fmt:
        raise DataError(f"{path}: expected format {fmt!r}, got {header.get('format')!r}")
    if header.get("version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported version {header.get('version')!r}")
    records = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: corrupt record on line {i}") from exc
    if header.get("count") is not None and header["count"] != len(records):
        raise DataError(f"{path}: truncated (header says {header['count']} records, "
                        f"found {len(records)})")
    return records


def save_episodes(path, episodes: Sequence[Episode]) -> None:
    _write_jsonl(path, EPISODE_FORMAT, [ep.to_record() for ep in episodes])


def load_episodes(path) -> list[Episode]:
    return [episode_from_record(rec) for rec in _read_jsonl(path, EPISODE_FORMAT)]


def _mol_record(mol: MolGraph) -> dict:
    smi, order = write_smiles(mol, keep_maps=True)
    pos = {orig: k for k, orig in enumerate(order)}
    return {"smiles": smi, "marks": sorted(pos[i] for i in mol.marks)}


def _mol_from_record(rec: dict) -> MolGraph:
    return parse_smiles(rec["smiles"]).with_marks(rec.get("marks", []))


def save_cases(path, cases: Sequence[ProductCase]) -> None:
    records = []
    for case in cases:
        records.append({
            "id": case.rid,
            "product": write_smiles(case.product, keep_maps=True)[0],
            "synthons": [_mol_record(s) for s in case.synthons],
            "reactants": [write_smiles(r, keep_maps=True)[0] for r in case.reactants],
        })
    _write_jsonl(path, CASE_FORMAT, records)


def load_cases(path) -> list[ProductCase]:
    cases = []
    for rec in _read_jsonl(path, CASE_FORMAT):
        cases.append(ProductCase(
            rid=rec["id"],
            product=parse_smiles(rec["product"]),
            synthons=tuple(_mol_from_record(r) for r in rec["synthons"]),
            reactants=tuple(parse_smiles(r) for r in rec["reactants"]),
        ))
    return cases


def save_predictions(path, rows: list[dict]) -> None:
    """Rows: {"product": smiles, "predictions": [{"reactants": [s, s],
    "score": float, "reward": 0|1|None}]}."""
    _write_jsonl(path, PREDICTION_FORMAT, rows)


def load_predictions(path) -> list[dict]:
    return _read_jsonl(path, PREDICTION_FORMAT)


def save_bond_table(path, table) -> None:
    from .chem.graph import ORDER_NAMES

    records = sorted([a, b, ORDER_NAMES[order]] for a, b, order in table)
    Path(path).write_text(json.dumps(
        {"format": "synq-bond-table", "version": FORMAT_VERSION, "bonds": records}))


def load_bond_table(path):
    from .chem.graph import NAME_ORDERS

    raw = json.loads(Path(path).read_text())
    if raw.get("format") != "synq-bond-table" or raw.get("version") != FORMAT_VERSION:
        raise DataError(f"{path}: not a bond-table file")
    return frozenset((a, b, NAME_ORDERS[name]) for a, b, name in raw["bonds"])


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, params: QParams) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": FORMAT_VERSION,
        "layer_sizes": list(params.layer_sizes),
        "gamma": params.gamma,
        "alpha": params.alpha,
        "learning_rate": params.learning_rate,
        "dropout_rate": params.dropout_rate,
        "rng_seed": params.rng_seed,
        "dtype": np.dtype(params.dtype).name,
        "layers": len(params.weights),
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"w{k}"] = w
        arrays[f"b{k}"] = b
    with path.open("wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> QParams:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    try:
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise DataError(f"{path}: not a checkpoint file")
            if meta.get("version") != FORMAT_VERSION:
                raise DataError(f"{path}: unsupported checkpoint version")
            weights = [data[f"w{k}"] for k in range(meta["layers"])]
            biases = [data[f"b{k}"] for k in range(meta["layers"])]
    except DataError:
        raise
    except Exception as exc:
        raise DataError(f"{path}: corrupt checkpoint ({exc})") from exc
    return QParams(
        weights=weights,
        biases=biases,
        gamma=meta["gamma"],
        alpha=meta["alpha"],
        learning_rate=meta["learning_rate"],
        dropout_rate=meta["dropout_rate"],
        rng_seed=meta["rng_seed"],
    )
