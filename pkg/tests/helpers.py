"""Shared test utilities: permutation, independent isomorphism check."""

from __future__ import annotations

import random

from synq.chem import MolGraph
from synq.chem.graph import Bond


def permuted(mol: MolGraph, rng: random.Random) -> MolGraph:
    """Reindex atoms with a random permutation, remapping bonds and marks."""
    n = len(mol.atoms)
    order = list(range(n))
    rng.shuffle(order)  # order[new] = old
    inv = {old: new for new, old in enumerate(order)}
    atoms = tuple(mol.atoms[old] for old in order)
    bonds = tuple(Bond(inv[b.a], inv[b.b], b.order) for b in mol.bonds)
    marks = [inv[i] for i in mol.marks]
    return MolGraph(atoms, bonds, marks)


def _atom_sig(mol: MolGraph, i: int) -> tuple:
    atom = mol.atoms[i]
    orders = tuple(sorted(order for _, order in mol.neighbors(i)))
    return (atom.element, atom.charge, atom.aromatic, mol.degree(i), orders)


def isomorphic(g1: MolGraph, g2: MolGraph) -> bool:
    """Backtracking graph isomorphism over (element, charge, aromatic)
    labels and bond orders; independent of the canonicalization code."""
    n = len(g1.atoms)
    if n != len(g2.atoms) or len(g1.bonds) != len(g2.bonds):
        return False
    sigs2: dict[tuple, list[int]] = {}
    for j in range(n):
        sigs2.setdefault(_atom_sig(g2, j), []).append(j)
    candidates = []
    for i in range(n):
        cand = sigs2.get(_atom_sig(g1, i))
        if not cand:
            return False
        candidates.append(cand)

    # most-constrained-first ordering keeps the search shallow
    todo = sorted(range(n), key=lambda i: len(candidates[i]))
    mapping: dict[int, int] = {}
    used: set[int] = set()

    def consistent(i: int, j: int) -> bool:
        for nbr, order in g1.neighbors(i):
            if nbr in mapping:
                bond = g2.bond_between(j, mapping[nbr])
                if bond is None or bond.order != order:
                    return False
        return True

    def solve(pos: int) -> bool:
        if pos == n:
            return True
        i = todo[pos]
        for j in candidates[i]:
            if j in used:
                continue
            if consistent(i, j):
                mapping[i] = j
                used.add(j)
                if solve(pos + 1):
                    return True
                del mapping[i]
                used.discard(j)
        return False

    return solve(0)
