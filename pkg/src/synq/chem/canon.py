"""Canonical atom ranking and SMILES output.

Ranking is iterative invariant refinement: atoms start from local
invariants (element, degree, bond-order total, charge, H count, ring
membership, aromaticity) and are repeatedly re-ranked by their neighbor
rank multisets until the partition stabilizes; remaining ties are broken
one atom at a time followed by re-refinement. Atom maps and attachment
marks never influence ranks, so the canonical string is a property of
the bare molecule.
"""

from __future__ import annotations

from .graph import AROMATIC, DOUBLE, MolGraph, SINGLE, TRIPLE
from .smiles import AROMATIC_ORGANIC, ORGANIC_SUBSET

_ELEMENT_ORDER = {el: i for i, el in enumerate(
    ("H", "B", "C", "N", "O", "F", "Si", "P", "S", "Cl", "Se", "Br", "I"))}

_BOND_KEY = {SINGLE: 1, AROMATIC: 2, DOUBLE: 3, TRIPLE: 4}


def canonical_ranks(mol: MolGraph) -> list[int]:
    """Distinct rank per atom, invariant under atom reindexing."""
    n = len(mol.atoms)
    if n == 0:
        return []

    keys: list[tuple] = []
    for i, atom in enumerate(mol.atoms):
        keys.append((
            _ELEMENT_ORDER[atom.element],
            mol.degree(i),
            int(round(2 * mol.bond_order_sum(i))),
            atom.charge,
            mol.implicit_hydrogens(i),
            1 if atom.aromatic else 0,
            1 if mol.in_ring(i) else 0,
        ))
    ranks = _rank(keys)

    while True:
        ranks = _refine(mol, ranks)
        if len(set(ranks)) == n:
            return ranks
        # Split the lowest-ranked tied class at its lowest-index member;
        # members of a surviving tied class are treated as interchangeable.
        tied_rank = min(r for r in ranks if ranks.count(r) > 1)
        chosen = ranks.index(tied_rank)
        keys = [(r, 0 if i == chosen else 1) for i, r in enumerate(ranks)]
        ranks = _rank(keys)


def _refine(mol: MolGraph, ranks: list[int]) -> list[int]:
    n = len(ranks)
    while True:
        keys = []
        for i in range(n):
            nbr = sorted((_BOND_KEY[order], ranks[j]) for j, order in mol.neighbors(i))
            keys.append((ranks[i], tuple(nbr)))
        new_ranks = _rank(keys)
        if new_ranks == ranks:
            return ranks
        ranks = new_ranks


def _rank(keys: list[tuple]) -> list[int]:
    order = {key: pos for pos, key in enumerate(sorted(set(keys)))}
    return [order[k] for k in keys]


def write_canonical_smiles(mol: MolGraph) -> str:
    """Canonical SMILES; identical for all atom orderings, maps omitted."""
    if mol._canon is None:
        mol._canon = write_smiles(mol)[0]
    return mol._canon


def write_smiles(mol: MolGraph, keep_maps: bool = False) -> tuple[str, list[int]]:
    """SMILES in canonical order plus the emission order of original indices.

    ``order[k]`` is the original index of the k-th written atom, i.e. the
    atom that becomes index k when the string is re-parsed.
    """
    n = len(mol.atoms)
    if n == 0:
        raise ValueError("cannot write an empty molecule")
    ranks = canonical_ranks(mol)

    pieces: list[str] = []
    emitted: list[int] = []
    components = sorted(mol.components(), key=lambda comp: min(ranks[i] for i in comp))
    for comp in components:
        start = min(comp, key=lambda i: ranks[i])
        text = _write_component(mol, ranks, start, emitted, keep_maps)
        pieces.append(text)
    return ".".join(pieces), emitted


def _write_component(mol: MolGraph, ranks: list[int], start: int,
                     emitted: list[int], keep_maps: bool) -> str:
    # DFS preorder with neighbors in rank order; non-tree edges become
    # ring closures, digits reused once both ends are written.
    parent: dict[int, int | None] = {start: None}
    preorder: list[int] = []
    children: dict[int, list[int]] = {}
    ring_seen: set[tuple[int, int]] = set()

    stack = [start]
    visited = {start}
    while stack:
        node = stack.pop()
        preorder.append(node)
        kids = []
        for nbr, _ in sorted(mol.neighbors(node), key=lambda t: ranks[t[0]]):
            if nbr not in visited:
                visited.add(nbr)
                parent[nbr] = node
                kids.append(nbr)
            elif nbr != parent[node]:
                key = (node, nbr) if node < nbr else (nbr, node)
                ring_seen.add(key)
        children[node] = kids
        for kid in reversed(kids):
            stack.append(kid)

    pos = {atom: k for k, atom in enumerate(preorder)}
    # digit bookkeeping: each ring bond opens at its earlier-written endpoint
    opens: dict[int, list[tuple[int, int]]] = {}
    closes: dict[int, list[tuple[int, int]]] = {}
    for a, b in ring_seen:
        first, second = (a, b) if pos[a] < pos[b] else (b, a)
        opens.setdefault(first, []).append((pos[second], second))
        closes.setdefault(second, []).append((pos[first], first))

    digit_of: dict[tuple[int, int], int] = {}
    in_use: set[int] = set()
    out: list[str] = []

    def bond_symbol(a: int, b: int) -> str:
        bond = mol.bond_between(a, b)
        assert bond is not None
        if bond.order == DOUBLE:
            return "="
        if bond.order == TRIPLE:
            return "#"
        if bond.order == SINGLE and mol.atoms[a].aromatic and mol.atoms[b].aromatic:
            return "-"
        return ""

    def ring_token(atom: int) -> str:
        text = ""
        for _, partner in sorted(closes.get(atom, [])):
            key = (atom, partner) if atom < partner else (partner, atom)
            digit = digit_of.pop(key)
            in_use.discard(digit)
            text += _digit(digit)
        for _, partner in sorted(opens.get(atom, [])):
            key = (atom, partner) if atom < partner else (partner, atom)
            digit = 1
            while digit in in_use:
                digit += 1
            in_use.add(digit)
            digit_of[key] = digit
            text += bond_symbol(atom, partner) + _digit(digit)
        return text

    def emit(node: int) -> str:
        emitted.append(node)
        text = _atom_token(mol, node, keep_maps) + ring_token(node)
        kids = children[node]
        for kid in kids[:-1]:
            text += "(" + bond_symbol(node, kid) + emit(kid) + ")"
        if kids:
            last = kids[-1]
            text += bond_symbol(node, last) + emit(last)
        return text

    return emit(start)


def _digit(digit: int) -> str:
    return str(digit) if digit < 10 else f"%{digit:02d}"


def _atom_token(mol: MolGraph, idx: int, keep_maps: bool) -> str:
    atom = mol.atoms[idx]
    symbol = atom.element.lower() if atom.aromatic else atom.element
    map_part = f":{atom.atom_map}" if keep_maps and atom.atom_map else ""
    plain_ok = (
        atom.charge == 0
        and not map_part
        and atom.element != "H"
        and (atom.element.lower() in AROMATIC_ORGANIC if atom.aromatic
             else atom.element in ORGANIC_SUBSET)
    )
    if plain_ok:
        return symbol
    h = mol.implicit_hydrogens(idx)
    h_part = "" if h == 0 else ("H" if h == 1 else f"H{h}")
    if atom.charge == 0:
        charge_part = ""
    elif atom.charge in (1, -1):
        charge_part = "+" if atom.charge == 1 else "-"
    else:
        charge_part = f"{atom.charge:+d}"
    return f"[{symbol}{h_part}{charge_part}{map_part}]"
