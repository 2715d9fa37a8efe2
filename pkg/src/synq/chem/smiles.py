"""SMILES reader for the subset this engine exchanges.

Covers organic-subset atoms, bracket atoms with charge/H-count/atom-map,
branches, ring closures (including %nn), bond symbols, dot-separated
fragments and aromatic lowercase atoms. Stereo markers (/, \\, @, @@) are
accepted and dropped; isotopes and wildcard atoms are rejected.
"""

from __future__ import annotations

from .graph import (
    AROMATIC,
    Atom,
    Bond,
    ChemError,
    DOUBLE,
    MolGraph,
    SINGLE,
    TRIPLE,
    allowed_valences,
)

# Elements writable without brackets, longest symbols first for scanning.
ORGANIC_SUBSET = ("Cl", "Br", "B", "C", "N", "O", "F", "P", "S", "I")
AROMATIC_ORGANIC = ("b", "c", "n", "o", "p", "s")
# Bracket-only aromatic symbols.
AROMATIC_BRACKET = AROMATIC_ORGANIC + ("se",)

BOND_SYMBOLS = {"-": SINGLE, "=": DOUBLE, "#": TRIPLE, ":": AROMATIC,
                "/": SINGLE, "\\": SINGLE}


class SmilesParseError(ChemError):
    """Raised with the offending character offset."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class _PendingAtom:
    __slots__ = ("atom", "declared_h")

    def __init__(self, atom: Atom, declared_h: int | None) -> None:
        self.atom = atom
        self.declared_h = declared_h


def parse_smiles(text: str) -> MolGraph:
    """Parse a SMILES string into a MolGraph (marks empty, maps kept)."""
    if not isinstance(text, str):
        raise SmilesParseError("SMILES input must be a string", 0)
    s = text.strip()
    if not s:
        raise SmilesParseError("empty SMILES", 0)

    atoms: list[_PendingAtom] = []
    bonds: list[Bond] = []
    bond_pairs: set[tuple[int, int]] = set()

    prev: int | None = None           # index of the atom awaiting a chain bond
    pending: float | None = None      # explicit bond symbol awaiting use
    pending_pos = 0
    branch_stack: list[int | None] = []
    # ring number -> (atom index, explicit bond order or None, offset)
    open_rings: dict[int, tuple[int, float | None, int]] = {}

    def add_bond(a: int, b: int, order: float | None, pos: int) -> None:
        if a == b:
            raise SmilesParseError("ring closure bonds an atom to itself", pos)
        if order is None:
            both_aromatic = atoms[a].atom.aromatic and atoms[b].atom.aromatic
            order = AROMATIC if both_aromatic else SINGLE
        if order == AROMATIC and not (atoms[a].atom.aromatic and atoms[b].atom.aromatic):
            raise SmilesParseError("aromatic bond between non-aromatic atoms", pos)
        key = (a, b) if a < b else (b, a)
        if key in bond_pairs:
            raise SmilesParseError("duplicate bond between one atom pair", pos)
        bond_pairs.add(key)
        bonds.append(Bond(a, b, order))

    def add_atom(atom: Atom, declared_h: int | None, pos: int) -> None:
        nonlocal prev, pending
        atoms.append(_PendingAtom(atom, declared_h))
        idx = len(atoms) - 1
        if prev is not None:
            add_bond(prev, idx, pending, pos)
        elif pending is not None:
            raise SmilesParseError("bond symbol with no preceding atom", pending_pos)
        pending = None
        prev = idx

    i = 0
    n = len(s)
    while i < n:
        ch = s[i]

        if ch == "(":
            if prev is None:
                raise SmilesParseError("branch opens before any atom", i)
            branch_stack.append(prev)
            i += 1
            continue
        if ch == ")":
            if not branch_stack:
                raise SmilesParseError("unbalanced ')'", i)
            if pending is not None:
                raise SmilesParseError("dangling bond symbol before ')'", i)
            prev = branch_stack.pop()
            i += 1
            continue
        if ch in BOND_SYMBOLS:
            if pending is not None:
                raise SmilesParseError("two bond symbols in a row", i)
            pending = BOND_SYMBOLS[ch]
            pending_pos = i
            i += 1
            continue
        if ch == ".":
            if pending is not None:
                raise SmilesParseError("bond symbol before '.'", i)
            if branch_stack:
                raise SmilesParseError("'.' inside a branch", i)
            if prev is None:
                raise SmilesParseError("'.' without a preceding atom", i)
            prev = None
            i += 1
            continue
        if ch.isdigit() or ch == "%":
            if prev is None:
                raise SmilesParseError("ring closure before any atom", i)
            if ch == "%":
                if i + 2 >= n or not (s[i + 1].isdigit() and s[i + 2].isdigit()):
                    raise SmilesParseError("'%' needs two digits", i)
                num = int(s[i + 1:i + 3])
                i += 3
            else:
                num = int(ch)
                i += 1
            if num in open_rings:
                other, opened_order, _ = open_rings.pop(num)
                order = pending if pending is not None else opened_order
                if (pending is not None and opened_order is not None
                        and pending != opened_order):
                    raise SmilesParseError(f"conflicting bond orders on ring {num}", i - 1)
                add_bond(prev, other, order, i - 1)
            else:
                open_rings[num] = (prev, pending, i - 1)
            pending = None
            continue
        if ch == "[":
            end = s.find("]", i)
            if end < 0:
                raise SmilesParseError("unterminated bracket atom", i)
            atom, declared_h = _parse_bracket(s[i + 1:end], i + 1)
            add_atom(atom, declared_h, i)
            i = end + 1
            continue

        matched = False
        for sym in ORGANIC_SUBSET:
            if s.startswith(sym, i):
                add_atom(Atom(sym), None, i)
                i += len(sym)
                matched = True
                break
        if matched:
            continue
        if ch in AROMATIC_ORGANIC:
            add_atom(Atom(ch.upper(), aromatic=True), None, i)
            i += 1
            continue

        raise SmilesParseError(f"unexpected character {ch!r}", i)

    if branch_stack:
        raise SmilesParseError("unbalanced '('", n)
    if open_rings:
        num, (_, _, pos) = next(iter(open_rings.items()))
        raise SmilesParseError(f"unmatched ring closure {num}", pos)
    if pending is not None:
        raise SmilesParseError("dangling bond symbol", pending_pos)

    try:
        mol = MolGraph((p.atom for p in atoms), bonds)
    except ChemError as exc:
        raise SmilesParseError(str(exc), 0) from exc

    _check_declared_hydrogens(mol, atoms)
    _check_aromatic_membership(mol)
    return mol


def _parse_bracket(body: str, base: int) -> tuple[Atom, int | None]:
    """Parse the inside of a bracket atom; returns (atom, declared H count)."""
    if not body:
        raise SmilesParseError("empty bracket atom", base)
    i = 0
    if body[0].isdigit():
        raise SmilesParseError("isotope labels are not supported", base)

    element = None
    aromatic = False
    for sym in ("Cl", "Br", "Si", "Se", "B", "C", "N", "O", "F", "P", "S", "I", "H"):
        if body.startswith(sym, i):
            element = sym
            i += len(sym)
            break
    if element is None:
        for sym in ("se", "b", "c", "n", "o", "p", "s"):
            if body.startswith(sym, i):
                element = sym.capitalize() if len(sym) == 2 else sym.upper()
                aromatic = True
                i += len(sym)
                break
    if element is None:
        raise SmilesParseError(f"unknown element in bracket {body!r}", base)

    while i < len(body) and body[i] == "@":
        i += 1  # chirality parsed and discarded

    declared_h: int | None = None
    if i < len(body) and body[i] == "H":
        i += 1
        count = 1
        if i < len(body) and body[i].isdigit():
            count = int(body[i])
            i += 1
        declared_h = count

    charge = 0
    if i < len(body) and body[i] in "+-":
        sign = 1 if body[i] == "+" else -1
        i += 1
        if i < len(body) and body[i].isdigit():
            charge = sign * int(body[i])
            i += 1
        else:
            charge = sign
            while i < len(body) and body[i] == ("+" if sign > 0 else "-"):
                charge += sign
                i += 1

    atom_map = None
    if i < len(body) and body[i] == ":":
        i += 1
        j = i
        while j < len(body) and body[j].isdigit():
            j += 1
        if j == i:
            raise SmilesParseError("atom map ':' with no number", base + i)
        atom_map = int(body[i:j])
        if atom_map == 0:
            atom_map = None
        i = j

    if i != len(body):
        raise SmilesParseError(f"trailing bracket content {body[i:]!r}", base + i)

    return Atom(element, charge=charge, aromatic=aromatic, atom_map=atom_map), declared_h


def _check_declared_hydrogens(mol: MolGraph, pend: list[_PendingAtom]) -> None:
    """Declared bracket H counts must fit the valence; they are then dropped
    (hydrogens are recomputed from valence everywhere downstream)."""
    for idx, p in enumerate(pend):
        if p.declared_h is None:
            continue
        total = mol.explicit_valence(idx) + p.declared_h
        cap = max(allowed_valences(p.atom.element, p.atom.charge))
        if total > cap:
            raise SmilesParseError(
                f"atom {idx} ({p.atom.element}) declared {p.declared_h}H exceeds valence {cap}",
                0,
            )


def _check_aromatic_membership(mol: MolGraph) -> None:
    """Every aromatic atom needs two aromatic bonds (it must sit in a ring)."""
    for idx, atom in enumerate(mol.atoms):
        if not atom.aromatic:
            continue
        count = sum(1 for _, order in mol.neighbors(idx) if order == AROMATIC)
        if count < 2:
            raise SmilesParseError(f"aromatic atom {idx} is not in an aromatic ring", 0)
