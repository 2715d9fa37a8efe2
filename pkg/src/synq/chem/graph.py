"""Attributed molecular graphs with valence accounting.

A molecule is a heavy-atom graph: atoms carry element, formal charge,
aromatic flag and an optional atom-map number; hydrogens are always
implicit and recomputed from valence. ``marks`` flags attachment sites
(reaction-center atoms plus atoms appended by growth actions).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

ELEMENTS = ("B", "C", "N", "O", "F", "Si", "P", "S", "Cl", "Se", "Br", "I", "H")

# Allowed valences per element; multi-valued entries list every permitted
# total. Positive charge on N/O raises the allowed valence by the charge,
# negative charge lowers it for any element.
VALENCES: dict[str, tuple[int, ...]] = {
    "B": (3,),
    "C": (4,),
    "N": (3,),
    "O": (2,),
    "F": (1,),
    "Si": (4,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "Cl": (1,),
    "Se": (2,),
    "Br": (1,),
    "I": (1,),
    "H": (1,),
}

SINGLE = 1.0
DOUBLE = 2.0
TRIPLE = 3.0
AROMATIC = 1.5

BOND_ORDER_VALUES = (SINGLE, DOUBLE, TRIPLE, AROMATIC)

ORDER_NAMES = {SINGLE: "single", DOUBLE: "double", TRIPLE: "triple", AROMATIC: "aromatic"}
NAME_ORDERS = {v: k for k, v in ORDER_NAMES.items()}


class ChemError(ValueError):
    """Base error for chemistry-layer failures."""


class ValenceError(ChemError):
    """An atom exceeds its allowed valence."""


@dataclass(frozen=True)
class Atom:
    element: str
    charge: int = 0
    aromatic: bool = False
    atom_map: Optional[int] = None

    def __post_init__(self) -> None:
        if self.element not in VALENCES:
            raise ChemError(f"unknown element {self.element!r}")
        if self.atom_map is not None and self.atom_map <= 0:
            raise ChemError("atom map numbers must be positive")


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: float = SINGLE

    def __post_init__(self) -> None:
        if self.a == self.b:
            raise ChemError("self-loop bond")
        if self.order not in BOND_ORDER_VALUES:
            raise ChemError(f"bad bond order {self.order!r}")

    @property
    def key(self) -> tuple[int, int]:
        return (self.a, self.b) if self.a < self.b else (self.b, self.a)


def allowed_valences(element: str, charge: int = 0) -> tuple[int, ...]:
    """Charge-adjusted allowed valences, floored at zero."""
    base = VALENCES[element]
    if charge > 0 and element in ("N", "O"):
        base = tuple(v + charge for v in base)
    elif charge < 0:
        base = tuple(max(0, v + charge) for v in base)
    return base


class MolGraph:
    """Immutable molecular graph.

    Atoms are indexed 0..n-1; bonds reference atom indices. At most one
    bond per atom pair, no self loops, and every atom's explicit bond
    order total (aromatic bonds contribute 1.5, fractional totals are
    floored) must fit within its charge-adjusted allowed valence.
    """

    __slots__ = ("atoms", "bonds", "marks", "_adj", "_fp", "_canon", "_rings")

    def __init__(self, atoms: Iterable[Atom], bonds: Iterable[Bond],
                 marks: Iterable[int] = ()) -> None:
        self.atoms = tuple(atoms)
        self.bonds = tuple(bonds)
        self.marks = frozenset(marks)
        self._adj: Optional[tuple[tuple[tuple[int, float], ...], ...]] = None
        self._fp = None
        self._canon: Optional[str] = None
        self._rings: Optional[frozenset[int]] = None
        self._validate()

    def _validate(self) -> None:
        n = len(self.atoms)
        seen: set[tuple[int, int]] = set()
        for bond in self.bonds:
            if not (0 <= bond.a < n and 0 <= bond.b < n):
                raise ChemError(f"bond {bond.a}-{bond.b} out of range")
            if bond.key in seen:
                raise ChemError(f"duplicate bond between atoms {bond.key}")
            seen.add(bond.key)
        for idx in self.marks:
            if not (0 <= idx < n):
                raise ChemError(f"mark {idx} out of range")
        for idx in range(n):
            if self.explicit_valence(idx) > self.max_valence(idx):
                atom = self.atoms[idx]
                raise ValenceError(
                    f"atom {idx} ({atom.element}, charge {atom.charge:+d}) "
                    f"exceeds valence {self.max_valence(idx)}"
                )

    # -- structure access ------------------------------------------------

    def __len__(self) -> int:
        return len(self.atoms)

    def neighbors(self, idx: int) -> tuple[tuple[int, float], ...]:
        """(neighbor index, bond order) pairs for one atom."""
        if self._adj is None:
            adj: list[list[tuple[int, float]]] = [[] for _ in self.atoms]
            for bond in self.bonds:
                adj[bond.a].append((bond.b, bond.order))
                adj[bond.b].append((bond.a, bond.order))
            self._adj = tuple(tuple(x) for x in adj)
        return self._adj[idx]

    def bond_between(self, a: int, b: int) -> Optional[Bond]:
        for bond in self.bonds:
            if bond.key == ((a, b) if a < b else (b, a)):
                return bond
        return None

    def degree(self, idx: int) -> int:
        return len(self.neighbors(idx))

    # -- valence ----------------------------------------------------------

    def bond_order_sum(self, idx: int) -> float:
        return sum(order for _, order in self.neighbors(idx))

    def explicit_valence(self, idx: int) -> int:
        # Aromatic bonds count 1.5 each; the fractional total is floored so
        # fused aromatics (three ring bonds, 4.5) stay within carbon's 4.
        return int(self.bond_order_sum(idx) + 1e-9)

    def max_valence(self, idx: int) -> int:
        atom = self.atoms[idx]
        allowed = allowed_valences(atom.element, atom.charge)
        return max(allowed)

    def implicit_hydrogens(self, idx: int) -> int:
        atom = self.atoms[idx]
        explicit = self.explicit_valence(idx)
        for v in sorted(allowed_valences(atom.element, atom.charge)):
            if v >= explicit:
                return v - explicit
        return 0

    def in_ring(self, idx: int) -> bool:
        if self._rings is None:
            self._rings = _ring_atoms(self)
        return idx in self._rings

    # -- derived graphs ----------------------------------------------------

    def with_marks(self, marks: Iterable[int]) -> "MolGraph":
        return MolGraph(self.atoms, self.bonds, marks)

    def with_atom_added(self, attach: int, element: str, order: float,
                        mark_new: bool = True) -> "MolGraph":
        """Append one atom bonded to ``attach``; the new atom is marked."""
        if not (0 <= attach < len(self.atoms)):
            raise ChemError(f"attach index {attach} out of range")
        new_idx = len(self.atoms)
        atoms = self.atoms + (Atom(element),)
        bonds = self.bonds + (Bond(attach, new_idx, order),)
        marks = set(self.marks)
        if mark_new:
            marks.add(new_idx)
        return MolGraph(atoms, bonds, marks)

    def without_maps(self) -> "MolGraph":
        if all(a.atom_map is None for a in self.atoms):
            return self
        atoms = tuple(Atom(a.element, a.charge, a.aromatic, None) for a in self.atoms)
        return MolGraph(atoms, self.bonds, self.marks)

    def subgraph(self, indices: Iterable[int]) -> "MolGraph":
        """Induced subgraph, atoms renumbered in the given order.

        Marks are carried over for retained atoms.
        """
        order = list(indices)
        remap = {old: new for new, old in enumerate(order)}
        atoms = tuple(self.atoms[i] for i in order)
        bonds = tuple(
            Bond(remap[b.a], remap[b.b], b.order)
            for b in self.bonds
            if b.a in remap and b.b in remap
        )
        marks = [remap[i] for i in self.marks if i in remap]
        return MolGraph(atoms, bonds, marks)

    def components(self) -> list[list[int]]:
        """Connected components as sorted index lists, in first-atom order."""
        n = len(self.atoms)
        seen = [False] * n
        out: list[list[int]] = []
        for start in range(n):
            if seen[start]:
                continue
            stack = [start]
            seen[start] = True
            comp = []
            while stack:
                cur = stack.pop()
                comp.append(cur)
                for nbr, _ in self.neighbors(cur):
                    if not seen[nbr]:
                        seen[nbr] = True
                        stack.append(nbr)
            out.append(sorted(comp))
        return out

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"MolGraph(atoms={len(self.atoms)}, bonds={len(self.bonds)}, marks={sorted(self.marks)})"


def free_valence(mol: MolGraph, atom: int) -> int:
    """Single-bond units still attachable at ``atom``.

    Implicit hydrogens are replaceable, so only explicit bonds count
    against the (charge-adjusted) maximum allowed valence.
    """
    if not (0 <= atom < len(mol.atoms)):
        raise ChemError(f"atom index {atom} out of range")
    return mol.max_valence(atom) - mol.explicit_valence(atom)


def _ring_atoms(mol: MolGraph) -> frozenset[int]:
    """Atoms lying on at least one cycle (incident to a non-bridge edge)."""
    n = len(mol.atoms)
    index = {}
    low = {}
    parent_edge: dict[int, tuple[int, int]] = {}
    bridges: set[tuple[int, int]] = set()
    counter = 0
    for root in range(n):
        if root in index:
            continue
        stack: list[tuple[int, Iterator[tuple[int, float]]]] = [(root, iter(mol.neighbors(root)))]
        index[root] = low[root] = counter
        counter += 1
        while stack:
            node, it = stack[-1]
            advanced = False
            for nbr, _ in it:
                edge = (node, nbr) if node < nbr else (nbr, node)
                if nbr not in index:
                    parent_edge[nbr] = edge
                    index[nbr] = low[nbr] = counter
                    counter += 1
                    stack.append((nbr, iter(mol.neighbors(nbr))))
                    advanced = True
                    break
                if parent_edge.get(node) != edge:
                    low[node] = min(low[node], index[nbr])
            if not advanced:
                stack.pop()
                if stack:
                    par = stack[-1][0]
                    low[par] = min(low[par], low[node])
                    if low[node] > index[par]:
                        bridges.add(parent_edge[node])
    ring = set()
    for bond in mol.bonds:
        if bond.key not in bridges:
            ring.add(bond.a)
            ring.add(bond.b)
    return frozenset(ring)
