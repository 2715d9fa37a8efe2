"""Two-agent synchronized growth environment.

A state holds the original synthon pair, the current (grown) pair, the
product and the remaining step count. Each step both agents act at once:
an ADD appends one atom via one bond at a marked attachment site, NOOP
does nothing. Transitions are deterministic and states immutable, so any
number of branches can be expanded concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .chem import (
    DOUBLE,
    MolGraph,
    SINGLE,
    TRIPLE,
    allowed_valences,
    free_valence,
    parse_smiles,
    write_canonical_smiles,
    write_smiles,
)
from .chem.graph import ORDER_NAMES, NAME_ORDERS

# ADD vocabulary: 12 elements x 3 bond orders = 36 variants, plus NOOP.
ADD_ELEMENTS = ("B", "C", "N", "O", "F", "Si", "P", "S", "Cl", "Se", "Br", "I")
ADD_ORDERS = (1, 2, 3)
_ELEMENT_POS = {el: i for i, el in enumerate(ADD_ELEMENTS)}

DEFAULT_STEP_LIMIT = 3


class EnvError(ValueError):
    pass


@dataclass(frozen=True)
class Action:
    kind: str  # "add" | "noop"
    element: Optional[str] = None
    order: Optional[int] = None
    attach: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind == "noop":
            if self.element is not None or self.order is not None or self.attach is not None:
                raise EnvError("NOOP carries no payload")
        elif self.kind == "add":
            if self.element not in ADD_ELEMENTS:
                raise EnvError(f"ADD element must be one of {ADD_ELEMENTS}")
            if self.order not in ADD_ORDERS:
                raise EnvError("ADD bond order must be 1, 2 or 3")
            if self.attach is None or self.attach < 0:
                raise EnvError("ADD needs a non-negative attach index")
        else:
            raise EnvError(f"unknown action kind {self.kind!r}")

    @property
    def is_noop(self) -> bool:
        return self.kind == "noop"

    def sort_key(self) -> tuple:
        # NOOP sorts last; ADDs by (attach, element position, bond order).
        if self.is_noop:
            return (1, 0, 0, 0)
        return (0, self.attach, _ELEMENT_POS[self.element], self.order)


NOOP = Action("noop")


def add(element: str, order: int, attach: int) -> Action:
    return Action("add", element, order, attach)


@dataclass(frozen=True)
class State:
    synthon1: MolGraph
    synthon2: MolGraph
    current1: MolGraph
    current2: MolGraph
    product: MolGraph
    steps_left: int
    step_limit: int

    @property
    def is_terminal(self) -> bool:
        return self.steps_left == 0

    def current(self, agent: int) -> MolGraph:
        _check_agent(agent)
        return self.current1 if agent == 1 else self.current2

    def synthon(self, agent: int) -> MolGraph:
        _check_agent(agent)
        return self.synthon1 if agent == 1 else self.synthon2


def _check_agent(agent: int) -> None:
    if agent not in (1, 2):
        raise EnvError("agent must be 1 or 2")


def init_state(synthon1: MolGraph, synthon2: MolGraph, product: MolGraph,
               step_limit: int = DEFAULT_STEP_LIMIT) -> State:
    """Fresh state with currents equal to the synthons."""
    if step_limit < 1:
        raise EnvError("step limit must be at least 1")
    for i, syn in enumerate((synthon1, synthon2), start=1):
        if not syn.marks:
            raise EnvError(f"synthon {i} has no marked reaction-center atom")
    return State(synthon1, synthon2, synthon1, synthon2, product, step_limit, step_limit)


BondTable = frozenset


def bond_type_table(corpus: Iterable) -> frozenset[tuple[str, str, float]]:
    """Unordered (element, element, order) triples over all corpus reactant bonds."""
    table: set[tuple[str, str, float]] = set()
    empty = True
    for reaction in corpus:
        empty = False
        for mol in reaction.reactants:
            for bond in mol.bonds:
                a = mol.atoms[bond.a].element
                b = mol.atoms[bond.b].element
                lo, hi = sorted((a, b))
                table.add((lo, hi, bond.order))
    if empty:
        raise EnvError("empty corpus")
    return frozenset(table)


def _bond_allowed(table: Optional[frozenset], attach_el: str, new_el: str, order: int) -> bool:
    if table is None:
        return True
    lo, hi = sorted((attach_el, new_el))
    return (lo, hi, float(order)) in table


def feasible_actions(state: State, agent: int,
                     bond_table: Optional[frozenset] = None) -> tuple[Action, ...]:
    """All legal actions for one agent, in deterministic order, NOOP last.

    An ADD is legal when its attach atom is marked, has the free valence
    for the bond, the new atom's valence admits the bond, and (when a
    table is given) the bond type occurs in the training corpus.
    """
    if state.is_terminal:
        raise EnvError("no actions in a terminal state")
    mol = state.current(agent)
    actions: list[Action] = []
    for attach in sorted(mol.marks):
        free = free_valence(mol, attach)
        if free < 1:
            continue
        attach_el = mol.atoms[attach].element
        for element in ADD_ELEMENTS:
            new_cap = max(allowed_valences(element))
            for order in ADD_ORDERS:
                if order > free or order > new_cap:
                    continue
                if not _bond_allowed(bond_table, attach_el, element, order):
                    continue
                actions.append(add(element, order, attach))
    actions.sort(key=Action.sort_key)
    actions.append(NOOP)
    return tuple(actions)


def _apply_one(mol: MolGraph, action: Action) -> MolGraph:
    if action.is_noop:
        return mol
    if action.attach not in mol.marks:
        raise EnvError(f"attach atom {action.attach} is not a marked site")
    if free_valence(mol, action.attach) < action.order:
        raise EnvError(
            f"attach atom {action.attach} lacks free valence for order {action.order}")
    if action.order > max(allowed_valences(action.element)):
        raise EnvError(f"{action.element} cannot form an order-{action.order} bond")
    return mol.with_atom_added(action.attach, action.element, float(action.order))


def apply_actions(state: State, a1: Action, a2: Action) -> State:
    """Deterministic joint transition; the input state is unchanged."""
    if state.is_terminal:
        raise EnvError("cannot act on a terminal state")
    return State(
        synthon1=state.synthon1,
        synthon2=state.synthon2,
        current1=_apply_one(state.current1, a1),
        current2=_apply_one(state.current2, a2),
        product=state.product,
        steps_left=state.steps_left - 1,
        step_limit=state.step_limit,
    )


@dataclass
class Episode:
    """One fixed-horizon trajectory plus its terminal reward."""

    product: MolGraph
    states: tuple[State, ...]
    actions: tuple[tuple[Action, Action], ...]
    reward: Optional[int] = None

    def __post_init__(self) -> None:
        if len(self.states) != len(self.actions) + 1:
            raise EnvError("episode needs T+1 states for T joint actions")

    @property
    def step_limit(self) -> int:
        return len(self.actions)

    @property
    def terminal(self) -> State:
        return self.states[-1]

    def key(self) -> tuple:
        """Dedup identity: product plus the exact action sequence."""
        sig = tuple(
            (a1.kind, a1.element, a1.order, a1.attach,
             a2.kind, a2.element, a2.order, a2.attach)
            for a1, a2 in self.actions
        )
        return (write_canonical_smiles(self.product), sig)

    # -- serialization ---------------------------------------------------

    def to_record(self) -> dict:
        """JSON-able record; replays losslessly through ``episode_from_record``."""
        s0 = self.states[0]
        syn_parts = []
        perms = []
        for mol in (s0.synthon1, s0.synthon2):
            smi, order = write_smiles(mol, keep_maps=True)
            pos_of = {orig: pos for pos, orig in enumerate(order)}
            syn_parts.append({"smiles": smi, "marks": sorted(pos_of[i] for i in mol.marks)})
            perms.append(pos_of)
        steps = []
        for a1, a2 in self.actions:
            steps.append([_action_record(a1, 1, perms[0], len(s0.synthon1)),
                          _action_record(a2, 2, perms[1], len(s0.synthon2))])
        return {
            "product": write_smiles(self.product, keep_maps=True)[0],
            "synthons": syn_parts,
            "steps": steps,
            "reward": self.reward,
        }


def _action_record(action: Action, agent: int, pos_of: dict[int, int], n_synthon: int) -> dict:
    if action.is_noop:
        return {"agent": agent, "kind": "noop"}
    # Atoms appended during the episode keep their indices on replay.
    attach = pos_of[action.attach] if action.attach < n_synthon else action.attach
    return {"agent": agent, "kind": "add", "element": action.element,
            "order": ORDER_NAMES[float(action.order)], "attach": attach}


def _action_from_record(rec: dict) -> Action:
    if rec["kind"] == "noop":
        return NOOP
    return add(rec["element"], int(NAME_ORDERS[rec["order"]]), rec["attach"])


def episode_from_record(rec: dict) -> Episode:
    """Rebuild an episode by replaying its recorded actions."""
    synthons = []
    for part in rec["synthons"]:
        mol = parse_smiles(part["smiles"]).with_marks(part["marks"])
        synthons.append(mol)
    product = parse_smiles(rec["product"])
    steps = [(_action_from_record(a), _action_from_record(b)) for a, b in rec["steps"]]
    state = init_state(synthons[0], synthons[1], product, step_limit=len(steps))
    states = [state]
    for a1, a2 in steps:
        state = apply_actions(state, a1, a2)
        states.append(state)
    return Episode(product, tuple(states), tuple(steps), rec.get("reward"))


def rollout_states(s0: State, actions: Sequence[tuple[Action, Action]]) -> tuple[State, ...]:
    states = [s0]
    for a1, a2 in actions:
        states.append(apply_actions(states[-1], a1, a2))
    return tuple(states)


# ---------------------------------------------------------------------------
# leaving-group planning


class CompletionError(EnvError):
    """The synthon-to-reactant diff cannot be realized by ADD actions."""


@dataclass(frozen=True)
class PlanStep:
    """One atom addition: where the parent lives ('synthon' or 'added'),
    its index there, and what gets attached."""

    parent_kind: str
    parent_index: int
    element: str
    order: int


def completion_plan(synthon: MolGraph, reactant: MolGraph) -> list[PlanStep]:
    """Ordered single-atom additions that grow the synthon into the reactant.

    Atoms are matched through atom-map numbers; the leaving group must be
    a tree of single/double/triple bonds hanging off marked synthon atoms,
    since each action adds exactly one atom through one new bond. Steps
    come out in breadth-first distance order from the attachment site,
    ties broken by canonical rank within the reactant.
    """
    if not synthon.marks:
        raise CompletionError("synthon has no marked attachment atom")
    syn_maps: dict[int, int] = {}
    for i, atom in enumerate(synthon.atoms):
        if atom.atom_map is None:
            raise CompletionError(f"synthon atom {i} lacks an atom map")
        if atom.atom_map in syn_maps:
            raise CompletionError(f"duplicate atom map {atom.atom_map} in synthon")
        syn_maps[atom.atom_map] = i
    match: dict[int, int] = {}  # reactant index -> synthon index
    for j, atom in enumerate(reactant.atoms):
        if atom.atom_map is not None and atom.atom_map in syn_maps:
            match[j] = syn_maps[atom.atom_map]
    if len(match) != len(synthon.atoms):
        raise CompletionError("reactant does not contain every synthon atom")

    for j, i in match.items():
        a, b = reactant.atoms[j], synthon.atoms[i]
        if (a.element, a.charge, a.aromatic) != (b.element, b.charge, b.aromatic):
            raise CompletionError(f"shared atom map {a.atom_map} changes attributes")

    syn_bonds = {(b.key, b.order) for b in synthon.bonds}
    shared_bonds = set()
    attach_bonds: list = []
    added = [j for j in range(len(reactant.atoms)) if j not in match]
    added_set = set(added)
    for bond in reactant.bonds:
        in_a, in_b = bond.a in added_set, bond.b in added_set
        if not in_a and not in_b:
            i, k = match[bond.a], match[bond.b]
            key = (i, k) if i < k else (k, i)
            shared_bonds.add((key, bond.order))
        else:
            attach_bonds.append(bond)
    if shared_bonds != syn_bonds:
        raise CompletionError("bonds among shared atoms differ from the synthon")
    if len(attach_bonds) != len(added):
        raise CompletionError("leaving group is not a tree of single-atom additions")
    for bond in attach_bonds:
        if bond.order not in (SINGLE, DOUBLE, TRIPLE):
            raise CompletionError("leaving-group bond is not single/double/triple")
    for j in added:
        atom = reactant.atoms[j]
        if atom.charge != 0 or atom.aromatic:
            raise CompletionError("added atoms must be neutral and non-aromatic")
        if atom.element not in ADD_ELEMENTS:
            raise CompletionError(f"{atom.element} is outside the ADD vocabulary")

    # BFS from marked synthon atoms through the added atoms
    dist: dict[int, int] = {}
    parent: dict[int, int] = {}
    frontier = [j for j, i in match.items() if i in synthon.marks]
    level = 0
    adj: dict[int, list[tuple[int, float]]] = {}
    for bond in attach_bonds:
        adj.setdefault(bond.a, []).append((bond.b, bond.order))
        adj.setdefault(bond.b, []).append((bond.a, bond.order))
    while frontier and len(dist) < len(added):
        level += 1
        nxt = []
        for u in frontier:
            for v, _ in adj.get(u, ()):  # attach bonds only
                if v in added_set and v not in dist:
                    dist[v] = level
                    parent[v] = u
                    nxt.append(v)
        frontier = nxt
    if len(dist) < len(added):
        bad = [j for j in added if j not in dist]
        raise CompletionError(
            f"{len(bad)} leaving-group atom(s) not reachable from a marked atom")
    for j in added:
        others = [v for v, _ in adj.get(j, ()) if v != parent[j] and parent.get(v) != j]
        if others:
            raise CompletionError("leaving-group atom has more than one attachment bond")

    from .chem import canonical_ranks

    ranks = canonical_ranks(reactant)
    order_pos: dict[int, int] = {}
    steps: list[PlanStep] = []
    for j in sorted(added, key=lambda j: (dist[j], ranks[j])):
        p = parent[j]
        bond = reactant.bond_between(p, j)
        assert bond is not None
        if p in match:
            step = PlanStep("synthon", match[p], reactant.atoms[j].element, int(bond.order))
        else:
            step = PlanStep("added", order_pos[p], reactant.atoms[j].element, int(bond.order))
        order_pos[j] = len(steps)
        steps.append(step)
    return steps
