"""Greedy action selection and top-N beam enumeration.

Per-agent scores always follow the assume-NOOP-from-the-other convention;
joint scores average the two agent-first featurizations so the value of
an unordered action pair does not depend on which agent is "first".
Search never mutates states and reads the shared params only, so frontier
expansion is safe to parallelize; here it is batched into matrix calls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chem import Atom, MolGraph, write_canonical_smiles, write_smiles
from .env import (
    NOOP,
    Action,
    Episode,
    EnvError,
    State,
    apply_actions,
    feasible_actions,
)
from .qfunc import (
    FEATURE_DIM,
    QParams,
    _fp_bits,
    assemble_feature_row,
    featurize,
    q_forward,
)
from .env import _apply_one


@dataclass
class SearchConfig:
    """Beam settings: per-agent branch width k and result count n."""

    k: int = 3
    n: int = 10
    dedup_frontier: bool = True

    def __post_init__(self) -> None:
        if self.k < 1 or self.n < 1:
            raise ValueError("k and n must be at least 1")


@dataclass
class RankedPrediction:
    reactants: tuple[MolGraph, MolGraph]
    score: float
    episode: Episode


def _marked_key(mol: MolGraph) -> str:
    """Canonical string with marks written as atom maps; identifies a
    grown synthon up to isomorphism including its attachment sites."""
    atoms = tuple(
        Atom(a.element, a.charge, a.aromatic, 1 if i in mol.marks else None)
        for i, a in enumerate(mol.atoms)
    )
    remarked = MolGraph(atoms, mol.bonds, mol.marks)
    return write_smiles(remarked, keep_maps=True)[0]


class _AgentScores:
    """Feasible actions for one (state, agent) with successor graphs,
    successor fingerprints and NOOP-other Q scores."""

    __slots__ = ("actions", "successors", "succ_bits", "scores")

    def __init__(self, actions, successors, succ_bits):
        self.actions = actions
        self.successors = successors
        self.succ_bits = succ_bits
        self.scores: Optional[np.ndarray] = None


def _prepare_agent(state: State, agent: int, bond_table) -> _AgentScores:
    actions = feasible_actions(state, agent, bond_table)
    current = state.current(agent)
    successors = []
    bits = []
    for action in actions:
        nxt = current if action.is_noop else _apply_one(current, action)
        successors.append(nxt)
        bits.append(_fp_bits(nxt))
    return _AgentScores(actions, successors, bits)


def _score_noop_other(params: QParams, entries: list[tuple[State, _AgentScores, int]]) -> None:
    """Fill ``scores`` for every (state, agent) entry with one batched pass."""
    total = sum(len(e.actions) for _, e, _ in entries)
    if total == 0:
        return
    X = np.empty((total, FEATURE_DIM), dtype=params.dtype)
    row = 0
    for state, entry, agent in entries:
        own_syn = _fp_bits(state.synthon(agent))
        other_syn = _fp_bits(state.synthon(3 - agent))
        other_cur = _fp_bits(state.current(3 - agent))
        prod = _fp_bits(state.product)
        scalar = float(state.steps_left - 1)
        for bits in entry.succ_bits:
            assemble_feature_row(X[row], own_syn, other_syn, bits, other_cur, prod, scalar)
            row += 1
    q = q_forward(params, X)
    row = 0
    for _, entry, _ in entries:
        entry.scores = q[row:row + len(entry.actions)]
        row += len(entry.actions)


def _top_k(entry: _AgentScores, k: int) -> list[int]:
    order = sorted(range(len(entry.actions)), key=lambda i: (-entry.scores[i], i))
    return order[:k]


def joint_q(params: QParams, state: State, a1: Action, a2: Action) -> float:
    """Q of a joint action: mean of the two agent-first featurizations."""
    x1 = featurize(state, a1, a2, agent=1, dtype=params.dtype)
    x2 = featurize(state, a1, a2, agent=2, dtype=params.dtype)
    return float((q_forward(params, x1) + q_forward(params, x2)) / 2.0)


def select_action(state: State, agent: int, params: QParams,
                  bond_table=None) -> Action:
    """Argmax over feasible actions, scoring with NOOP assumed from the
    other agent; ties fall to the deterministic action order."""
    if state.is_terminal:
        raise EnvError("cannot select an action in a terminal state")
    entry = _prepare_agent(state, agent, bond_table)
    _score_noop_other(params, [(state, entry, agent)])
    best = _top_k(entry, 1)[0]
    return entry.actions[best]


def greedy_rollout(s0: State, params: QParams, oracle=None, truth=None,
                   bond_table=None) -> Episode:
    """T synchronized greedy steps; terminal reward from the oracle if given."""
    state = s0
    states = [s0]
    actions: list[tuple[Action, Action]] = []
    while not state.is_terminal:
        a1 = select_action(state, 1, params, bond_table)
        a2 = select_action(state, 2, params, bond_table)
        state = apply_actions(state, a1, a2)
        actions.append((a1, a2))
        states.append(state)
    reward = None
    if oracle is not None:
        reward = oracle.score(state, truth)
    return Episode(s0.product, tuple(states), tuple(actions), reward)


class _Node:
    __slots__ = ("state", "actions", "states", "score")

    def __init__(self, state: State, actions, states, score: float):
        self.state = state
        self.actions = actions
        self.states = states
        self.score = score


def top_n_search(s0: State, params: QParams, cfg: SearchConfig,
                 bond_table=None) -> list[RankedPrediction]:
    """Beam enumeration of joint action sequences (the k^2T search).

    At every depth each agent keeps its top-k actions per frontier state;
    all k*k joint combinations expand. Terminal candidates carry the joint
    Q of their final step, are deduplicated by canonical reactant pair
    (keeping the best score) and returned best-first, truncated to n.
    """
    frontier = [_Node(s0, (), (s0,), 0.0)]
    for _ in range(s0.steps_left):
        entries: list[tuple[State, _AgentScores, int]] = []
        per_node: list[tuple[_AgentScores, _AgentScores]] = []
        for node in frontier:
            e1 = _prepare_agent(node.state, 1, bond_table)
            e2 = _prepare_agent(node.state, 2, bond_table)
            per_node.append((e1, e2))
            entries.append((node.state, e1, 1))
            entries.append((node.state, e2, 2))
        _score_noop_other(params, entries)

        # joint scoring of all k*k combos per node, batched for both agents
        combos: list[tuple[int, int, int]] = []  # (node idx, action idx 1, action idx 2)
        for ni, (e1, e2) in enumerate(per_node):
            for i in _top_k(e1, cfg.k):
                for j in _top_k(e2, cfg.k):
                    combos.append((ni, i, j))
        X = np.empty((2 * len(combos), FEATURE_DIM), dtype=params.dtype)
        for ci, (ni, i, j) in enumerate(combos):
            state = frontier[ni].state
            e1, e2 = per_node[ni]
            syn1 = _fp_bits(state.synthon1)
            syn2 = _fp_bits(state.synthon2)
            prod = _fp_bits(state.product)
            scalar = float(state.steps_left - 1)
            assemble_feature_row(X[2 * ci], syn1, syn2,
                                 e1.succ_bits[i], e2.succ_bits[j], prod, scalar)
            assemble_feature_row(X[2 * ci + 1], syn2, syn1,
                                 e2.succ_bits[j], e1.succ_bits[i], prod, scalar)
        q = q_forward(params, X)
        joint = (q[0::2] + q[1::2]) / 2.0

        next_frontier: list[_Node] = []
        seen: dict[tuple[str, str], int] = {}
        for ci, (ni, i, j) in enumerate(combos):
            node = frontier[ni]
            e1, e2 = per_node[ni]
            a1, a2 = e1.actions[i], e2.actions[j]
            new_state = State(
                synthon1=node.state.synthon1,
                synthon2=node.state.synthon2,
                current1=e1.successors[i],
                current2=e2.successors[j],
                product=node.state.product,
                steps_left=node.state.steps_left - 1,
                step_limit=node.state.step_limit,
            )
            child = _Node(new_state, node.actions + ((a1, a2),),
                          node.states + (new_state,), float(joint[ci]))
            if cfg.dedup_frontier and not new_state.is_terminal:
                key = (_marked_key(new_state.current1), _marked_key(new_state.current2))
                if key in seen:
                    continue
                seen[key] = len(next_frontier)
            next_frontier.append(child)
        frontier = next_frontier

    # rank terminals, merging duplicate reactant pairs on their best score
    best: dict[tuple[str, str], _Node] = {}
    for node in frontier:
        pair = (write_canonical_smiles(node.state.current1),
                write_canonical_smiles(node.state.current2))
        key = tuple(sorted(pair))
        kept = best.get(key)
        if kept is None or node.score > kept.score:
            best[key] = node
    ranked = sorted(best.items(), key=lambda kv: (-kv[1].score, kv[0]))
    out = []
    for _, node in ranked[:cfg.n]:
        episode = Episode(s0.product, node.states, node.actions, None)
        out.append(RankedPrediction(
            reactants=(node.state.current1, node.state.current2),
            score=node.score,
            episode=episode,
        ))
    return out
