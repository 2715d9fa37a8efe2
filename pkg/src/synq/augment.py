"""Offline episode construction and the online data-augmentation loop.

True episodes replay the known reactants through the action system;
random episodes take uniform feasible actions and are scored by the
oracle. The augmentation loop alternates between a greedy phase (one new
episode per training product) and a top-N phase (several per product),
refitting after each sweep and stopping each phase once validation MAP
stops improving. All randomness flows from one seed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .chem import MolGraph, write_canonical_smiles
from .dataio import ProductCase, load_checkpoint, load_episodes, save_checkpoint, save_episodes
from .env import (
    CompletionError,
    Episode,
    NOOP,
    State,
    add,
    apply_actions,
    completion_plan,
    feasible_actions,
    init_state,
)
from .metrics import EvalTable, PredRow, ProductPredictions, map_at_n
from .qfunc import QParams, TrainConfig, train
from .reward import RewardOracle
from .search import SearchConfig, top_n_search

log = logging.getLogger(__name__)


def derive_true_episode(synthons: Sequence[MolGraph], reactants: Sequence[MolGraph],
                        product: MolGraph, step_limit: int = 3) -> Episode:
    """Episode that rebuilds the ground-truth reactants; reward fixed to 1.

    Additions are ordered breadth-first from the attachment site, the
    shorter side padded with NOOPs. Raises CompletionError when the diff
    cannot be realized within the step limit.
    """
    plans = [completion_plan(s, r) for s, r in zip(synthons, reactants)]
    for plan in plans:
        if len(plan) > step_limit:
            raise CompletionError(
                f"needs {len(plan)} additions, over the step limit {step_limit}")
    s0 = init_state(synthons[0], synthons[1], product, step_limit)
    offsets = (len(synthons[0].atoms), len(synthons[1].atoms))
    joint: list[tuple] = []
    for t in range(step_limit):
        pair = []
        for side in (0, 1):
            plan = plans[side]
            if t < len(plan):
                step = plan[t]
                attach = (step.parent_index if step.parent_kind == "synthon"
                          else offsets[side] + step.parent_index)
                pair.append(add(step.element, step.order, attach))
            else:
                pair.append(NOOP)
        joint.append(tuple(pair))
    states = [s0]
    for a1, a2 in joint:
        states.append(apply_actions(states[-1], a1, a2))
    terminal = states[-1]
    for mol, truth in zip((terminal.current1, terminal.current2), reactants):
        if write_canonical_smiles(mol) != write_canonical_smiles(truth):
            raise CompletionError("replayed episode does not reproduce the reactant")
    return Episode(product, tuple(states), tuple(joint), reward=1)


def gen_random_episodes(s0: State, count: int, oracle: RewardOracle,
                        truth: Optional[tuple] = None, seed: int = 0,
                        bond_table=None, avoid: Optional[Episode] = None) -> list[Episode]:
    """Uniform-random rollouts scored by the oracle; seeded and repeatable."""
    if count < 1:
        raise ValueError("count must be at least 1")
    episodes = []
    for e in range(count):
        episode = None
        for attempt in range(6):
            rng = np.random.default_rng([seed, e, attempt])
            episode = _random_rollout(s0, rng, bond_table)
            if avoid is None or episode.key() != avoid.key():
                break
        episode.reward = oracle.score(episode.terminal, truth)
        episodes.append(episode)
    return episodes


def _random_rollout(s0: State, rng: np.random.Generator, bond_table) -> Episode:
    state = s0
    states = [s0]
    joint = []
    while not state.is_terminal:
        pair = []
        for agent in (1, 2):
            acts = feasible_actions(state, agent, bond_table)
            pair.append(acts[int(rng.integers(len(acts)))])
        state = apply_actions(state, pair[0], pair[1])
        states.append(state)
        joint.append(tuple(pair))
    return Episode(s0.product, tuple(states), tuple(joint))


def case_state(case: ProductCase, step_limit: int = 3) -> State:
    return init_state(case.synthons[0], case.synthons[1], case.product, step_limit)


def evaluate_cases(params: QParams, cases: Sequence[ProductCase], oracle: RewardOracle,
                   k: int = 3, n: int = 10, step_limit: int = 3,
                   bond_table=None) -> EvalTable:
    """Search each case and score the ranked pairs against its truth."""
    entries = []
    for case in cases:
        preds = top_n_search(case_state(case, step_limit), params,
                             SearchConfig(k=k, n=n), bond_table)
        rows = []
        for pred in preds:
            pred.episode.reward = oracle.score(pred.episode.terminal, case.reactants)
            rows.append(PredRow(
                [write_canonical_smiles(m) for m in pred.reactants],
                pred.episode.reward, pred.score))
        entries.append(ProductPredictions(write_canonical_smiles(case.product), rows))
    return EvalTable(entries, n_max=n)


@dataclass
class AugmentConfig:
    """Everything the augmentation loop needs besides the data itself."""

    params0: QParams
    train_cfg: TrainConfig
    oracle: RewardOracle
    step_limit: int = 3
    val_k: int = 3
    val_n: int = 10
    bond_table: Optional[frozenset] = None
    state_dir: Optional[Path] = None
    resume: bool = False
    max_iterations: Optional[int] = None


def _dedup_union(base: dict, new_episodes: Sequence[Episode]) -> dict:
    merged = dict(base)
    for ep in new_episodes:
        merged.setdefault(ep.key(), ep)
    return merged


def _searched_episodes(params: QParams, case: ProductCase, k: int, n: int,
                       cfg: AugmentConfig) -> list[Episode]:
    preds = top_n_search(case_state(case, cfg.step_limit), params,
                         SearchConfig(k=k, n=n), cfg.bond_table)
    episodes = []
    for pred in preds:
        pred.episode.reward = cfg.oracle.score(pred.episode.terminal, case.reactants)
        episodes.append(pred.episode)
    return episodes


def _unique_cases(cases: Sequence[ProductCase]) -> list[ProductCase]:
    seen = set()
    out = []
    for case in cases:
        key = write_canonical_smiles(case.product)
        if key not in seen:
            seen.add(key)
            out.append(case)
    return out


class _LoopState:
    """Mutable Algorithm-1 state, also what gets checkpointed for resume."""

    def __init__(self) -> None:
        self.iteration = 0
        self.flag = 0
        self.map_score = -1.0
        self.map_star = -1.0
        self.params: Optional[QParams] = None
        self.params_star: Optional[QParams] = None
        self.acc: dict = {}      # committed episode union
        self.pending: dict = {}  # union including the latest sweep
        self.best_map = -1.0
        self.best_params: Optional[QParams] = None


def augment_data(train_episodes: Sequence[Episode], train_cases: Sequence[ProductCase],
                 random_episodes: Sequence[Episode], val_cases: Sequence[ProductCase],
                 k: int, n: int, cfg: AugmentConfig) -> QParams:
    """Greedy then top-N data augmentation gated by validation MAP.

    Returns the parameters with the best observed validation MAP; the
    per-phase control flow (probe, refit, restore on decline, flag flip)
    follows the two-phase schedule exactly.
    """
    overlap = {write_canonical_smiles(c.product) for c in val_cases} & \
              {write_canonical_smiles(c.product) for c in train_cases}
    if overlap:
        raise ValueError("validation products overlap the training products")

    st = _LoopState()
    if cfg.resume and cfg.state_dir and (Path(cfg.state_dir) / "loop_state.json").exists():
        _load_loop(st, cfg)
        log.info("resuming augmentation at iteration %d (flag=%d)", st.iteration, st.flag)
    else:
        st.pending = _dedup_union({}, list(train_episodes) + list(random_episodes))
        st.acc = dict(st.pending)
        st.params = train(list(st.pending.values()), cfg.train_cfg, cfg.params0)
        st.params_star = st.params
        st.map_score = map_at_n(
            evaluate_cases(st.params, val_cases, cfg.oracle, cfg.val_k, cfg.val_n,
                           cfg.step_limit, cfg.bond_table), cfg.val_n)
        st.map_star = -1.0
        st.flag = 0
        st.best_map = st.map_score
        st.best_params = st.params
        log.info("initial fit: validation MAP@%d = %.4f", cfg.val_n, st.map_score)
        _save_loop(st, cfg)

    cases = _unique_cases(train_cases)
    while st.map_score > st.map_star:
        if cfg.max_iterations is not None and st.iteration >= cfg.max_iterations:
            log.info("iteration cap reached")
            break
        st.iteration += 1
        st.map_star = st.map_score
        st.params_star = st.params
        st.acc = dict(st.pending)

        for case in cases:
            kk, nn = (1, 1) if st.flag == 0 else (k, n)
            st.pending = _dedup_union(st.pending, _searched_episodes(st.params, case, kk, nn, cfg))

        st.params = train(list(st.pending.values()), cfg.train_cfg, st.params)
        st.map_score = map_at_n(
            evaluate_cases(st.params, val_cases, cfg.oracle, cfg.val_k, cfg.val_n,
                           cfg.step_limit, cfg.bond_table), cfg.val_n)
        log.info("iteration %d (phase %d): %d episodes, validation MAP@%d = %.4f",
                 st.iteration, 2 if st.flag else 1, len(st.pending), cfg.val_n, st.map_score)
        if st.map_score > st.best_map:
            st.best_map = st.map_score
            st.best_params = st.params
        if st.map_score <= st.map_star and st.flag == 0:
            # phase switch: restore the pre-probe state and rearm the gate
            st.flag = 1
            st.map_star = -1.0
            st.params = st.params_star
            st.pending = dict(st.acc)
        _save_loop(st, cfg)

    return st.best_params


def _save_loop(st: _LoopState, cfg: AugmentConfig) -> None:
    if cfg.state_dir is None:
        return
    root = Path(cfg.state_dir)
    root.mkdir(parents=True, exist_ok=True)
    save_episodes(root / "episodes_pending.jsonl", list(st.pending.values()))
    save_episodes(root / "episodes_committed.jsonl", list(st.acc.values()))
    save_checkpoint(root / "theta.npz", st.params)
    save_checkpoint(root / "theta_star.npz", st.params_star)
    save_checkpoint(root / "best.npz", st.best_params)
    manifest_path = root / "manifest.json"
    history = []
    if manifest_path.exists():
        history = json.loads(manifest_path.read_text()).get("history", [])
    history = [h for h in history if h["iteration"] < st.iteration]
    history.append({"iteration": st.iteration, "flag": st.flag,
                    "map": st.map_score, "episodes": len(st.pending)})
    manifest_path.write_text(json.dumps({
        "history": history,
        "best_map": st.best_map,
        "best_checkpoint": "best.npz",
    }, indent=2))
    state = {
        "iteration": st.iteration,
        "flag": st.flag,
        "map": st.map_score,
        "map_star": st.map_star,
        "best_map": st.best_map,
    }
    (root / "loop_state.json").write_text(json.dumps(state, indent=2))


def _load_loop(st: _LoopState, cfg: AugmentConfig) -> None:
    root = Path(cfg.state_dir)
    state = json.loads((root / "loop_state.json").read_text())
    st.iteration = state["iteration"]
    st.flag = state["flag"]
    st.map_score = state["map"]
    st.map_star = state["map_star"]
    st.best_map = state["best_map"]
    st.pending = {ep.key(): ep for ep in load_episodes(root / "episodes_pending.jsonl")}
    st.acc = {ep.key(): ep for ep in load_episodes(root / "episodes_committed.jsonl")}
    st.params = load_checkpoint(root / "theta.npz")
    st.params_star = load_checkpoint(root / "theta_star.npz")
    st.best_params = load_checkpoint(root / "best.npz")
