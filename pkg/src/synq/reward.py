"""Binary terminal reward: exact match first, forward model as backup.

The forward-synthesis model sits behind a small HTTP protocol so any
model can serve it; in exact-only mode no client is ever touched, which
lets the whole training/eval pipeline run with zero external services.
Client failures raise instead of scoring 0 so a dead service can never
silently corrupt training targets.
"""

from __future__ import annotations

import json
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Optional, Sequence

from .chem import MolGraph, SmilesParseError, parse_smiles, write_canonical_smiles
from .env import State

EXACT_ONLY = "exact-only"
EXACT_THEN_FORWARD = "exact-then-forward"


class ForwardModelError(RuntimeError):
    """The forward model was unreachable or answered garbage."""


class ForwardClient:
    """HTTP client for the forward-synthesis protocol.

    POST {base}/predict with {"reactants": [...], "top_k": n} returns
    {"products": [...]} ranked best-first; GET {base}/health checks
    availability. Any transport or schema problem raises.
    """

    def __init__(self, base_url: str, timeout: float = 10.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def _request(self, method: str, path: str, body: Optional[dict] = None) -> dict:
        data = None
        headers = {"Accept": "application/json"}
        if body is not None:
            data = json.dumps(body).encode()
            headers["Content-Type"] = "application/json"
        req = urllib.request.Request(self.base_url + path, data=data,
                                     headers=headers, method=method)
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = resp.read()
        except (urllib.error.URLError, urllib.error.HTTPError, OSError) as exc:
            raise ForwardModelError(f"forward model request failed: {exc}") from exc
        try:
            return json.loads(payload)
        except json.JSONDecodeError as exc:
            raise ForwardModelError("forward model returned invalid JSON") from exc

    def predict(self, reactants: Sequence[str], top_k: int) -> list[str]:
        out = self._request("POST", "/predict",
                            {"reactants": list(reactants), "top_k": top_k})
        products = out.get("products")
        if not isinstance(products, list) or not all(isinstance(p, str) for p in products):
            raise ForwardModelError("forward model response lacks a product list")
        return products

    def health(self) -> dict:
        return self._request("GET", "/health")


@dataclass
class RewardOracle:
    """Fixed scoring policy for terminal states."""

    mode: str = EXACT_ONLY
    forward_client: Optional[ForwardClient] = None
    top_k: int = 5

    def __post_init__(self) -> None:
        if self.mode not in (EXACT_ONLY, EXACT_THEN_FORWARD):
            raise ValueError(f"unknown oracle mode {self.mode!r}")
        if self.mode == EXACT_THEN_FORWARD and self.forward_client is None:
            raise ValueError("forward mode needs a client")
        if self.top_k < 1:
            raise ValueError("top_k must be positive")

    def score(self, state: State, truth: Optional[tuple] = None) -> int:
        return reward(state, truth, self)


def exact_match(pred: tuple[MolGraph, MolGraph], truth: tuple[MolGraph, MolGraph]) -> int:
    """1 iff the canonical-SMILES multisets agree (order-insensitive)."""
    pred_key = sorted(write_canonical_smiles(m) for m in pred)
    truth_key = sorted(write_canonical_smiles(m) for m in truth)
    return 1 if pred_key == truth_key else 0


def _normalize(smiles: str) -> str:
    try:
        return write_canonical_smiles(parse_smiles(smiles))
    except SmilesParseError:
        return smiles


def forward_reward(pred: tuple[MolGraph, MolGraph], product: MolGraph,
                   client: ForwardClient, top_k: int = 5) -> int:
    """1 iff the product is among the model's top-k predicted products."""
    reactants = [write_canonical_smiles(m) for m in pred]
    products = client.predict(reactants, top_k)
    target = write_canonical_smiles(product)
    return 1 if any(_normalize(p) == target for p in products[:top_k]) else 0


def reward(state: State, truth: Optional[tuple], oracle: RewardOracle) -> int:
    """Terminal reward: exact match wins outright, else the forward check."""
    if not state.is_terminal:
        raise ValueError("reward is defined on terminal states only")
    pred = (state.current1, state.current2)
    if truth is not None and exact_match(pred, truth):
        return 1
    if oracle.mode == EXACT_THEN_FORWARD:
        return forward_reward(pred, state.product, oracle.forward_client, oracle.top_k)
    return 0
