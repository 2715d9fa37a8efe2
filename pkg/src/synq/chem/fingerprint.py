"""Circular (Morgan/ECFP-style) fingerprints over 2048 bits, radius 2.

Environment hashing uses a fixed splitmix64-style mixer so bit positions
are stable across platforms and runs. The bits are internally consistent
but intentionally not compatible with any external toolkit.
"""

from __future__ import annotations

import numpy as np

from .graph import MolGraph

N_BITS = 2048
RADIUS = 2

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

_ELEMENT_NUMBER = {
    "H": 1, "B": 5, "C": 6, "N": 7, "O": 8, "F": 9, "Si": 14,
    "P": 15, "S": 16, "Cl": 17, "Se": 34, "Br": 35, "I": 53,
}


def _mix(x: int) -> int:
    x &= _MASK
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK
    x ^= x >> 31
    return x


def _combine(seed: int, value: int) -> int:
    return _mix(seed ^ ((value + _GOLDEN + (seed << 6) + (seed >> 2)) & _MASK))


def _hash_ints(values) -> int:
    h = _GOLDEN
    for v in values:
        h = _combine(h, v)
    return h


class BitFingerprint:
    """Fixed-length bit vector; a function of the molecule up to isomorphism."""

    __slots__ = ("bits",)

    def __init__(self, bits: np.ndarray) -> None:
        if bits.shape != (N_BITS,):
            raise ValueError(f"fingerprint must have length {N_BITS}")
        self.bits = bits.astype(np.uint8)

    def count(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, BitFingerprint) and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self) -> int:  # pragma: no cover - rarely needed
        return hash(self.bits.tobytes())


def morgan_fingerprint(mol: MolGraph) -> BitFingerprint:
    """Radius-2 circular fingerprint folded into 2048 bits.

    Atom seeds combine element, degree, bond-order total, charge, implicit
    hydrogen count and ring membership; chirality plays no part. Each
    round rehashes an atom with its sorted (bond, neighbor) environment,
    and every per-round value sets one bit.
    """
    if mol._fp is not None:
        return mol._fp
    bits = np.zeros(N_BITS, dtype=np.uint8)
    n = len(mol.atoms)
    current = []
    for i in range(n):
        atom = mol.atoms[i]
        current.append(_hash_ints((
            _ELEMENT_NUMBER[atom.element],
            mol.degree(i),
            int(round(2 * mol.bond_order_sum(i))),
            atom.charge + 16,
            mol.implicit_hydrogens(i),
            1 if mol.in_ring(i) else 0,
        )))
        bits[current[i] % N_BITS] = 1
    for rnd in range(1, RADIUS + 1):
        nxt = []
        for i in range(n):
            env = sorted(
                (int(round(2 * order)), current[j]) for j, order in mol.neighbors(i)
            )
            stream = [rnd, current[i]]
            for order_key, nbr_hash in env:
                stream.append(order_key)
                stream.append(nbr_hash)
            h = _hash_ints(stream)
            nxt.append(h)
            bits[h % N_BITS] = 1
        current = nxt
    fp = BitFingerprint(bits)
    mol._fp = fp
    return fp


def tanimoto(a: BitFingerprint, b: BitFingerprint) -> float:
    """|a AND b| / |a OR b|; 1.0 when both vectors are empty."""
    if a.bits.shape != b.bits.shape:
        raise ValueError("fingerprint length mismatch")
    union = int(np.bitwise_or(a.bits, b.bits).sum())
    if union == 0:
        return 1.0
    inter = int(np.bitwise_and(a.bits, b.bits).sum())
    return inter / union
