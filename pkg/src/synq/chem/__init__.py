"""Molecular graphs, SMILES I/O, canonicalization and fingerprints."""

from .graph import (
    AROMATIC,
    Atom,
    Bond,
    ChemError,
    DOUBLE,
    ELEMENTS,
    MolGraph,
    SINGLE,
    TRIPLE,
    VALENCES,
    ValenceError,
    allowed_valences,
    free_valence,
)
from .smiles import SmilesParseError, parse_smiles
from .canon import canonical_ranks, write_canonical_smiles, write_smiles
from .fingerprint import N_BITS, BitFingerprint, morgan_fingerprint, tanimoto

__all__ = [
    "AROMATIC",
    "Atom",
    "Bond",
    "BitFingerprint",
    "ChemError",
    "DOUBLE",
    "ELEMENTS",
    "MolGraph",
    "N_BITS",
    "SINGLE",
    "SmilesParseError",
    "TRIPLE",
    "VALENCES",
    "ValenceError",
    "allowed_valences",
    "canonical_ranks",
    "free_valence",
    "morgan_fingerprint",
    "parse_smiles",
    "tanimoto",
    "write_canonical_smiles",
    "write_smiles",
]
