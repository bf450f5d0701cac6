"""Cross-organisation record deduplication over secret-shared fuzzy PSI."""

from .core import BitString, PrfKey, Rng, bitstring_xor, hamming_distance, prf_eval
from .embedding import EmbeddingParams, Record, embed, embed_many, record_to_grams
from .fpsi import MatchMatrix, otfpsi_run, otfpsi_ss_run, reconstruct_matches

__version__ = "0.1.0"

__all__ = [
    "BitString",
    "EmbeddingParams",
    "MatchMatrix",
    "PrfKey",
    "Record",
    "Rng",
    "bitstring_xor",
    "embed",
    "embed_many",
    "hamming_distance",
    "otfpsi_run",
    "otfpsi_ss_run",
    "prf_eval",
    "reconstruct_matches",
    "record_to_grams",
]
