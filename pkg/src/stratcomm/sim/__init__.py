"""Finite-blocklength simulation: codebooks, block coding rules, lemma checks and tiny-n game values."""
from .codebook import (Codebook, ConstantIndexDecoder, StrategicChoice, TypicalityDecoder,
                       average_empirical_distribution, draw_reconstruction, generate_codebook,
                       shannon_encode, strategic_encoder, typicality_decode)
from .ensemble import EnsembleReport, EnsembleSimulator, SchemeDesign, design_scheme, run_ensemble
from .finite_n import FiniteNValue, finite_n_game_value
from .lemmas import LemmaReport, SimplexCover, lemma1_verify, lemma2_verify, simplex_cover
from .profiles import (LongRunEstimate, ShannonEncoder, StrategicEncoder, StrategyProfile, TableRule,
                       long_run_distortions)

__all__ = [
    "Codebook", "ConstantIndexDecoder", "EnsembleReport", "EnsembleSimulator", "FiniteNValue",
    "LemmaReport", "LongRunEstimate", "SchemeDesign", "ShannonEncoder", "SimplexCover", "StrategicChoice",
    "StrategicEncoder", "StrategyProfile", "TableRule", "TypicalityDecoder", "average_empirical_distribution",
    "design_scheme", "draw_reconstruction", "finite_n_game_value", "generate_codebook", "lemma1_verify",
    "lemma2_verify", "long_run_distortions", "run_ensemble", "shannon_encode", "simplex_cover",
    "strategic_encoder", "typicality_decode",
]
