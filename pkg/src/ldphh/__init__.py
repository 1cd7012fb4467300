"""Locally differentially private heavy hitters and frequency estimation.

Two simulated multi-client protocols over power-of-two item domains:

- TreeHist: a compressed, noisy count sketch scanned down the implicit
  prefix tree (`run_treehist`, `freq_oracle`).
- Bitstogram: hashed sign-column oracles with bit-by-bit candidate
  reconstruction (`run_bitstogram`, `succinct_hist`, `explicit_hist`,
  `hashtogram_build`/`hashtogram_query`).

Plus a seeded experiment harness (`harness`) and a CLI (`ldp-hh`).
"""

from .bitstogram import (
    BitstogramParams,
    IdentityCode,
    RepetitionCode,
    basic_randomizer,
    bitstogram_params,
    explicit_hist,
    hashtogram_build,
    hashtogram_query,
    run_bitstogram,
    succinct_hist,
)
from .core import Bits, HeavyHitters, TreeHistParams, child_set, children, prefix_of, treehist_params
from .harness import (
    Dataset,
    ExperimentConfig,
    evaluate,
    exact_counts,
    gen_powerlaw,
    ingest_corpus,
    run_experiment,
)
from .randomness import SharedRandomness
from .treehist import freq_oracle, run_treehist

__version__ = "0.1.0"

__all__ = [
    "Bits",
    "HeavyHitters",
    "TreeHistParams",
    "children",
    "child_set",
    "prefix_of",
    "treehist_params",
    "run_treehist",
    "freq_oracle",
    "BitstogramParams",
    "bitstogram_params",
    "run_bitstogram",
    "succinct_hist",
    "explicit_hist",
    "hashtogram_build",
    "hashtogram_query",
    "basic_randomizer",
    "RepetitionCode",
    "IdentityCode",
    "SharedRandomness",
    "Dataset",
    "ExperimentConfig",
    "gen_powerlaw",
    "ingest_corpus",
    "exact_counts",
    "evaluate",
    "run_experiment",
    "__version__",
]
