"""Searchable encryption with fair payment over a simulated ledger."""

from .errors import FairSSEError
from .harness import ScenarioConfig, ingest_corpus, run_scenario
from .improved import ImprovedFramework
from .initial import InitialFramework
from .ledger import BaselineOnChain, Ledger, PricingConfig
from .sse import Database, EncryptedIndex, Trapdoor, derive_trapdoor, search, setup

__version__ = "0.1.0"

__all__ = [
    "BaselineOnChain",
    "Database",
    "EncryptedIndex",
    "FairSSEError",
    "ImprovedFramework",
    "InitialFramework",
    "Ledger",
    "PricingConfig",
    "ScenarioConfig",
    "Trapdoor",
    "derive_trapdoor",
    "ingest_corpus",
    "run_scenario",
    "search",
    "setup",
]
