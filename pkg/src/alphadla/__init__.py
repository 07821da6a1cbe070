"""Exact simulation of one-dimensional long-range DLA for transient alpha-walks.

Modules
-------
steplaw    symmetric heavy-tailed step distribution
green      Green function tables
potential  capacity, escape probabilities, harmonic and gluing measures
hitting    Monte Carlo oracles for hitting distributions
dla        exact DLA growth and event logs
sdla       split DLA and the coupling with DLA
harness    ensemble experiments and the ``alphadla`` command line
"""
from __future__ import annotations

__version__ = "0.1.0"

from .dla import Aggregate, EventLog, GluingEvent, dla_run, dla_step, replay
from .green import GreenTable, build_table, get_table, green, load_table, save_table
from .potential import (
    PotentialState,
    cantor_set,
    gluing_measure,
    harmonic_measure,
    progression_set,
    solve_equilibrium,
)
from .steplaw import StepLaw, StepOverflowError

__all__ = [
    "Aggregate",
    "EventLog",
    "GluingEvent",
    "GreenTable",
    "PotentialState",
    "StepLaw",
    "StepOverflowError",
    "__version__",
    "build_table",
    "cantor_set",
    "dla_run",
    "dla_step",
    "get_table",
    "gluing_measure",
    "green",
    "harmonic_measure",
    "load_table",
    "progression_set",
    "replay",
    "save_table",
    "solve_equilibrium",
]
