"""Simulator for secure multiparty quantum computation built on a two-party
nonlocal-CNOT protocol (teleportation gadget plus commit-then-open bit exchange)."""

from .qsim import BellOutcome, StateVector
from .circuit import OwnershipMap, Schedule, build_schedule, oracle_simulate, parse_circuit, validate
from .commitment import commit, open_verify, swap_protocol
from .protocol import Transcript, nl_cnot, run_smqc, ttp_nl_cnot

__version__ = "0.1.0"

__all__ = [
    "BellOutcome",
    "OwnershipMap",
    "Schedule",
    "StateVector",
    "Transcript",
    "build_schedule",
    "commit",
    "nl_cnot",
    "open_verify",
    "oracle_simulate",
    "parse_circuit",
    "run_smqc",
    "swap_protocol",
    "ttp_nl_cnot",
    "validate",
]
