"""Simulated verifiable data registry: ledger, stream server, client and HTTP inspection API."""

from .client import VdrClient, VdrMethodHandler
from .ledger import LatencyProfile, Ledger, LedgerTransaction, StatusList, TransactionKind
from .server import RunningVdr, VdrServer, run_in_thread
