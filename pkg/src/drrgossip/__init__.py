"""Round-synchronous simulator for DRR-gossip aggregate computation."""

__version__ = "0.1.0"

from .drr import Forest, run_drr, run_local_drr, validate_forest
from .protocols import ProtocolConfig, ProtocolResult, oracle_aggregate, run_protocol
from .topology import Graph, parse_topology
from .transport import NetworkSim, Phase

__all__ = [
    "Forest", "Graph", "NetworkSim", "Phase", "ProtocolConfig", "ProtocolResult",
    "oracle_aggregate", "parse_topology", "run_drr", "run_local_drr", "run_protocol",
    "validate_forest",
]
