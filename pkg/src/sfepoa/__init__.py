"""Price of anarchy of supply function equilibria in transmission-constrained markets.

The package builds DC network models, solves the economic dispatch and the
equilibrium (modified-cost) dispatch, computes network-aware and
network-independent PoA bounds, constructs tightness instances and checks
equilibria in bid space.
"""
from .congestion import CongestionSweepConfig, SweepPoint, congested_lines, congestion_sweep
from .costs import Linear, ModifiedCost, PiecewiseLinear, Quadratic, modified_cost, two_piece
from .dispatch import DispatchResult, economic_dispatch, equilibrium_dispatch, kkt_residual, true_cost
from .errors import (
    CertificationError,
    InfeasibleError,
    InvalidLineError,
    NetworkError,
    ParseError,
    PowerFlowError,
    SfepoaError,
    SolverError,
    UnsupportedCostError,
    UnsupportedTopologyError,
    ValidationError,
)
from .io import dump_market, load_network, market_from_dict, market_to_dict, parse_matpower
from .network import Generator, Line, Market, Network, make_market
from .oracle import best_response_check, brute_force_dispatch, multiplier_map_check, recover_bids, supply_from_bids
from .poa import max_feasible_supply, network_independent_bound, poa_upper_bound, price_of_anarchy
from .powerflow import ShiftFactors, line_flows, shift_factors, tree_cycle_flows
from .tightness import TightnessParams, analytical_poa, build_instance, closed_form_bound, tightness_gap
from .topology import cycle_decomposition, is_weakly_cyclic, neighbor_partition, spanning_tree, tree_center
from .validation import require_valid, validate_market

__version__ = "0.1.0"

__all__ = [
    "CertificationError", "CongestionSweepConfig", "DispatchResult", "Generator", "InfeasibleError",
    "InvalidLineError", "Line", "Linear", "Market", "ModifiedCost", "Network", "NetworkError", "ParseError",
    "PiecewiseLinear", "PowerFlowError", "Quadratic", "SfepoaError", "ShiftFactors", "SolverError",
    "SweepPoint", "TightnessParams", "UnsupportedCostError", "UnsupportedTopologyError", "ValidationError",
    "analytical_poa", "best_response_check", "brute_force_dispatch", "build_instance", "congested_lines",
    "congestion_sweep", "cycle_decomposition", "dump_market", "economic_dispatch", "equilibrium_dispatch",
    "is_weakly_cyclic", "kkt_residual", "closed_form_bound", "line_flows", "load_network", "make_market",
    "market_from_dict", "market_to_dict", "max_feasible_supply", "modified_cost", "multiplier_map_check",
    "neighbor_partition", "network_independent_bound", "parse_matpower", "poa_upper_bound",
    "price_of_anarchy", "recover_bids", "require_valid", "shift_factors", "spanning_tree",
    "supply_from_bids", "tightness_gap", "tree_cycle_flows", "tree_center", "true_cost", "two_piece",
    "validate_market",
]
