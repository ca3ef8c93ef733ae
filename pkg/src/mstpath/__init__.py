"""MST-based datapath programming for IoT data collection.

Compile collection requests into per-switch LPM flow rules, check them in a
match-action simulator, and drive a small control plane through root
changes.
"""
from .errors import *  # noqa: F401,F403
from .mst import compute_mst, enumerate_spanning_trees, orient_tree, total_weight, tree_path
from .pipeline import apply_drop, apply_ipv4_forward, lpm_lookup, process_packet, run_packet
from .ruleplan import diff_rules, parse_runtime, serialize_runtime, synthesize_rules
from .topology import Topology, load_topology, neighbors

__version__ = "0.1.0"
