"""
Graph utilities for radial feeder topology.
Wraps a networkx graph to validate the tree structure and expose parent,
children and traversal orders rooted at the substation.
"""
import logging
import networkx as nx
from typing import Dict, List, Any, Tuple

from voltgrid.exceptions import FeederValidationError

logger = logging.getLogger(__name__)

SUBSTATION = 0


class FeederGraph:
    """
    Graph representation of a radial distribution feeder.
    """

    def __init__(self, n_buses: int):
        """
        Initialize an empty feeder graph.

        Args:
            n_buses: Number of non-substation buses N (buses are 0..N)
        """
        self.n_buses = n_buses
        self.graph = nx.MultiGraph()
        self.graph.add_nodes_from(range(n_buses + 1))
        self.tree = None

    def add_line(self, source: int, target: int, **kwargs):
        """
        Add a line between two buses.

        Args:
            source: One end of the line
            target: Other end of the line
            **kwargs: Line attributes (r_pu, x_pu)
        """
        for bus in (source, target):
            if bus not in self.graph:
                raise FeederValidationError(
                    f"line ({source}, {target}) references unknown bus {bus}"
                )
        if source == target:
            raise FeederValidationError(f"line ({source}, {target}) is a self loop")
        self.graph.add_edge(source, target, **kwargs)

    def get_line_count(self) -> int:
        return self.graph.number_of_edges()

    def orient(self) -> nx.DiGraph:
        """
        Validate the topology and orient every line away from the substation.

        Returns:
            DiGraph whose edges point from parent to child

        Raises:
            FeederValidationError: If the lines do not form a tree rooted at bus 0
        """
        try:
            cycle = nx.find_cycle(self.graph)
        except nx.NetworkXNoCycle:
            cycle = None
        if cycle:
            buses = [edge[0] for edge in cycle]
            raise FeederValidationError(f"not a tree: cycle detected through buses {buses}")

        reachable = nx.node_connected_component(self.graph, SUBSTATION)
        if len(reachable) != self.n_buses + 1:
            missing = sorted(set(self.graph.nodes()) - reachable)
            raise FeederValidationError(
                f"not a tree: buses {missing} are unreachable from the substation"
            )

        if self.get_line_count() != self.n_buses:
            raise FeederValidationError(
                f"not a tree: expected {self.n_buses} lines, got {self.get_line_count()}"
            )

        tree = nx.DiGraph()
        tree.add_nodes_from(self.graph.nodes())
        for parent, child in sorted(nx.bfs_edges(self.graph, SUBSTATION)):
            data = next(iter(self.graph.get_edge_data(parent, child).values()))
            tree.add_edge(parent, child, **data)

        self.tree = tree
        logger.debug(f"Oriented feeder with {self.n_buses} lines")
        return tree

    def parents(self) -> List[int]:
        """
        Get the parent of every bus (-1 for the substation).

        Returns:
            List indexed by bus
        """
        tree = self._require_tree()
        parent = [-1] * (self.n_buses + 1)
        for source, target in tree.edges():
            parent[target] = source
        return parent

    def children(self) -> List[Tuple[int, ...]]:
        tree = self._require_tree()
        return [tuple(sorted(tree.successors(bus))) for bus in range(self.n_buses + 1)]

    def depth_first_order(self) -> List[int]:
        """
        Get buses in depth-first preorder starting at the substation.

        Returns:
            List of all N+1 buses, each exactly once
        """
        tree = self._require_tree()
        return list(nx.dfs_preorder_nodes(tree, SUBSTATION))

    def get_edge_attributes(self, source: int, target: int) -> Dict[str, Any]:
        tree = self._require_tree()
        if tree.has_edge(source, target):
            return dict(tree[source][target])
        return {}

    def _require_tree(self) -> nx.DiGraph:
        if self.tree is None:
            self.orient()
        return self.tree
