# strategem/core/causal/graph.py

from dataclasses import dataclass, field
from functools import cached_property

import networkx as nx

from strategem.core.errors import CyclicGraph, UnknownNode


@dataclass(frozen=True, order=True)
class NodeId:
    index: int
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class CausalDag:
    """
    Directed graph over named nodes. Acyclicity is not enforced on construction so
    malformed documents can still be loaded and reported by validate().
    """

    nodes: tuple[NodeId, ...]
    edges: frozenset[tuple[str, str]] = field(default_factory=frozenset)

    @classmethod
    def from_names(cls, names: list[str], edges=()) -> "CausalDag":
        return cls(
            nodes=tuple(NodeId(i, n) for i, n in enumerate(names)),
            edges=frozenset((p, c) for p, c in edges),
        )

    # --- NETWORKX BACKED VIEWS ---
    @cached_property
    def graph(self) -> nx.DiGraph:
        G = nx.DiGraph()
        for node in self.nodes:
            G.add_node(node.name, index=node.index)
        G.add_edges_from(sorted(self.edges))
        return G

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.nodes)

    @cached_property
    def index(self) -> dict[str, int]:
        return {n.name: n.index for n in self.nodes}

    def node(self, name: str) -> NodeId:
        if name not in self.index:
            raise UnknownNode(name, "graph")
        return self.nodes[self.index[name]]

    def has_node(self, name: str) -> bool:
        return name in self.index

    def has_edge(self, parent: str, child: str) -> bool:
        return (parent, child) in self.edges

    @cached_property
    def _parents(self) -> dict[str, tuple[str, ...]]:
        order = self.index.get
        return {
            n: tuple(sorted(self.graph.predecessors(n), key=lambda p: order(p, len(self.nodes))))
            for n in self.names
        }

    def parents(self, name: str) -> tuple[str, ...]:
        self.node(name)
        return self._parents[name]

    def children(self, name: str) -> tuple[str, ...]:
        self.node(name)
        return tuple(sorted(self.graph.successors(name), key=self.index.__getitem__))

    # --- ADVANCED TRAVERSAL LOGIC ---
    # Memoized per node; the graph is immutable.
    @cached_property
    def _ancestors(self) -> dict[str, frozenset[str]]:
        return {n: frozenset(nx.ancestors(self.graph, n)) for n in self.names}

    @cached_property
    def _descendants(self) -> dict[str, frozenset[str]]:
        return {n: frozenset(nx.descendants(self.graph, n)) for n in self.names}

    def ancestors(self, name: str) -> frozenset[str]:
        self.node(name)
        return self._ancestors[name]

    def descendants(self, name: str) -> frozenset[str]:
        self.node(name)
        return self._descendants[name]

    def descendants_of(self, names) -> frozenset[str]:
        """Union of the given nodes and all their descendants."""
        out: set[str] = set()
        for name in names:
            out.add(name)
            out |= self.descendants(name)
        return frozenset(out)

    def ancestors_avoiding(self, target: str, blocked: str) -> frozenset[str]:
        """Ancestors of target that reach it along a path not passing through blocked."""
        H = self.graph.copy()
        H.remove_node(blocked)
        return frozenset(nx.ancestors(H, target))

    def is_acyclic(self) -> bool:
        return nx.is_directed_acyclic_graph(self.graph)

    @cached_property
    def order(self) -> tuple[str, ...]:
        return tuple(n.name for n in topological_order(self))

    def without_incoming(self, targets) -> "CausalDag":
        """Graph surgery: drop every edge pointing into a target."""
        targets = set(targets)
        return CausalDag(
            nodes=self.nodes, edges=frozenset(e for e in self.edges if e[1] not in targets)
        )

    def with_node(self, name: str, parents=()) -> "CausalDag":
        return CausalDag(
            nodes=self.nodes + (NodeId(len(self.nodes), name),),
            edges=self.edges | frozenset((p, name) for p in parents),
        )


@dataclass(frozen=True)
class Skeleton:
    nodes: tuple[NodeId, ...]
    undirected_edges: frozenset[frozenset[str]]

    def sorted_edges(self) -> list[tuple[str, str]]:
        """Edges as (lower-index, higher-index) pairs in lexicographic index order."""
        index = {n.name: n.index for n in self.nodes}
        pairs = [tuple(sorted(e, key=index.__getitem__)) for e in self.undirected_edges]
        return sorted(pairs, key=lambda p: (index[p[0]], index[p[1]]))

    def __len__(self) -> int:
        return len(self.undirected_edges)


def topological_order(dag: CausalDag) -> list[NodeId]:
    """Parents before children; ties broken by ascending node index."""
    try:
        ordered = list(nx.lexicographical_topological_sort(dag.graph, key=dag.index.__getitem__))
    except nx.NetworkXUnfeasible as e:
        raise CyclicGraph("Graph contains a cycle; no topological order exists.") from e
    return [dag.node(name) for name in ordered]


def skeleton_of(dag: CausalDag) -> Skeleton:
    return Skeleton(
        nodes=dag.nodes,
        undirected_edges=frozenset(frozenset(e) for e in dag.edges if e[0] != e[1]),
    )
