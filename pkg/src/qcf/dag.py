"""Directed acyclic graphs over named nodes."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidModelError, UnknownVariableError


@dataclass(frozen=True)
class Dag:
    nodes: tuple[str, ...]
    edges: frozenset[tuple[str, str]]

    def __init__(self, nodes, edges):
        nodes = tuple(nodes)
        edges = frozenset(tuple(e) for e in edges)
        if len(set(nodes)) != len(nodes):
            raise InvalidModelError(f"duplicate node names in {nodes}")
        known = set(nodes)
        for a, b in edges:
            if a not in known or b not in known:
                raise UnknownVariableError(f"edge ({a}, {b}) references unknown node")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        if self.topological_order() is None:
            raise InvalidModelError("graph contains a cycle")

    def parents(self, node: str) -> tuple[str, ...]:
        return tuple(a for a in self.nodes if (a, node) in self.edges)

    def children(self, node: str) -> tuple[str, ...]:
        return tuple(b for b in self.nodes if (node, b) in self.edges)

    def topological_order(self) -> list[str] | None:
        """Kahn's algorithm; None if cyclic.  Ties broken by declaration order."""
        indeg = {n: 0 for n in self.nodes}
        for _, b in self.edges:
            indeg[b] += 1
        order: list[str] = []
        ready = [n for n in self.nodes if indeg[n] == 0]
        while ready:
            n = ready.pop(0)
            order.append(n)
            for m in self.nodes:
                if (n, m) in self.edges:
                    indeg[m] -= 1
                    if indeg[m] == 0:
                        ready.append(m)
        return order if len(order) == len(self.nodes) else None

    def without_incoming(self, targets) -> "Dag":
        """Graph surgery: remove every edge into the given nodes."""
        targets = set(targets)
        return Dag(self.nodes, {e for e in self.edges if e[1] not in targets})
