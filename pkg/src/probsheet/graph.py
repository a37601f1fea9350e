"""Sheet structure: dependency graph, evaluation order, and the split of the
sheet into per-observation ancestor blocks.

The compile pipeline is parse_sheet -> build_graph -> check_wellformed ->
topo_order -> decompose, wrapped by compile_sheet().  The decomposition drives
the particle engine: for each observed cell (in evaluation order) it isolates
the not-yet-assigned strict ancestors of that observation, plus the frontier
of already-computed cells those ancestors read from.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .errors import CellSyntaxError, CycleError, DanglingRefError, FormulaError
from .formula import (
    Actual,
    CellRef,
    Const,
    ErpApp,
    Expr,
    Label,
    iter_op_nodes,
    parse_cell,
    references_of,
)


@dataclass
class Sheet:
    """A parsed spreadsheet: every cell name mapped to its expression tree."""

    cells: dict[CellRef, Expr]

    def __len__(self) -> int:
        return len(self.cells)


def parse_sheet(texts: dict[str, str]) -> Sheet:
    """Parse a {cell name: cell text} mapping into a Sheet.

    Raises CellSyntaxError naming the offending cell if any text fails to
    lex or parse.
    """
    cells: dict[CellRef, Expr] = {}
    for name in sorted(texts, key=lambda s: (len(s), s)):
        try:
            ref = CellRef.parse(name)
        except FormulaError as e:
            raise CellSyntaxError(name, e) from e
        try:
            cells[ref] = parse_cell(ref, texts[name])
        except FormulaError as e:
            raise CellSyntaxError(str(ref), e) from e
    return Sheet(cells)


@dataclass
class DepGraph:
    """Cell dependency graph: an edge r -> r' means r' reads r's value."""

    vertices: tuple[CellRef, ...]
    preds: dict[CellRef, frozenset[CellRef]]
    succs: dict[CellRef, tuple[CellRef, ...]] = field(repr=False, default_factory=dict)


def build_graph(sheet: Sheet) -> DepGraph:
    """Extract the dependency graph, rejecting references to missing cells."""
    vertices = tuple(sorted(sheet.cells, key=lambda r: r.sort_key))
    preds: dict[CellRef, frozenset[CellRef]] = {}
    succ_lists: dict[CellRef, list[CellRef]] = {v: [] for v in vertices}
    for r in vertices:
        deps = references_of(sheet.cells[r])
        for d in deps:
            if d not in sheet.cells:
                raise DanglingRefError(str(d), str(r))
        preds[r] = frozenset(deps)
    for r in vertices:
        for d in sorted(preds[r], key=lambda x: x.sort_key):
            succ_lists[d].append(r)
    succs = {v: tuple(sorted(succ_lists[v], key=lambda x: x.sort_key))
             for v in vertices}
    return DepGraph(vertices, preds, succs)


def check_wellformed(g: DepGraph) -> None:
    """Raise CycleError with a witness path if the graph has a cycle."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {v: WHITE for v in g.vertices}
    path: list[CellRef] = []
    for start in g.vertices:
        if color[start] != WHITE:
            continue
        color[start] = GRAY
        path.append(start)
        stack = [(start, iter(g.succs[start]))]
        while stack:
            node, it = stack[-1]
            advanced = False
            for w in it:
                if color[w] == WHITE:
                    color[w] = GRAY
                    path.append(w)
                    stack.append((w, iter(g.succs[w])))
                    advanced = True
                    break
                if color[w] == GRAY:
                    raise CycleError(path[path.index(w):] + [w])
            if not advanced:
                stack.pop()
                path.pop()
                color[node] = BLACK


def topo_order(g: DepGraph) -> list[CellRef]:
    """Dependencies-first order; ties broken by (row, column).

    The same graph always yields the same order, so evaluation order — and
    with it the sequence of random draws — is reproducible.
    """
    indegree = {v: len(g.preds[v]) for v in g.vertices}
    ready = [(v.sort_key, v) for v in g.vertices if indegree[v] == 0]
    heapq.heapify(ready)
    order: list[CellRef] = []
    while ready:
        _, v = heapq.heappop(ready)
        order.append(v)
        for w in g.succs[v]:
            indegree[w] -= 1
            if indegree[w] == 0:
                heapq.heappush(ready, (w.sort_key, w))
    if len(order) != len(g.vertices):
        # Defensive: callers run check_wellformed first.
        check_wellformed(g)
        raise CycleError(list(g.vertices))
    return order


@dataclass
class CompiledSheet:
    """A sheet ready to run: evaluation order plus the observation split.

    observed        cells whose whole formula is an ACTUAL(...), in order
    pred_blocks[i]  strict ancestors of observed[i] not claimed by an earlier
                    block or earlier observation, sorted in evaluation order
    frontier_blocks[i]  already-computed cells read by block i or observed[i]
    residual        everything left after all blocks and observations
    residual_frontier   computed cells the residual reads from
    erp_labels      labels of every random-quantity and observation node
    """

    sheet: Sheet
    order: tuple[CellRef, ...]
    observed: tuple[CellRef, ...]
    pred_blocks: tuple[tuple[CellRef, ...], ...]
    frontier_blocks: tuple[frozenset[CellRef], ...]
    residual: tuple[CellRef, ...]
    residual_frontier: frozenset[CellRef]
    erp_labels: frozenset[Label]


def decompose(g: DepGraph, order: list[CellRef], sheet: Sheet) -> CompiledSheet:
    """Split the sheet by observation for sequential conditioning.

    The blocks, the observed cells, and the residual partition the sheet, and
    every cell a block reads is either inside the block or in its frontier.
    """
    pos = {r: i for i, r in enumerate(order)}
    observed = tuple(r for r in order if isinstance(sheet.cells[r], Actual))

    ancestors: dict[CellRef, set[CellRef]] = {}
    for v in observed:
        seen: set[CellRef] = set()
        frontier = list(g.preds[v])
        while frontier:
            r = frontier.pop()
            if r in seen:
                continue
            seen.add(r)
            frontier.extend(g.preds[r])
        ancestors[v] = seen

    assigned: set[CellRef] = set()
    pred_blocks: list[tuple[CellRef, ...]] = []
    frontier_blocks: list[frozenset[CellRef]] = []
    for v in observed:
        block = ancestors[v] - assigned
        block_sorted = tuple(sorted(block, key=pos.__getitem__))
        closed = block | {v}
        frontier = frozenset(
            p for r in closed for p in g.preds[r] if p not in closed
        )
        pred_blocks.append(block_sorted)
        frontier_blocks.append(frontier)
        assigned |= closed

    residual = tuple(r for r in order if r not in assigned)
    residual_set = set(residual)
    residual_frontier = frozenset(
        p for r in residual for p in g.preds[r] if p not in residual_set
    )

    labels = frozenset(
        node.label
        for r in g.vertices
        for node in iter_op_nodes(sheet.cells[r])
        if isinstance(node, (ErpApp, Actual))
    )
    return CompiledSheet(
        sheet=sheet,
        order=tuple(order),
        observed=observed,
        pred_blocks=tuple(pred_blocks),
        frontier_blocks=tuple(frontier_blocks),
        residual=residual,
        residual_frontier=residual_frontier,
        erp_labels=labels,
    )


def compile_sheet(sheet: Sheet) -> CompiledSheet:
    """Run the full pipeline: graph, cycle check, ordering, decomposition."""
    g = build_graph(sheet)
    check_wellformed(g)
    order = topo_order(g)
    return decompose(g, order, sheet)


def latent_cells(compiled: CompiledSheet) -> list[CellRef]:
    """Cells worth reporting on: not observed and not plain constants."""
    skip = set(compiled.observed)
    return [
        r for r in compiled.order
        if r not in skip and not isinstance(compiled.sheet.cells[r], Const)
    ]
