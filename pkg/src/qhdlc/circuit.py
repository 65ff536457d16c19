"""Symbolic circuit expressions.

A circuit expression is a tree over six node kinds: component references,
series products, concatenations, feedback loops, channel permutations and
identity channels.  Expressions are immutable values; `simplify` rewrites
them to a local normal form without changing what they evaluate to.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import params
from .errors import CircuitError


class CircuitExpression:
    """Base class; every node knows its channel count `cdim`."""

    __slots__ = ()

    @property
    def cdim(self) -> int:
        raise NotImplementedError


@dataclass(frozen=True)
class ComponentRef(CircuitExpression):
    """Leaf naming a component instance with bound parameter expressions."""

    component: str
    label: str
    channels: int
    params: tuple[tuple[str, params.ParamExpr], ...] = ()

    def __post_init__(self):
        if self.channels < 1:
            raise CircuitError(f"component '{self.label}' needs >= 1 channel")

    @property
    def cdim(self) -> int:
        return self.channels


@dataclass(frozen=True)
class SeriesProduct(CircuitExpression):
    """left <| right: the output of `right` feeds the input of `left`."""

    left: CircuitExpression
    right: CircuitExpression

    def __post_init__(self):
        if self.left.cdim != self.right.cdim:
            raise CircuitError(
                f"series channel mismatch: {self.left.cdim} vs {self.right.cdim}")

    @property
    def cdim(self) -> int:
        return self.left.cdim


@dataclass(frozen=True)
class Concatenation(CircuitExpression):
    operands: tuple[CircuitExpression, ...]

    def __post_init__(self):
        if not self.operands:
            raise CircuitError("concatenation of an empty operand list")

    @property
    def cdim(self) -> int:
        return sum(op.cdim for op in self.operands)


@dataclass(frozen=True)
class Feedback(CircuitExpression):
    """Route output channel `out_index` back into input `in_index` (1-based)."""

    inner: CircuitExpression
    out_index: int
    in_index: int

    def __post_init__(self):
        n = self.inner.cdim
        if n < 2:
            raise CircuitError("feedback requires at least 2 channels")
        for idx in (self.out_index, self.in_index):
            if not 1 <= idx <= n:
                raise CircuitError(f"feedback index {idx} out of range 1..{n}")

    @property
    def cdim(self) -> int:
        return self.inner.cdim - 1


@dataclass(frozen=True)
class Permutation(CircuitExpression):
    """Channel permutation stored by its image tuple: input l exits at image[l-1]."""

    image: tuple[int, ...]

    def __post_init__(self):
        n = len(self.image)
        if sorted(self.image) != list(range(1, n + 1)):
            raise CircuitError(f"image tuple {self.image} is not a bijection")

    @property
    def cdim(self) -> int:
        return len(self.image)


@dataclass(frozen=True)
class Identity(CircuitExpression):
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise CircuitError("identity needs >= 1 channel")

    @property
    def cdim(self) -> int:
        return self.n


# -- constructors ---------------------------------------------------------

def series(upstream: CircuitExpression, downstream: CircuitExpression) -> SeriesProduct:
    """Feed all outputs of `upstream` into `downstream` (downstream <| upstream)."""
    return SeriesProduct(downstream, upstream)


def concat(operands: Sequence[CircuitExpression]) -> CircuitExpression:
    """Parallel composition; nested concatenations are flattened."""
    if not operands:
        raise CircuitError("concatenation of an empty operand list")
    flat: list[CircuitExpression] = []
    for op in operands:
        if isinstance(op, Concatenation):
            flat.extend(op.operands)
        else:
            flat.append(op)
    if len(flat) == 1:
        return flat[0]
    return Concatenation(tuple(flat))


def feedback(inner: CircuitExpression, out_index: int, in_index: int) -> Feedback:
    return Feedback(inner, out_index, in_index)


def compose_images(outer: tuple[int, ...], inner: tuple[int, ...]) -> tuple[int, ...]:
    """Image tuple of outer o inner (inner applied first)."""
    if len(outer) != len(inner):
        raise CircuitError("permutation size mismatch")
    return tuple(outer[inner[i] - 1] for i in range(len(inner)))


def invert_image(image: tuple[int, ...]) -> tuple[int, ...]:
    inv = [0] * len(image)
    for i, v in enumerate(image):
        inv[v - 1] = i + 1
    return tuple(inv)


# -- simplification --------------------------------------------------------

_MAX_PASSES = 10_000


def simplify(expr: CircuitExpression) -> CircuitExpression:
    """Rewrite to a fixpoint.

    Rules: permutation fusion in series, identity absorption in series,
    adjacent-identity merging in concatenations, right-leaning series
    chains, and block-parallel fusion of aligned concatenations.  The
    result evaluates to the same triplet as the input.
    """
    for _ in range(_MAX_PASSES):
        rewritten = _simplify_node(expr)
        if rewritten == expr:
            return expr
        expr = rewritten
    raise CircuitError("expression simplification did not reach a fixpoint")


def _simplify_node(expr: CircuitExpression) -> CircuitExpression:
    if isinstance(expr, SeriesProduct):
        return _rewrite_series(_simplify_node(expr.left), _simplify_node(expr.right))
    if isinstance(expr, Concatenation):
        return _rewrite_concat([_simplify_node(op) for op in expr.operands])
    if isinstance(expr, Feedback):
        return Feedback(_simplify_node(expr.inner), expr.out_index, expr.in_index)
    if isinstance(expr, Permutation):
        if expr.image == tuple(range(1, len(expr.image) + 1)):
            return Identity(len(expr.image))
        return expr
    return expr


def _rewrite_series(left: CircuitExpression, right: CircuitExpression) -> CircuitExpression:
    # associativity: (a <| b) <| c -> a <| (b <| c)
    if isinstance(left, SeriesProduct):
        return SeriesProduct(left.left, SeriesProduct(left.right, right))
    if isinstance(left, Identity):
        return right
    if isinstance(right, Identity):
        return left
    if isinstance(left, Permutation):
        if isinstance(right, Permutation):
            image = compose_images(left.image, right.image)
            if image == tuple(range(1, len(image) + 1)):
                return Identity(len(image))
            return Permutation(image)
        if isinstance(right, SeriesProduct) and isinstance(right.left, Permutation):
            fused = _rewrite_series(left, right.left)
            return SeriesProduct(fused, right.right)
    if isinstance(left, Concatenation) and isinstance(right, Concatenation):
        blocks = _aligned_blocks(left.operands, right.operands)
        if blocks is not None and len(blocks) > 1:
            return Concatenation(tuple(
                SeriesProduct(_of_block(lb), _of_block(rb)) for lb, rb in blocks))
    return SeriesProduct(left, right)


def _of_block(block: Sequence[CircuitExpression]) -> CircuitExpression:
    return block[0] if len(block) == 1 else Concatenation(tuple(block))


def _aligned_blocks(xs: Sequence[CircuitExpression], ys: Sequence[CircuitExpression]):
    """Partition both operand lists at matching channel-count boundaries."""
    blocks = []
    i = j = 0
    while i < len(xs) and j < len(ys):
        bi, bj = i + 1, j + 1
        si, sj = xs[i].cdim, ys[j].cdim
        while si != sj:
            if si < sj:
                if bi >= len(xs):
                    return None
                si += xs[bi].cdim
                bi += 1
            else:
                if bj >= len(ys):
                    return None
                sj += ys[bj].cdim
                bj += 1
        blocks.append((tuple(xs[i:bi]), tuple(ys[j:bj])))
        i, j = bi, bj
    if i != len(xs) or j != len(ys):
        return None
    return blocks


def _rewrite_concat(operands: list[CircuitExpression]) -> CircuitExpression:
    flat: list[CircuitExpression] = []
    for op in operands:
        if isinstance(op, Concatenation):
            flat.extend(op.operands)
        else:
            flat.append(op)
    merged: list[CircuitExpression] = []
    for op in flat:
        if isinstance(op, Identity) and merged and isinstance(merged[-1], Identity):
            merged[-1] = Identity(merged[-1].n + op.n)
        else:
            merged.append(op)
    if len(merged) == 1:
        return merged[0]
    return Concatenation(tuple(merged))


# -- JSON serialization -----------------------------------------------------

def expression_to_json(expr: CircuitExpression) -> dict:
    """Tagged-union encoding; feedback indices are 1-based."""
    if isinstance(expr, Identity):
        return {"op": "id", "n": expr.n}
    if isinstance(expr, Permutation):
        return {"op": "perm", "image": list(expr.image)}
    if isinstance(expr, ComponentRef):
        return {"op": "ref", "component": expr.component, "label": expr.label,
                "cdim": expr.channels,
                "params": [[name, params.render(value)]
                           for name, value in expr.params]}
    if isinstance(expr, SeriesProduct):
        return {"op": "series", "left": expression_to_json(expr.left),
                "right": expression_to_json(expr.right)}
    if isinstance(expr, Concatenation):
        return {"op": "concat",
                "operands": [expression_to_json(op) for op in expr.operands]}
    if isinstance(expr, Feedback):
        return {"op": "feedback", "expr": expression_to_json(expr.inner),
                "out": expr.out_index, "in": expr.in_index}
    raise CircuitError(f"cannot serialize node {expr!r}")


def expression_from_json(obj: dict) -> CircuitExpression:
    kind = obj.get("op")
    if kind == "id":
        return Identity(int(obj["n"]))
    if kind == "perm":
        return Permutation(tuple(int(v) for v in obj["image"]))
    if kind == "ref":
        return ComponentRef(
            obj["component"], obj["label"], int(obj["cdim"]),
            tuple((name, params.parse(text)) for name, text in obj.get("params", [])))
    if kind == "series":
        return SeriesProduct(expression_from_json(obj["left"]),
                             expression_from_json(obj["right"]))
    if kind == "concat":
        return Concatenation(tuple(expression_from_json(op)
                                   for op in obj["operands"]))
    if kind == "feedback":
        return Feedback(expression_from_json(obj["expr"]),
                        int(obj["out"]), int(obj["in"]))
    raise CircuitError(f"unknown expression tag {kind!r}")


# -- text rendering ----------------------------------------------------------

class _Tile:
    """A rectangle of text with port rows on its left and right edges."""

    def __init__(self, lines: list[str], ports_in: list[int], ports_out: list[int]):
        width = max((len(line) for line in lines), default=0)
        self.lines = [line.ljust(width) for line in lines]
        self.ports_in = ports_in
        self.ports_out = ports_out

    @property
    def width(self) -> int:
        return len(self.lines[0]) if self.lines else 0

    @property
    def height(self) -> int:
        return len(self.lines)


def render_text(expr: CircuitExpression) -> str:
    """Deterministic box rendering: channels flow left to right,
    concatenation stacks vertically, series chains horizontally."""
    tile = _tile(expr)
    return "\n".join(line.rstrip() for line in tile.lines)


def _tile(expr: CircuitExpression) -> _Tile:
    if isinstance(expr, Identity):
        rows = list(range(expr.n))
        return _Tile(["──"] * expr.n, rows, rows)
    if isinstance(expr, ComponentRef):
        return _box_tile(expr.label or expr.component, expr.cdim)
    if isinstance(expr, Permutation):
        return _box_tile("P(" + " ".join(map(str, expr.image)) + ")", expr.cdim)
    if isinstance(expr, SeriesProduct):
        return _series_tile(_tile(expr.right), _tile(expr.left))
    if isinstance(expr, Concatenation):
        return _stack_tiles([_tile(op) for op in expr.operands])
    if isinstance(expr, Feedback):
        return _loop_tile(_tile(expr.inner), expr.out_index, expr.in_index)
    raise CircuitError(f"cannot render node {expr!r}")


def _box_tile(name: str, n: int) -> _Tile:
    inner = max(len(name) + 2, 4)
    top = "┌" + "─" * inner + "┐"
    bottom = "└" + "─" * inner + "┘"
    lines = [top]
    for row in range(n):
        text = f" {name} ".ljust(inner) if row == 0 else " " * inner
        lines.append("┤" + text + "├")
    lines.append(bottom)
    ports = list(range(1, n + 1))
    return _Tile(lines, ports, ports)


def _series_tile(upstream: _Tile, downstream: _Tile) -> _Tile:
    n = len(upstream.ports_out)
    height = max(upstream.height, downstream.height)
    left = upstream.lines + [" " * upstream.width] * (height - upstream.height)
    right = downstream.lines + [" " * downstream.width] * (height - downstream.height)
    gap = 2 * n + 1
    canvas = [[" "] * gap for _ in range(height)]
    for ch in range(n):
        a = upstream.ports_out[ch]
        b = downstream.ports_in[ch]
        lane = 2 * ch + 1
        if a == b:
            for x in range(gap):
                canvas[a][x] = "─"
            continue
        for x in range(lane):
            canvas[a][x] = "─"
        for x in range(lane + 1, gap):
            canvas[b][x] = "─"
        step = 1 if b > a else -1
        for y in range(a + step, b, step):
            canvas[y][lane] = "│"
        canvas[a][lane] = "┐" if b > a else "┘"
        canvas[b][lane] = "└" if b > a else "┌"
    lines = [left[y] + "".join(canvas[y]) + right[y] for y in range(height)]
    return _Tile(lines, upstream.ports_in, downstream.ports_out)


def _stack_tiles(tiles: list[_Tile]) -> _Tile:
    width = max(t.width for t in tiles)
    lines: list[str] = []
    ports_in: list[int] = []
    ports_out: list[int] = []
    for i, t in enumerate(tiles):
        if i:
            lines.append(" " * width)
        base = len(lines)
        for y, line in enumerate(t.lines):
            pad = "─" if y in t.ports_out else " "
            lines.append(line + pad * (width - t.width))
        ports_in.extend(base + y for y in t.ports_in)
        ports_out.extend(base + y for y in t.ports_out)
    return _Tile(lines, ports_in, ports_out)


def _loop_tile(inner: _Tile, out_index: int, in_index: int) -> _Tile:
    # feedback wire routed across the row above the inner tile; the inner
    # tile sits at column 3, loop lanes at columns 1 and width-2
    w = inner.width
    width = w + 6
    a = inner.ports_out[out_index - 1] + 1
    b = inner.ports_in[in_index - 1] + 1
    kept_in = [y + 1 for i, y in enumerate(inner.ports_in) if i != in_index - 1]
    kept_out = [y + 1 for i, y in enumerate(inner.ports_out) if i != out_index - 1]
    grid = [[" "] * width for _ in range(inner.height + 1)]
    for y, line in enumerate(inner.lines, start=1):
        for x, c in enumerate(line):
            grid[y][3 + x] = c
    grid[0][1] = "┌"
    grid[0][width - 2] = "┐"
    for x in range(2, width - 2):
        grid[0][x] = "─"
    for y in range(1, a):
        grid[y][width - 2] = "│"
    grid[a][width - 2] = "┘"
    grid[a][width - 3] = "─"
    for y in range(1, b):
        grid[y][1] = "│"
    grid[b][1] = "└"
    grid[b][2] = "─"
    for y in kept_in:
        grid[y][0] = "─"
        if grid[y][1] == " ":
            grid[y][1] = "─"
        grid[y][2] = "─"
    for y in kept_out:
        grid[y][width - 3] = "─"
        if grid[y][width - 2] == " ":
            grid[y][width - 2] = "─"
        grid[y][width - 1] = "─"
    return _Tile(["".join(row) for row in grid], kept_in, kept_out)
