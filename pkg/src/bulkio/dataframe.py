"""Minimal declarative analysis layer over a pluggable column source.

:func:`make_source` opens a file as a :class:`DataSource` with one or more
slots, each owning its own branch readers and buffers over an entry range
aligned to basket boundaries. :class:`Frame` composes filters and derived
columns lazily; nothing is read until an action (count / sum / histogram)
runs. The frame dispatches per event through the node chain — one
indirection per column per event — while :func:`direct_sum` and friends
bypass the frame and reduce over the source's per-basket buffers.

Predicates and expressions are plain Python callables over the named
columns' values, applied in declaration order.
"""

from __future__ import annotations

from bisect import bisect_left
from os import PathLike
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np

from .errors import (
    FormatError,
    TypeMismatch,
    UnknownBranch,
    UnknownColumn,
)
from .format import ElementType, ShapeKind
from .reader import BranchReader, BulkBuffer, CountBuffer, TreeFile

import enum


class SourceMode(enum.Enum):
    PER_ENTRY = "per-entry"
    BULK = "bulk"


def _slot_splits(firsts: Sequence[int], n_entries: int, n_slots: int) -> list[int]:
    """Split points for n_slots contiguous ranges, snapped up to basket starts."""
    splits = [0]
    for s in range(1, n_slots):
        ideal = -(-s * n_entries // n_slots)  # ceil
        pos = bisect_left(firsts, ideal)
        split = firsts[pos] if pos < len(firsts) else n_entries
        splits.append(max(min(split, n_entries), splits[-1]))
    splits.append(n_entries)
    return splits


class _PerEntryColumn:
    """One per-event library call per value, through the branch reader."""

    __slots__ = ("read",)

    def __init__(self, rd: BranchReader):
        self.read = rd.get_entry


class _BulkScalarColumn:
    """Values served from a serialized basket buffer, refilled per basket."""

    __slots__ = ("_rd", "_buf", "_view", "_first", "_end")

    def __init__(self, rd: BranchReader):
        self._rd = rd
        self._buf = BulkBuffer()
        self._view = None
        self._first = 0
        self._end = 0

    def _refill(self, entry: int) -> None:
        first, _ = self._rd.basket_bounds(entry)
        n = self._rd.get_entries_serialized(first, self._buf)
        self._view = self._buf.as_array()
        self._first = first
        self._end = first + n

    def read(self, entry: int):
        if entry >= self._end or entry < self._first:
            self._refill(entry)
        return self._view.item(entry - self._first)


class _BulkBoolColumn(_BulkScalarColumn):
    __slots__ = ()

    def read(self, entry: int):
        if entry >= self._end or entry < self._first:
            self._refill(entry)
        b = self._view.item(entry - self._first)
        if b > 1:
            raise FormatError(f"invalid BOOL byte 0x{b:02X}")
        return bool(b)


class _BulkArrayColumn:
    """Per-event arrays rebuilt from the serialized buffer and count buffer."""

    __slots__ = ("_rd", "_buf", "_cbuf", "_view", "_offsets", "_native",
                 "_is_bool", "_first", "_end")

    def __init__(self, rd: BranchReader):
        self._rd = rd
        self._buf = BulkBuffer()
        self._cbuf = CountBuffer()
        self._view = None
        self._offsets = None
        self._native = rd.element_type.np_native
        self._is_bool = rd.element_type is ElementType.BOOL
        self._first = 0
        self._end = 0

    def _refill(self, entry: int) -> None:
        first, _ = self._rd.basket_bounds(entry)
        n = self._rd.get_entries_serialized(first, self._buf, self._cbuf)
        self._view = self._buf.as_array()
        self._offsets = self._cbuf.offsets()
        self._first = first
        self._end = first + n

    def read(self, entry: int) -> np.ndarray:
        if entry >= self._end or entry < self._first:
            self._refill(entry)
        local = entry - self._first
        offs = self._offsets
        out = self._view[int(offs[local]):int(offs[local + 1])]
        if self._is_bool:
            if len(out) and int(out.max()) > 1:
                raise FormatError("invalid BOOL byte")
            return out.astype("bool")
        return out.astype(self._native)


class DataSource:
    """Column-serving seam beneath the frame layer.

    Open it via :func:`make_source`. Column readers for the same column on
    different slots never share state; slot entry ranges partition
    [0, n_entries) on basket boundaries.
    """

    def __init__(self, path: Union[str, PathLike], tree: Optional[str] = None,
                 mode: SourceMode = SourceMode.PER_ENTRY, n_slots: int = 1):
        if n_slots < 1:
            raise ValueError("n_slots must be >= 1")
        self._tf = TreeFile(path)
        if tree is not None and tree != self._tf.tree_name:
            name = self._tf.tree_name
            self._tf.close()
            raise UnknownBranch(f"no tree {tree!r} in file (found {name!r})")
        self.mode = SourceMode(mode)
        self.n_slots = n_slots
        footer = self._tf.footer
        bounds = None
        for br in footer.branches:
            b = [bk.first_entry for bk in br.baskets]
            if bounds is None:
                bounds = b
            elif b != bounds:
                self._tf.close()
                raise FormatError(
                    "branches have differing basket boundaries; cannot "
                    "partition into slots"
                )
        splits = _slot_splits(bounds or [], footer.n_entries, n_slots)
        self.slot_ranges = list(zip(splits[:-1], splits[1:]))
        self._readers: list[BranchReader] = []

    @property
    def n_entries(self) -> int:
        return self._tf.n_entries

    @property
    def column_names(self) -> list[str]:
        return self._tf.branch_names

    def column_info(self, name: str):
        """(element type, shape) of a catalog column; UnknownColumn if absent."""
        try:
            idx = self._tf.footer.branch_index(name)
        except KeyError:
            raise UnknownColumn(f"no column {name!r}") from None
        br = self._tf.footer.branches[idx]
        return br.element, br.shape

    @property
    def baskets_read(self) -> int:
        """Baskets decompressed so far by readers this source created."""
        total = 0
        for rd in self._readers:
            total += rd.baskets_read
            cr = getattr(rd, "count_reader", None)
            if cr is not None:
                total += cr.baskets_read
        return total

    def _make_reader(self, column: str) -> BranchReader:
        try:
            rd = self._tf.branch(column)
        except UnknownBranch:
            raise UnknownColumn(f"no column {column!r}") from None
        self._readers.append(rd)
        return rd

    def reader(self, column: str, slot: int = 0):
        """A fresh per-slot column reader with a ``read(entry)`` method."""
        if not 0 <= slot < self.n_slots:
            raise ValueError(f"slot {slot} not in [0, {self.n_slots})")
        rd = self._make_reader(column)
        if self.mode is SourceMode.PER_ENTRY:
            return _PerEntryColumn(rd)
        if rd.descriptor.shape.kind is ShapeKind.SCALAR:
            if rd.element_type is ElementType.BOOL:
                return _BulkBoolColumn(rd)
            return _BulkScalarColumn(rd)
        return _BulkArrayColumn(rd)

    def blocks(self, column: str, slot: Optional[int] = None) -> Iterator[np.ndarray]:
        """Serialized per-basket element views over a slot range (or all slots).

        This is the bulk seam the direct reductions consume: the views decode
        lazily, so deserialization happens inside the caller's loop.
        """
        ranges = self.slot_ranges if slot is None else [self.slot_ranges[slot]]
        rd = self._make_reader(column)
        needs_counts = rd.descriptor.shape.kind is ShapeKind.VAR_ARRAY

        def gen():
            buf = BulkBuffer()
            cbuf = CountBuffer() if needs_counts else None
            for start, stop in ranges:
                entry = start
                while entry < stop:
                    n = rd.get_entries_serialized(entry, buf, cbuf)
                    yield buf.as_array()
                    entry += n

        return gen()

    def close(self) -> None:
        self._tf.close()

    def __enter__(self) -> "DataSource":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()


def make_source(path: Union[str, PathLike], tree: Optional[str] = None,
                mode: SourceMode = SourceMode.PER_ENTRY,
                n_slots: int = 1) -> DataSource:
    """Open a bulk file as a dataframe data source."""
    return DataSource(path, tree=tree, mode=mode, n_slots=n_slots)


class _FilterNode:
    __slots__ = ("fn", "columns")

    def __init__(self, fn: Callable, columns: tuple[str, ...]):
        self.fn = fn
        self.columns = columns


class _DefineNode:
    __slots__ = ("name", "fn", "columns")

    def __init__(self, name: str, fn: Callable, columns: tuple[str, ...]):
        self.name = name
        self.fn = fn
        self.columns = columns


def _hist_scalar(v: float, lo: float, width: float, bins: int) -> int:
    """Bin index for an in-range value; must mirror _hist_vector exactly."""
    i = int((v - lo) / width)
    return bins - 1 if i >= bins else i


def _hist_vector(a8: np.ndarray, lo: float, hi: float, width: float,
                 bins: int) -> np.ndarray:
    mask = (a8 >= lo) & (a8 < hi)
    idx = ((a8[mask] - lo) / width).astype(np.int64)
    np.minimum(idx, bins - 1, out=idx)
    return np.bincount(idx, minlength=bins).astype(np.int64)


class Frame:
    """Lazily composed filter/define graph over a data source.

    Nodes apply in declaration order; a define's column is visible to every
    later node and to actions. Actions fold per-slot results in slot order,
    with sums accumulated in float64 per slot.
    """

    def __init__(self, source: DataSource, _nodes: tuple = ()):
        self._source = source
        self._nodes = _nodes

    # --- composition ---

    def _known_columns(self) -> set[str]:
        names = set(self._source.column_names)
        for node in self._nodes:
            if isinstance(node, _DefineNode):
                names.add(node.name)
        return names

    def _check_columns(self, columns: Sequence[str]) -> tuple[str, ...]:
        known = self._known_columns()
        for c in columns:
            if c not in known:
                raise UnknownColumn(f"no column {c!r}")
        return tuple(columns)

    def filter(self, fn: Callable[..., bool], columns: Sequence[str]) -> "Frame":
        """Keep events for which ``fn(*column values)`` is true."""
        cols = self._check_columns(columns)
        return Frame(self._source, self._nodes + (_FilterNode(fn, cols),))

    def define(self, name: str, fn: Callable, columns: Sequence[str]) -> "Frame":
        """Add a derived column computed from the named columns."""
        if name in self._known_columns():
            raise ValueError(f"column {name!r} already exists")
        cols = self._check_columns(columns)
        return Frame(self._source, self._nodes + (_DefineNode(name, fn, cols),))

    # --- actions ---

    def count(self) -> int:
        """Number of events passing all filters."""
        return self._fold(self._run_slot_count, 0, int.__add__)

    def sum(self, column: str) -> float:
        """Float64 sum of a scalar numeric column over passing events."""
        self._check_action_column(column)
        return self._fold(
            lambda slot: self._run_slot_sum(slot, column), 0.0, float.__add__)

    def histogram(self, column: str, bins: int, lo: float, hi: float) -> np.ndarray:
        """Fixed-width histogram counts of a scalar numeric column on [lo, hi)."""
        if bins < 1:
            raise ValueError("bins must be >= 1")
        if not hi > lo:
            raise ValueError("need hi > lo")
        self._check_action_column(column)
        return self._fold(
            lambda slot: self._run_slot_hist(slot, column, bins, lo, hi),
            np.zeros(bins, dtype=np.int64), np.ndarray.__add__)

    def _check_action_column(self, column: str) -> None:
        defined = {n.name for n in self._nodes if isinstance(n, _DefineNode)}
        if column in defined:
            return
        etype, shape = self._source.column_info(column)
        if shape.kind is not ShapeKind.SCALAR:
            raise TypeMismatch(f"column {column!r} is not scalar")
        if not etype.is_numeric:
            raise TypeMismatch(f"column {column!r} is not numeric")

    # --- execution ---

    def _fold(self, run_slot, zero, combine):
        result = zero
        for slot in range(self._source.n_slots):
            result = combine(result, run_slot(slot))
        return result

    def _compile_slot(self, slot: int):
        """Accessors for every referenced column plus the filter steps."""
        accessors: dict[str, Callable] = {}

        def accessor(name: str) -> Callable:
            acc = accessors.get(name)
            if acc is None:
                acc = self._source.reader(name, slot).read
                accessors[name] = acc
            return acc

        filter_steps = []
        for node in self._nodes:
            args = tuple(accessor(c) for c in node.columns)
            if isinstance(node, _DefineNode):
                fn = node.fn
                if len(args) == 1:
                    a0 = args[0]
                    accessors[node.name] = lambda e, fn=fn, a0=a0: fn(a0(e))
                else:
                    accessors[node.name] = (
                        lambda e, fn=fn, args=args: fn(*(a(e) for a in args)))
            else:
                filter_steps.append((node.fn, args))
        return accessor, filter_steps

    def _passes(self, entry: int, filter_steps) -> bool:
        for fn, args in filter_steps:
            if not fn(*(a(entry) for a in args)):
                return False
        return True

    def _run_slot_count(self, slot: int) -> int:
        start, stop = self._source.slot_ranges[slot]
        _, filter_steps = self._compile_slot(slot)
        if not filter_steps:
            return stop - start
        n = 0
        for entry in range(start, stop):
            if self._passes(entry, filter_steps):
                n += 1
        return n

    def _run_slot_sum(self, slot: int, column: str) -> float:
        start, stop = self._source.slot_ranges[slot]
        accessor, filter_steps = self._compile_slot(slot)
        read = accessor(column)
        acc = 0.0
        if not filter_steps:
            for entry in range(start, stop):
                acc += read(entry)
        else:
            for entry in range(start, stop):
                if self._passes(entry, filter_steps):
                    acc += read(entry)
        return acc

    def _run_slot_hist(self, slot: int, column: str, bins: int,
                       lo: float, hi: float) -> np.ndarray:
        start, stop = self._source.slot_ranges[slot]
        accessor, filter_steps = self._compile_slot(slot)
        read = accessor(column)
        width = (hi - lo) / bins
        counts = [0] * bins
        for entry in range(start, stop):
            if filter_steps and not self._passes(entry, filter_steps):
                continue
            v = read(entry)
            if lo <= v < hi:
                counts[_hist_scalar(v, lo, width, bins)] += 1
        return np.asarray(counts, dtype=np.int64)


# --- direct (frame-bypassing) reductions over source buffers ---

def _check_direct_column(source: DataSource, column: str) -> None:
    etype, shape = source.column_info(column)
    if shape.kind is not ShapeKind.SCALAR:
        raise TypeMismatch(f"column {column!r} is not scalar")
    if not etype.is_numeric:
        raise TypeMismatch(f"column {column!r} is not numeric")


def direct_count(source: DataSource) -> int:
    """Event count straight from the source (no frame dispatch)."""
    return sum(stop - start for start, stop in source.slot_ranges)


def direct_sum(source: DataSource, column: str) -> float:
    """Float64 column sum reduced basket-by-basket over source buffers."""
    _check_direct_column(source, column)
    total = 0.0
    for slot in range(source.n_slots):
        acc = 0.0
        for view in source.blocks(column, slot):
            acc += float(np.sum(view, dtype=np.float64))
        total += acc
    return total


def direct_histogram(source: DataSource, column: str, bins: int,
                     lo: float, hi: float) -> np.ndarray:
    """Histogram reduced basket-by-basket; bit-identical to the frame action."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if not hi > lo:
        raise ValueError("need hi > lo")
    _check_direct_column(source, column)
    width = (hi - lo) / bins
    total = np.zeros(bins, dtype=np.int64)
    for slot in range(source.n_slots):
        for view in source.blocks(column, slot):
            total += _hist_vector(view.astype(np.float64), lo, hi, width, bins)
    return total
