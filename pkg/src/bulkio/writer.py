"""Tree writer: accumulates row-atomic event data and flushes aligned baskets.

All branches flush at the same entry boundaries (every ``basket_capacity``
entries), so every branch of a file has identical basket spans. Variable
arrays are backed by a writer-managed u32 count branch, visible in the
footer like any other branch.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from os import PathLike
from typing import Sequence, Union

import numpy as np

from .errors import SchemaError, ShapeError, WriteError, WriterClosed
from .format import (
    BasketDescriptor,
    BranchDescriptor,
    BranchShape,
    Codec,
    ElementType,
    FileFooter,
    ShapeKind,
    compress_payload,
    footer_to_bytes,
    write_header,
)

DEFAULT_BASKET_CAPACITY = 8192

_U64 = struct.Struct(">Q")

SchemaEntry = tuple[str, ElementType, BranchShape]


@dataclass(frozen=True)
class WriteStats:
    n_entries: int
    n_baskets: int
    bytes_written: int


class _Branch:
    __slots__ = (
        "name", "etype", "kind", "fixed_len", "count", "is_count",
        "pending", "baskets", "count_index",
    )

    def __init__(self, name: str, etype: ElementType, kind: ShapeKind,
                 fixed_len: int = 0, is_count: bool = False):
        self.name = name
        self.etype = etype
        self.kind = kind
        self.fixed_len = fixed_len
        self.count: "_Branch | None" = None  # var branches: managed count branch
        self.count_index = -1
        self.is_count = is_count
        self.pending: list = []
        self.baskets: list[BasketDescriptor] = []

    def encode_pending(self) -> bytes:
        return _encode_values(self.pending, self.etype, self.kind)

    def descriptor(self) -> BranchDescriptor:
        if self.kind is ShapeKind.FIXED_ARRAY:
            shape = BranchShape(self.kind, fixed_len=self.fixed_len)
        elif self.kind is ShapeKind.VAR_ARRAY:
            shape = BranchShape(self.kind, count_branch=self.count_index)
        else:
            shape = BranchShape(self.kind)
        return BranchDescriptor(self.name, self.etype, shape, self.baskets)


def _encode_values(values, etype: ElementType, kind: ShapeKind) -> bytes:
    """Big-endian payload for one basket's worth of values."""
    if kind is ShapeKind.VAR_ARRAY:
        if not values:
            return b""
        flat: list = []
        for row in values:
            flat.extend(row)
        values = flat
    if etype is ElementType.BOOL:
        return np.asarray(values, dtype=bool).astype("u1").tobytes()
    return np.asarray(values, dtype=etype.np_disk).tobytes()


def _encode_array(arr: np.ndarray, etype: ElementType) -> bytes:
    if etype is ElementType.BOOL:
        return arr.astype(bool).astype("u1").tobytes()
    return np.ascontiguousarray(arr).astype(etype.np_disk, copy=False).tobytes()


class TreeWriter:
    """Builds a bulk file from a schema of (name, element type, shape) entries.

    Use as a context manager or call :meth:`close` explicitly; close flushes
    the final partial basket and writes the footer.
    """

    def __init__(self, path: Union[str, PathLike], schema: Sequence[SchemaEntry],
                 basket_capacity_entries: int = DEFAULT_BASKET_CAPACITY,
                 codec: Codec = Codec.NONE, tree_name: str = "tree"):
        if not schema:
            raise SchemaError("schema is empty")
        if basket_capacity_entries < 1:
            raise SchemaError("basket capacity must be >= 1")
        self._capacity = int(basket_capacity_entries)
        self._codec = Codec(codec)
        self._tree_name = tree_name
        self._branches: list[_Branch] = []   # footer order: user, then counts
        self._by_name: dict[str, _Branch] = {}
        self._user: list[_Branch] = []
        self._build_branches(schema)
        self._n_filled = 0
        self._basket_first = 0  # first entry of the currently open basket
        self._closed = False
        try:
            self._fobj = open(path, "wb")
            write_header(self._fobj)
        except OSError as exc:
            raise WriteError(f"cannot create {path}: {exc}") from exc

    def _build_branches(self, schema: Sequence[SchemaEntry]) -> None:
        counts: dict[str, _Branch] = {}
        for name, etype, shape in schema:
            if not name:
                raise SchemaError("branch name must be non-empty")
            if name in self._by_name:
                raise SchemaError(f"duplicate branch name {name!r}")
            etype = ElementType(etype)
            br = _Branch(name, etype, shape.kind, shape.fixed_len)
            self._by_name[name] = br
            self._user.append(br)
            if shape.kind is ShapeKind.VAR_ARRAY:
                count_name = shape.count_name or f"{name}.count"
                if count_name in self._by_name and count_name not in counts:
                    raise SchemaError(
                        f"count branch name {count_name!r} collides with a branch"
                    )
                cb = counts.get(count_name)
                if cb is None:
                    cb = _Branch(count_name, ElementType.U32, ShapeKind.SCALAR,
                                 is_count=True)
                    counts[count_name] = cb
                    self._by_name[count_name] = cb
                br.count = cb
        self._branches = self._user + list(counts.values())
        for i, br in enumerate(self._branches):
            if br.count is not None:
                br.count_index = self._branches.index(br.count)

    # --- filling ---

    @property
    def n_entries(self) -> int:
        return self._n_filled

    @property
    def branch_names(self) -> list[str]:
        return [b.name for b in self._branches]

    def fill(self, **values) -> int:
        """Append one event; returns the entry index it received."""
        self._check_open()
        self._check_arity(values)
        checked = []
        count_values: dict[str, int] = {}
        for br in self._user:
            v = values[br.name]
            if br.kind is ShapeKind.SCALAR:
                if isinstance(v, (list, tuple, np.ndarray, bytes)):
                    raise ShapeError(f"branch {br.name!r} is scalar, got a sequence")
            else:
                try:
                    n = len(v)
                except TypeError:
                    raise ShapeError(
                        f"branch {br.name!r} is an array branch, got a scalar"
                    ) from None
                if br.kind is ShapeKind.FIXED_ARRAY and n != br.fixed_len:
                    raise ShapeError(
                        f"branch {br.name!r} expects {br.fixed_len} elements, got {n}"
                    )
                if br.kind is ShapeKind.VAR_ARRAY:
                    prev = count_values.setdefault(br.count.name, n)
                    if prev != n:
                        raise ShapeError(
                            f"shared count branch {br.count.name!r} got lengths "
                            f"{prev} and {n} in one event"
                        )
            checked.append((br, v))
        for br, v in checked:
            br.pending.append(v)
        for cname, n in count_values.items():
            self._by_name[cname].pending.append(n)
        entry = self._n_filled
        self._n_filled += 1
        if self._n_filled - self._basket_first == self._capacity:
            self._flush_pending()
        return entry

    def extend(self, **arrays) -> int:
        """Append many events at once; returns the number appended.

        Scalar branches take a 1-D array, fixed arrays an (n, k) array, and
        var arrays either a (flat_values, counts) pair or a sequence of rows.
        """
        self._check_open()
        self._check_arity(arrays)
        cols: dict[str, tuple] = {}
        m = -1

        def check_len(name, n):
            nonlocal m
            if m == -1:
                m = n
            elif n != m:
                raise ShapeError(
                    f"branch {name!r} got {n} events, expected {m}"
                )

        count_arrays: dict[str, np.ndarray] = {}
        for br in self._user:
            v = arrays[br.name]
            if br.kind is ShapeKind.SCALAR:
                arr = np.asarray(v)
                if arr.ndim != 1:
                    raise ShapeError(f"branch {br.name!r} expects a 1-D array")
                check_len(br.name, len(arr))
                cols[br.name] = (arr,)
            elif br.kind is ShapeKind.FIXED_ARRAY:
                arr = np.asarray(v)
                if arr.ndim != 2 or arr.shape[1] != br.fixed_len:
                    raise ShapeError(
                        f"branch {br.name!r} expects shape (n, {br.fixed_len})"
                    )
                check_len(br.name, len(arr))
                cols[br.name] = (arr,)
            else:
                if isinstance(v, tuple) and len(v) == 2:
                    flat = np.asarray(v[0])
                    counts = np.asarray(v[1], dtype="u4")
                else:
                    rows = [np.asarray(r) for r in v]
                    counts = np.asarray([len(r) for r in rows], dtype="u4")
                    flat = (np.concatenate(rows) if rows
                            else np.empty(0, dtype=br.etype.np_native))
                if counts.ndim != 1 or flat.ndim != 1:
                    raise ShapeError(f"branch {br.name!r}: malformed var input")
                if int(counts.sum()) != len(flat):
                    raise ShapeError(
                        f"branch {br.name!r}: counts sum to {int(counts.sum())}, "
                        f"got {len(flat)} elements"
                    )
                check_len(br.name, len(counts))
                prev = count_arrays.get(br.count.name)
                if prev is None:
                    count_arrays[br.count.name] = counts
                elif not np.array_equal(prev, counts):
                    raise ShapeError(
                        f"shared count branch {br.count.name!r} got differing counts"
                    )
                offsets = np.zeros(len(counts) + 1, dtype="i8")
                np.cumsum(counts, out=offsets[1:])
                cols[br.name] = (flat, counts, offsets)
        if m <= 0:
            return 0

        pos = 0
        while pos < m:
            open_count = self._n_filled - self._basket_first
            take = min(self._capacity - open_count, m - pos)
            if open_count == 0 and take == self._capacity:
                self._flush_slices(cols, count_arrays, pos, pos + take)
                self._n_filled += take
            else:
                self._append_slices(cols, count_arrays, pos, pos + take)
                self._n_filled += take
                if self._n_filled - self._basket_first == self._capacity:
                    self._flush_pending()
            pos += take
        return m

    def _check_open(self) -> None:
        if self._closed:
            raise WriterClosed("writer already closed")

    def _check_arity(self, values: dict) -> None:
        for br in self._user:
            if br.name not in values:
                raise ShapeError(f"missing value for branch {br.name!r}")
        for name in values:
            br = self._by_name.get(name)
            if br is None:
                raise ShapeError(f"unknown branch {name!r}")
            if br.is_count:
                raise ShapeError(f"count branch {name!r} is writer-managed")

    # --- basket emission ---

    def _append_slices(self, cols, count_arrays, lo: int, hi: int) -> None:
        for br in self._user:
            c = cols[br.name]
            if br.kind is ShapeKind.SCALAR:
                br.pending.extend(c[0][lo:hi].tolist())
            elif br.kind is ShapeKind.FIXED_ARRAY:
                br.pending.extend(list(c[0][lo:hi]))
            else:
                flat, _, offsets = c
                br.pending.extend(
                    flat[offsets[i]:offsets[i + 1]] for i in range(lo, hi)
                )
        for cname, counts in count_arrays.items():
            self._by_name[cname].pending.extend(counts[lo:hi].tolist())

    def _flush_slices(self, cols, count_arrays, lo: int, hi: int) -> None:
        for br in self._user:
            c = cols[br.name]
            if br.kind is ShapeKind.VAR_ARRAY:
                flat, _, offsets = c
                payload = _encode_array(flat[offsets[lo]:offsets[hi]], br.etype)
            else:
                payload = _encode_array(c[0][lo:hi], br.etype)
            self._write_basket(br, payload, hi - lo)
        for cname, counts in count_arrays.items():
            cb = self._by_name[cname]
            self._write_basket(cb, _encode_array(counts[lo:hi], cb.etype), hi - lo)
        self._basket_first += hi - lo

    def _flush_pending(self) -> None:
        n = self._n_filled - self._basket_first
        if n == 0:
            return
        for br in self._branches:
            payload = br.encode_pending()
            br.pending.clear()
            self._write_basket(br, payload, n)
        self._basket_first = self._n_filled

    def _write_basket(self, br: _Branch, payload: bytes, n_entries: int) -> None:
        compressed = compress_payload(payload, self._codec)
        try:
            offset = self._fobj.tell()
            self._fobj.write(compressed)
        except OSError as exc:
            self._closed = True
            raise WriteError(f"basket write failed: {exc}") from exc
        br.baskets.append(BasketDescriptor(
            first_entry=self._basket_first,
            n_entries=n_entries,
            file_offset=offset,
            compressed_size=len(compressed),
            uncompressed_size=len(payload),
            codec=self._codec,
        ))

    # --- closing ---

    def close(self) -> WriteStats:
        """Flush the open basket, write footer and trailer, close the file."""
        self._check_open()
        try:
            self._flush_pending()
            footer = FileFooter(
                tree_name=self._tree_name,
                n_entries=self._n_filled,
                branches=[b.descriptor() for b in self._branches],
            )
            blob = footer_to_bytes(footer)
            offset = self._fobj.tell()
            self._fobj.write(blob)
            self._fobj.write(_U64.pack(offset))
            size = self._fobj.tell()
            self._fobj.close()
        except OSError as exc:
            self._closed = True
            raise WriteError(f"close failed: {exc}") from exc
        self._closed = True
        return WriteStats(
            n_entries=self._n_filled,
            n_baskets=sum(len(b.baskets) for b in self._branches),
            bytes_written=size,
        )

    def __enter__(self) -> "TreeWriter":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if not self._closed:
            self.close()
