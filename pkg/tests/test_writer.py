"""writer: schema handling, basket layout, determinism, round trips."""

from __future__ import annotations

import numpy as np
import pytest

from bulkio import (
    Codec,
    ElementType,
    SchemaError,
    ShapeError,
    ShapeKind,
    TreeFile,
    TreeWriter,
    WriterClosed,
    fixed_array,
    read_footer,
    scalar,
    var_array,
)

from conftest import (
    ALL_TYPES,
    assert_three_way_roundtrip,
    make_events,
    write_events,
)


def test_create_single_branch(tmp_path):
    w = TreeWriter(tmp_path / "a.bkio", [("x", ElementType.F32, scalar())])
    assert w.branch_names == ["x"]
    w.close()


def test_var_branch_gets_auto_count(tmp_path):
    path = tmp_path / "v.bkio"
    with TreeWriter(path, [("v", ElementType.F32, var_array())]) as w:
        w.fill(v=[1.0])
    footer = read_footer(path)
    assert [b.name for b in footer.branches] == ["v", "v.count"]
    v = footer.branches[0]
    assert v.shape.kind is ShapeKind.VAR_ARRAY
    assert v.shape.count_branch == 1
    assert footer.branches[1].element is ElementType.U32


def test_explicit_count_name_shared(tmp_path):
    path = tmp_path / "shared.bkio"
    schema = [("a", ElementType.F32, var_array(count_name="n")),
              ("b", ElementType.I32, var_array(count_name="n"))]
    with TreeWriter(path, schema) as w:
        w.fill(a=[1.0, 2.0], b=[3, 4])
        with pytest.raises(ShapeError):
            w.fill(a=[1.0], b=[3, 4])  # shared count must agree
        w.fill(a=[], b=[])
    footer = read_footer(path)
    assert [b.name for b in footer.branches] == ["a", "b", "n"]
    assert footer.branches[0].shape.count_branch == 2
    assert footer.branches[1].shape.count_branch == 2


def test_duplicate_branch_name_rejected(tmp_path):
    with pytest.raises(SchemaError):
        TreeWriter(tmp_path / "d.bkio", [("x", ElementType.F32, scalar()),
                                         ("x", ElementType.F64, scalar())])


def test_count_name_collision_rejected(tmp_path):
    with pytest.raises(SchemaError):
        TreeWriter(tmp_path / "c.bkio",
                   [("v.count", ElementType.U32, scalar()),
                    ("v", ElementType.F32, var_array())])


def test_empty_schema_rejected(tmp_path):
    with pytest.raises(SchemaError):
        TreeWriter(tmp_path / "e.bkio", [])


def test_fill_returns_sequential_indices(tmp_path):
    with TreeWriter(tmp_path / "s.bkio",
                    [("x", ElementType.F32, scalar())]) as w:
        assert w.fill(x=1.5) == 0
        assert w.fill(x=2.5) == 1
        assert w.fill(x=3.5) == 2


def test_basket_layout_100_fills_capacity_32(tmp_path):
    path = tmp_path / "b.bkio"
    with TreeWriter(path, [("x", ElementType.F32, scalar())],
                    basket_capacity_entries=32) as w:
        for i in range(100):
            w.fill(x=float(i))
    footer = read_footer(path)
    sizes = [b.n_entries for b in footer.branches[0].baskets]
    assert sizes == [32, 32, 32, 4]
    firsts = [b.first_entry for b in footer.branches[0].baskets]
    assert firsts == [0, 32, 64, 96]


def test_fixed_array_arity_checked(tmp_path):
    with TreeWriter(tmp_path / "f.bkio",
                    [("a", ElementType.F32, fixed_array(4))]) as w:
        w.fill(a=[1.0, 2.0, 3.0, 4.0])
        with pytest.raises(ShapeError):
            w.fill(a=[1.0, 2.0, 3.0])


def test_scalar_branch_rejects_sequence(tmp_path):
    with TreeWriter(tmp_path / "sc.bkio",
                    [("x", ElementType.F32, scalar())]) as w:
        with pytest.raises(ShapeError):
            w.fill(x=[1.0])


def test_fill_arity_mismatches(tmp_path):
    with TreeWriter(tmp_path / "ar.bkio",
                    [("x", ElementType.F32, scalar()),
                     ("v", ElementType.F32, var_array())]) as w:
        with pytest.raises(ShapeError):
            w.fill(x=1.0)  # missing v
        with pytest.raises(ShapeError):
            w.fill(x=1.0, v=[], z=2.0)  # unknown branch
        with pytest.raises(ShapeError):
            w.fill(x=1.0, v=[], **{"v.count": 0})  # count is writer-managed


def test_close_empty_file_valid(tmp_path):
    path = tmp_path / "empty.bkio"
    stats = TreeWriter(path, [("x", ElementType.F32, scalar())]).close()
    assert stats.n_entries == 0
    assert stats.n_baskets == 0
    footer = read_footer(path)
    assert footer.n_entries == 0
    assert footer.branches[0].baskets == []


def test_unwritable_path_raises_write_error(tmp_path):
    from bulkio import WriteError
    with pytest.raises(WriteError):
        TreeWriter(tmp_path / "no" / "such" / "dir" / "x.bkio",
                   [("x", ElementType.F32, scalar())])


def test_close_twice_raises(tmp_path):
    w = TreeWriter(tmp_path / "t.bkio", [("x", ElementType.F32, scalar())])
    w.close()
    with pytest.raises(WriterClosed):
        w.close()
    with pytest.raises(WriterClosed):
        w.fill(x=1.0)


def test_close_stats(tmp_path):
    path = tmp_path / "st.bkio"
    w = TreeWriter(path, [("x", ElementType.F32, scalar())],
                   basket_capacity_entries=32)
    for i in range(100):
        w.fill(x=float(i))
    stats = w.close()
    assert stats.n_entries == 100
    assert stats.n_baskets == 4
    assert stats.bytes_written == path.stat().st_size


def test_byte_determinism(tmp_path):
    paths = [tmp_path / "d1.bkio", tmp_path / "d2.bkio"]
    for p in paths:
        with TreeWriter(p, [("x", ElementType.I32, scalar()),
                            ("v", ElementType.F64, var_array())],
                        basket_capacity_entries=7) as w:
            for i in range(40):
                w.fill(x=i - 20, v=[float(j) for j in range(i % 4)])
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_all_branches_share_basket_boundaries(tmp_path):
    path = tmp_path / "align.bkio"
    with TreeWriter(path, [("x", ElementType.F32, scalar()),
                           ("a", ElementType.I16, fixed_array(3)),
                           ("v", ElementType.U64, var_array())],
                    basket_capacity_entries=16) as w:
        for i in range(50):
            w.fill(x=float(i), a=[i, i + 1, i + 2], v=[i] * (i % 5))
    footer = read_footer(path)
    spans = [[(b.first_entry, b.n_entries) for b in br.baskets]
             for br in footer.branches]
    assert all(s == spans[0] for s in spans)


def test_extend_matches_fill(tmp_path, rng):
    p1, p2 = tmp_path / "x1.bkio", tmp_path / "x2.bkio"
    n = 77
    xs = rng.standard_normal(n).astype("f4")
    fix = rng.standard_normal((n, 2)).astype("f4")
    counts = rng.integers(0, 5, size=n).astype("u4")
    flat = rng.standard_normal(int(counts.sum())).astype("f4")
    schema = [("x", ElementType.F32, scalar()),
              ("a", ElementType.F32, fixed_array(2)),
              ("v", ElementType.F32, var_array())]
    with TreeWriter(p1, schema, basket_capacity_entries=16) as w:
        w.extend(x=xs, a=fix, v=(flat, counts))
    offs = np.concatenate(([0], np.cumsum(counts.astype("i8"))))
    with TreeWriter(p2, schema, basket_capacity_entries=16) as w:
        for i in range(n):
            w.fill(x=float(xs[i]), a=fix[i],
                   v=flat[offs[i]:offs[i + 1]])
    assert p1.read_bytes() == p2.read_bytes()


def test_extend_var_counts_consistency_checked(tmp_path):
    with TreeWriter(tmp_path / "vc.bkio",
                    [("v", ElementType.F32, var_array())]) as w:
        with pytest.raises(ShapeError):
            w.extend(v=(np.zeros(3, "f4"), np.array([1, 3], "u4")))


@pytest.mark.parametrize("etype", ALL_TYPES, ids=lambda t: t.name)
@pytest.mark.parametrize("shape_name", ["scalar", "fixed", "var"])
def test_roundtrip_every_type_and_shape(tmp_path, rng, etype, shape_name):
    shape = {"scalar": scalar(), "fixed": fixed_array(3),
             "var": var_array()}[shape_name]
    events = make_events(rng, etype, shape, 50)
    path = tmp_path / f"{etype.name}_{shape_name}.bkio"
    write_events(path, etype, shape, events, capacity=7, codec=Codec.DEFLATE)
    assert_three_way_roundtrip(path, etype, shape, events)
