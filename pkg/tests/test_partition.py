import struct
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ndgkit.errors import DecompositionError, ExchangeError, RunError
from ndgkit.grid import Mesh, init_euler_subsonic, init_multisine
from ndgkit.models import EquationModel
from ndgkit.partition import (MAGIC, InProcessTransport, SocketTransport, decode_header,
                              decode_message, decompose, encode_message, exchange_halos,
                              make_transport, run_partitioned, split_sizes)
from ndgkit.solver import SolverConfig, advance, periodic_ghosts


def test_decompose_examples():
    d = decompose(Mesh(2, (100, 100), 3), 4)
    assert d.counts == (2, 2)
    assert all(b.shape == (50, 50) for b in d.blocks)
    d = decompose(Mesh(2, (100, 10), 3), 10)
    assert d.counts == (10, 1)
    assert all(b.shape == (10, 10) for b in d.blocks)
    one = decompose(Mesh(3, (5, 6, 7), 2), 1)
    assert one.counts == (1, 1, 1) and one.blocks[0].shape == (5, 6, 7)
    assert one.blocks[0].neighbors == ((0, 0), (0, 0), (0, 0))


def test_decompose_errors():
    with pytest.raises(DecompositionError, match="at least one cell"):
        decompose(Mesh(2, (2, 2), 3), 5)
    with pytest.raises(DecompositionError):
        decompose(Mesh(1, (4,), 3), 0)
    with pytest.raises(DecompositionError):
        decompose(Mesh(1, (4,), 3), 1.5)


def test_split_sizes():
    assert split_sizes(10, 3) == [4, 3, 3]
    assert sum(split_sizes(97, 8)) == 97


@settings(max_examples=60, deadline=None)
@given(dim=st.integers(1, 3), data=st.data())
def test_tiling_balance_and_symmetric_neighbours(dim, data):
    cells = tuple(data.draw(st.lists(st.integers(1, 9), min_size=dim, max_size=dim)))
    P = data.draw(st.integers(1, int(np.prod(cells))))
    mesh = Mesh(dim, cells, 2)
    try:
        d = decompose(mesh, P)
    except DecompositionError:
        # infeasible: no factorisation fits the cell counts
        from ndgkit.partition import _factorizations
        assert not any(all(p <= n for p, n in zip(c, cells)) for c in _factorizations(P, dim))
        return
    assert int(np.prod(d.counts)) == P == len(d.blocks)
    owner = -np.ones(cells, dtype=int)
    for b in d.blocks:
        assert np.all(owner[b.slices] == -1)
        owner[b.slices] = b.rank
    assert np.all(owner >= 0)
    for axis in range(dim):
        sizes = {b.shape[axis] for b in d.blocks}
        assert max(sizes) - min(sizes) <= 1
    for b in d.blocks:
        for axis, (lo, hi) in enumerate(b.neighbors):
            assert d.blocks[lo].neighbors[axis][1] == b.rank
            assert d.blocks[hi].neighbors[axis][0] == b.rank


def test_scatter_gather_round_trip():
    mesh = Mesh(2, (7, 5), 3)
    u = np.random.default_rng(0).normal(size=mesh.field_shape(2))
    d = decompose(mesh, 6)
    assert d.gather(d.scatter(u)).tobytes() == u.tobytes()


def cell_index_field(mesh):
    u = np.empty(mesh.field_shape(1))
    idx = np.arange(mesh.n_cells[0]).reshape((-1,) + (1,) * (u.ndim - 1))
    u[...] = idx
    return u


def test_exchange_two_workers_cell_index():
    mesh = Mesh(2, (4, 1), 3)
    d = decompose(mesh, 2)
    assert d.counts == (2, 1)
    ghosts = exchange_halos(d, d.scatter(cell_index_field(mesh)))
    # block 0 owns cells 0-1: its left ghost is cell 3, its right ghost cell 2
    gl, gr = ghosts[0][0]
    assert np.all(gl == 3.0) and np.all(gr == 2.0)
    gl, gr = ghosts[1][0]
    assert np.all(gl == 1.0) and np.all(gr == 0.0)
    assert gl.shape == (1, 1, 1, 3, 1)


@pytest.mark.parametrize("transport", ["inprocess", "socket"])
def test_single_worker_exchange_is_periodic_copy(transport):
    mesh = Mesh(2, (3, 4), 3)
    u = np.random.default_rng(1).normal(size=mesh.field_shape(2))
    d = decompose(mesh, 1)
    ghosts = exchange_halos(d, [u], transport)[0]
    for (gl, gr), (pl, pr) in zip(ghosts, periodic_ghosts(u, 2)):
        assert gl.tobytes() == pl.tobytes() and gr.tobytes() == pr.tobytes()


@pytest.mark.parametrize("P", [2, 3, 4, 6])
def test_exchange_matches_global_periodic_ghosts(P):
    """Every block's ghosts equal the neighbouring global cells' boundary nodes."""
    mesh = Mesh(2, (6, 4), 3)
    u = np.random.default_rng(P).normal(size=mesh.field_shape(1))
    d = decompose(mesh, P)
    ghosts = exchange_halos(d, d.scatter(u))
    for b, g in zip(d.blocks, ghosts):
        # pad the global field periodically, then cut the block plus one cell per side
        for axis in range(2):
            n = mesh.n_cells[axis]
            start, stop = b.ranges[axis]
            lo = np.take(u, [(start - 1) % n], axis=axis)
            hi = np.take(u, [stop % n], axis=axis)
            other = [slice(*b.ranges[e]) for e in range(2)]
            other[axis] = slice(None)
            lo = lo[tuple(other)]
            hi = hi[tuple(other)]
            # node N-1 of the lower cell / node 0 of the upper cell along the axis
            lo = np.take(lo, [-1], axis=2 + axis)
            hi = np.take(hi, [0], axis=2 + axis)
            gl, gr = g[axis]
            assert np.array_equal(np.sort(gl.ravel()), np.sort(lo.ravel()))
            assert np.array_equal(np.sort(gr.ravel()), np.sort(hi.ravel()))


def test_exchange_is_idempotent():
    mesh = Mesh(2, (6, 6), 4)
    u = np.random.default_rng(3).normal(size=mesh.field_shape(3))
    d = decompose(mesh, 4)
    parts = d.scatter(u)
    a = exchange_halos(d, parts)
    b = exchange_halos(d, parts)
    for ga, gb in zip(a, b):
        for (la, ra), (lb, rb) in zip(ga, gb):
            assert la.tobytes() == lb.tobytes() and ra.tobytes() == rb.tobytes()


def test_exchange_rejects_wrong_state_count():
    d = decompose(Mesh(1, (4,), 2), 2)
    with pytest.raises(ExchangeError):
        exchange_halos(d, [np.zeros((2, 2, 1))])


def test_payload_bytes():
    mesh = Mesh(2, (8, 6), 5)
    d = decompose(mesh, 4)
    b = d.blocks[0]
    assert d.face_payload_bytes(0, 0, 3) == b.shape[1] * 5 * 3 * 8
    mesh3 = Mesh(3, (4, 4, 4), 3)
    d3 = decompose(mesh3, 2)
    assert d3.counts == (1, 1, 2)
    # the x face of a 4x4x2 block holds 4*2 cells of 3*3 nodes
    assert d3.face_payload_bytes(0, 0, 4) == 8 * 9 * 4 * 8
    assert d3.face_payload_bytes(0, 2, 4) == 16 * 9 * 4 * 8


def test_measured_bytes_per_stage_match_payload():
    mesh = Mesh(2, (8, 6), 4)
    model = EquationModel.euler(2)
    cfg = SolverConfig(mesh, model, rk="rk3")
    res = run_partitioned(cfg, 4, init_euler_subsonic(mesh, model), steps=1)
    for t in res.timings:
        expect = sum(2 * res.decomposition.face_payload_bytes(t.rank, a, 3) for a in range(2))
        assert t.bytes_per_stage == expect


def test_wire_format_round_trip():
    payload = np.arange(6.0).reshape(2, 3) * 0.5
    msg = encode_message(7, 3, payload)
    assert msg[:4] == MAGIC
    magic, stage, face, length = struct.unpack("<4sIIQ", msg[:20])
    assert (stage, face, length) == (7, 3, 48)
    assert msg[20:] == payload.astype("<f8").tobytes()
    s, f, arr = decode_message(msg)
    assert (s, f) == (7, 3)
    np.testing.assert_array_equal(arr, payload.ravel())
    with pytest.raises(ExchangeError):
        decode_header(b"XXXX" + msg[4:20])
    with pytest.raises(ExchangeError):
        decode_message(msg[:-8])


def test_socket_transport_delivers_out_of_order():
    tr = SocketTransport(2)
    try:
        a, b = tr.endpoint(0), tr.endpoint(1)
        a.send(1, 0, 5, np.array([1.0, 2.0]))
        a.send(1, 0, 4, np.array([3.0]))
        assert b.recv(0, 0, 4).tolist() == [3.0]
        assert b.recv(0, 0, 5).tolist() == [1.0, 2.0]
        assert a.bytes_sent == 24
    finally:
        tr.close()


def test_recv_timeout_names_face():
    tr = InProcessTransport(2, timeout=0.1)
    with pytest.raises(ExchangeError) as info:
        tr.endpoint(0).recv(1, 0, 3)
    assert info.value.face == 3


def test_allreduce_max():
    for kind in ("inprocess", "socket"):
        tr = make_transport(kind, 3)
        out = [None] * 3

        def work(r):
            out[r] = tr.endpoint(r).allreduce_max(float(r * 2 % 5))

        threads = [threading.Thread(target=work, args=(r,)) for r in range(3)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        tr.close()
        assert out == [4.0, 4.0, 4.0]


def test_unknown_transport():
    with pytest.raises(ValueError):
        make_transport("carrier-pigeon", 2)


def serial_and_config(steps=20):
    mesh = Mesh(2, (12, 12), 4)
    model = EquationModel.euler(2)
    cfg = SolverConfig(mesh, model, rk="rk4", cfl=0.4)
    u0 = init_euler_subsonic(mesh, model, seed=3)
    ref, stats = advance(cfg, u0, steps=steps)
    return cfg, u0, ref, stats


@pytest.mark.parametrize("transport", ["inprocess", "socket"])
@pytest.mark.parametrize("P", [1, 2, 3, 4, 6])
def test_partitioned_matches_serial(P, transport):
    cfg, u0, ref, stats = serial_and_config()
    res = run_partitioned(cfg, P, u0, transport=transport, steps=20)
    assert np.max(np.abs(res.field - ref)) <= 1e-13
    assert res.stats.steps == stats.steps
    assert res.stats.dt_history == stats.dt_history
    if P == 1:
        assert res.field.tobytes() == ref.tobytes()


def test_partitioned_lands_on_end_time():
    mesh = Mesh(2, (8, 8), 3)
    model = EquationModel.advection((1.0, 0.5))
    cfg = SolverConfig(mesh, model, rk="rk3", end_time=0.05)
    u0 = init_multisine(mesh, model, 3, seed=2)
    ref, stats = advance(cfg, u0)
    res = run_partitioned(cfg, 4, u0)
    assert res.stats.t_final == 0.05 and res.stats.steps == stats.steps
    assert np.max(np.abs(res.field - ref)) <= 1e-13
    assert len(res.timings) == 4
    assert all(t.wall_time >= t.exchange_time >= 0 for t in res.timings)


def test_worker_failure_is_named():
    mesh = Mesh(2, (8, 8), 3)
    model = EquationModel.euler(2)
    cfg = SolverConfig(mesh, model)
    u0 = init_euler_subsonic(mesh, model)
    d = decompose(mesh, 4)
    bad = d.blocks[3]
    u0[bad.ranges[0][0], bad.ranges[1][0], 1, 1, 0] = -1.0
    with pytest.raises(RunError) as info:
        run_partitioned(cfg, 4, u0, steps=3, timeout=5.0)
    assert info.value.worker == 3
    assert "density" in str(info.value)
