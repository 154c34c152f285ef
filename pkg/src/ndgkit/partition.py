"""Block decomposition of the cell grid and halo exchange between workers.

Workers exchange face *traces* (boundary-node states), not fluxes: both
sides of a block interface then evaluate the Lax-Friedrichs flux from the
identical ``(U-, U+)`` pair, which keeps the scheme conservative with one
message per face and stage.

Face ids are ``2 * axis + side`` with side 0 the lower (left) face and 1 the
upper (right) face, always named from the *receiving* block's point of view.
"""

import itertools
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from .errors import DecompositionError, ExchangeError, RunError
from .grid import Mesh, check_field
from .solver import StepStats, advance, face_traces

DEFAULT_TIMEOUT = 60.0


# --------------------------------------------------------------------------
# decomposition


@dataclass(frozen=True)
class Block:
    rank: int
    coords: Tuple[int, ...]
    ranges: Tuple[Tuple[int, int], ...]
    neighbors: Tuple[Tuple[int, int], ...]  # per axis: (lower rank, upper rank)

    @property
    def shape(self):
        return tuple(stop - start for start, stop in self.ranges)

    @property
    def offset(self):
        return tuple(start for start, _ in self.ranges)

    @property
    def slices(self):
        return tuple(slice(start, stop) for start, stop in self.ranges)


@dataclass(frozen=True)
class BlockDecomposition:
    mesh: Mesh
    worker_count: int
    counts: Tuple[int, ...]
    blocks: Tuple[Block, ...]

    def block_mesh(self, rank):
        """Mesh of the cells owned by ``rank``; use the global ``cell_size`` for physics."""
        b = self.blocks[rank]
        h = self.mesh.cell_size
        return Mesh(self.mesh.spatial_dim, b.shape, self.mesh.order,
                    tuple(n * hd for n, hd in zip(b.shape, h)))

    def scatter(self, u):
        check_field(self.mesh, u)
        return [np.ascontiguousarray(u[b.slices]) for b in self.blocks]

    def gather(self, parts):
        n_var = parts[0].shape[-1]
        out = np.empty(self.mesh.field_shape(n_var))
        for b, part in zip(self.blocks, parts):
            out[b.slices] = part
        return out

    def face_payload_bytes(self, rank, axis, n_var=1):
        """Bytes in one face message along ``axis`` for block ``rank``."""
        b = self.blocks[rank]
        face_cells = int(np.prod([n for d, n in enumerate(b.shape) if d != axis]))
        return face_cells * self.mesh.order ** (self.mesh.spatial_dim - 1) * int(n_var) * 8


def split_sizes(n, parts):
    """Balanced split of ``n`` cells into ``parts`` contiguous runs (larger runs first)."""
    q, r = divmod(n, parts)
    return [q + 1] * r + [q] * (parts - r)


def _factorizations(p, dim):
    if dim == 1:
        yield (p,)
        return
    for first in range(1, p + 1):
        if p % first == 0:
            for rest in _factorizations(p // first, dim - 1):
                yield (first,) + rest


def block_surface(n_cells, counts):
    """Total face area (in cell faces) summed over all blocks of a block grid."""
    dim = len(n_cells)
    sizes = [split_sizes(n, p) for n, p in zip(n_cells, counts)]
    total = 0
    for combo in itertools.product(*sizes):
        for d in range(dim):
            total += 2 * int(np.prod([combo[e] for e in range(dim) if e != d]))
    return total


def decompose(mesh, worker_count):
    """Split ``mesh`` into ``worker_count`` blocks minimising total block surface.

    Candidate block grids are all ordered factorizations with at most one
    block per cell on each axis; ties go to the lexicographically smallest
    block-count tuple.  Ranks are assigned row-major over block coordinates.
    """
    if not isinstance(worker_count, (int, np.integer)) or worker_count < 1:
        raise DecompositionError(f"worker count must be a positive integer, got {worker_count!r}")
    dim = mesh.spatial_dim
    candidates = [c for c in _factorizations(int(worker_count), dim)
                  if all(p <= n for p, n in zip(c, mesh.n_cells))]
    if not candidates:
        raise DecompositionError(
            f"cannot split {mesh.n_cells} cells into {worker_count} blocks with at least "
            "one cell per block on every axis"
        )
    counts = min(candidates, key=lambda c: (block_surface(mesh.n_cells, c), c))

    starts = []
    for n, p in zip(mesh.n_cells, counts):
        sizes = split_sizes(n, p)
        edges = np.concatenate([[0], np.cumsum(sizes)])
        starts.append([(int(edges[i]), int(edges[i + 1])) for i in range(p)])

    def rank_of(coords):
        return int(np.ravel_multi_index(coords, counts))

    blocks = []
    for coords in itertools.product(*[range(p) for p in counts]):
        nbrs = []
        for d in range(dim):
            lo = list(coords)
            hi = list(coords)
            lo[d] = (coords[d] - 1) % counts[d]
            hi[d] = (coords[d] + 1) % counts[d]
            nbrs.append((rank_of(lo), rank_of(hi)))
        blocks.append(Block(rank_of(coords), tuple(coords),
                            tuple(starts[d][coords[d]] for d in range(dim)), tuple(nbrs)))
    return BlockDecomposition(mesh, int(worker_count), tuple(counts), tuple(blocks))


# --------------------------------------------------------------------------
# wire format of the socket transport

MAGIC = b"NDGH"
_HEADER = struct.Struct("<4sIIQ")
FACE_REDUCE = 0xFFFFFFF0
FACE_BARRIER = 0xFFFFFFF1


def encode_message(stage, face, payload):
    """Frame ``payload`` as magic, stage, face id, byte length, float64 LE data."""
    data = np.ascontiguousarray(payload, dtype="<f8").tobytes()
    return _HEADER.pack(MAGIC, stage & 0xFFFFFFFF, face & 0xFFFFFFFF, len(data)) + data


def decode_header(buf):
    magic, stage, face, length = _HEADER.unpack(buf[:_HEADER.size])
    if magic != MAGIC:
        raise ExchangeError(f"bad message magic {magic!r}")
    return stage, face, length


def decode_message(buf):
    stage, face, length = decode_header(buf)
    body = buf[_HEADER.size:_HEADER.size + length]
    if len(body) != length:
        raise ExchangeError(f"truncated message: expected {length} payload bytes, got {len(body)}")
    return stage, face, np.frombuffer(body, dtype="<f8").copy()


# --------------------------------------------------------------------------
# transports


class _Endpoint:
    """Per-worker view of a transport.  Subclasses implement ``_post``/``_next``."""

    def __init__(self, transport, rank):
        self.transport = transport
        self.rank = rank
        self._stash: Dict[tuple, np.ndarray] = {}
        self._reduce_seq = 0
        self.bytes_sent = 0

    def send(self, dest, stage, face, array):
        arr = np.array(array, dtype=float, copy=True)
        self.bytes_sent += arr.nbytes
        self._post(dest, stage, face, arr)

    def recv(self, src, stage, face, timeout=None):
        key = (src, stage, face)
        if key in self._stash:
            return self._stash.pop(key)
        deadline = time.monotonic() + (timeout or self.transport.timeout)
        while True:
            if self.transport.aborted.is_set():
                raise ExchangeError(f"exchange aborted while waiting for face {face}", face=face)
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ExchangeError(
                    f"worker {self.rank}: timed out waiting for face {face} from {src} "
                    f"(stage {stage})", face=face)
            msg = self._next(min(remaining, 0.05))
            if msg is None:
                continue
            m_src, m_stage, m_face, arr = msg
            if (m_src, m_stage, m_face) == key:
                return arr
            self._stash[(m_src, m_stage, m_face)] = arr

    def allreduce_max(self, value):
        seq = self._reduce_seq
        self._reduce_seq += 1
        P = self.transport.size
        if P == 1:
            return value
        if self.rank == 0:
            best = value
            for src in range(1, P):
                best = max(best, float(self.recv(src, seq, FACE_REDUCE)[0]))
            for dst in range(1, P):
                self._post(dst, seq, FACE_REDUCE, np.array([best]))
            return best
        self._post(0, seq, FACE_REDUCE, np.array([value]))
        return float(self.recv(0, seq, FACE_REDUCE)[0])

    def barrier(self):
        self.transport.barrier(self.rank)


class InProcessTransport:
    """Channel transport among threads of one process (one queue per receiver)."""

    def __init__(self, size, timeout=DEFAULT_TIMEOUT):
        self.size = size
        self.timeout = timeout
        self.aborted = threading.Event()
        self._inbox = [queue.SimpleQueue() for _ in range(size)]
        self._barrier = threading.Barrier(size)
        self.endpoints = [self._Endpoint(self, r) for r in range(size)]

    class _Endpoint(_Endpoint):
        def _post(self, dest, stage, face, arr):
            self.transport._inbox[dest].put((self.rank, stage, face, arr))

        def _next(self, timeout):
            try:
                return self.transport._inbox[self.rank].get(timeout=timeout)
            except queue.Empty:
                return None

    def endpoint(self, rank):
        return self.endpoints[rank]

    def barrier(self, rank):
        try:
            self._barrier.wait(timeout=self.timeout)
        except threading.BrokenBarrierError:
            raise ExchangeError(f"worker {rank}: stage barrier broken") from None

    def abort(self):
        self.aborted.set()
        self._barrier.abort()

    def close(self):
        pass


class SocketTransport:
    """Length-prefixed float64 messages over stream sockets.

    ``SocketTransport(size)`` wires every pair of ranks with
    ``socket.socketpair`` (threads of one process); the framing is the same
    as what a multi-process deployment would put on TCP connections.  One
    reader thread per socket decodes frames into the receiver's inbox.
    """

    def __init__(self, size, timeout=DEFAULT_TIMEOUT):
        self.size = size
        self.timeout = timeout
        self.aborted = threading.Event()
        self._inbox = [queue.SimpleQueue() for _ in range(size)]
        self._socks = {}
        self._locks = {}
        self._readers = []
        for i in range(size):
            for j in range(i, size):
                a, b = socket.socketpair()
                self._socks[(i, j)] = a
                self._socks[(j, i)] = b if i != j else a
                self._locks[(i, j)] = threading.Lock()
                self._locks[(j, i)] = self._locks[(i, j)] if i == j else threading.Lock()
                self._start_reader(b, owner=j, peer=i)
                if i != j:
                    self._start_reader(a, owner=i, peer=j)
        self._barrier_seq = [0] * size
        self.endpoints = [self._Endpoint(self, r) for r in range(size)]

    def _start_reader(self, sock, owner, peer):
        def run():
            try:
                while True:
                    head = _recv_exact(sock, _HEADER.size)
                    if head is None:
                        return
                    stage, face, length = decode_header(head)
                    body = _recv_exact(sock, length) if length else b""
                    if body is None:
                        return
                    arr = np.frombuffer(body, dtype="<f8").copy()
                    self._inbox[owner].put((peer, stage, face, arr))
            except OSError:
                return

        t = threading.Thread(target=run, daemon=True)
        t.start()
        self._readers.append(t)

    class _Endpoint(_Endpoint):
        def _post(self, dest, stage, face, arr):
            t = self.transport
            frame = encode_message(stage, face, arr)
            with t._locks[(self.rank, dest)]:
                t._socks[(self.rank, dest)].sendall(frame)

        def _next(self, timeout):
            try:
                return self.transport._inbox[self.rank].get(timeout=timeout)
            except queue.Empty:
                return None

    def endpoint(self, rank):
        return self.endpoints[rank]

    def barrier(self, rank):
        ep = self.endpoints[rank]
        seq = self._barrier_seq[rank]
        self._barrier_seq[rank] += 1
        if self.size == 1:
            return
        if rank == 0:
            for src in range(1, self.size):
                ep.recv(src, seq, FACE_BARRIER)
            for dst in range(1, self.size):
                ep._post(dst, seq, FACE_BARRIER, np.zeros(0))
        else:
            ep._post(0, seq, FACE_BARRIER, np.zeros(0))
            ep.recv(0, seq, FACE_BARRIER)

    def abort(self):
        self.aborted.set()

    def close(self):
        for s in set(self._socks.values()):
            try:
                s.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            s.close()


def _recv_exact(sock, n):
    chunks = []
    while n:
        chunk = sock.recv(min(n, 1 << 20))
        if not chunk:
            return None
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


TRANSPORTS = {"inprocess": InProcessTransport, "socket": SocketTransport}


def make_transport(kind, size, **kwargs):
    if isinstance(kind, (InProcessTransport, SocketTransport)):
        return kind
    try:
        return TRANSPORTS[kind](size, **kwargs)
    except KeyError:
        raise ValueError(f"unknown transport {kind!r}; choose from {sorted(TRANSPORTS)}") from None


# --------------------------------------------------------------------------
# halo exchange


class HaloExchanger:
    """Halo provider of one worker: ships its face traces and returns ghost traces.

    Calling it performs exactly one exchange (every face of the block)
    followed by one barrier, and returns per axis ``(ghost_left, ghost_right)``.
    """

    def __init__(self, decomposition, rank, endpoint, barrier=True):
        self.decomposition = decomposition
        self.block = decomposition.blocks[rank]
        self.rank = rank
        self.endpoint = endpoint
        self.use_barrier = barrier
        self.stage = 0
        self.exchange_time = 0.0
        self.bytes_per_stage = None

    def post(self, u):
        dim = self.decomposition.mesh.spatial_dim
        sent0 = self.endpoint.bytes_sent
        for d in range(dim):
            lower, upper = self.block.neighbors[d]
            first, last = face_traces(u, d, dim)
            # my first-cell trace is the U+ of my lower neighbour's upper face
            self.endpoint.send(lower, self.stage, 2 * d + 1, first)
            self.endpoint.send(upper, self.stage, 2 * d, last)
        self.bytes_per_stage = self.endpoint.bytes_sent - sent0

    def collect(self, u):
        dim = self.decomposition.mesh.spatial_dim
        ghosts = []
        for d in range(dim):
            lower, upper = self.block.neighbors[d]
            shape = face_traces(u, d, dim)[0].shape
            gl = self.endpoint.recv(lower, self.stage, 2 * d).reshape(shape)
            gr = self.endpoint.recv(upper, self.stage, 2 * d + 1).reshape(shape)
            ghosts.append((gl, gr))
        self.stage += 1
        return ghosts

    def __call__(self, u):
        t0 = time.perf_counter()
        self.post(u)
        ghosts = self.collect(u)
        if self.use_barrier:
            self.endpoint.barrier()
        self.exchange_time += time.perf_counter() - t0
        return ghosts


def exchange_halos(decomposition, states, transport="inprocess"):
    """Fill every worker's ghost traces from its neighbours' current states.

    Drives all workers from the calling thread (posts first, then collects),
    which is valid because sends never block.  Returns, per worker, the list
    over axes of ``(ghost_left, ghost_right)``.
    """
    P = decomposition.worker_count
    if len(states) != P:
        raise ExchangeError(f"expected {P} block states, got {len(states)}")
    tr = make_transport(transport, P)
    try:
        exchangers = [HaloExchanger(decomposition, r, tr.endpoint(r), barrier=False)
                      for r in range(P)]
        for ex, u in zip(exchangers, states):
            ex.post(u)
        return [ex.collect(u) for ex, u in zip(exchangers, states)]
    finally:
        if not isinstance(transport, (InProcessTransport, SocketTransport)):
            tr.close()


# --------------------------------------------------------------------------
# partitioned run


@dataclass
class WorkerTiming:
    rank: int
    cells: Tuple[int, ...]
    wall_time: float = 0.0
    exchange_time: float = 0.0
    bytes_per_stage: int = 0

    @property
    def compute_time(self):
        return max(self.wall_time - self.exchange_time, 0.0)


@dataclass
class PartitionedResult:
    field: np.ndarray
    stats: StepStats
    decomposition: BlockDecomposition
    timings: List[WorkerTiming] = field(default_factory=list)

    @property
    def wall_time(self):
        return self.stats.wall_time


def run_partitioned(config, worker_count, initial, transport="inprocess", steps=None,
                    decomposition=None, timeout=DEFAULT_TIMEOUT):
    """Run ``advance`` with one thread per block and gather the global field.

    The reported wall time is that of the slowest worker's stepping loop.
    """
    mesh = config.mesh
    check_field(mesh, initial, config.model.n_var)
    decomp = decomposition or decompose(mesh, worker_count)
    P = decomp.worker_count
    own_transport = not isinstance(transport, (InProcessTransport, SocketTransport))
    tr = make_transport(transport, P, timeout=timeout) if own_transport else transport
    parts = decomp.scatter(np.asarray(initial, dtype=float))
    results = [None] * P
    errors = [None] * P
    timings = [WorkerTiming(b.rank, b.shape) for b in decomp.blocks]

    def work(rank):
        try:
            ep = tr.endpoint(rank)
            halo = HaloExchanger(decomp, rank, ep)
            block = decomp.blocks[rank]
            u, stats = advance(config, parts[rank], halo=halo, steps=steps,
                               speed_reduce=ep.allreduce_max,
                               block=(decomp.block_mesh(rank), block.offset))
            results[rank] = (u, stats)
            timings[rank].wall_time = stats.wall_time
            timings[rank].exchange_time = halo.exchange_time
            timings[rank].bytes_per_stage = halo.bytes_per_stage or 0
        except BaseException as exc:  # surfaced to the caller below
            errors[rank] = exc
            tr.abort()

    threads = [threading.Thread(target=work, args=(r,), name=f"ndg-worker-{r}")
               for r in range(P)]
    try:
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    finally:
        if own_transport:
            tr.close()

    failed = [(r, e) for r, e in enumerate(errors) if e is not None]
    if failed:
        # prefer the root cause over errors induced by the abort
        root = [(r, e) for r, e in failed if not isinstance(e, ExchangeError)] or failed
        rank, exc = root[0]
        raise RunError(f"worker {rank} failed: {exc}", worker=rank) from exc

    u = decomp.gather([res[0] for res in results])
    stats = results[0][1]
    stats.wall_time = max(t.wall_time for t in timings)
    return PartitionedResult(u, stats, decomp, timings)
