"""Master-worker execution of the parallel predictors.

Workers never share mutable state: every cross-machine value moves as
an immutable message through a small collective interface (gather,
broadcast, max-reduce) with two interchangeable bindings, an in-process
thread pool and forked worker processes connected by local pipes.
Reductions and summary sums always run in ascending machine order, so
results are independent of scheduling and identical across bindings.

A ledger counts every logical message and the real numbers it carries.
"""

import multiprocessing as mp
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, is_dataclass

import numpy as np
import scipy.linalg

from . import icf, pitc
from .core import Prediction, concat_datasets
from .partition import (
    Partition,
    partition_clustered,
    partition_even,
    round_robin_origin,
)

MESSAGE_KINDS = (
    "pitc-local-summary",
    "icf-local-summary",
    "icf-pivot-candidate",
    "icf-pivot-row",
    "predictive-component",
    "global-summary-broadcast",
    # extensions beyond the core flows
    "cluster-center",
    "cluster-reassign",
    "icf-partial-summary",
    "icf-summary-slice",
    "icf-solved-slice",
)


def count_scalars(obj):
    """Number of real values in a message payload (ints and ids are free)."""
    if obj is None or isinstance(obj, (bool, int, np.integer)):
        return 0
    if isinstance(obj, (float, np.floating)):
        return 1
    if isinstance(obj, np.ndarray):
        return int(obj.size) if np.issubdtype(obj.dtype, np.floating) else 0
    if isinstance(obj, (list, tuple)):
        return sum(count_scalars(v) for v in obj)
    if is_dataclass(obj):
        return sum(count_scalars(getattr(obj, f.name)) for f in fields(obj))
    raise TypeError(f"cannot count scalars of {type(obj).__name__}")


@dataclass(frozen=True)
class WorkerMessage:
    sender: int
    kind: str
    payload: object
    payload_scalars: int


@dataclass
class Ledger:
    """Monotone counters of collective operations and message traffic."""

    message_counts: dict = field(default_factory=dict)
    message_scalars: dict = field(default_factory=dict)
    gathers: int = 0
    broadcasts: int = 0
    reductions: int = 0

    def record_message(self, kind, scalars):
        if kind not in MESSAGE_KINDS:
            raise ValueError(f"unknown message kind {kind!r}")
        self.message_counts[kind] = self.message_counts.get(kind, 0) + 1
        self.message_scalars[kind] = self.message_scalars.get(kind, 0) + int(scalars)

    def record_gather(self):
        self.gathers += 1

    def record_broadcast(self):
        self.broadcasts += 1

    def record_reduction(self):
        self.reductions += 1

    def report(self):
        lines = [
            f"gathers = {self.gathers}",
            f"broadcasts = {self.broadcasts}",
            f"reductions = {self.reductions}",
        ]
        for kind in sorted(self.message_counts):
            lines.append(f"messages.{kind}.count = {self.message_counts[kind]}")
            lines.append(f"messages.{kind}.scalars = {self.message_scalars[kind]}")
        return "\n".join(lines) + "\n"


class WorkerFailure(RuntimeError):
    """A worker raised; the run aborts naming the failing machine."""

    def __init__(self, machine, cause):
        super().__init__(f"machine {machine} failed: {cause}")
        self.machine = machine


class _ThreadBinding:
    """Workers as in-process objects driven from a thread pool."""

    def __init__(self, factory, per_worker_args):
        self.workers = [factory(*args) for args in per_worker_args]
        self.pool = ThreadPoolExecutor(max_workers=len(self.workers))

    def call(self, method, shared=(), per=None):
        futures = [
            self.pool.submit(
                getattr(w, method), *(per[m] if per is not None else shared)
            )
            for m, w in enumerate(self.workers)
        ]
        results = []
        for m, fut in enumerate(futures):
            try:
                results.append(fut.result())
            except Exception as exc:
                raise WorkerFailure(m, exc) from exc
        return results

    def call_one(self, machine, method, args=()):
        try:
            return getattr(self.workers[machine], method)(*args)
        except Exception as exc:
            raise WorkerFailure(machine, exc) from exc

    def close(self):
        self.pool.shutdown(wait=False)


def _process_worker_main(conn, factory, args):
    try:
        worker = factory(*args)
        conn.send(("ok", None))
    except Exception:
        conn.send(("err", traceback.format_exc()))
        return
    while True:
        msg = conn.recv()
        if msg is None:
            return
        method, call_args = msg
        try:
            conn.send(("ok", getattr(worker, method)(*call_args)))
        except Exception:
            conn.send(("err", traceback.format_exc()))


class _ProcessBinding:
    """Workers as forked processes; messages travel over local pipes."""

    def __init__(self, factory, per_worker_args):
        ctx = mp.get_context("fork")
        self.conns = []
        self.procs = []
        for args in per_worker_args:
            parent, child = ctx.Pipe()
            proc = ctx.Process(
                target=_process_worker_main, args=(child, factory, args), daemon=True
            )
            proc.start()
            child.close()
            self.conns.append(parent)
            self.procs.append(proc)
        for m, conn in enumerate(self.conns):
            status, detail = conn.recv()
            if status != "ok":
                raise WorkerFailure(m, detail)

    def call(self, method, shared=(), per=None):
        for m, conn in enumerate(self.conns):
            conn.send((method, per[m] if per is not None else shared))
        results = []
        for m, conn in enumerate(self.conns):
            status, value = conn.recv()
            if status != "ok":
                raise WorkerFailure(m, value)
            results.append(value)
        return results

    def call_one(self, machine, method, args=()):
        self.conns[machine].send((method, args))
        status, value = self.conns[machine].recv()
        if status != "ok":
            raise WorkerFailure(machine, value)
        return value

    def close(self):
        for conn in self.conns:
            try:
                conn.send(None)
                conn.close()
            except (BrokenPipeError, OSError):
                pass
        for proc in self.procs:
            proc.join(timeout=5)


_BINDINGS = {"threads": _ThreadBinding, "processes": _ProcessBinding}


class Engine:
    """Drives one run's collective rounds and records them in the ledger."""

    def __init__(self, factory, per_worker_args, transport="threads", ledger=None):
        if transport not in _BINDINGS:
            raise ValueError(f"unknown transport {transport!r}")
        self.machines = len(per_worker_args)
        self.ledger = ledger if ledger is not None else Ledger()
        self.binding = _BINDINGS[transport](factory, per_worker_args)

    def gather(self, kind, method, shared=(), per=None):
        results = self.binding.call(method, shared, per)
        self.ledger.record_gather()
        for m, res in enumerate(results):
            msg = WorkerMessage(m, kind, res, count_scalars(res))
            self.ledger.record_message(msg.kind, msg.payload_scalars)
        return results

    def broadcast(self, kind, method, payload):
        self.ledger.record_broadcast()
        self.ledger.record_message(kind, count_scalars(payload))
        self.binding.call(method, (payload,))

    def reduce_candidates(self, kind, method):
        results = self.binding.call(method)
        self.ledger.record_reduction()
        for res in results:
            self.ledger.record_message(kind, count_scalars(res))
        return results

    def call_one(self, machine, method, args=()):
        return self.binding.call_one(machine, method, args)

    def close(self):
        self.binding.close()


class PitcWorker:
    """One machine's share of a support-set run."""

    def __init__(self, block, query_block, support, h, use_local_data):
        self.block = block
        self.query_block = query_block
        self.support = support
        self.h = h
        self.use_local_data = use_local_data
        self.local = None
        self.glob = None

    def local_summary(self):
        self.local = pitc.local_summary(self.block, self.support, self.h)
        return self.local

    def set_global(self, glob):
        self.glob = glob

    def predict(self):
        if self.use_local_data:
            pred = pitc.ppic_predict_block(
                self.block, self.query_block, self.support, self.local, self.glob,
                self.h,
            )
        else:
            pred = pitc.ppitc_predict_block(
                self.query_block, self.support, self.glob, self.h,
                self.block.prior_mean,
            )
        return pred.mean, pred.var


class IcfWorker:
    """One machine's share of a reduced-rank run."""

    def __init__(self, block, query_pts, h, rank, slice_idx):
        self.block = block
        self.query_pts = query_pts
        self.h = h
        self.rank = rank
        self.slice_idx = slice_idx
        self.state = icf.FactorState(icf.SqexpColumns(block.x, h), rank)
        self.local = None
        self.glob_y = None
        self.glob_cross = None

    def pivot_candidate(self):
        return self.state.best_candidate()

    def pivot_payload(self, pivot_id):
        return self.state.pivot_payload(pivot_id)

    def apply_pivot(self, payload):
        self.state.apply_pivot(payload)

    def factor_entries(self):
        return self.state.entries

    def local_summary(self):
        self.local = icf.local_summary(
            self.block, self.state.entries, self.query_pts, self.h
        )
        return self.local

    def partial_summary(self):
        self.local = icf.local_summary(
            self.block, self.state.entries, self.query_pts, self.h
        )
        return self.local.y, self.local.gram

    def summary_slices(self):
        return [self.local.cross[:, idx] for idx in self.slice_idx]

    def solve_slice(self, payload):
        gram, incoming = payload
        total = incoming[0]
        for part in incoming[1:]:
            total = total + part
        lower = icf.gram_factor(gram)
        return scipy.linalg.cho_solve((lower, True), total, check_finite=False)

    def set_global(self, payload):
        self.glob_y, self.glob_cross = payload

    def component(self):
        glob = icf.IcfGlobalSummary(self.glob_y, self.glob_cross, np.zeros((0, 0)))
        return icf.predictive_component(
            self.block, self.local, glob, self.query_pts, self.h
        )


def _resolve_partition(train, query, machines, partition, mode, seed):
    if partition is not None:
        return partition
    if machines is None:
        raise ValueError("need a machine count or an explicit partition")
    if mode == "even":
        return partition_even(train, query, machines)
    if mode == "clustered":
        return partition_clustered(train, query, machines, seed)
    raise ValueError(f"unknown partition mode {mode!r}")


def _record_clustering(ledger, part, train, query):
    """Ledger entries for the clustering exchange: one center per machine
    plus every point that moved away from its round-robin origin."""
    machines = part.machines
    d = train.x.dim
    ledger.record_gather()
    ledger.record_broadcast()
    for _ in range(machines):
        ledger.record_message("cluster-center", d)
    origin_t = round_robin_origin(train.n, machines)
    origin_q = round_robin_origin(len(query), machines)
    for m in range(machines):
        moved_t = int(np.count_nonzero(origin_t[part.train_idx[m]] != m))
        moved_q = int(np.count_nonzero(origin_q[part.query_idx[m]] != m))
        ledger.record_message("cluster-reassign", moved_t * (d + 1) + moved_q * d)


def _scatter_prediction(parts, part, n_query):
    mean = np.empty(n_query)
    var = np.empty(n_query)
    for m, (block_mean, block_var) in enumerate(parts):
        mean[part.query_idx[m]] = block_mean
        var[part.query_idx[m]] = block_var
    return Prediction(mean, var)


def _run_support_method(train, query, support, h, machines, partition, mode, seed,
                        transport, use_local_data, ledger):
    ledger = ledger if ledger is not None else Ledger()
    part = _resolve_partition(train, query, machines, partition, mode, seed)
    if partition is None and mode == "clustered":
        _record_clustering(ledger, part, train, query)
    blocks = part.train_blocks(train)
    qblocks = part.query_blocks(query)
    engine = Engine(
        PitcWorker,
        [
            (blocks[m], qblocks[m], support, h, use_local_data)
            for m in range(part.machines)
        ],
        transport,
        ledger,
    )
    try:
        locals_ = engine.gather("pitc-local-summary", "local_summary")
        glob = pitc.global_summary(locals_, support, h)
        engine.broadcast("global-summary-broadcast", "set_global", glob)
        parts = engine.gather("predictive-component", "predict")
    finally:
        engine.close()
    return _scatter_prediction(parts, part, len(query)), ledger


def run_ppitc(train, query, support, h, machines=None, *, partition=None,
              partition_mode="even", partition_seed=0, transport="threads",
              ledger=None):
    """Distributed PITC: summaries in, fused summary out, block predictions."""
    return _run_support_method(
        train, query, support, h, machines, partition, partition_mode,
        partition_seed, transport, False, ledger,
    )


def run_ppic(train, query, support, h, machines=None, *, partition=None,
             partition_mode="clustered", partition_seed=0, transport="threads",
             ledger=None):
    """Distributed PIC: like PITC but each machine also exploits its own
    block for its query slice; clustered partitioning by default."""
    return _run_support_method(
        train, query, support, h, machines, partition, partition_mode,
        partition_seed, transport, True, ledger,
    )


def _drive_factorization(engine, rank, h):
    stop = icf.EARLY_STOP_RTOL * h.signal_variance
    for _ in range(rank):
        candidates = engine.reduce_candidates("icf-pivot-candidate", "pivot_candidate")
        best, winner = icf.reduce_candidates(candidates)
        if best is None or best[0] < stop:
            break
        # the winner's column data rides the per-pivot broadcast
        payload = engine.call_one(winner, "pivot_payload", (best[1],))
        engine.broadcast("icf-pivot-row", "apply_pivot", payload)


def run_picf(train, query, h, rank, machines=None, *, partition=None,
             partition_mode="even", partition_seed=0, transport="threads",
             partition_queries=False, ledger=None):
    """Distributed reduced-rank GP: parallel factorization, factor
    summaries, fused solve, and additive predictive components.

    With partition_queries=True the cross-summary solve is split across
    machines by query slice; the output matches the unpartitioned path.
    """
    ledger = ledger if ledger is not None else Ledger()
    part = _resolve_partition(
        train, query, machines, partition, partition_mode, partition_seed
    )
    if partition is None and partition_mode == "clustered":
        _record_clustering(ledger, part, train, query)
    blocks = part.train_blocks(train)
    slice_idx = [np.asarray(ix, dtype=np.intp) for ix in part.query_idx]
    engine = Engine(
        IcfWorker,
        [(blocks[m], query, h, rank, slice_idx) for m in range(part.machines)],
        transport,
        ledger,
    )
    try:
        _drive_factorization(engine, rank, h)
        if partition_queries:
            glob_y, glob_cross = _partitioned_summary_exchange(
                engine, ledger, part, slice_idx, len(query), h
            )
        else:
            locals_ = engine.gather("icf-local-summary", "local_summary")
            glob = icf.global_summary(locals_, h)
            glob_y, glob_cross = glob.y, glob.cross
        engine.broadcast(
            "global-summary-broadcast", "set_global", (glob_y, glob_cross)
        )
        parts = engine.gather("predictive-component", "component")
    finally:
        engine.close()
    pred = icf.predict_from_components(parts, query, h, train.prior_mean)
    return pred, ledger


def _partitioned_summary_exchange(engine, ledger, part, slice_idx, n_query, h):
    """Split the cross-summary solve across machines by query slice.

    Machine m ships its slice for machine i directly to i (modeled here
    as one all-to-all: a gather plus a scatter); each machine solves its
    own slice against the fused gram and the master reassembles.
    """
    machines = part.machines
    partials = engine.gather("icf-partial-summary", "partial_summary")
    slices = engine.binding.call("summary_slices")
    ledger.record_gather()
    ledger.record_broadcast()
    for m in range(machines):
        for i in range(machines):
            ledger.record_message("icf-summary-slice", count_scalars(slices[m][i]))
    gram, glob_y = icf.fuse_partials(partials, h)
    # every machine needs the fused gram to run its slice solve
    ledger.record_broadcast()
    ledger.record_message("global-summary-broadcast", count_scalars(gram))
    solved = engine.binding.call(
        "solve_slice",
        per=[((gram, [slices[m][i] for m in range(machines)]),) for i in range(machines)],
    )
    ledger.record_gather()
    for i in range(machines):
        ledger.record_message("icf-solved-slice", count_scalars(solved[i]))
    rank = gram.shape[0]
    cross = np.zeros((rank, n_query))
    for i in range(machines):
        if len(slice_idx[i]):
            cross[:, slice_idx[i]] = solved[i]
    return glob_y, cross


def partition_from_blocks(blocks, query_idx):
    """Partition whose training blocks are the given datasets laid out
    consecutively; returns the concatenated dataset and the partition."""
    train = concat_datasets(blocks)
    train_idx = []
    offset = 0
    for block in blocks:
        train_idx.append(np.arange(offset, offset + block.n))
        offset += block.n
    return train, Partition(tuple(train_idx), tuple(query_idx))


@dataclass(frozen=True, eq=False)
class SummaryStore:
    """Retained per-block summaries plus the current fused summary.

    The fused summary always equals the support prior plus the sum of
    the retained locals in block order, so appending a block only costs
    that block's own summary.
    """

    support: object
    h: object
    blocks: tuple
    local_summaries: tuple
    glob: pitc.PitcGlobalSummary

    @property
    def known_ids(self):
        if not self.blocks:
            return np.empty(0, dtype=np.int64)
        return np.concatenate([b.x.ids for b in self.blocks])


def new_store(support, h):
    """Empty store: the fused summary is just the support prior."""
    return SummaryStore(
        support, h, (), (), pitc.global_summary((), support, h)
    )


def assimilate(store, new_block):
    """Fold one new data block into the store.

    The new block's summary is computed from scratch; the fused summary
    is re-summed over all retained locals in canonical block order, so
    assimilation order cannot change the result.  Ids must be fresh.
    """
    if new_block.n == 0:
        return store
    if store.blocks and new_block.prior_mean != store.blocks[0].prior_mean:
        raise ValueError("new block must share the store's prior mean")
    overlap = np.intersect1d(store.known_ids, new_block.x.ids)
    if len(overlap):
        raise ValueError(f"block ids already registered: {overlap[:8].tolist()}")
    locals_ = store.local_summaries + (
        pitc.local_summary(new_block, store.support, store.h),
    )
    blocks = store.blocks + (new_block,)
    glob = pitc.global_summary(locals_, store.support, store.h)
    return SummaryStore(store.support, store.h, blocks, locals_, glob)


def store_predict(store, query, query_idx, use_local_data=False):
    """Predict from the retained summaries, block m answering query slice m.

    Matches a from-scratch distributed run over the same block layout.
    """
    if len(query_idx) != len(store.blocks):
        raise ValueError("need one query slice per retained block")
    mean = np.empty(len(query))
    var = np.empty(len(query))
    for m, block in enumerate(store.blocks):
        idx = np.asarray(query_idx[m], dtype=np.intp)
        qpts = query.take(idx)
        if use_local_data:
            pred = pitc.ppic_predict_block(
                block, qpts, store.support, store.local_summaries[m], store.glob,
                store.h,
            )
        else:
            pred = pitc.ppitc_predict_block(
                qpts, store.support, store.glob, store.h, block.prior_mean
            )
        mean[idx] = pred.mean
        var[idx] = pred.var
    return Prediction(mean, var)
