"""Evaluate a plan: per-worker peak memory, 1F1B iteration time, monetary cost.

Every operation here is a pure function of immutable inputs; the planner and
the exhaustive oracle both call these exact code paths, so any disagreement
between them is a search bug rather than a model mismatch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

from .domain import (
    INTER_REGION,
    INTRA_NODE,
    INTRA_REGION,
    ClusterSpec,
    JobSpec,
    Plan,
    ResourcePool,
    SimReport,
    StageAssignment,
    Violation,
    iter_worker_ids,
    plan_node_demand,
    replicas_per_node,
    validate_plan,
)
from .errors import InvalidPlan
from .profiles import ProfileStore, comm_time


# ---------------------------------------------------------------------------
# Per-stage scalar kernels (shared by simulator and planner)
# ---------------------------------------------------------------------------


def stage_compute_time(
    store: ProfileStore, layer_ids: Sequence[str], gpu_type: str, tp: int, mbs: int
) -> tuple[float, float]:
    """Summed (forward, backward) seconds per microbatch over the stage layers."""
    key = ("ct", tuple(layer_ids), gpu_type, tp, mbs)
    cached = store._scalar_cache.get(key)
    if cached is None:
        fwd = 0.0
        bwd = 0.0
        for lid in layer_ids:
            rec = store.record(lid, gpu_type, tp, mbs)
            fwd += rec.t_fwd
            bwd += rec.t_bwd
        cached = (fwd, bwd)
        store._scalar_cache[key] = cached
    return cached


def stage_update_time(
    store: ProfileStore, layer_ids: Sequence[str], gpu_type: str, tp: int, mbs: int
) -> float:
    key = ("ut", tuple(layer_ids), gpu_type, tp, mbs)
    cached = store._scalar_cache.get(key)
    if cached is None:
        cached = sum(store.record(lid, gpu_type, tp, mbs).t_update for lid in layer_ids)
        store._scalar_cache[key] = cached
    return cached


def stage_param_count(
    store: ProfileStore, layer_ids: Sequence[str], gpu_type: str, tp: int, mbs: int
) -> int:
    """Parameter count of the stage as held by one worker (sharded by tp)."""
    key = ("pc", tuple(layer_ids), gpu_type, tp, mbs)
    cached = store._scalar_cache.get(key)
    if cached is None:
        cached = sum(store.record(lid, gpu_type, tp, mbs).params for lid in layer_ids)
        store._scalar_cache[key] = cached
    return cached


def stage_activation_bytes(
    store: ProfileStore, layer_ids: Sequence[str], gpu_type: str, tp: int, mbs: int
) -> int:
    """Bytes of stored activations per in-flight microbatch for the stage."""
    key = ("ab", tuple(layer_ids), gpu_type, tp, mbs)
    cached = store._scalar_cache.get(key)
    if cached is None:
        cached = sum(
            store.record(lid, gpu_type, tp, mbs).act_out_bytes
            + store.record(lid, gpu_type, tp, mbs).act_intermediate_bytes
            for lid in layer_ids
        )
        store._scalar_cache[key] = cached
    return cached


# ---------------------------------------------------------------------------
# Memory
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MemoryBreakdown:
    m_model: float
    m_activation: float
    components: dict

    @property
    def m_peak(self) -> float:
        return self.m_model + self.m_activation


def stage_memory(
    job: JobSpec,
    store: ProfileStore,
    layer_ids: Sequence[str],
    in_flight: int,
    gpu_type: str,
    tp: int,
    mbs: int,
) -> MemoryBreakdown:
    """Peak memory of one worker holding these layers with the given occupancy."""
    if not layer_ids:
        return MemoryBreakdown(0.0, 0.0, {
            "params": 0.0, "gradients": 0.0, "optimizer": 0.0,
            "comm_buffers": 0.0, "activations": 0.0,
        })
    params = stage_param_count(store, layer_ids, gpu_type, tp, mbs)
    base = params * job.data_type_size
    m_model = base * job.optimizer_mul_factor
    m_act = float(in_flight * stage_activation_bytes(store, layer_ids, gpu_type, tp, mbs))
    # mul_factor is opaque; label one copy params, one gradients, remainder
    # optimizer state (which subsumes communication buffers).
    gradients = min(base, max(m_model - base, 0.0))
    optimizer = max(m_model - base - gradients, 0.0)
    return MemoryBreakdown(
        m_model=m_model,
        m_activation=m_act,
        components={
            "params": float(base),
            "gradients": gradients,
            "optimizer": optimizer,
            "comm_buffers": 0.0,
            "activations": m_act,
        },
    )


def in_flight_microbatches(num_stages: int, stage_idx: int) -> int:
    """1F1B occupancy: stage i keeps P - i activations alive."""
    return num_stages - stage_idx


def _stage_layers(job: JobSpec, stage: StageAssignment) -> tuple[str, ...]:
    seq = job.layer_sequence
    return seq[stage.first_layer : stage.first_layer + stage.layer_count]


def worker_memory(
    plan: Plan, stage_idx: int, replica: int, job: JobSpec, store: ProfileStore
) -> MemoryBreakdown:
    """Memory breakdown for any worker of (stage, replica); tp ranks are identical."""
    stage = plan.stages[stage_idx]
    rep = stage.replicas[replica]
    return stage_memory(
        job,
        store,
        _stage_layers(job, stage),
        in_flight_microbatches(plan.num_stages, stage_idx),
        rep.gpu_type,
        rep.tp,
        plan.mbs,
    )


def check_oom(
    plan: Plan, job: JobSpec, cluster: ClusterSpec, store: ProfileStore
) -> tuple[bool, list[tuple[int, int, int]]]:
    """Workers whose peak memory exceeds their GPU capacity."""
    offenders: list[tuple[int, int, int]] = []
    for i, stage in enumerate(plan.stages):
        for k, rep in enumerate(stage.replicas):
            peak = worker_memory(plan, i, k, job, store).m_peak
            if peak > cluster.gpu(rep.gpu_type).mem_bytes:
                offenders.extend((i, k, r) for r in range(rep.tp))
    return (bool(offenders), offenders)


# ---------------------------------------------------------------------------
# Time
# ---------------------------------------------------------------------------


class StageTime(NamedTuple):
    t_fwd_stage: float
    t_bwd_stage: float


def stage_time(
    plan: Plan,
    stage_idx: int,
    replica: int,
    job: JobSpec,
    store: ProfileStore,
    cluster: ClusterSpec,
) -> StageTime:
    """Per-microbatch forward/backward seconds of one replica of a stage."""
    stage = plan.stages[stage_idx]
    rep = stage.replicas[replica]
    cluster.gpu(rep.gpu_type)  # fail fast on unknown types
    fwd, bwd = stage_compute_time(
        store, _stage_layers(job, stage), rep.gpu_type, rep.tp, plan.mbs
    )
    return StageTime(fwd, bwd)


def stage_straggler_time(
    plan: Plan, stage_idx: int, job: JobSpec, store: ProfileStore, cluster: ClusterSpec
) -> float:
    """t_i: fwd+bwd per microbatch of the slowest replica of the stage."""
    stage = plan.stages[stage_idx]
    layers = _stage_layers(job, stage)
    worst = 0.0
    for rep in stage.replicas:
        fwd, bwd = stage_compute_time(store, layers, rep.gpu_type, rep.tp, plan.mbs)
        worst = max(worst, fwd + bwd)
    return worst


def _locality(region_a: str, region_b: str) -> str:
    return INTRA_REGION if region_a == region_b else INTER_REGION


def p2p_time(
    plan: Plan, stage_idx: int, job: JobSpec, store: ProfileStore, cluster: ClusterSpec
) -> float:
    """Per-microbatch activation transfer time from stage_idx to stage_idx+1.

    Each data-parallel chain k sends one full boundary activation tensor from
    its sender replica to the matching receiver replica; the slowest chain
    paces the boundary. Zero for the last stage.
    """
    if stage_idx >= plan.num_stages - 1:
        return 0.0
    sender = plan.stages[stage_idx]
    receiver = plan.stages[stage_idx + 1]
    boundary_layer = job.layer_sequence[sender.first_layer + sender.layer_count - 1]
    locality = _locality(sender.region, receiver.region)
    worst = 0.0
    for k in range(len(sender.replicas)):
        srep = sender.replicas[k]
        rrep = receiver.replicas[min(k, len(receiver.replicas) - 1)]
        nbytes = store.record(boundary_layer, srep.gpu_type, srep.tp, plan.mbs).act_out_bytes
        model = cluster.link_model(srep.gpu_type, rrep.gpu_type, locality)
        worst = max(worst, comm_time(model, nbytes))
    return worst


def _replica_node_slots(stage: StageAssignment, cluster: ClusterSpec) -> list[tuple]:
    """Node slot id per replica under stage packing; equal slot means same node."""
    slots = []
    counters: dict[tuple[str, int], int] = {}
    for rep in stage.replicas:
        key = (rep.gpu_type, rep.tp)
        idx = counters.get(key, 0)
        counters[key] = idx + 1
        cap = replicas_per_node(cluster.gpu(rep.gpu_type).gpus_per_node, rep.tp)
        if cap >= 1:
            slots.append((rep.gpu_type, rep.tp, idx // cap))
        else:
            slots.append((rep.gpu_type, rep.tp, "span", idx))
    return slots


def sync_time(
    plan: Plan, stage_idx: int, job: JobSpec, store: ProfileStore, cluster: ClusterSpec
) -> float:
    """Ring all-reduce seconds for gradient sync across the stage's D replicas.

    bytes is the largest per-replica gradient shard; bandwidth is the slowest
    link among replica pairs, evaluated at the ring chunk size bytes/D.
    """
    stage = plan.stages[stage_idx]
    d = len(stage.replicas)
    if d <= 1:
        return 0.0
    layers = _stage_layers(job, stage)
    nbytes = 0
    for rep in stage.replicas:
        params = stage_param_count(store, layers, rep.gpu_type, rep.tp, plan.mbs)
        nbytes = max(nbytes, params * job.data_type_size)
    if nbytes == 0:
        return 0.0
    chunk = nbytes / d
    slots = _replica_node_slots(stage, cluster)
    bw = math.inf
    for a in range(d):
        for b in range(a + 1, d):
            if slots[a] == slots[b]:
                locality = INTRA_NODE
            else:
                locality = _locality(stage.replica_region(a), stage.replica_region(b))
            model = cluster.link_model(
                stage.replicas[a].gpu_type, stage.replicas[b].gpu_type, locality
            )
            bw = min(bw, model.bandwidth(chunk))
    return 2.0 * (d - 1) / d * nbytes / bw


def update_time(
    plan: Plan, stage_idx: int, job: JobSpec, store: ProfileStore
) -> float:
    """Slowest replica's parameter-update seconds for the stage."""
    stage = plan.stages[stage_idx]
    layers = _stage_layers(job, stage)
    return max(
        stage_update_time(store, layers, rep.gpu_type, rep.tp, plan.mbs)
        for rep in stage.replicas
    )


# ---------------------------------------------------------------------------
# Cost
# ---------------------------------------------------------------------------


class CostBreakdown(NamedTuple):
    c_comp: float
    c_comm: float
    c_iter: float


def _boundary_egress_bytes(
    plan: Plan, stage_idx: int, job: JobSpec, store: ProfileStore
) -> int:
    """Per-microbatch bytes one direction across the boundary, all D chains."""
    sender = plan.stages[stage_idx]
    boundary_layer = job.layer_sequence[sender.first_layer + sender.layer_count - 1]
    return sum(
        store.record(boundary_layer, rep.gpu_type, rep.tp, plan.mbs).act_out_bytes
        for rep in sender.replicas
    )


def cost_per_iteration(
    plan: Plan,
    t_iter: float,
    job: JobSpec,
    cluster: ClusterSpec,
    store: ProfileStore,
) -> CostBreakdown:
    """Compute rental cost plus inter-region transfer cost for one iteration.

    Compute is billed per allocated node (gpus_per_node GPUs each); transfer
    covers forward activations and backward activation-gradients across every
    region-crossing pipeline boundary, for all microbatches of all chains.
    DP gradient sync never crosses regions for valid plans.
    """
    rate = 0.0
    for (gpu_type, _), nodes in plan_node_demand(plan, cluster).counts:
        g = cluster.gpu(gpu_type)
        rate += nodes * g.gpus_per_node * g.price_per_gpu_hour / 3600.0
    c_comp = rate * t_iter

    nb = plan.n_microbatches(job)
    c_comm = 0.0
    for i in range(plan.num_stages - 1):
        src = plan.stages[i].region
        dst = plan.stages[i + 1].region
        if src == dst:
            continue
        per_dir = _boundary_egress_bytes(plan, i, job, store) * nb
        c_comm += per_dir * cluster.egress_price(src, dst)
        c_comm += per_dir * cluster.egress_price(dst, src)
    return CostBreakdown(c_comp, c_comm, c_comp + c_comm)


# ---------------------------------------------------------------------------
# Full simulation
# ---------------------------------------------------------------------------


def simulate(
    plan: Plan, job: JobSpec, cluster: ClusterSpec, store: ProfileStore
) -> SimReport:
    """Iteration time, per-worker memory, and cost for a valid plan.

    T_pp = sum_j (t_j + p2p_j) + (N_b - 1) * max_j (t_j + p2p_j): one full
    warmup/cooldown traversal plus a steady phase paced by the straggler.
    Synchronizations overlap across stages (max), updates run concurrently
    (max). All D pipelines share the per-stage straggler pacing, so their
    times coincide.
    """
    violations = validate_plan(plan, job, cluster)
    if violations:
        raise InvalidPlan(violations)

    nb = plan.n_microbatches(job)
    p = plan.num_stages

    cycle = []
    for i in range(p):
        t_i = stage_straggler_time(plan, i, job, store, cluster)
        p2p_i = p2p_time(plan, i, job, store, cluster)
        cycle.append(t_i + p2p_i)
    t_pp = sum(cycle) + (nb - 1) * max(cycle)

    t_sync = max(sync_time(plan, i, job, store, cluster) for i in range(p))
    t_update = max(update_time(plan, i, job, store) for i in range(p))
    t_iter = t_pp + t_sync + t_update

    straggler_stage = max(range(p), key=lambda i: (cycle[i], -i))

    peak_mem: dict[tuple[int, int, int], int] = {}
    for i, stage in enumerate(plan.stages):
        for k, rep in enumerate(stage.replicas):
            peak = int(worker_memory(plan, i, k, job, store).m_peak)
            for r in range(rep.tp):
                peak_mem[(i, k, r)] = peak
    oom, offenders = check_oom(plan, job, cluster, store)

    cost = cost_per_iteration(plan, t_iter, job, cluster, store)

    return SimReport(
        t_iter=t_iter,
        t_pipeline=tuple([t_pp] * plan.dp_degree),
        t_sync=t_sync,
        t_update=t_update,
        straggler_stage=straggler_stage,
        t_straggler=cycle[straggler_stage],
        peak_mem=peak_mem,
        oom=oom,
        oom_workers=tuple(offenders),
        c_comp=cost.c_comp,
        c_comm=cost.c_comm,
        c_iter=cost.c_iter,
    )
