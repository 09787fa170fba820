"""Core vocabulary types: job, cluster, resource pool, plan, and plan validation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Mapping, Optional

from .errors import InsufficientResources

if TYPE_CHECKING:
    from .profiles import BandwidthModel

INTRA_NODE = "intra-node"
INTRA_ZONE = "intra-zone"
INTRA_REGION = "intra-region"
INTER_REGION = "inter-region"
LOCALITIES = (INTRA_NODE, INTRA_ZONE, INTRA_REGION, INTER_REGION)

# Within a region the cross-zone bandwidth is treated as equivalent to the
# intra-zone bandwidth, so a lookup for one class may fall back to the other.
_LOCALITY_ALIASES = {INTRA_REGION: INTRA_ZONE, INTRA_ZONE: INTRA_REGION}


@dataclass(frozen=True)
class LayerRef:
    """A layer identity plus repeat count; N identical layers are stored once."""

    layer_id: str
    repeat: int = 1

    def __post_init__(self):
        if self.repeat < 1:
            raise ValueError(f"layer {self.layer_id!r}: repeat must be >= 1")


@dataclass(frozen=True)
class JobSpec:
    """Model and training description, independent of any cluster."""

    model_name: str
    layers: tuple[LayerRef, ...]
    global_batch_size: int
    sequence_length: int
    data_type_size: int
    optimizer_mul_factor: float
    allowed_microbatch_sizes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(
            self, "allowed_microbatch_sizes", tuple(self.allowed_microbatch_sizes)
        )
        if self.global_batch_size < 1:
            raise ValueError("global_batch_size must be >= 1")
        if self.sequence_length < 1:
            raise ValueError("sequence_length must be >= 1")
        if self.data_type_size < 1:
            raise ValueError("data_type_size must be >= 1")
        if self.optimizer_mul_factor <= 0:
            raise ValueError("optimizer_mul_factor must be > 0")
        if not self.layers:
            raise ValueError("job needs at least one layer")
        if not self.allowed_microbatch_sizes:
            raise ValueError("job needs at least one allowed microbatch size")
        if any(m < 1 for m in self.allowed_microbatch_sizes):
            raise ValueError("microbatch sizes must be >= 1")

    @property
    def total_layers(self) -> int:
        return sum(ref.repeat for ref in self.layers)

    @cached_property
    def layer_sequence(self) -> tuple[str, ...]:
        """Layer ids expanded by repeat count, in model order."""
        out: list[str] = []
        for ref in self.layers:
            out.extend([ref.layer_id] * ref.repeat)
        return tuple(out)


@dataclass(frozen=True)
class GpuTypeSpec:
    name: str
    mem_bytes: int
    gpus_per_node: int
    price_per_gpu_hour: float

    def __post_init__(self):
        if self.mem_bytes <= 0:
            raise ValueError(f"{self.name}: mem_bytes must be > 0")
        if self.gpus_per_node < 1:
            raise ValueError(f"{self.name}: gpus_per_node must be >= 1")
        if self.price_per_gpu_hour < 0:
            raise ValueError(f"{self.name}: price must be >= 0")


@dataclass(frozen=True)
class ResourcePool:
    """Available node counts per (gpu_type, region), after zone consolidation.

    Value object: zero entries are dropped so pools compare canonically.
    """

    counts: tuple[tuple[tuple[str, str], int], ...] = ()

    def __post_init__(self):
        items = []
        for key, n in dict(self.counts).items():
            if n < 0:
                raise ValueError(f"negative count for {key}")
            if n > 0:
                items.append((tuple(key), int(n)))
        items.sort()
        object.__setattr__(self, "counts", tuple(items))

    @classmethod
    def from_mapping(cls, mapping: Mapping[tuple[str, str], int]) -> "ResourcePool":
        return cls(tuple(mapping.items()))

    def get(self, gpu_type: str, region: str) -> int:
        for key, n in self.counts:
            if key == (gpu_type, region):
                return n
        return 0

    def as_dict(self) -> dict[tuple[str, str], int]:
        return {key: n for key, n in self.counts}

    def subtract(self, demand: "ResourcePool") -> "ResourcePool":
        out = self.as_dict()
        for (gpu_type, region), n in demand.counts:
            have = out.get((gpu_type, region), 0)
            if n > have:
                raise InsufficientResources(gpu_type, region, have, n)
            out[(gpu_type, region)] = have - n
        return ResourcePool.from_mapping(out)

    def add(self, other: "ResourcePool") -> "ResourcePool":
        out = self.as_dict()
        for key, n in other.counts:
            out[key] = out.get(key, 0) + n
        return ResourcePool.from_mapping(out)

    def clip(self, ceiling: "ResourcePool") -> "ResourcePool":
        """Componentwise min against a ceiling pool."""
        out = {}
        for key, n in self.counts:
            cap = ceiling.get(*key)
            if min(n, cap) > 0:
                out[key] = min(n, cap)
        return ResourcePool.from_mapping(out)

    def total_nodes(self) -> int:
        return sum(n for _, n in self.counts)

    def regions(self) -> tuple[str, ...]:
        return tuple(sorted({region for (_, region), _ in self.counts}))

    def region_nodes(self, region: str) -> int:
        return sum(n for (_, r), n in self.counts if r == region)

    @property
    def key(self) -> tuple:
        return self.counts

    def __bool__(self) -> bool:
        return bool(self.counts)


def pool_subtract(pool: ResourcePool, demand: ResourcePool) -> ResourcePool:
    """Componentwise difference; raises InsufficientResources on any deficit."""
    return pool.subtract(demand)


def pool_add(pool: ResourcePool, extra: ResourcePool) -> ResourcePool:
    """Componentwise sum, the inverse of pool_subtract."""
    return pool.add(extra)


@dataclass(frozen=True)
class ClusterSpec:
    """GPU types, zone/region topology, availability, links, and egress prices.

    Zones are consolidated into regions at construction time; the zone list is
    retained for reporting and for trace events addressed to specific zones.
    """

    gpu_types: Mapping[str, GpuTypeSpec]
    zones: tuple[tuple[str, str], ...]  # (zone, region)
    zone_availability: Mapping[tuple[str, str], int]  # (gpu_type, zone) -> nodes
    links: Mapping[tuple[str, str, str], "BandwidthModel"]
    egress: Mapping[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "gpu_types", dict(self.gpu_types))
        object.__setattr__(self, "zones", tuple(tuple(z) for z in self.zones))
        object.__setattr__(self, "zone_availability", dict(self.zone_availability))
        object.__setattr__(self, "links", dict(self.links))
        object.__setattr__(self, "egress", dict(self.egress))
        zone_names = {z for z, _ in self.zones}
        for (gpu_type, zone), n in self.zone_availability.items():
            if gpu_type not in self.gpu_types:
                raise ValueError(f"availability references unknown GPU type {gpu_type!r}")
            if zone not in zone_names:
                raise ValueError(f"availability references unknown zone {zone!r}")
            if n < 0:
                raise ValueError(f"negative availability for {(gpu_type, zone)}")
        for (src, dst, locality) in self.links:
            if locality not in LOCALITIES:
                raise ValueError(f"unknown link locality {locality!r}")
            for t in (src, dst):
                if t not in self.gpu_types:
                    raise ValueError(f"link references unknown GPU type {t!r}")

    @cached_property
    def regions(self) -> tuple[str, ...]:
        return tuple(sorted({region for _, region in self.zones}))

    def region_of(self, zone: str) -> str:
        for z, region in self.zones:
            if z == zone:
                return region
        raise KeyError(f"unknown zone {zone!r}")

    @cached_property
    def region_availability(self) -> dict[tuple[str, str], int]:
        """Availability with zones collapsed into their regions."""
        out: dict[tuple[str, str], int] = {}
        for (gpu_type, zone), n in self.zone_availability.items():
            key = (gpu_type, self.region_of(zone))
            out[key] = out.get(key, 0) + n
        return out

    def pool(self) -> ResourcePool:
        return ResourcePool.from_mapping(self.region_availability)

    def gpu(self, name: str) -> GpuTypeSpec:
        try:
            return self.gpu_types[name]
        except KeyError:
            raise KeyError(f"unknown GPU type {name!r}") from None

    def link_model(self, src_type: str, dst_type: str, locality: str) -> "BandwidthModel":
        """Bandwidth model for a link class, with symmetric and zone/region fallbacks."""
        from .errors import MissingProfile

        for loc in (locality, _LOCALITY_ALIASES.get(locality)):
            if loc is None:
                continue
            model = self.links.get((src_type, dst_type, loc))
            if model is None:
                model = self.links.get((dst_type, src_type, loc))
            if model is not None:
                return model
        raise MissingProfile("link", (src_type, dst_type, locality))

    def egress_price(self, src_region: str, dst_region: str) -> float:
        if (src_region, dst_region) in self.egress:
            return self.egress[(src_region, dst_region)]
        if (dst_region, src_region) in self.egress:
            return self.egress[(dst_region, src_region)]
        return 0.0

    def with_zone_availability(
        self, updates: Mapping[tuple[str, str], int]
    ) -> "ClusterSpec":
        """Functional update of zone-level node counts (absolute values)."""
        avail = dict(self.zone_availability)
        avail.update(updates)
        return ClusterSpec(
            gpu_types=self.gpu_types,
            zones=self.zones,
            zone_availability=avail,
            links=self.links,
            egress=self.egress,
        )


@dataclass(frozen=True)
class ReplicaAssignment:
    """One data-parallel replica of a stage: a TP group on a single node type.

    region is normally inherited from the stage; an explicit value lets
    externally authored plans express (invalid) cross-region stages so that
    validation can report them.
    """

    gpu_type: str
    tp: int
    region: Optional[str] = None


@dataclass(frozen=True)
class StageAssignment:
    first_layer: int
    layer_count: int
    region: str
    replicas: tuple[ReplicaAssignment, ...]

    def __post_init__(self):
        object.__setattr__(self, "replicas", tuple(self.replicas))

    def replica_region(self, idx: int) -> str:
        return self.replicas[idx].region or self.region

    def layer_range(self) -> tuple[int, int]:
        return (self.first_layer, self.layer_count)


@dataclass(frozen=True)
class Plan:
    """A full parallelization plan: P stages, D replicas each, one microbatch size."""

    stages: tuple[StageAssignment, ...]
    mbs: int
    dp_degree: int

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if self.mbs < 1:
            raise ValueError("mbs must be >= 1")
        if self.dp_degree < 1:
            raise ValueError("dp_degree must be >= 1")
        if not self.stages:
            raise ValueError("plan needs at least one stage")

    @classmethod
    def for_job(
        cls,
        job: JobSpec,
        stages: Iterable[StageAssignment],
        mbs: int,
        dp_degree: int,
    ) -> "Plan":
        """Construct a plan, enforcing the batch divisibility invariant."""
        if job.global_batch_size % (dp_degree * mbs) != 0:
            raise ValueError(
                f"global batch size {job.global_batch_size} not divisible by "
                f"D*mbs = {dp_degree}*{mbs}"
            )
        return cls(stages=tuple(stages), mbs=mbs, dp_degree=dp_degree)

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    def n_microbatches(self, job: JobSpec) -> int:
        nb, rem = divmod(job.global_batch_size, self.dp_degree * self.mbs)
        if rem != 0 or nb < 1:
            raise ValueError("plan does not divide the global batch size")
        return nb

    def canonical_key(self) -> tuple:
        """Deterministic total order over plans, used for tie-breaking."""
        return (
            self.num_stages,
            self.mbs,
            self.dp_degree,
            tuple(
                (s.first_layer, s.layer_count, s.region,
                 tuple((r.gpu_type, r.tp, r.region or s.region) for r in s.replicas))
                for s in self.stages
            ),
        )

    def gpus_used(self, cluster: ClusterSpec) -> int:
        """GPUs paid for: whole nodes times gpus_per_node."""
        total = 0
        for (gpu_type, _), nodes in plan_node_demand(self, cluster).counts:
            total += nodes * cluster.gpu(gpu_type).gpus_per_node
        return total


def replicas_per_node(gpus_per_node: int, tp: int) -> int:
    """How many TP-`tp` replicas of one stage a node hosts (0 if tp exceeds the node)."""
    return gpus_per_node // tp


def _stage_group_nodes(gpus_per_node: int, tp: int, n_replicas: int) -> int:
    """Nodes needed by n same-(type,tp) replicas of one stage.

    Replicas of different stages never share a node. A replica whose tp exceeds
    the node width (an H1 violation, still reported not crashed) is booked as
    spanning ceil(tp / gpus_per_node) nodes.
    """
    per_node = replicas_per_node(gpus_per_node, tp)
    if per_node >= 1:
        return -(-n_replicas // per_node)
    return n_replicas * (-(-tp // gpus_per_node))


def stage_node_demand(stage: StageAssignment, cluster: ClusterSpec) -> ResourcePool:
    """Node demand of one stage under the packing rules, per (type, region)."""
    groups: dict[tuple[str, int, str], int] = {}
    for idx, rep in enumerate(stage.replicas):
        key = (rep.gpu_type, rep.tp, stage.replica_region(idx))
        groups[key] = groups.get(key, 0) + 1
    demand: dict[tuple[str, str], int] = {}
    for (gpu_type, tp, region), n in groups.items():
        gpn = cluster.gpu(gpu_type).gpus_per_node
        nodes = _stage_group_nodes(gpn, tp, n)
        demand[(gpu_type, region)] = demand.get((gpu_type, region), 0) + nodes
    return ResourcePool.from_mapping(demand)


def plan_node_demand(plan: Plan, cluster: ClusterSpec) -> ResourcePool:
    total = ResourcePool()
    for stage in plan.stages:
        total = total.add(stage_node_demand(stage, cluster))
    return total


@dataclass(frozen=True)
class Violation:
    """One structural problem found by validate_plan; data, not a fault."""

    code: str
    message: str
    stage: Optional[int] = None

    def __str__(self) -> str:
        where = f" (stage {self.stage})" if self.stage is not None else ""
        return f"{self.code}{where}: {self.message}"


def validate_plan(plan: Plan, job: JobSpec, cluster: ClusterSpec) -> list[Violation]:
    """Check every plan invariant plus resource fit; empty list means valid."""
    violations: list[Violation] = []

    cursor = 0
    for i, stage in enumerate(plan.stages):
        if stage.layer_count < 1:
            violations.append(Violation("layer-coverage", "stage has no layers", i))
        if stage.first_layer != cursor:
            violations.append(
                Violation(
                    "layer-coverage",
                    f"stage starts at layer {stage.first_layer}, expected {cursor}",
                    i,
                )
            )
        cursor = stage.first_layer + stage.layer_count
    if cursor != job.total_layers:
        violations.append(
            Violation(
                "layer-coverage",
                f"stages cover {cursor} layers, model has {job.total_layers}",
            )
        )

    for i, stage in enumerate(plan.stages):
        if len(stage.replicas) != plan.dp_degree:
            violations.append(
                Violation(
                    "replica-count",
                    f"stage has {len(stage.replicas)} replicas, plan D={plan.dp_degree}",
                    i,
                )
            )
        regions = {stage.replica_region(k) for k in range(len(stage.replicas))}
        regions.add(stage.region)
        if len(regions) > 1:
            violations.append(
                Violation("stage-crosses-region", "stage crosses region", i)
            )
        for region in regions:
            if region not in cluster.regions:
                violations.append(
                    Violation("unknown-region", f"region {region!r} not in cluster", i)
                )
        for rep in stage.replicas:
            if rep.gpu_type not in cluster.gpu_types:
                violations.append(
                    Violation(
                        "unknown-gpu-type", f"GPU type {rep.gpu_type!r} not in cluster", i
                    )
                )
                continue
            if rep.tp < 1:
                violations.append(
                    Violation("tp-nonpositive", f"tp={rep.tp} must be >= 1", i)
                )
            elif rep.tp > cluster.gpu(rep.gpu_type).gpus_per_node:
                violations.append(
                    Violation(
                        "tp-exceeds-node-width",
                        f"TP exceeds node width: tp={rep.tp} on "
                        f"{rep.gpu_type} ({cluster.gpu(rep.gpu_type).gpus_per_node}/node)",
                        i,
                    )
                )

    if job.global_batch_size % (plan.dp_degree * plan.mbs) != 0:
        violations.append(
            Violation(
                "batch-divisibility",
                f"gbs={job.global_batch_size} not divisible by "
                f"D*mbs={plan.dp_degree * plan.mbs}",
            )
        )

    # Resource fit is only meaningful when types/regions resolved.
    if not any(v.code in ("unknown-gpu-type", "unknown-region") for v in violations):
        demand = plan_node_demand(plan, cluster)
        available = cluster.pool()
        for (gpu_type, region), n in demand.counts:
            have = available.get(gpu_type, region)
            if n > have:
                violations.append(
                    Violation(
                        "insufficient-resources",
                        f"need {n} node(s) of {gpu_type} in {region}, have {have}",
                    )
                )

    return violations


def iter_worker_ids(plan: Plan):
    """Worker ids (stage, replica, tp_rank), lexicographic."""
    for i, stage in enumerate(plan.stages):
        for k, rep in enumerate(stage.replicas):
            for r in range(rep.tp):
                yield (i, k, r)


def worker_id_str(worker: tuple[int, int, int]) -> str:
    return f"{worker[0]}:{worker[1]}:{worker[2]}"


class Objective:
    MAX_THROUGHPUT = "max-throughput"
    MIN_COST_PER_ITERATION = "min-cost-per-iteration"
    ALL = (MAX_THROUGHPUT, MIN_COST_PER_ITERATION)


@dataclass(frozen=True)
class Budget:
    """Maximum monetary cost per iteration."""

    limit: float

    def __post_init__(self):
        if self.limit < 0:
            raise ValueError("budget must be >= 0")


@dataclass(frozen=True)
class MinThroughput:
    """Minimum iterations per second."""

    floor: float

    def __post_init__(self):
        if self.floor <= 0:
            raise ValueError("throughput floor must be > 0")


@dataclass(frozen=True)
class SearchRequest:
    objective: str
    quotas: ResourcePool
    constraint: Optional[object] = None  # Budget | MinThroughput | None

    def __post_init__(self):
        if self.objective not in Objective.ALL:
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.constraint is not None and not isinstance(
            self.constraint, (Budget, MinThroughput)
        ):
            raise ValueError("constraint must be Budget, MinThroughput, or None")


@dataclass(frozen=True)
class SimReport:
    """Everything the simulator derives for one plan."""

    t_iter: float
    t_pipeline: tuple[float, ...]
    t_sync: float
    t_update: float
    straggler_stage: int
    t_straggler: float
    peak_mem: Mapping[tuple[int, int, int], int]
    oom: bool
    oom_workers: tuple[tuple[int, int, int], ...]
    c_comp: float
    c_comm: float
    c_iter: float

    @property
    def throughput(self) -> float:
        return 1.0 / self.t_iter if self.t_iter > 0 else math.inf

    def to_json_dict(self) -> dict:
        return {
            "t_iter": self.t_iter,
            "t_pipeline": list(self.t_pipeline),
            "t_sync": self.t_sync,
            "t_update": self.t_update,
            "straggler_stage": self.straggler_stage,
            "t_straggler": self.t_straggler,
            "peak_mem": {worker_id_str(w): int(b) for w, b in sorted(self.peak_mem.items())},
            "oom": self.oom,
            "oom_workers": [worker_id_str(w) for w in self.oom_workers],
            "c_comp": self.c_comp,
            "c_comm": self.c_comm,
            "c_iter": self.c_iter,
        }
