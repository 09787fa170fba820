"""Profile ingestion and lookups: layer timings/sizes, bandwidth models, file I/O.

The job and cluster JSON schemas here are the wire format the rest of the
tooling consumes; actual on-GPU measurement is out of scope, so a synthetic
generator provides deterministic fixtures with analytic cost curves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .domain import (
    INTER_REGION,
    INTRA_NODE,
    INTRA_REGION,
    INTRA_ZONE,
    LOCALITIES,
    ClusterSpec,
    GpuTypeSpec,
    JobSpec,
    LayerRef,
)
from .errors import (
    ConsistencyError,
    DegenerateFit,
    MissingProfile,
    ParseError,
    SchemaError,
)

Source = Union[str, Path, IO[str]]

_POSITIVITY_GRID = 65  # points checked when asserting bandwidth > 0 over the range


@dataclass(frozen=True)
class BandwidthModel:
    """Polynomial bus bandwidth (bytes/s) in x = log2(message bytes).

    Evaluation clamps x to the measured range, so queries outside it reuse the
    boundary bandwidth rather than extrapolating.
    """

    coefficients: tuple[float, ...]
    valid_range: tuple[int, int]
    residual: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        object.__setattr__(self, "valid_range", (int(self.valid_range[0]), int(self.valid_range[1])))
        lo, hi = self.valid_range
        if not self.coefficients:
            raise ValueError("bandwidth model needs at least one coefficient")
        if lo < 1 or hi < lo:
            raise ValueError(f"bad valid_range {self.valid_range}")
        for x in np.linspace(math.log2(lo), math.log2(hi), _POSITIVITY_GRID):
            if self._eval(float(x)) <= 0:
                raise DegenerateFit(
                    f"bandwidth non-positive at message size 2^{x:.2f} B"
                )

    def _eval(self, x: float) -> float:
        # Horner, coefficients stored low to high.
        acc = 0.0
        for c in reversed(self.coefficients):
            acc = acc * x + c
        return acc

    def bandwidth(self, nbytes: float) -> float:
        """Bandwidth in bytes/s at a message size, clamped to the valid range."""
        if nbytes <= 0:
            raise ValueError("message size must be > 0")
        lo, hi = self.valid_range
        x = math.log2(min(max(nbytes, lo), hi))
        return self._eval(x)

    def to_json_dict(self) -> dict:
        return {
            "coefficients": list(self.coefficients),
            "valid_range": list(self.valid_range),
            "residual": self.residual,
        }


def fit_bandwidth(
    samples: Sequence[tuple[float, float]], degree: int = 3
) -> BandwidthModel:
    """Least-squares polynomial fit of bus bandwidth over log2(message bytes).

    samples are (message bytes, measured seconds) pairs; bandwidth is
    bytes/seconds. Needs at least degree+1 distinct sizes.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    if not samples:
        raise DegenerateFit("no samples")
    sizes = []
    times = []
    for nbytes, secs in samples:
        if nbytes <= 0:
            raise ValueError(f"message size must be > 0, got {nbytes}")
        if secs <= 0:
            raise ValueError(f"measured time must be > 0, got {secs}")
        sizes.append(float(nbytes))
        times.append(float(secs))
    distinct = len(set(sizes))
    if distinct < degree + 1:
        raise DegenerateFit(
            f"{distinct} distinct sizes cannot determine a degree-{degree} polynomial"
        )
    xs = np.log2(np.asarray(sizes))
    ys = np.asarray(sizes) / np.asarray(times)
    coeffs, diag = np.polynomial.polynomial.polyfit(xs, ys, degree, full=True)
    rank = int(diag[1])
    if rank < degree + 1:
        raise DegenerateFit("normal system is singular")
    fitted = np.polynomial.polynomial.polyval(xs, coeffs)
    residual = float(np.sum((fitted - ys) ** 2))
    return BandwidthModel(
        coefficients=tuple(float(c) for c in coeffs),
        valid_range=(int(min(sizes)), int(max(sizes))),
        residual=residual,
    )


def comm_time(model: BandwidthModel, nbytes: float) -> float:
    """Seconds to move nbytes over a link described by the model."""
    return nbytes / model.bandwidth(nbytes)


@dataclass(frozen=True)
class LayerRecord:
    """One profiled operating point of a layer."""

    t_fwd: float
    t_bwd: float
    t_update: float
    params: int
    act_out_bytes: int
    act_intermediate_bytes: int

    def __post_init__(self):
        for name in ("t_fwd", "t_bwd", "t_update"):
            if getattr(self, name) < 0:
                raise ConsistencyError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.params < 0 or self.act_out_bytes < 0 or self.act_intermediate_bytes < 0:
            raise ConsistencyError("sizes must be >= 0")


@dataclass
class LayerProfile:
    layer_id: str
    records: dict[tuple[str, int, int], LayerRecord] = field(default_factory=dict)

    def record(self, gpu_type: str, tp: int, mbs: int) -> LayerRecord:
        try:
            return self.records[(gpu_type, tp, mbs)]
        except KeyError:
            raise MissingProfile("layer", (self.layer_id, gpu_type, tp, mbs)) from None


class ProfileStore:
    """Immutable-after-load map of layer profiles; absence is an explicit error."""

    def __init__(self, layers: Mapping[str, LayerProfile]):
        self._layers = dict(layers)
        self._scalar_cache: dict = {}

    @property
    def layers(self) -> dict[str, LayerProfile]:
        return self._layers

    def layer(self, layer_id: str) -> LayerProfile:
        try:
            return self._layers[layer_id]
        except KeyError:
            raise MissingProfile("layer", (layer_id,)) from None

    def record(self, layer_id: str, gpu_type: str, tp: int, mbs: int) -> LayerRecord:
        return self.layer(layer_id).record(gpu_type, tp, mbs)

    def has(self, layer_id: str, gpu_type: str, tp: int, mbs: int) -> bool:
        prof = self._layers.get(layer_id)
        return prof is not None and (gpu_type, tp, mbs) in prof.records

    def gpu_types(self) -> tuple[str, ...]:
        out = {t for prof in self._layers.values() for (t, _, _) in prof.records}
        return tuple(sorted(out))

    def tp_values(self, gpu_type: Optional[str] = None) -> tuple[int, ...]:
        out = set()
        for prof in self._layers.values():
            for (t, tp, _) in prof.records:
                if gpu_type is None or t == gpu_type:
                    out.add(tp)
        return tuple(sorted(out))

    def mbs_values(self) -> tuple[int, ...]:
        out = {m for prof in self._layers.values() for (_, _, m) in prof.records}
        return tuple(sorted(out))

    def check_consistency(self) -> None:
        """Raise ConsistencyError on negative times or params/sharding mismatches."""
        for layer_id, prof in self._layers.items():
            base: dict[str, int] = {}
            for (gpu_type, tp, mbs), rec in prof.records.items():
                if tp < 1 or mbs < 1:
                    raise ConsistencyError(
                        f"layer {layer_id}: tp and mbs must be >= 1 (got tp={tp}, mbs={mbs})"
                    )
                if tp == 1:
                    if gpu_type in base and base[gpu_type] != rec.params:
                        raise ConsistencyError(
                            f"layer {layer_id}: params differ across tp=1 records "
                            f"({base[gpu_type]} vs {rec.params})"
                        )
                    base.setdefault(gpu_type, rec.params)
            # params(tp=1) must agree across GPU types as well
            if len(set(base.values())) > 1:
                raise ConsistencyError(
                    f"layer {layer_id}: params at tp=1 differ across GPU types {base}"
                )
            for (gpu_type, tp, mbs), rec in prof.records.items():
                if tp > 1 and gpu_type in base:
                    expect = -(-base[gpu_type] // tp)
                    if rec.params != expect:
                        raise ConsistencyError(
                            f"layer {layer_id} ({gpu_type}, tp={tp}, mbs={mbs}): params "
                            f"{rec.params} != ceil({base[gpu_type]}/{tp}) = {expect}"
                        )


def lookup_layer(
    store: ProfileStore, layer_id: str, gpu_type: str, tp: int, mbs: int
) -> LayerRecord:
    """Exact-match profile lookup; no interpolation across tp or mbs."""
    return store.record(layer_id, gpu_type, tp, mbs)


# ---------------------------------------------------------------------------
# JSON I/O
# ---------------------------------------------------------------------------


def _read_json(source: Source, what: str) -> object:
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{what}: {exc}") from exc


def _write_json(payload: object, dest: Source) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        Path(dest).write_text(text)


def _require(obj: dict, key: str, path: str):
    if not isinstance(obj, dict):
        raise SchemaError(path, f"expected object, got {type(obj).__name__}")
    if key not in obj:
        raise SchemaError(f"{path}.{key}", "missing required field")
    return obj[key]


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected number, got {type(value).__name__}")
    if isinstance(value, float) and not value.is_integer():
        raise SchemaError(path, f"expected integer, got {value}")
    return int(value)


def _as_float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected number, got {type(value).__name__}")
    return float(value)


def load_job_profile(source: Source) -> tuple[JobSpec, ProfileStore]:
    """Load the job profile JSON: model description plus per-layer records."""
    raw = _read_json(source, "job profile")
    if not isinstance(raw, dict):
        raise SchemaError("$", "top level must be an object")
    layers_raw = _require(raw, "layers", "$")
    if not isinstance(layers_raw, list) or not layers_raw:
        raise SchemaError("$.layers", "must be a non-empty array")

    refs: list[LayerRef] = []
    profiles: dict[str, LayerProfile] = {}
    for i, layer_raw in enumerate(layers_raw):
        lpath = f"$.layers[{i}]"
        layer_id = str(_require(layer_raw, "id", lpath))
        repeat = _as_int(layer_raw.get("repeat", 1), f"{lpath}.repeat")
        refs.append(LayerRef(layer_id=layer_id, repeat=repeat))
        prof = profiles.setdefault(layer_id, LayerProfile(layer_id))
        records_raw = _require(layer_raw, "records", lpath)
        if not isinstance(records_raw, list):
            raise SchemaError(f"{lpath}.records", "must be an array")
        for j, rec_raw in enumerate(records_raw):
            rpath = f"{lpath}.records[{j}]"
            key = (
                str(_require(rec_raw, "gpu_type", rpath)),
                _as_int(_require(rec_raw, "tp", rpath), f"{rpath}.tp"),
                _as_int(_require(rec_raw, "mbs", rpath), f"{rpath}.mbs"),
            )
            try:
                rec = LayerRecord(
                    t_fwd=_as_float(_require(rec_raw, "t_fwd", rpath), f"{rpath}.t_fwd"),
                    t_bwd=_as_float(_require(rec_raw, "t_bwd", rpath), f"{rpath}.t_bwd"),
                    t_update=_as_float(
                        _require(rec_raw, "t_update", rpath), f"{rpath}.t_update"
                    ),
                    params=_as_int(_require(rec_raw, "params", rpath), f"{rpath}.params"),
                    act_out_bytes=_as_int(
                        _require(rec_raw, "act_out_bytes", rpath), f"{rpath}.act_out_bytes"
                    ),
                    act_intermediate_bytes=_as_int(
                        _require(rec_raw, "act_intermediate_bytes", rpath),
                        f"{rpath}.act_intermediate_bytes",
                    ),
                )
            except ConsistencyError as exc:
                raise ConsistencyError(f"{rpath}: {exc}") from exc
            if key in prof.records and prof.records[key] != rec:
                raise ConsistencyError(
                    f"{rpath}: conflicting duplicate record for {key}"
                )
            prof.records[key] = rec

    job = JobSpec(
        model_name=str(_require(raw, "model", "$")),
        layers=tuple(refs),
        global_batch_size=_as_int(_require(raw, "gbs", "$"), "$.gbs"),
        sequence_length=_as_int(_require(raw, "seq_len", "$"), "$.seq_len"),
        data_type_size=_as_int(_require(raw, "data_type_size", "$"), "$.data_type_size"),
        optimizer_mul_factor=_as_float(_require(raw, "mul_factor", "$"), "$.mul_factor"),
        allowed_microbatch_sizes=tuple(
            _as_int(m, f"$.allowed_mbs[{i}]")
            for i, m in enumerate(raw.get("allowed_mbs", sorted({
                mbs for lp in profiles.values() for (_, _, mbs) in lp.records
            })))
        ),
    )
    store = ProfileStore(profiles)
    store.check_consistency()
    return job, store


def save_job_profile(job: JobSpec, store: ProfileStore, dest: Source) -> None:
    layers = []
    for ref in job.layers:
        prof = store.layer(ref.layer_id)
        records = [
            {
                "gpu_type": gpu_type,
                "tp": tp,
                "mbs": mbs,
                "t_fwd": rec.t_fwd,
                "t_bwd": rec.t_bwd,
                "t_update": rec.t_update,
                "params": rec.params,
                "act_out_bytes": rec.act_out_bytes,
                "act_intermediate_bytes": rec.act_intermediate_bytes,
            }
            for (gpu_type, tp, mbs), rec in sorted(prof.records.items())
        ]
        layers.append({"id": ref.layer_id, "repeat": ref.repeat, "records": records})
    payload = {
        "model": job.model_name,
        "gbs": job.global_batch_size,
        "seq_len": job.sequence_length,
        "data_type_size": job.data_type_size,
        "mul_factor": job.optimizer_mul_factor,
        "allowed_mbs": list(job.allowed_microbatch_sizes),
        "layers": layers,
    }
    _write_json(payload, dest)


def load_cluster(source: Source) -> ClusterSpec:
    """Load the cluster JSON: GPU types, zones, availability, links, egress."""
    raw = _read_json(source, "cluster")
    if not isinstance(raw, dict):
        raise SchemaError("$", "top level must be an object")

    gpu_types: dict[str, GpuTypeSpec] = {}
    for i, t in enumerate(_require(raw, "gpu_types", "$")):
        path = f"$.gpu_types[{i}]"
        try:
            spec = GpuTypeSpec(
                name=str(_require(t, "name", path)),
                mem_bytes=_as_int(_require(t, "mem_bytes", path), f"{path}.mem_bytes"),
                gpus_per_node=_as_int(
                    _require(t, "gpus_per_node", path), f"{path}.gpus_per_node"
                ),
                price_per_gpu_hour=_as_float(
                    _require(t, "price_per_gpu_hour", path), f"{path}.price_per_gpu_hour"
                ),
            )
        except ValueError as exc:
            raise SchemaError(path, str(exc)) from exc
        gpu_types[spec.name] = spec

    zones = []
    for i, z in enumerate(_require(raw, "zones", "$")):
        path = f"$.zones[{i}]"
        zones.append((str(_require(z, "name", path)), str(_require(z, "region", path))))

    availability: dict[tuple[str, str], int] = {}
    for i, a in enumerate(_require(raw, "availability", "$")):
        path = f"$.availability[{i}]"
        key = (str(_require(a, "gpu_type", path)), str(_require(a, "zone", path)))
        availability[key] = availability.get(key, 0) + _as_int(
            _require(a, "nodes", path), f"{path}.nodes"
        )

    links: dict[tuple[str, str, str], BandwidthModel] = {}
    for i, l in enumerate(raw.get("links", [])):
        path = f"$.links[{i}]"
        src = str(_require(l, "src", path))
        dst = str(_require(l, "dst", path))
        locality = str(_require(l, "locality", path))
        if locality not in LOCALITIES:
            raise SchemaError(f"{path}.locality", f"must be one of {LOCALITIES}")
        if "coefficients" in l:
            vr = _require(l, "valid_range", path)
            model = BandwidthModel(
                coefficients=tuple(_as_float(c, f"{path}.coefficients") for c in l["coefficients"]),
                valid_range=(
                    _as_int(vr[0], f"{path}.valid_range[0]"),
                    _as_int(vr[1], f"{path}.valid_range[1]"),
                ),
            )
        elif "samples" in l:
            samples = [
                (
                    _as_float(s[0], f"{path}.samples[{k}][0]"),
                    _as_float(s[1], f"{path}.samples[{k}][1]"),
                )
                for k, s in enumerate(l["samples"])
            ]
            model = fit_bandwidth(samples, degree=_as_int(l.get("degree", 3), f"{path}.degree"))
        else:
            raise SchemaError(path, "link needs either coefficients or samples")
        links[(src, dst, locality)] = model

    egress: dict[tuple[str, str], float] = {}
    for i, e in enumerate(raw.get("egress", [])):
        path = f"$.egress[{i}]"
        egress[(str(_require(e, "src_region", path)), str(_require(e, "dst_region", path)))] = (
            _as_float(_require(e, "price_per_byte", path), f"{path}.price_per_byte")
        )

    try:
        return ClusterSpec(
            gpu_types=gpu_types,
            zones=tuple(zones),
            zone_availability=availability,
            links=links,
            egress=egress,
        )
    except ValueError as exc:
        raise SchemaError("$", str(exc)) from exc


def save_cluster(cluster: ClusterSpec, dest: Source) -> None:
    payload = {
        "gpu_types": [
            {
                "name": g.name,
                "mem_bytes": g.mem_bytes,
                "gpus_per_node": g.gpus_per_node,
                "price_per_gpu_hour": g.price_per_gpu_hour,
            }
            for g in sorted(cluster.gpu_types.values(), key=lambda g: g.name)
        ],
        "zones": [{"name": z, "region": r} for z, r in cluster.zones],
        "availability": [
            {"gpu_type": t, "zone": z, "nodes": n}
            for (t, z), n in sorted(cluster.zone_availability.items())
        ],
        "links": [
            {
                "src": src,
                "dst": dst,
                "locality": locality,
                "coefficients": list(model.coefficients),
                "valid_range": list(model.valid_range),
            }
            for (src, dst, locality), model in sorted(cluster.links.items())
        ],
        "egress": [
            {"src_region": a, "dst_region": b, "price_per_byte": p}
            for (a, b), p in sorted(cluster.egress.items())
        ],
    }
    _write_json(payload, dest)


# ---------------------------------------------------------------------------
# Synthetic profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GpuClass:
    """Shape of one synthetic GPU type; speed_factor scales all compute times."""

    name: str
    speed_factor: float
    mem_bytes: int
    gpus_per_node: int
    price_per_gpu_hour: float


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for gen_synthetic_profile; all analytic, deterministic per seed."""

    model_name: str = "synthetic"
    num_layers: int = 8
    params_per_layer: int = 4_000_000
    global_batch_size: int = 64
    sequence_length: int = 1024
    data_type_size: int = 2
    mul_factor: float = 8.0
    mbs_values: tuple[int, ...] = (1, 2, 4)
    tp_values: tuple[int, ...] = (1, 2, 4)
    base_fwd_seconds: float = 0.004
    bwd_over_fwd: float = 2.0
    update_seconds: float = 0.001
    act_out_base_bytes: int = 8_000_000
    act_intermediate_base_bytes: int = 16_000_000
    gpu_classes: tuple[GpuClass, ...] = (
        GpuClass("g40", 1.0, 40_000_000_000, 4, 3.6),
        GpuClass("g16", 2.5, 16_000_000_000, 4, 1.2),
    )
    regions: tuple[str, ...] = ("alpha", "beta")
    zones_per_region: int = 2
    nodes_per_type_zone: int = 4
    intra_node_bw: float = 200e9
    intra_zone_bw: float = 12.5e9
    intra_region_bw: float = 10e9
    inter_region_bw: float = 1.25e9
    egress_price_per_byte: float = 2e-11
    time_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("num_layers", "params_per_layer", "global_batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.gpu_classes or not self.regions:
            raise ValueError("need at least one GPU class and one region")
        if self.time_jitter < 0 or self.time_jitter >= 1:
            raise ValueError("time_jitter must be in [0, 1)")


_PRESETS = {
    # Shape-only presets: layer counts echo small/large decoder-only models,
    # with no claim of matching real model timings.
    "opt350-like": dict(
        model_name="opt350-like",
        num_layers=24,
        params_per_layer=14_000_000,
        global_batch_size=2048,
        sequence_length=2048,
        mbs_values=(1, 2, 4, 8),
        tp_values=(1, 2, 4),
        act_out_base_bytes=16_777_216,
        act_intermediate_base_bytes=50_331_648,
    ),
    "gptneo-like": dict(
        model_name="gptneo-like",
        num_layers=32,
        params_per_layer=80_000_000,
        global_batch_size=2048,
        sequence_length=2048,
        mbs_values=(1, 2, 4, 8),
        tp_values=(1, 2, 4),
        base_fwd_seconds=0.012,
        act_out_base_bytes=20_971_520,
        act_intermediate_base_bytes=104_857_600,
    ),
}


def synthetic_preset(name: str, **overrides) -> SyntheticSpec:
    try:
        params = dict(_PRESETS[name])
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}") from None
    params.update(overrides)
    return SyntheticSpec(**params)


def gen_synthetic_profile(
    spec: SyntheticSpec,
) -> tuple[JobSpec, ProfileStore, ClusterSpec]:
    """Build a deterministic synthetic (job, profiles, cluster) triple.

    Compute time scales as mbs/tp times the class speed factor; activation
    output bytes model a full (unsharded) boundary tensor, while intermediate
    activations shard with tp.
    """
    rng = np.random.RandomState(spec.seed)

    def jitter() -> float:
        if spec.time_jitter == 0.0:
            return 1.0
        return 1.0 + spec.time_jitter * (2.0 * rng.random_sample() - 1.0)

    layer_id = "block"
    prof = LayerProfile(layer_id)
    for cls in spec.gpu_classes:
        for tp in spec.tp_values:
            for mbs in spec.mbs_values:
                base = spec.base_fwd_seconds * mbs / tp
                t_fwd = base * cls.speed_factor * jitter()
                t_bwd = t_fwd * spec.bwd_over_fwd
                t_update = spec.update_seconds * cls.speed_factor / tp
                prof.records[(cls.name, tp, mbs)] = LayerRecord(
                    t_fwd=t_fwd,
                    t_bwd=t_bwd,
                    t_update=t_update,
                    params=-(-spec.params_per_layer // tp),
                    act_out_bytes=spec.act_out_base_bytes * mbs,
                    act_intermediate_bytes=-(
                        -spec.act_intermediate_base_bytes * mbs // tp
                    ),
                )
    store = ProfileStore({layer_id: prof})
    store.check_consistency()

    job = JobSpec(
        model_name=spec.model_name,
        layers=(LayerRef(layer_id, spec.num_layers),),
        global_batch_size=spec.global_batch_size,
        sequence_length=spec.sequence_length,
        data_type_size=spec.data_type_size,
        optimizer_mul_factor=spec.mul_factor,
        allowed_microbatch_sizes=spec.mbs_values,
    )

    zones = []
    for region in spec.regions:
        for z in range(spec.zones_per_region):
            zones.append((f"{region}-{chr(ord('a') + z)}", region))
    availability = {
        (cls.name, zone): spec.nodes_per_type_zone
        for cls in spec.gpu_classes
        for zone, _ in zones
    }

    def const_model(bw: float) -> BandwidthModel:
        return BandwidthModel(coefficients=(bw,), valid_range=(1, 1 << 40))

    locality_bw = {
        INTRA_NODE: spec.intra_node_bw,
        INTRA_ZONE: spec.intra_zone_bw,
        INTRA_REGION: spec.intra_region_bw,
        INTER_REGION: spec.inter_region_bw,
    }
    links = {}
    names = [cls.name for cls in spec.gpu_classes]
    for a in names:
        for b in names:
            if a > b:
                continue
            for locality, bw in locality_bw.items():
                links[(a, b, locality)] = const_model(bw)

    egress = {}
    for a in spec.regions:
        for b in spec.regions:
            if a < b:
                egress[(a, b)] = spec.egress_price_per_byte
        egress[(a, a)] = 0.0

    cluster = ClusterSpec(
        gpu_types={cls.name: GpuTypeSpec(cls.name, cls.mem_bytes, cls.gpus_per_node, cls.price_per_gpu_hour) for cls in spec.gpu_classes},
        zones=tuple(zones),
        zone_availability=availability,
        links=links,
        egress=egress,
    )
    return job, store, cluster
