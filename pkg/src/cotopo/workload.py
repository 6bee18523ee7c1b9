"""Training jobs, parallelization strategies and the traffic they generate.

A job is an ordered list of layers.  Non-embedding layers form a chain; each
embedding layer is a side branch whose output feeds the next non-embedding
layer after it (the interaction / top-MLP input in DLRM-like models).

A strategy places every layer either *replicated* over a server set (the
batch is split across replicas and the parameters are AllReduced) or
*partitioned* over a server set (each shard holds a slice of the parameters
and processes every sample).  Activations move between servers wherever the
sample ownership of a producer differs from that of its consumer; the
backward pass moves gradients of the same size in the opposite direction.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

KINDS = ("dense", "embedding", "attention", "conv")
REPLICATE = "replicate"
PARTITION = "partition"


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    """One layer.  Compute times are per server-batch (profiled inputs)."""

    name: str
    kind: str
    param_bytes: float
    activation_bytes_per_sample: float
    fwd_compute_us: float = 0.0
    bwd_compute_us: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise WorkloadError(f"layer {self.name!r}: unknown kind {self.kind!r}")
        for f in ("param_bytes", "activation_bytes_per_sample",
                  "fwd_compute_us", "bwd_compute_us"):
            if getattr(self, f) < 0:
                raise WorkloadError(f"layer {self.name!r}: {f} must be >= 0")


@dataclass(frozen=True)
class JobSpec:
    name: str
    layers: tuple[LayerSpec, ...]
    batch_per_gpu: int
    num_servers: int
    precision_bytes: int = 4
    gpus_per_server: int = 4

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.num_servers < 1:
            raise WorkloadError("num_servers must be >= 1")
        if self.batch_per_gpu < 1:
            raise WorkloadError("batch_per_gpu must be >= 1")

    @property
    def n(self) -> int:
        return self.num_servers

    @property
    def batch_per_server(self) -> int:
        return self.batch_per_gpu * self.gpus_per_server

    @property
    def global_batch(self) -> int:
        return self.batch_per_server * self.num_servers

    def with_servers(self, n: int) -> "JobSpec":
        return JobSpec(self.name, self.layers, self.batch_per_gpu, n,
                       self.precision_bytes, self.gpus_per_server)

    def with_batch(self, batch_per_gpu: int) -> "JobSpec":
        return JobSpec(self.name, self.layers, batch_per_gpu, self.num_servers,
                       self.precision_bytes, self.gpus_per_server)

    def consumers(self) -> list[int | None]:
        """Index of the layer consuming each layer's output (None at the end)."""
        out: list[int | None] = [None] * len(self.layers)
        nxt = None
        for i in range(len(self.layers) - 1, -1, -1):
            out[i] = nxt
            if self.layers[i].kind != "embedding":
                nxt = i
        return out


@dataclass(frozen=True)
class Placement:
    mode: str
    servers: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "servers", tuple(int(s) for s in self.servers))
        if self.mode not in (REPLICATE, PARTITION):
            raise WorkloadError(f"unknown placement mode {self.mode!r}")
        if not self.servers:
            raise WorkloadError("placement needs at least one server")
        if len(set(self.servers)) != len(self.servers):
            raise WorkloadError("placement servers must be distinct")

    @classmethod
    def replicated(cls, servers: Iterable[int]) -> "Placement":
        return cls(REPLICATE, tuple(servers))

    @classmethod
    def partitioned(cls, servers: Iterable[int]) -> "Placement":
        return cls(PARTITION, tuple(servers))

    @property
    def size(self) -> int:
        return len(self.servers)


@dataclass(frozen=True)
class ParallelStrategy:
    placements: tuple[Placement, ...]

    def __post_init__(self):
        object.__setattr__(self, "placements", tuple(self.placements))

    def validate(self, job: JobSpec) -> None:
        if len(self.placements) != len(job.layers):
            raise WorkloadError(
                f"strategy assigns {len(self.placements)} layers, job has {len(job.layers)}")
        for i, p in enumerate(self.placements):
            if p is None:
                raise WorkloadError(f"layer {i} is unassigned")
            if any(s < 0 or s >= job.n for s in p.servers):
                raise WorkloadError(f"layer {i}: server id outside [0, {job.n})")

    def replace(self, i: int, placement: Placement) -> "ParallelStrategy":
        pl = list(self.placements)
        pl[i] = placement
        return ParallelStrategy(tuple(pl))

    def to_dict(self) -> dict:
        return {"placements": [{"mode": p.mode, "servers": list(p.servers)}
                               for p in self.placements]}

    @classmethod
    def from_dict(cls, d: Mapping, n: int | None = None) -> "ParallelStrategy":
        out = []
        for p in d["placements"]:
            servers = p["servers"]
            if servers == "all":
                if n is None:
                    raise WorkloadError("'all' needs the cluster size")
                servers = range(n)
            out.append(Placement(p["mode"], tuple(servers)))
        return cls(tuple(out))


def data_parallel(job: JobSpec) -> ParallelStrategy:
    allsrv = tuple(range(job.n))
    return ParallelStrategy(tuple(Placement.replicated(allsrv) for _ in job.layers))


def embedding_sharded(job: JobSpec) -> ParallelStrategy:
    """Each embedding table whole on one server (round robin), the rest replicated."""
    s = data_parallel(job)
    emb = [i for i, l in enumerate(job.layers) if l.kind == "embedding"]
    for j, i in enumerate(emb):
        s = s.replace(i, Placement.partitioned([j % job.n]))
    return s


@dataclass(frozen=True)
class AllReduceGroup:
    group_id: int
    members: tuple[int, ...]
    bytes_per_member: float
    layers: tuple[int, ...] = ()

    @property
    def k(self) -> int:
        return len(self.members)

    @property
    def ring_bytes_per_member(self) -> float:
        """Bytes each member sends under ring-AllReduce: 2(k-1)/k * S."""
        return 2.0 * (self.k - 1) / self.k * self.bytes_per_member

    @property
    def total_bytes(self) -> float:
        return self.k * self.ring_bytes_per_member


@dataclass(frozen=True)
class MPTransfer:
    src: int
    dst: int
    bytes: float
    layer: int = -1
    phase: str = "fwd"


@dataclass(frozen=True)
class TransferSet:
    n: int
    allreduce_groups: tuple[AllReduceGroup, ...] = ()
    mp_transfers: tuple[MPTransfer, ...] = ()

    def __post_init__(self):
        for g in self.allreduce_groups:
            if g.k < 2 or len(set(g.members)) != g.k:
                raise WorkloadError(f"group {g.group_id}: needs >= 2 distinct members")
            if g.bytes_per_member < 0:
                raise WorkloadError("negative AllReduce size")
        for t in self.mp_transfers:
            if t.src == t.dst:
                raise WorkloadError("MP transfer with src == dst")
            if t.bytes < 0:
                raise WorkloadError("negative MP transfer size")

    @property
    def allreduce_total(self) -> float:
        return float(sum(g.total_bytes for g in self.allreduce_groups))

    @property
    def mp_total(self) -> float:
        return float(sum(t.bytes for t in self.mp_transfers))

    def mp_matrix(self) -> np.ndarray:
        m = np.zeros((self.n, self.n))
        for t in self.mp_transfers:
            m[t.src, t.dst] += t.bytes
        return m

    def is_empty(self) -> bool:
        return not self.allreduce_groups and not self.mp_transfers


# --- transfer derivation ---------------------------------------------------

def _sample_blocks(p: Placement, G: int) -> list[tuple[float, float, float]]:
    """(start, end, feature_fraction) of the samples each piece holds."""
    k = p.size
    if p.mode == REPLICATE:
        return [(i * G / k, (i + 1) * G / k, 1.0) for i in range(k)]
    return [(0.0, float(G), 1.0 / k)] * k


def _need_blocks(p: Placement, G: int) -> list[tuple[float, float]]:
    k = p.size
    if p.mode == REPLICATE:
        return [(i * G / k, (i + 1) * G / k) for i in range(k)]
    return [(0.0, float(G))] * k


def activation_flows(prod: Placement, cons: Placement, G: int,
                     act_bytes: float) -> dict[tuple[int, int], float]:
    """Forward activation bytes from each producer server to each consumer server."""
    out: dict[tuple[int, int], float] = {}
    have = _sample_blocks(prod, G)
    need = _need_blocks(cons, G)
    for ps, (a0, a1, frac) in zip(prod.servers, have):
        for cs, (b0, b1) in zip(cons.servers, need):
            if ps == cs:
                continue
            overlap = min(a1, b1) - max(a0, b0)
            if overlap <= 0:
                continue
            out[(ps, cs)] = out.get((ps, cs), 0.0) + overlap * frac * act_bytes
    return out


def derive_transfers(job: JobSpec, strategy: ParallelStrategy) -> TransferSet:
    """Per-iteration AllReduce groups and MP transfers for a placed job."""
    strategy.validate(job)
    n = job.n
    if n == 1:
        return TransferSet(n=1)
    G = job.global_batch
    groups: dict[tuple[int, ...], list] = {}
    for i, (layer, pl) in enumerate(zip(job.layers, strategy.placements)):
        if pl.mode == REPLICATE and pl.size >= 2 and layer.param_bytes > 0:
            key = tuple(sorted(pl.servers))
            acc = groups.setdefault(key, [0.0, []])
            acc[0] += layer.param_bytes
            acc[1].append(i)
    ar = tuple(AllReduceGroup(gid, key, val[0], tuple(val[1]))
               for gid, (key, val) in enumerate(sorted(groups.items())))

    mp: list[MPTransfer] = []
    consumers = job.consumers()
    for i, layer in enumerate(job.layers):
        c = consumers[i]
        if c is None or layer.activation_bytes_per_sample <= 0:
            continue
        flows = activation_flows(strategy.placements[i], strategy.placements[c],
                                 G, layer.activation_bytes_per_sample)
        for (s, d), b in sorted(flows.items()):
            mp.append(MPTransfer(s, d, b, layer=i, phase="fwd"))
        for (s, d), b in sorted(flows.items()):
            mp.append(MPTransfer(d, s, b, layer=i, phase="bwd"))
    return TransferSet(n=n, allreduce_groups=ar, mp_transfers=tuple(mp))


def traffic_matrix(ts: TransferSet,
                   ring_assignment: Mapping[int, Sequence[int]] | None = None
                   ) -> np.ndarray:
    """n x n byte matrix (row = source) of one iteration's demand.

    Each AllReduce member sends 2(k-1)/k * S bytes in total, split evenly
    over the group's ring strides; without an assignment the +1 ring is used.
    """
    m = ts.mp_matrix()
    for g in ts.allreduce_groups:
        strides = list((ring_assignment or {}).get(g.group_id, [1]))
        if not strides:
            strides = [1]
        from .permutations import ring_from_stride
        share = g.ring_bytes_per_member / len(strides)
        for p in strides:
            ring = ring_from_stride(ts.n, g.k, p, g.members)
            for u, v in ring.successor.items():
                m[u, v] += share
    return m


def _fmt(v: float) -> str:
    v = float(v)
    if v.is_integer():
        return str(int(v))
    return repr(v)


def export_heatmap(tm: np.ndarray, path) -> Path:
    """Write the matrix as CSV, one row per source server."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        for row in np.asarray(tm):
            fh.write(",".join(_fmt(v) for v in row))
            fh.write("\n")
    return path


def read_heatmap(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(x) for x in row] for row in csv.reader(fh) if row])


# --- job / strategy files --------------------------------------------------

def job_to_dict(job: JobSpec) -> dict:
    return {
        "name": job.name,
        "num_servers": job.num_servers,
        "batch_per_gpu": job.batch_per_gpu,
        "gpus_per_server": job.gpus_per_server,
        "precision_bytes": job.precision_bytes,
        "layers": [dict(name=l.name, kind=l.kind, param_bytes=l.param_bytes,
                        activation_bytes_per_sample=l.activation_bytes_per_sample,
                        fwd_compute_us=l.fwd_compute_us,
                        bwd_compute_us=l.bwd_compute_us) for l in job.layers],
    }


def job_from_dict(d: Mapping) -> JobSpec:
    layers = []
    for entry in d["layers"]:
        entry = {k: v for k, v in entry.items() if k != "note"}
        repeat = int(entry.pop("repeat", 1))
        base = entry.pop("name")
        for r in range(repeat):
            name = base if repeat == 1 else f"{base}{r}"
            layers.append(LayerSpec(name=name, **entry))
    return JobSpec(name=d["name"], layers=tuple(layers),
                   batch_per_gpu=int(d["batch_per_gpu"]),
                   num_servers=int(d["num_servers"]),
                   precision_bytes=int(d.get("precision_bytes", 4)),
                   gpus_per_server=int(d.get("gpus_per_server", 4)))


def load_job(path) -> JobSpec:
    with open(path) as fh:
        return job_from_dict(json.load(fh))


def save_job(job: JobSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(job_to_dict(job), fh, indent=2)


def load_strategy(path, n: int | None = None) -> ParallelStrategy:
    with open(path) as fh:
        return ParallelStrategy.from_dict(json.load(fh), n=n)


def list_presets() -> list[str]:
    root = resources.files("cotopo") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str, num_servers: int | None = None,
                batch_per_gpu: int | None = None) -> JobSpec:
    """Load a shipped workload preset, optionally resized."""
    root = resources.files("cotopo") / "presets"
    f = root / f"{name}.json"
    if not f.is_file():
        raise WorkloadError(f"unknown preset {name!r}; choose from {list_presets()}")
    job = job_from_dict(json.loads(f.read_text()))
    if num_servers is not None:
        job = job.with_servers(num_servers)
    if batch_per_gpu is not None:
        job = job.with_batch(batch_per_gpu)
    return job
