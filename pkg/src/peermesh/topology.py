"""Node addressing, neighborhood maps, clustering and router election.

Addresses are 32-bit values rendered as dotted quads (stdlib IPv4Address).
A neighborhood map is an immutable snapshot; every mutation returns a new
snapshot with a higher version. Clusters are contiguous chunks of the sorted
active membership, the lowest address in each chunk acting as cluster leader.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, replace
from ipaddress import IPv4Address
from pathlib import Path
from typing import Iterable, Sequence

NodeAddress = IPv4Address


class EmptyNeighborhoodError(ValueError):
    """Raised when an operation needs active members and there are none."""


class NotAMemberError(ValueError):
    """Raised when an address is not part of the map or plan at hand."""


class NoSplitNeeded(ValueError):
    """Raised by subdivide when membership is at or below critical mass."""


def parse_address(value: str | int | IPv4Address) -> NodeAddress:
    """Accept dotted-quad text, a 32-bit integer, or an existing address."""
    if isinstance(value, IPv4Address):
        return value
    return IPv4Address(value)


def address_distance(a: NodeAddress, b: NodeAddress) -> int:
    """Absolute difference of the 32-bit address values.

    Stands in for network proximity: numerically close addresses tend to sit
    in the same provider range.
    """
    return abs(int(a) - int(b))


@dataclass(frozen=True)
class NodeRecord:
    address: NodeAddress
    domain: str = ""
    uptime_fraction: float = 1.0
    link_capacity_bps: float = 1_000_000.0
    active: bool = True
    metric: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.uptime_fraction <= 1.0:
            raise ValueError(f"uptime_fraction out of [0, 1]: {self.uptime_fraction}")
        if self.link_capacity_bps <= 0:
            raise ValueError("link_capacity_bps must be positive")
        if self.metric < 0:
            raise ValueError("metric must be non-negative")


@dataclass(frozen=True)
class NeighborhoodMap:
    """Sorted, duplicate-free membership snapshot with a version counter."""

    members: tuple[NodeRecord, ...] = ()
    remote_routers: tuple[NodeAddress, ...] = ()
    version: int = 0

    @classmethod
    def build(
        cls,
        records: Iterable[NodeRecord],
        remote_routers: Iterable[NodeAddress] = (),
        version: int = 0,
    ) -> "NeighborhoodMap":
        recs = sorted(records, key=lambda r: r.address)
        addrs = [r.address for r in recs]
        if len(set(addrs)) != len(addrs):
            raise ValueError("duplicate addresses in membership")
        return cls(members=tuple(recs), remote_routers=tuple(remote_routers), version=version)

    # -- queries ---------------------------------------------------------

    def addresses(self) -> tuple[NodeAddress, ...]:
        return tuple(r.address for r in self.members)

    def member(self, address: NodeAddress) -> NodeRecord | None:
        i = bisect_left(self.addresses(), address)
        if i < len(self.members) and self.members[i].address == address:
            return self.members[i]
        return None

    def active_members(self) -> tuple[NodeRecord, ...]:
        return tuple(r for r in self.members if r.active)

    def __contains__(self, address: NodeAddress) -> bool:
        return self.member(address) is not None

    def __len__(self) -> int:
        return len(self.members)

    # -- mutations (return new snapshots) --------------------------------

    def add(self, record: NodeRecord) -> "NeighborhoodMap":
        if record.address in self:
            raise ValueError(f"{record.address} already in map")
        members = tuple(sorted(self.members + (record,), key=lambda r: r.address))
        return replace(self, members=members, version=self.version + 1)

    def remove(self, address: NodeAddress) -> "NeighborhoodMap":
        if address not in self:
            raise NotAMemberError(str(address))
        members = tuple(r for r in self.members if r.address != address)
        return replace(self, members=members, version=self.version + 1)

    def set_active(self, address: NodeAddress, active: bool) -> "NeighborhoodMap":
        rec = self.member(address)
        if rec is None:
            raise NotAMemberError(str(address))
        members = tuple(
            replace(r, active=active) if r.address == address else r for r in self.members
        )
        return replace(self, members=members, version=self.version + 1)

    def add_remote_router(self, address: NodeAddress) -> "NeighborhoodMap":
        if address in self.remote_routers:
            return replace(self, version=self.version + 1)
        return replace(
            self,
            remote_routers=tuple(sorted(self.remote_routers + (address,))),
            version=self.version + 1,
        )


@dataclass(frozen=True)
class ClusterPlan:
    """Contiguous chunking of the sorted active membership."""

    cluster_size: int
    members: tuple[NodeAddress, ...]  # sorted active addresses, concatenation of clusters
    clusters: tuple[tuple[NodeAddress, ...], ...]

    @property
    def leaders(self) -> tuple[NodeAddress, ...]:
        return tuple(c[0] for c in self.clusters)

    @property
    def head_leader(self) -> NodeAddress:
        return self.leaders[0]


@dataclass(frozen=True)
class RouterCriteria:
    min_clients: int = 100
    min_uptime_fraction: float = 0.9
    min_capacity_bps: float = 128_000.0


def form_clusters(nmap: NeighborhoodMap, cluster_size: int) -> ClusterPlan:
    """Chunk the sorted active membership into clusters of cluster_size.

    All clusters except possibly the last have exactly cluster_size members;
    the leader of each cluster is its lowest address, and the head leader is
    the lowest leader overall.
    """
    if cluster_size < 1:
        raise ValueError("cluster_size must be >= 1")
    active = [r.address for r in nmap.active_members()]
    if not active:
        raise EmptyNeighborhoodError("no active instances to cluster")
    chunks = tuple(
        tuple(active[i : i + cluster_size]) for i in range(0, len(active), cluster_size)
    )
    return ClusterPlan(cluster_size=cluster_size, members=tuple(active), clusters=chunks)


def cluster_of(address: NodeAddress, plan: ClusterPlan) -> int:
    """Index of the cluster holding address, from rank arithmetic alone."""
    i = bisect_left(plan.members, address)
    if i >= len(plan.members) or plan.members[i] != address:
        raise NotAMemberError(str(address))
    return i // plan.cluster_size


def subdivide(nmap: NeighborhoodMap, critical_mass: int) -> tuple[NeighborhoodMap, NeighborhoodMap]:
    """Split an oversized neighborhood at the midpoint of its sorted members.

    With an odd count the extra member goes to the lower-address half. Raises
    NoSplitNeeded at or below critical_mass.
    """
    if critical_mass < 1:
        raise ValueError("critical_mass must be >= 1")
    count = len(nmap.members)
    if count <= critical_mass:
        raise NoSplitNeeded(f"{count} members <= critical mass {critical_mass}")
    cut = (count + 1) // 2
    lower = NeighborhoodMap(
        members=nmap.members[:cut],
        remote_routers=nmap.remote_routers,
        version=nmap.version + 1,
    )
    upper = NeighborhoodMap(
        members=nmap.members[cut:],
        remote_routers=nmap.remote_routers,
        version=nmap.version + 1,
    )
    return lower, upper


def _score(record: NodeRecord) -> tuple[float, float, float]:
    # Lexicographic: uptime first, then capacity, then closeness (low metric).
    return (record.uptime_fraction, record.link_capacity_bps, -record.metric)


def router_eligibility(
    record: NodeRecord, nmap: NeighborhoodMap, criteria: RouterCriteria
) -> tuple[bool, tuple[float, float, float]]:
    """Gate a member against the router thresholds; returns (eligible, score).

    A candidate must be active: an offline node cannot route, and failover
    must never re-elect the node whose loss triggered it.
    """
    if record.address not in nmap:
        raise NotAMemberError(str(record.address))
    population = len(nmap.active_members())
    eligible = (
        record.active
        and population >= criteria.min_clients
        and record.uptime_fraction >= criteria.min_uptime_fraction
        and record.link_capacity_bps >= criteria.min_capacity_bps
    )
    return eligible, _score(record)


def ranked_candidates(nmap: NeighborhoodMap, criteria: RouterCriteria) -> list[NodeAddress]:
    """Eligible members in takeover order: best score first, ties by lowest address."""
    eligible = [r for r in nmap.members if router_eligibility(r, nmap, criteria)[0]]
    eligible.sort(key=lambda r: (-r.uptime_fraction, -r.link_capacity_bps, r.metric, r.address))
    return [r.address for r in eligible]


def elect_router(nmap: NeighborhoodMap, criteria: RouterCriteria) -> NodeAddress | None:
    """Best eligible member, or None when nobody clears the thresholds."""
    ranked = ranked_candidates(nmap, criteria)
    return ranked[0] if ranked else None


def load_address_plan(path: str | Path) -> NeighborhoodMap:
    """Read a whitespace-separated address plan file into a membership map.

    Line format: ``address domain uptime capacity metric``. Blank lines and
    ``#`` comments are ignored.
    """
    records = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        addr, domain, uptime, capacity, metric = parts
        try:
            records.append(
                NodeRecord(
                    address=parse_address(addr),
                    domain=domain,
                    uptime_fraction=float(uptime),
                    link_capacity_bps=float(capacity),
                    metric=float(metric),
                )
            )
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return NeighborhoodMap.build(records)
