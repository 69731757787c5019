"""Attribute synchronization: scoped attribute lists, update rounds, commits.

An update round propagates every member's attribute entries to every other
member of a neighborhood in four phases:

  IntraForward   each cluster chain ascends from its leader, accumulating
                 entries member by member;
  IntraReverse   the finalized cluster list descends the same chain;
  LeaderRing     cluster leaders exchange cluster lists along the sorted
                 leader ring (up from the head leader, then back down);
  Redistribute   each leader pushes the finalized neighborhood list up its
                 cluster chain once more.

A hop whose target is inactive is skipped and the target marked stale; the
round still completes over the live membership. Scoped writes outside a
round go through a receipt-counted commit with a timeout.
"""

from __future__ import annotations

import re
import statistics
from dataclasses import dataclass, field
from enum import Enum
from ipaddress import IPv4Address
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .topology import ClusterPlan, NeighborhoodMap, NodeAddress, NotAMemberError

SCOPE_LOCAL = "local"
SCOPE_GLOBAL = "global"
_GROUP_RE = re.compile(r"^group:[A-Za-z0-9_.-]+$")

UPDATE_CLASSES = ("aggressive", "moderate", "light")
UPDATE_PERIOD_BASES = {"aggressive": 10, "moderate": 50, "light": 250}
DEFAULT_REFERENCE_METRIC = 100.0


def validate_scope(scope: str) -> str:
    if scope in (SCOPE_LOCAL, SCOPE_GLOBAL) or _GROUP_RE.match(scope):
        return scope
    raise ValueError(f"bad scope {scope!r}: want local, global, or group:<id>")


class ConfigurationError(ValueError):
    """A round or commit was set up against inconsistent inputs."""


class NotInGroupError(ValueError):
    pass


@dataclass(frozen=True)
class AttributeEntry:
    key: str
    scope: str
    value: bytes
    version: int
    owner: NodeAddress
    update_class: str = "moderate"

    def __post_init__(self):
        validate_scope(self.scope)
        if not self.key:
            raise ValueError("empty attribute key")
        if self.version < 1:
            raise ValueError("version must be >= 1")
        if self.update_class not in UPDATE_CLASSES:
            raise ValueError(f"unknown update class {self.update_class!r}")


def _prefer(a: AttributeEntry, b: AttributeEntry) -> AttributeEntry:
    # Higher version wins; exact ties fall back to the smaller
    # (value, scope, class) tuple so merging stays a total order.
    if a.version != b.version:
        return a if a.version > b.version else b
    ka = (a.value, a.scope, a.update_class)
    kb = (b.value, b.scope, b.update_class)
    return a if ka <= kb else b


class AttributeList:
    """At most one entry per (key, owner); versions only move forward."""

    def __init__(self, entries: Iterable[AttributeEntry] = ()):
        self._entries: dict[tuple[str, NodeAddress], AttributeEntry] = {}
        for e in entries:
            self.put(e)

    def put(self, entry: AttributeEntry) -> None:
        slot = (entry.key, entry.owner)
        existing = self._entries.get(slot)
        if existing is not None:
            if entry.version <= existing.version:
                raise ValueError(
                    f"version must increase for {slot}: {existing.version} -> {entry.version}"
                )
            if entry.scope != existing.scope:
                raise ValueError(f"scope of {slot} is fixed at {existing.scope!r}")
        self._entries[slot] = entry

    def get(self, key: str, owner: NodeAddress) -> AttributeEntry | None:
        return self._entries.get((key, owner))

    def entries(self) -> tuple[AttributeEntry, ...]:
        return tuple(self._entries[k] for k in sorted(self._entries, key=lambda s: (s[0], int(s[1]))))

    def owners_matching(self, key: str, value: bytes) -> tuple[NodeAddress, ...]:
        return tuple(e.owner for e in self.entries() if e.key == key and e.value == value)

    def copy(self) -> "AttributeList":
        new = AttributeList()
        new._entries = dict(self._entries)
        return new

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, AttributeList) and self._entries == other._entries

    def __repr__(self) -> str:
        return f"AttributeList({len(self._entries)} entries)"


def merge_lists(a: AttributeList, b: AttributeList) -> AttributeList:
    """Union over (key, owner); conflicts resolved by version, then tuple order."""
    merged = AttributeList()
    merged._entries = dict(a._entries)
    for slot, entry in b._entries.items():
        mine = merged._entries.get(slot)
        merged._entries[slot] = entry if mine is None else _prefer(mine, entry)
    return merged


# ---------------------------------------------------------------------------
# Update rounds
# ---------------------------------------------------------------------------


class Phase(Enum):
    INTRA_FORWARD = "intra-forward"
    INTRA_REVERSE = "intra-reverse"
    LEADER_RING = "leader-ring"
    REDISTRIBUTE = "redistribute"
    DONE = "done"


_PHASE_ORDER = (
    Phase.INTRA_FORWARD,
    Phase.INTRA_REVERSE,
    Phase.LEADER_RING,
    Phase.REDISTRIBUTE,
    Phase.DONE,
)


class _Chain:
    """One cluster's live member chain with a moving cursor."""

    __slots__ = ("members", "pos")

    def __init__(self, members: list[NodeAddress]):
        self.members = members
        self.pos = 0


class UpdateRound:
    """State machine for one four-phase synchronization round.

    Mutated only through step(); owned by a single event loop. `is_active`
    is consulted at every hop, so members lost mid-round are skipped and
    marked stale instead of stalling a chain. Only hop targets are checked;
    a current list holder going down mid-phase is not modeled.
    """

    def __init__(
        self,
        plan: ClusterPlan,
        lists: Mapping[NodeAddress, AttributeList],
        is_active: Callable[[NodeAddress], bool] | None = None,
    ):
        self.plan = plan
        self.is_active = is_active or (lambda _addr: True)
        missing = [a for a in plan.members if a not in lists]
        if missing:
            raise ConfigurationError(f"members without attribute lists: {missing}")
        self.lists: dict[NodeAddress, AttributeList] = {
            addr: lists[addr].copy() for addr in plan.members
        }
        self.stale: set[NodeAddress] = set()
        self.message_count = 0
        self.phase_messages: dict[Phase, int] = {p: 0 for p in _PHASE_ORDER if p is not Phase.DONE}

        self._chains: list[_Chain] = []
        for cluster in plan.clusters:
            live = []
            for addr in cluster:
                if self.is_active(addr):
                    live.append(addr)
                else:
                    self.stale.add(addr)
            if live:  # clusters with no live member drop out of the round
                self._chains.append(_Chain(live))
        if not self._chains:
            raise ConfigurationError("no active members in any cluster")

        self.cluster_final: list[AttributeList | None] = [None] * len(self._chains)
        self._carried: list[AttributeList] = [
            self.lists[c.members[0]].copy() for c in self._chains
        ]
        self.neighborhood_final: AttributeList | None = None
        self._ring: _Chain | None = None
        self._ring_carried: AttributeList | None = None
        self._ring_descending = False
        self._rr = 0  # round-robin cursor over cluster chains
        self.phase = Phase.INTRA_FORWARD
        self._settle()

    # -- phase bookkeeping -------------------------------------------------

    def _forward_done(self, chain: _Chain) -> bool:
        return chain.pos >= len(chain.members) - 1

    def _phase_has_work(self, phase: Phase) -> bool:
        if phase in (Phase.INTRA_FORWARD, Phase.REDISTRIBUTE):
            return any(not self._forward_done(c) for c in self._chains)
        if phase is Phase.INTRA_REVERSE:
            return any(c.pos > 0 for c in self._chains)
        if phase is Phase.LEADER_RING:
            ring = self._ring
            assert ring is not None
            if len(ring.members) <= 1:
                return False
            if not self._ring_descending:
                return True
            return ring.pos > 0
        return False

    def _enter(self, phase: Phase) -> None:
        self.phase = phase
        if phase is Phase.INTRA_REVERSE:
            for i, chain in enumerate(self._chains):
                self.cluster_final[i] = self._carried[i]
                holder = chain.members[chain.pos]
                self.lists[holder] = merge_lists(self.lists[holder], self._carried[i])
                # descent starts at the current holder
        elif phase is Phase.LEADER_RING:
            leaders = [c.members[0] for c in self._chains]
            self._ring = _Chain(leaders)
            self._ring_descending = len(leaders) <= 1
            self._ring_carried = self.cluster_final[0].copy()
        elif phase is Phase.REDISTRIBUTE:
            self.neighborhood_final = self._ring_carried
            for chain in self._chains:
                chain.pos = 0

    def _settle(self) -> None:
        """Advance past phases that have no hops left to perform."""
        while self.phase is not Phase.DONE and not self._phase_has_work(self.phase):
            self._enter(_PHASE_ORDER[_PHASE_ORDER.index(self.phase) + 1])

    # -- hop mechanics -------------------------------------------------------

    def _next_live(self, chain: _Chain, descending: bool = False) -> int | None:
        """Index of the next live member past the cursor; dead ones go stale
        and leave the chain."""
        if descending:
            i = chain.pos - 1
            while i >= 0:
                addr = chain.members[i]
                if self.is_active(addr):
                    return i
                self.stale.add(addr)
                del chain.members[i]
                chain.pos -= 1
                i -= 1
            return None
        i = chain.pos + 1
        while i < len(chain.members):
            addr = chain.members[i]
            if self.is_active(addr):
                return i
            self.stale.add(addr)
            del chain.members[i]  # next candidate slides into slot i
        return None

    def _pick_chain(self, pred: Callable[[_Chain], bool]) -> int | None:
        n = len(self._chains)
        for off in range(n):
            i = (self._rr + off) % n
            if pred(self._chains[i]):
                self._rr = (i + 1) % n
                return i
        return None

    def _count(self) -> None:
        self.message_count += 1
        self.phase_messages[self.phase] += 1

    def step(self) -> "UpdateRound":
        """Deliver one message hop. Raises once the round is Done."""
        if self.phase is Phase.DONE:
            raise ConfigurationError("round already complete")
        if self.phase in (Phase.INTRA_FORWARD, Phase.REDISTRIBUTE):
            self._step_ascending()
        elif self.phase is Phase.INTRA_REVERSE:
            self._step_descending()
        else:
            self._step_ring()
        self._settle()
        return self

    def _step_ascending(self) -> None:
        i = self._pick_chain(lambda c: not self._forward_done(c))
        if i is None:
            return
        chain = self._chains[i]
        j = self._next_live(chain)
        if j is None:
            return
        target = chain.members[j]
        self._count()
        if self.phase is Phase.INTRA_FORWARD:
            self._carried[i] = merge_lists(self._carried[i], self.lists[target])
        else:  # Redistribute: the leader pushes what it holds up the chain.
            leader = chain.members[0]
            self.lists[target] = merge_lists(self.lists[target], self.lists[leader])
        chain.pos = j

    def _step_descending(self) -> None:
        i = self._pick_chain(lambda c: c.pos > 0)
        if i is None:
            return
        chain = self._chains[i]
        j = self._next_live(chain, descending=True)
        if j is None:
            chain.pos = 0
            return
        target = chain.members[j]
        self._count()
        self.lists[target] = merge_lists(self.lists[target], self.cluster_final[i])
        chain.pos = j

    def _step_ring(self) -> None:
        ring = self._ring
        assert ring is not None and self._ring_carried is not None
        if not self._ring_descending:
            j = self._next_live(ring)
            if j is None:
                self._flip_ring()
                return
            target = ring.members[j]
            self._count()
            self._ring_carried = merge_lists(
                self._ring_carried, self.cluster_final[self._leader_cluster_index(target)]
            )
            ring.pos = j
            if self._forward_done(ring):
                self._flip_ring()
        else:
            j = self._next_live(ring, descending=True)
            if j is None:
                ring.pos = 0
                return
            target = ring.members[j]
            self._count()
            self.lists[target] = merge_lists(self.lists[target], self._ring_carried)
            ring.pos = j

    def _flip_ring(self) -> None:
        ring = self._ring
        holder = ring.members[ring.pos]
        self.lists[holder] = merge_lists(self.lists[holder], self._ring_carried)
        self._ring_descending = True

    def _leader_cluster_index(self, leader: NodeAddress) -> int:
        for i, chain in enumerate(self._chains):
            if chain.members and chain.members[0] == leader:
                return i
        raise ConfigurationError(f"{leader} is not a cluster leader")

    # -- results -------------------------------------------------------------

    @property
    def done(self) -> bool:
        return self.phase is Phase.DONE

    def final_lists(self) -> dict[NodeAddress, AttributeList]:
        if not self.done:
            raise ConfigurationError("round not complete")
        return dict(self.lists)


def start_round(
    plan: ClusterPlan,
    lists: Mapping[NodeAddress, AttributeList],
    is_active: Callable[[NodeAddress], bool] | None = None,
) -> UpdateRound:
    return UpdateRound(plan, lists, is_active)


def step(round_: UpdateRound) -> UpdateRound:
    return round_.step()


def run_round(
    plan: ClusterPlan,
    lists: Mapping[NodeAddress, AttributeList],
    is_active: Callable[[NodeAddress], bool] | None = None,
) -> UpdateRound:
    """Start a round and step it to completion."""
    r = start_round(plan, lists, is_active)
    while not r.done:
        r.step()
    return r


# ---------------------------------------------------------------------------
# Scoped commits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CommitResult:
    at: int
    acks: frozenset[NodeAddress]
    absentees: frozenset[NodeAddress]

    @property
    def full(self) -> bool:
        return not self.absentees


@dataclass
class PendingCommit:
    """A proposed attribute change awaiting receipts from its group.

    The group is snapshotted at propose time. The commit resolves exactly
    once: early when every member has acked, otherwise at the deadline over
    whoever acked, flagging the rest as offline.
    """

    key: str
    value: bytes
    scope: str
    proposer: NodeAddress
    group: frozenset[NodeAddress]
    deadline: int
    acks: set[NodeAddress] = field(default_factory=set)
    resolution: CommitResult | None = None

    @property
    def committed(self) -> bool:
        return self.resolution is not None


def propose_commit(
    group: Iterable[NodeAddress],
    proposer: NodeAddress,
    key: str,
    value: bytes,
    now: int,
    timeout: int,
    scope: str = SCOPE_LOCAL,
) -> PendingCommit:
    members = frozenset(group)
    if proposer not in members:
        raise ConfigurationError(f"proposer {proposer} not in group")
    if timeout <= 0:
        raise ValueError("timeout must be positive")
    validate_scope(scope)
    commit = PendingCommit(
        key=key,
        value=value,
        scope=scope,
        proposer=proposer,
        group=members,
        deadline=now + timeout,
        acks={proposer},
    )
    _maybe_complete(commit, now)
    return commit


def ack(commit: PendingCommit, member: NodeAddress, now: int) -> PendingCommit:
    """Record a receipt. Duplicate acks are no-ops; non-members are rejected."""
    if member not in commit.group:
        raise NotInGroupError(f"{member} is not in the commit group")
    if commit.resolution is None:
        commit.acks.add(member)
        _maybe_complete(commit, now)
    return commit


def expire(commit: PendingCommit, now: int) -> PendingCommit:
    """Finalize at/after the deadline over the acks received so far."""
    if commit.resolution is None and now >= commit.deadline:
        commit.resolution = CommitResult(
            at=now,
            acks=frozenset(commit.acks),
            absentees=commit.group - commit.acks,
        )
    return commit


def _maybe_complete(commit: PendingCommit, now: int) -> None:
    if commit.resolution is None and commit.acks == commit.group:
        commit.resolution = CommitResult(at=now, acks=frozenset(commit.acks), absentees=frozenset())


# ---------------------------------------------------------------------------
# Update cadence and lookup
# ---------------------------------------------------------------------------


def update_period(
    update_class: str,
    metrics: Iterable[float],
    reference_metric: float = DEFAULT_REFERENCE_METRIC,
) -> int:
    """Refresh period in virtual units: base(class) * (1 + median/reference).

    Distant memberships (high median metric) refresh more slowly; a zero
    median leaves the base period untouched.
    """
    if update_class not in UPDATE_PERIOD_BASES:
        raise ValueError(f"unknown update class {update_class!r}")
    values = list(metrics)
    if not values:
        raise ValueError("metrics must be non-empty")
    if any(m < 0 for m in values):
        raise ValueError("metrics must be non-negative")
    if reference_metric <= 0:
        raise ValueError("reference_metric must be positive")
    base = UPDATE_PERIOD_BASES[update_class]
    return max(1, round(base * (1.0 + statistics.median(values) / reference_metric)))


@dataclass(frozen=True)
class NeighborhoodView:
    """One neighborhood as seen by the lookup path after a completed round."""

    nmap: NeighborhoodMap
    attributes: AttributeList
    router: NodeAddress | None = None


@dataclass(frozen=True)
class RoutedConnection:
    origin: NodeAddress
    target: NodeAddress
    origin_router: NodeAddress
    target_router: NodeAddress


@dataclass(frozen=True)
class LookupResult:
    matches: tuple[tuple[NodeAddress, int], ...]  # (owner, neighborhood id)
    connections: tuple[RoutedConnection, ...]
    partial: bool


def lookup_by_attribute(
    key: str,
    value: bytes,
    origin: NodeAddress,
    views: Mapping[int, NeighborhoodView],
) -> LookupResult:
    """Find every instance advertising (key, value).

    The origin's own neighborhood is scanned directly (any scope). Remote
    neighborhoods are reached through router pairs and only expose entries
    whose scope travels (global or group:*; local stays local). Unreachable
    remote neighborhoods mark the result partial.
    """
    home = None
    for nid, view in views.items():
        if origin in view.nmap:
            home = nid
            break
    if home is None:
        raise NotAMemberError(f"{origin} is in no neighborhood view")

    matches: list[tuple[NodeAddress, int]] = []
    connections: list[RoutedConnection] = []
    partial = False

    for e in views[home].attributes.entries():
        if e.key == key and e.value == value:
            matches.append((e.owner, home))

    origin_router = views[home].router
    for nid in sorted(views):
        if nid == home:
            continue
        view = views[nid]
        remote_hits = [
            e
            for e in view.attributes.entries()
            if e.key == key and e.value == value and e.scope != SCOPE_LOCAL
        ]
        if not remote_hits:
            continue
        if origin_router is None or view.router is None:
            partial = True
            continue
        for e in remote_hits:
            matches.append((e.owner, nid))
            connections.append(
                RoutedConnection(
                    origin=origin,
                    target=e.owner,
                    origin_router=origin_router,
                    target_router=view.router,
                )
            )
    return LookupResult(matches=tuple(matches), connections=tuple(connections), partial=partial)


def load_attribute_seeds(path: str | Path) -> dict[NodeAddress, AttributeList]:
    """Read per-owner attribute seeds: ``owner key scope class value`` lines."""
    out: dict[NodeAddress, AttributeList] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(maxsplit=4)
        if len(parts) != 5:
            raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        owner_s, key, scope, update_class, value = parts
        try:
            owner = IPv4Address(owner_s)
            entry = AttributeEntry(
                key=key,
                scope=scope,
                value=value.encode("utf-8"),
                version=1,
                owner=owner,
                update_class=update_class,
            )
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
        out.setdefault(owner, AttributeList()).put(entry)
    return out
