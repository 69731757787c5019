"""Scripted end-to-end simulations over the full protocol stack.

Scenario files drive a world of application instances through downloads,
churn, commits and subdivisions, then check what happened. Line grammar
(blank lines and ``#`` comments are ignored):

  config <key>=<value> ...
      World parameters: critical_mass, excerpt_cap, min_clients, min_uptime,
      min_capacity, beacon_period, refresh_period, intro_timeout,
      commit_timeout, horizon.

  at=<units> event=<kind> addr=<dotted-quad> [key=value ...]
      Kinds: download (domain=, uptime=, capacity=, metric=), up, down,
      send (key=, value=, scope=, timeout=), subdivide (critical_mass=).

  assert <kind> [at=<units>] key=value ...
      Kinds: connected, connect-failed, queued, delivered, expired,
      introduced (all with from=/to=), router/no-router/member/isolated
      (addr=), committed (key=, optional acks=/absent=/value=). Checks with
      at= are evaluated at that virtual time, the rest after the run.

Handshakes complete within the originating event; the sampled hop delays
show up in the recorded action times, not in state sequencing. Runs always
get a horizon (config, or last scripted time + 1000) because router beacons
recur forever; hitting it marks the trace truncated, which is a defined
outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from . import discovery, sync
from .simcore import (
    DEFAULT_SEED,
    KIND_BEACON,
    KIND_MESSAGE,
    KIND_NODE_DOWN,
    KIND_NODE_UP,
    KIND_TIMER,
    Engine,
    EventTrace,
    RandomStream,
    SimEvent,
)
from .topology import (
    NeighborhoodMap,
    NodeAddress,
    NodeRecord,
    NoSplitNeeded,
    RouterCriteria,
    elect_router,
    parse_address,
    subdivide,
)

EVENT_KINDS = ("download", "up", "down", "send", "subdivide")
CHECK_KINDS = (
    "connected",
    "connect-failed",
    "queued",
    "delivered",
    "expired",
    "introduced",
    "router",
    "no-router",
    "member",
    "isolated",
    "committed",
)

DEFAULT_HORIZON_MARGIN = 1000


class ScenarioParseError(ValueError):
    pass


class ScenarioError(RuntimeError):
    """A scripted event contradicts the world (e.g. send from an unknown node)."""


@dataclass(frozen=True)
class ScriptEvent:
    at: int
    kind: str
    addr: NodeAddress
    params: dict[str, str]
    line: int


@dataclass(frozen=True)
class ScriptCheck:
    kind: str
    params: dict[str, str]
    at: int | None
    line: int


@dataclass(frozen=True)
class ScenarioScript:
    name: str
    config: dict[str, str]
    events: tuple[ScriptEvent, ...]
    checks: tuple[ScriptCheck, ...]


def _split_pairs(tokens: list[str], where: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for tok in tokens:
        if "=" not in tok:
            raise ScenarioParseError(f"{where}: expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        if not k or not v:
            raise ScenarioParseError(f"{where}: malformed pair {tok!r}")
        if k in out:
            raise ScenarioParseError(f"{where}: duplicate key {k!r}")
        out[k] = v
    return out


def parse_scenario(text: str, name: str = "<scenario>") -> ScenarioScript:
    config: dict[str, str] = {}
    events: list[ScriptEvent] = []
    checks: list[ScriptCheck] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{name}:{lineno}"
        tokens = line.split()
        if tokens[0] == "config":
            config.update(_split_pairs(tokens[1:], where))
            continue
        if tokens[0] == "assert":
            if len(tokens) < 2:
                raise ScenarioParseError(f"{where}: assert needs a kind")
            kind = tokens[1]
            if kind not in CHECK_KINDS:
                raise ScenarioParseError(f"{where}: unknown assert kind {kind!r}")
            params = _split_pairs(tokens[2:], where)
            at_s = params.pop("at", None)
            at = int(at_s) if at_s is not None else None
            checks.append(ScriptCheck(kind=kind, params=params, at=at, line=lineno))
            continue
        pairs = _split_pairs(tokens, where)
        missing = [k for k in ("at", "event", "addr") if k not in pairs]
        if missing:
            raise ScenarioParseError(f"{where}: event line missing {missing}")
        kind = pairs.pop("event")
        if kind not in EVENT_KINDS:
            raise ScenarioParseError(f"{where}: unknown event {kind!r}")
        try:
            at = int(pairs.pop("at"))
            addr = parse_address(pairs.pop("addr"))
        except ValueError as exc:
            raise ScenarioParseError(f"{where}: {exc}") from exc
        if at < 0:
            raise ScenarioParseError(f"{where}: at must be non-negative")
        events.append(ScriptEvent(at=at, kind=kind, addr=addr, params=pairs, line=lineno))
    return ScenarioScript(name=name, config=config, events=tuple(events), checks=tuple(checks))


def load_scenario(path: str | Path) -> ScenarioScript:
    p = Path(path)
    return parse_scenario(p.read_text(), name=p.name)


# ---------------------------------------------------------------------------
# World
# ---------------------------------------------------------------------------


@dataclass
class WorldConfig:
    critical_mass: int | None = None
    excerpt_cap: int = discovery.EXCERPT_CAP
    min_clients: int = 100
    min_uptime: float = 0.9
    min_capacity: float = 128_000.0
    beacon_period: int = 25
    beacon_timeout_factor: int = 2
    refresh_period: int = 100
    intro_timeout: int | None = None
    commit_timeout: int = 100
    horizon: int | None = None

    @classmethod
    def from_mapping(cls, raw: Mapping[str, str]) -> "WorldConfig":
        cfg = cls()
        casts = {
            "critical_mass": int,
            "excerpt_cap": int,
            "min_clients": int,
            "min_uptime": float,
            "min_capacity": float,
            "beacon_period": int,
            "beacon_timeout_factor": int,
            "refresh_period": int,
            "intro_timeout": int,
            "commit_timeout": int,
            "horizon": int,
        }
        for key, value in raw.items():
            if key not in casts:
                raise ScenarioParseError(f"unknown config key {key!r}")
            setattr(cfg, key, casts[key](value))
        return cfg

    @property
    def criteria(self) -> RouterCriteria:
        return RouterCriteria(
            min_clients=self.min_clients,
            min_uptime_fraction=self.min_uptime,
            min_capacity_bps=self.min_capacity,
        )


@dataclass
class InstanceInfo:
    address: NodeAddress
    domain: str
    uptime: float = 1.0
    capacity: float = 1_000_000.0
    metric: float = 0.0
    active: bool = True
    isolated: bool = False

    def record(self) -> NodeRecord:
        return NodeRecord(
            address=self.address,
            domain=self.domain,
            uptime_fraction=self.uptime,
            link_capacity_bps=self.capacity,
            active=self.active,
            metric=self.metric,
        )


@dataclass
class RouterState:
    addr: NodeAddress | None = None
    last_beacon: int = -(10**9)
    monitor_armed: bool = False


@dataclass(frozen=True)
class Action:
    at: int
    kind: str
    fields: tuple[tuple[str, str], ...]

    def get(self, key: str) -> str | None:
        for k, v in self.fields:
            if k == key:
                return v
        return None

    def render(self) -> str:
        body = " ".join(f"{k}={v}" for k, v in self.fields)
        return f"[{self.at:>6}] {self.kind} {body}".rstrip()


@dataclass(frozen=True)
class CheckResult:
    check: ScriptCheck
    passed: bool
    detail: str

    def render(self) -> str:
        body = " ".join(f"{k}={v}" for k, v in sorted(self.check.params.items()))
        when = f" at={self.check.at}" if self.check.at is not None else ""
        verdict = "PASS" if self.passed else "FAIL"
        out = f"L{self.check.line} {self.check.kind}{when} {body}: {verdict}"
        if not self.passed and self.detail:
            out += f" ({self.detail})"
        return out


class World:
    """Mutable simulation state; every change happens inside an event handler."""

    def __init__(self, engine: Engine, config: WorldConfig):
        self.engine = engine
        self.config = config
        self.registry = discovery.DownloadRegistry()
        self.directory = discovery.SearchEngineDirectory()
        self.intros = discovery.IntroductionQueue()
        self.instances: dict[NodeAddress, InstanceInfo] = {}
        self.neighborhoods: dict[int, NeighborhoodMap] = {}
        self.nid_of: dict[NodeAddress, int] = {}
        self.routers: dict[int, RouterState] = {}
        self.commits: list[sync.PendingCommit] = []
        self.actions: list[Action] = []
        self.check_results: list[CheckResult] = []
        self._next_nid = 0
        self._streams: dict[str, RandomStream] = {}

    # -- plumbing ----------------------------------------------------------

    def _stream(self, label: str) -> RandomStream:
        if label not in self._streams:
            self._streams[label] = self.engine.stream(label)
        return self._streams[label]

    def _act(self, at: int, kind: str, **fields) -> None:
        self.actions.append(
            Action(at=at, kind=kind, fields=tuple((k, str(v)) for k, v in fields.items()))
        )

    def _live(self, addr: NodeAddress) -> bool:
        info = self.instances.get(addr)
        return info is not None and info.active

    def _alloc_nid(self) -> int:
        nid = self._next_nid
        self._next_nid += 1
        return nid

    def _intro_timeout(self, sender: NodeAddress) -> int:
        if self.config.intro_timeout is not None:
            return self.config.intro_timeout
        nid = self.nid_of.get(sender)
        metrics = [0.0]
        if nid is not None:
            metrics = [r.metric for r in self.neighborhoods[nid].members] or [0.0]
        return 10 * sync.update_period("moderate", metrics)

    # -- event dispatch ------------------------------------------------------

    def handle(self, engine: Engine, ev: SimEvent) -> None:
        now = engine.now
        if ev.kind == "download":
            self._on_download(now, ev.target, ev.payload or {})
        elif ev.kind == KIND_NODE_UP:
            self._on_up(now, ev.target)
        elif ev.kind == KIND_NODE_DOWN:
            self._on_down(now, ev.target)
        elif ev.kind == "send":
            self._on_send(now, ev.target, ev.payload or {})
        elif ev.kind == "subdivide":
            self._on_subdivide(now, ev.target, ev.payload or {})
        elif ev.kind == KIND_MESSAGE:
            self._on_message(now, ev.payload)
        elif ev.kind == KIND_TIMER:
            self._on_timer(now, ev.payload)
        elif ev.kind == KIND_BEACON:
            self._on_beacon(now, ev.payload)
        elif ev.kind == "check":
            self.check_results.append(self._evaluate(ev.payload))

    # -- downloads and membership ---------------------------------------------

    def _on_download(self, now: int, addr: NodeAddress, params: dict[str, str]) -> None:
        if addr in self.instances:
            raise ScenarioError(f"{addr} downloaded twice")
        info = InstanceInfo(
            address=addr,
            domain=params.get("domain", "net"),
            uptime=float(params.get("uptime", 1.0)),
            capacity=float(params.get("capacity", 1_000_000.0)),
            metric=float(params.get("metric", 0.0)),
        )
        self.instances[addr] = info
        excerpt = self.registry.register(addr, info.domain, now, cap=self.config.excerpt_cap)
        result = discovery.bootstrap(
            addr, excerpt, is_active=self._live, stream=self._stream(f"node/{addr}"), now=now
        )
        for attempt in result.attempts:
            if not attempt.alive:
                self._act(attempt.at, "connect-failed", **{"from": addr, "to": attempt.target})
        for dead in result.dead_targets:
            self._queue_intro(result.finished_at, addr, dead)
        if result.connected_to is not None:
            self._act(
                result.finished_at, "connect", **{"from": addr, "to": result.connected_to}
            )
            self._join_via(result.finished_at, info, result.connected_to)
            skip = set(result.dead_targets) | {addr, result.connected_to}
            cursor = result.finished_at
            # Joining can split the neighborhood, so resolve the current id.
            for member in self.neighborhoods[self.nid_of[addr]].addresses():
                if member in skip:
                    continue
                cursor += self._stream(f"node/{addr}").hop_delay()
                self.engine.schedule(
                    cursor,
                    KIND_MESSAGE,
                    payload={"type": "introduction", "from": addr, "to": member},
                )
        else:
            info.isolated = True
            self.directory.advertise(addr, info.domain)
            self._act(result.finished_at, "registered", addr=addr)
            self._act(result.finished_at, "isolated", addr=addr)

    def _join_via(self, at: int, info: InstanceInfo, target: NodeAddress) -> int:
        nid = self.nid_of.get(target)
        if nid is None:
            # The target was isolated; the pair founds a fresh neighborhood.
            nid = self._alloc_nid()
            tinfo = self.instances[target]
            tinfo.isolated = False
            self.directory.deregister(target)
            self.neighborhoods[nid] = NeighborhoodMap.build([tinfo.record(), info.record()])
            self.nid_of[target] = nid
            self.routers[nid] = RouterState()
        else:
            self.neighborhoods[nid] = self.neighborhoods[nid].add(info.record())
        self.nid_of[info.address] = nid
        self._act(at, "joined", addr=info.address, neighborhood=nid)
        self._post_membership(nid)
        return nid

    def _post_membership(self, nid: int) -> None:
        nmap = self.neighborhoods[nid]
        state = self.routers.setdefault(nid, RouterState())
        if state.addr is None:
            cand = elect_router(nmap, self.config.criteria)
            if cand is not None:
                self._install_router(nid, cand)
        if self.config.critical_mass is not None and len(nmap) > self.config.critical_mass:
            self._apply_subdivide(nid, self.config.critical_mass)

    def _install_router(self, nid: int, addr: NodeAddress) -> None:
        now = self.engine.now
        state = self.routers[nid]
        state.addr = addr
        state.last_beacon = now
        self._act(now, "elected", addr=addr, neighborhood=nid)
        self.directory.advertise(addr, self.instances[addr].domain, is_router=True)
        self.engine.schedule(
            now + self.config.beacon_period, KIND_BEACON, payload={"neighborhood": nid}
        )
        if not state.monitor_armed:
            state.monitor_armed = True
            self.engine.schedule(
                now + self.config.beacon_period,
                KIND_TIMER,
                payload={"type": "beacon-monitor", "neighborhood": nid},
            )
        self.engine.schedule(
            now + self.config.refresh_period,
            KIND_TIMER,
            payload={"type": "router-refresh", "neighborhood": nid},
        )
        self._router_refresh(nid)

    def _on_up(self, now: int, addr: NodeAddress) -> None:
        info = self.instances.get(addr)
        if info is None:
            raise ScenarioError(f"up for unknown instance {addr}")
        info.active = True
        nid = self.nid_of.get(addr)
        if nid is not None:
            self.neighborhoods[nid] = self.neighborhoods[nid].set_active(addr, True)
        for intro in self.intros.deliver_for(addr, now):
            self._act(now, "delivered", **{"from": intro.sender, "to": addr})
        if nid is not None:
            state = self.routers.get(nid)
            if state is not None and state.addr == addr:
                # The router itself came back: restart its beacon and refresh
                # chains, which self-terminated while it was down. A fast
                # down/up flap can leave an extra live chain; duplicate beacons
                # only refresh last_beacon more often, so that is harmless.
                state.last_beacon = now
                self.engine.schedule(
                    now + self.config.beacon_period, KIND_BEACON, payload={"neighborhood": nid}
                )
                self.engine.schedule(
                    now + self.config.refresh_period,
                    KIND_TIMER,
                    payload={"type": "router-refresh", "neighborhood": nid},
                )
                if not state.monitor_armed:
                    state.monitor_armed = True
                    self.engine.schedule(
                        now + self.config.beacon_period,
                        KIND_TIMER,
                        payload={"type": "beacon-monitor", "neighborhood": nid},
                    )
            self._post_membership(nid)

    def _on_down(self, now: int, addr: NodeAddress) -> None:
        info = self.instances.get(addr)
        if info is None:
            raise ScenarioError(f"down for unknown instance {addr}")
        info.active = False
        nid = self.nid_of.get(addr)
        if nid is not None:
            self.neighborhoods[nid] = self.neighborhoods[nid].set_active(addr, False)
        # A downed router keeps its role until its beacon goes stale; the
        # monitor timer performs the failover.

    # -- introductions -----------------------------------------------------

    def _queue_intro(self, at: int, sender: NodeAddress, target: NodeAddress) -> None:
        if any(
            i.sender == sender and i.target == target for i in self.intros.pending()
        ):
            return
        deadline = at + self._intro_timeout(sender)
        self.intros.add(sender, target, payload=None, deadline=deadline)
        self._act(at, "queued", **{"from": sender, "to": target, "deadline": deadline})
        self.engine.schedule(deadline, KIND_TIMER, payload={"type": "intro-expiry"})

    def _on_message(self, now: int, payload: dict) -> None:
        mtype = payload["type"]
        if mtype == "introduction":
            sender, target = payload["from"], payload["to"]
            if self._live(target):
                self._act(now, "introduced", **{"from": sender, "to": target})
            else:
                self._queue_intro(now, sender, target)
        elif mtype == "proposal":
            commit = self.commits[payload["commit"]]
            member = payload["to"]
            if self._live(member):
                delay = self._stream(f"commit/{payload['commit']}").hop_delay()
                self.engine.schedule(
                    now + delay,
                    KIND_MESSAGE,
                    payload={"type": "commit-ack", "commit": payload["commit"], "member": member},
                )
        elif mtype == "commit-ack":
            commit = self.commits[payload["commit"]]
            if commit.resolution is None:
                sync.ack(commit, payload["member"], now)
                if commit.resolution is not None:
                    self._report_commit(now, commit)
        else:
            raise ScenarioError(f"unknown message type {mtype!r}")

    # -- commits -------------------------------------------------------------

    def _on_send(self, now: int, addr: NodeAddress, params: dict[str, str]) -> None:
        info = self.instances.get(addr)
        if info is None or not info.active:
            raise ScenarioError(f"send from unavailable instance {addr}")
        nid = self.nid_of.get(addr)
        if nid is None:
            raise ScenarioError(f"send from unmapped instance {addr}")
        if "key" not in params:
            raise ScenarioError(f"send from {addr} needs key=")
        group = [r.address for r in self.neighborhoods[nid].active_members()]
        timeout = int(params.get("timeout", self.config.commit_timeout))
        commit = sync.propose_commit(
            group=group,
            proposer=addr,
            key=params["key"],
            value=params.get("value", "").encode("utf-8"),
            now=now,
            timeout=timeout,
            scope=params.get("scope", sync.SCOPE_LOCAL),
        )
        self.commits.append(commit)
        idx = len(self.commits) - 1
        self._act(now, "proposed", key=commit.key, by=addr, group=len(commit.group))
        if commit.resolution is not None:
            self._report_commit(now, commit)
            return
        stream = self._stream(f"commit/{idx}")
        for member in sorted(commit.group):
            if member == addr:
                continue
            self.engine.schedule(
                now + stream.hop_delay(),
                KIND_MESSAGE,
                payload={"type": "proposal", "commit": idx, "to": member},
            )
        self.engine.schedule(
            commit.deadline, KIND_TIMER, payload={"type": "commit-deadline", "commit": idx}
        )

    def _report_commit(self, now: int, commit: sync.PendingCommit) -> None:
        res = commit.resolution
        absent = ",".join(str(a) for a in sorted(res.absentees)) or "-"
        self._act(now, "committed", key=commit.key, acks=len(res.acks), absent=absent)
        nid = self.nid_of.get(commit.proposer)
        if nid is not None:
            nmap = self.neighborhoods[nid]
            for a in res.absentees:
                if a in nmap:
                    nmap = nmap.set_active(a, False)
            self.neighborhoods[nid] = nmap

    # -- subdivision ---------------------------------------------------------

    def _on_subdivide(self, now: int, addr: NodeAddress, params: dict[str, str]) -> None:
        nid = self.nid_of.get(addr)
        if nid is None:
            raise ScenarioError(f"subdivide via unmapped instance {addr}")
        cm = int(params.get("critical_mass", self.config.critical_mass or 0))
        if cm < 1:
            raise ScenarioError("subdivide needs critical_mass (param or config)")
        self._apply_subdivide(nid, cm)

    def _apply_subdivide(self, nid: int, critical_mass: int) -> None:
        now = self.engine.now
        nmap = self.neighborhoods[nid]
        try:
            lower, upper = subdivide(nmap, critical_mass)
        except NoSplitNeeded:
            self._act(now, "no-split", neighborhood=nid, members=len(nmap))
            return
        del self.neighborhoods[nid]
        self.routers.pop(nid, None)
        for half in (lower, upper):
            hid = self._alloc_nid()
            self.neighborhoods[hid] = half
            self.routers[hid] = RouterState()
            for rec in half.members:
                self.nid_of[rec.address] = hid
            self._act(now, "subdivided", source=nid, neighborhood=hid, members=len(half))
            self._post_membership(hid)

    # -- timers and beacons ----------------------------------------------------

    def _on_timer(self, now: int, payload: dict) -> None:
        ttype = payload["type"]
        if ttype == "intro-expiry":
            for intro in self.intros.expire_due(now):
                self._act(now, "expired", **{"from": intro.sender, "to": intro.target})
        elif ttype == "commit-deadline":
            commit = self.commits[payload["commit"]]
            if commit.resolution is None:
                sync.expire(commit, now)
                self._report_commit(now, commit)
        elif ttype == "beacon-monitor":
            self._on_monitor(now, payload["neighborhood"])
        elif ttype == "router-refresh":
            nid = payload["neighborhood"]
            if nid in self.neighborhoods:
                state = self.routers[nid]
                if state.addr is not None and self._live(state.addr):
                    self._router_refresh(nid)
                    self.engine.schedule(
                        now + self.config.refresh_period,
                        KIND_TIMER,
                        payload={"type": "router-refresh", "neighborhood": nid},
                    )
        else:
            raise ScenarioError(f"unknown timer type {ttype!r}")

    def _on_beacon(self, now: int, payload: dict) -> None:
        nid = payload["neighborhood"]
        if nid not in self.neighborhoods:
            return
        state = self.routers[nid]
        if state.addr is not None and self._live(state.addr):
            state.last_beacon = now
            self.engine.schedule(
                now + self.config.beacon_period, KIND_BEACON, payload={"neighborhood": nid}
            )

    def _on_monitor(self, now: int, nid: int) -> None:
        if nid not in self.neighborhoods:
            return
        state = self.routers[nid]
        if state.addr is None:
            state.monitor_armed = False
            return
        timeout = self.config.beacon_period * self.config.beacon_timeout_factor
        if not self._live(state.addr) and now - state.last_beacon >= timeout:
            self._act(now, "beacon-expired", addr=state.addr, neighborhood=nid)
            state.addr = None
            cand = elect_router(self.neighborhoods[nid], self.config.criteria)
            if cand is not None:
                self._install_router(nid, cand)
            else:
                self._act(now, "no-router", neighborhood=nid)
                state.monitor_armed = False
                return
        self.engine.schedule(
            now + self.config.beacon_period,
            KIND_TIMER,
            payload={"type": "beacon-monitor", "neighborhood": nid},
        )

    def _router_refresh(self, nid: int) -> None:
        state = self.routers[nid]
        nmap, added = discovery.router_refresh(state.addr, self.directory, self.neighborhoods[nid])
        for addr in added:
            # Upgrade the placeholder record with what the instance reported.
            info = self.instances[addr]
            info.isolated = False
            nmap = nmap.remove(addr).add(info.record())
            self.nid_of[addr] = nid
            self._act(self.engine.now, "mapped", addr=addr, neighborhood=nid)
        self.neighborhoods[nid] = nmap
        if added:
            self._post_membership(nid)

    # -- checks ---------------------------------------------------------------

    def _evaluate(self, check: ScriptCheck) -> CheckResult:
        kind, p = check.kind, check.params
        action_kinds = {
            "connected": "connect",
            "connect-failed": "connect-failed",
            "queued": "queued",
            "delivered": "delivered",
            "expired": "expired",
            "introduced": "introduced",
        }
        if kind in action_kinds:
            want_from, want_to = p.get("from"), p.get("to")
            ok = any(
                a.kind == action_kinds[kind]
                and (want_from is None or a.get("from") == want_from)
                and (want_to is None or a.get("to") == want_to)
                for a in self.actions
            )
            return CheckResult(check, ok, "" if ok else "no matching action")
        if kind in ("router", "no-router"):
            addr = parse_address(p["addr"])
            nid = self.nid_of.get(addr)
            current = self.routers[nid].addr if nid is not None and nid in self.routers else None
            if kind == "router":
                ok = current == addr
                return CheckResult(check, ok, "" if ok else f"router is {current}")
            ok = current is None
            return CheckResult(check, ok, "" if ok else f"router is {current}")
        if kind == "member":
            addr = parse_address(p["addr"])
            ok = addr in self.nid_of
            return CheckResult(check, ok, "" if ok else "not in any neighborhood")
        if kind == "isolated":
            addr = parse_address(p["addr"])
            info = self.instances.get(addr)
            ok = info is not None and info.isolated and addr not in self.nid_of
            return CheckResult(check, ok, "" if ok else "not isolated")
        if kind == "committed":
            for a in self.actions:
                if a.kind != "committed" or a.get("key") != p.get("key"):
                    continue
                if "acks" in p and a.get("acks") != p["acks"]:
                    continue
                if "absent" in p and a.get("absent") != p["absent"]:
                    continue
                return CheckResult(check, True, "")
            return CheckResult(check, False, "no matching commit")
        raise ScenarioError(f"unhandled check kind {kind!r}")


@dataclass(frozen=True)
class ScenarioReport:
    script: ScenarioScript
    seed: int
    trace: EventTrace
    actions: tuple[Action, ...]
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def run_scenario(script: ScenarioScript | str | Path, seed: int = DEFAULT_SEED) -> ScenarioReport:
    if not isinstance(script, ScenarioScript):
        script = load_scenario(script)
    engine = Engine(seed)
    world = World(engine, WorldConfig.from_mapping(script.config))
    kind_map = {
        "download": "download",
        "up": KIND_NODE_UP,
        "down": KIND_NODE_DOWN,
        "send": "send",
        "subdivide": "subdivide",
    }
    last_at = 0
    for ev in script.events:
        engine.schedule(ev.at, kind_map[ev.kind], target=ev.addr, payload=ev.params)
        last_at = max(last_at, ev.at)
    for chk in script.checks:
        if chk.at is not None:
            engine.schedule(chk.at, "check", payload=chk)
            last_at = max(last_at, chk.at)
    horizon = world.config.horizon
    if horizon is None:
        horizon = last_at + DEFAULT_HORIZON_MARGIN
    trace = engine.run(world.handle, horizon=horizon)
    for chk in script.checks:
        if chk.at is None:
            world.check_results.append(world._evaluate(chk))
    ordered = sorted(world.check_results, key=lambda r: r.check.line)
    # Stable time order: actions are appended as handlers run, but handshake
    # actions carry cursor timestamps later than the triggering event.
    actions = [a for _, a in sorted(enumerate(world.actions), key=lambda p: (p[1].at, p[0]))]
    return ScenarioReport(
        script=script,
        seed=seed,
        trace=trace,
        actions=tuple(actions),
        checks=tuple(ordered),
    )


def _render_payload(payload) -> str:
    if payload is None:
        return ""
    if isinstance(payload, ScriptCheck):
        return f"check L{payload.line} {payload.kind}"
    if isinstance(payload, dict):
        return " ".join(f"{k}={payload[k]}" for k in sorted(payload))
    return str(payload)


def render_report(report: ScenarioReport, show_trace: bool = True) -> str:
    lines = [f"scenario {report.script.name}", f"seed {report.seed}"]
    if show_trace:
        state = "truncated" if report.trace.truncated else "complete"
        lines.append(f"-- trace: {len(report.trace)} events, {state} --")
        for ev in report.trace:
            target = f" target={ev.target}" if ev.target is not None else ""
            extra = _render_payload(ev.payload)
            extra = f" {extra}" if extra else ""
            lines.append(f"[{ev.at:>6}] {ev.kind}{target}{extra}")
    lines.append(f"-- actions: {len(report.actions)} --")
    lines.extend(a.render() for a in report.actions)
    lines.append(f"-- checks: {len(report.checks)} --")
    lines.extend(c.render() for c in report.checks)
    verdict = "PASS" if report.passed else "FAIL"
    npass = sum(1 for c in report.checks if c.passed)
    lines.append(f"-- result: {verdict} ({npass}/{len(report.checks)} checks) --")
    return "\n".join(lines) + "\n"
