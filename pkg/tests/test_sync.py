import random
from ipaddress import IPv4Address

import pytest

from peermesh.sync import (
    AttributeEntry,
    AttributeList,
    ConfigurationError,
    NeighborhoodView,
    NotInGroupError,
    Phase,
    ack,
    expire,
    load_attribute_seeds,
    lookup_by_attribute,
    merge_lists,
    propose_commit,
    run_round,
    start_round,
    update_period,
    validate_scope,
)
from peermesh.topology import NeighborhoodMap, NodeRecord, form_clusters


def addr(i: int) -> IPv4Address:
    return IPv4Address(i)


def entry(key, owner, version=1, value=b"v", scope="local", update_class="moderate"):
    return AttributeEntry(
        key=key, scope=scope, value=value, version=version, owner=owner, update_class=update_class
    )


def make_plan(count: int, cluster_size: int):
    nmap = NeighborhoodMap.build(NodeRecord(addr(100 + i)) for i in range(count))
    return form_clusters(nmap, cluster_size)


def seed_lists(plan, rng=None):
    """One distinctive entry per member, plus a few random extras."""
    lists = {}
    for i, a in enumerate(plan.members):
        al = AttributeList()
        al.put(entry("self", a, value=f"m{i}".encode()))
        if rng is not None:
            for key in rng.sample(["game", "room", "team"], k=rng.randrange(3)):
                al.put(
                    entry(
                        key,
                        a,
                        version=rng.randrange(1, 4),
                        value=bytes([rng.randrange(97, 123)]),
                    )
                )
        lists[a] = al
    return lists


def oracle_merge(lists):
    out = AttributeList()
    for al in lists.values():
        out = merge_lists(out, al)
    return out


# -- scopes and entries -------------------------------------------------------


@pytest.mark.parametrize("scope", ["local", "global", "group:raid-7", "group:a.b_c"])
def test_valid_scopes(scope):
    assert validate_scope(scope) == scope


@pytest.mark.parametrize("scope", ["", "Global", "group:", "group:bad scope", "room"])
def test_invalid_scopes(scope):
    with pytest.raises(ValueError):
        validate_scope(scope)


def test_entry_validation():
    with pytest.raises(ValueError):
        entry("", addr(1))
    with pytest.raises(ValueError):
        entry("k", addr(1), version=0)
    with pytest.raises(ValueError):
        AttributeEntry(key="k", scope="local", value=b"", version=1, owner=addr(1), update_class="warp")


def test_put_requires_version_growth_and_fixed_scope():
    al = AttributeList()
    al.put(entry("k", addr(1), version=1))
    al.put(entry("k", addr(1), version=3))
    with pytest.raises(ValueError):
        al.put(entry("k", addr(1), version=3))
    with pytest.raises(ValueError):
        al.put(entry("k", addr(1), version=2))
    with pytest.raises(ValueError):
        al.put(entry("k", addr(1), version=4, scope="global"))
    al.put(entry("k", addr(2), version=1))  # same key, different owner is a new slot
    assert len(al) == 2


def test_entries_are_deterministically_ordered():
    al = AttributeList()
    al.put(entry("b", addr(2)))
    al.put(entry("a", addr(9)))
    al.put(entry("a", addr(3)))
    assert [(e.key, int(e.owner)) for e in al.entries()] == [("a", 3), ("a", 9), ("b", 2)]


# -- merge algebra ------------------------------------------------------------


def random_attribute_list(rng: random.Random) -> AttributeList:
    al = AttributeList()
    for key in ("game", "room", "team"):
        for owner in (addr(1), addr(2), addr(3)):
            if rng.random() < 0.5:
                al.put(
                    entry(
                        key,
                        owner,
                        version=rng.randrange(1, 3),
                        value=rng.choice([b"x", b"y"]),
                    )
                )
    return al


def test_merge_identity_and_idempotence():
    rng = random.Random(71)
    empty = AttributeList()
    for _ in range(20):
        al = random_attribute_list(rng)
        assert merge_lists(al, empty) == al
        assert merge_lists(empty, al) == al
        assert merge_lists(al, al) == al


def test_merge_commutes_and_associates():
    rng = random.Random(72)
    for _ in range(60):
        a, b, c = (random_attribute_list(rng) for _ in range(3))
        assert merge_lists(a, b) == merge_lists(b, a)
        assert merge_lists(merge_lists(a, b), c) == merge_lists(a, merge_lists(b, c))


def test_merge_higher_version_wins():
    a = AttributeList([entry("k", addr(1), version=2, value=b"new")])
    b = AttributeList([entry("k", addr(1), version=1, value=b"old")])
    merged = merge_lists(a, b)
    assert merged.get("k", addr(1)).value == b"new"


def test_merge_equal_version_tie_is_order_free():
    a = AttributeList([entry("k", addr(1), version=1, value=b"alpha")])
    b = AttributeList([entry("k", addr(1), version=1, value=b"beta")])
    left = merge_lists(a, b)
    right = merge_lists(b, a)
    assert left == right
    assert left.get("k", addr(1)).value == b"alpha"  # smaller value tuple wins


def test_merge_does_not_mutate_inputs():
    a = AttributeList([entry("k", addr(1), version=1)])
    b = AttributeList([entry("k", addr(2), version=1)])
    merge_lists(a, b)
    assert len(a) == 1 and len(b) == 1


# -- update rounds -------------------------------------------------------------


@pytest.mark.parametrize("n,cols", [(2, 1), (4, 3), (5, 5), (3, 7), (2, 2)])
def test_round_message_count_uniform(n, cols):
    # failure-free law: per cluster 3*(n-1) hops, plus 2*(N-1) on the ring
    plan = make_plan(n * cols, n)
    r = run_round(plan, seed_lists(plan))
    assert r.message_count == cols * 3 * (n - 1) + 2 * (cols - 1)
    assert r.phase_messages[Phase.INTRA_FORWARD] == cols * (n - 1)
    assert r.phase_messages[Phase.INTRA_REVERSE] == cols * (n - 1)
    assert r.phase_messages[Phase.LEADER_RING] == 2 * (cols - 1)
    assert r.phase_messages[Phase.REDISTRIBUTE] == cols * (n - 1)


def test_round_message_count_ragged_tail():
    # 10 members in clusters of 4 -> sizes 4, 4, 2
    plan = make_plan(10, 4)
    r = run_round(plan, seed_lists(plan))
    # 3*(4-1) + 3*(4-1) + 3*(2-1) intra plus 2*(3-1) on the ring
    expected = sum(3 * (len(c) - 1) for c in plan.clusters) + 2 * (len(plan.clusters) - 1)
    assert r.message_count == expected == 25


def test_round_converges_everyone_to_the_full_merge():
    rng = random.Random(73)
    for _ in range(30):
        n = rng.randrange(1, 7)
        cols = rng.randrange(1, 7)
        count = max(2, n * cols)
        plan = make_plan(count, n)
        lists = seed_lists(plan, rng)
        want = oracle_merge(lists)
        finals = run_round(plan, lists).final_lists()
        assert all(finals[a] == want for a in plan.members)


def test_round_single_member():
    plan = make_plan(1, 1)
    r = run_round(plan, seed_lists(plan))
    assert r.done and r.message_count == 0


def test_round_input_lists_are_not_mutated():
    plan = make_plan(6, 3)
    lists = seed_lists(plan)
    before = {a: al.entries() for a, al in lists.items()}
    run_round(plan, lists)
    assert {a: al.entries() for a, al in lists.items()} == before


def test_round_requires_a_list_per_member():
    plan = make_plan(4, 2)
    lists = seed_lists(plan)
    del lists[plan.members[0]]
    with pytest.raises(ConfigurationError):
        run_round(plan, lists)


def test_round_skips_dead_members_and_marks_them_stale():
    plan = make_plan(12, 4)
    lists = seed_lists(plan)
    dead = {plan.members[2], plan.members[5]}  # a mid-chain member and a follower
    r = run_round(plan, lists, is_active=lambda a: a not in dead)
    assert r.stale == dead
    live = [a for a in plan.members if a not in dead]
    want = oracle_merge({a: lists[a] for a in live})
    finals = r.final_lists()
    assert all(finals[a] == want for a in live)


def test_round_drops_fully_dead_cluster():
    plan = make_plan(9, 3)
    dead = set(plan.clusters[1])
    r = run_round(plan, seed_lists(plan), is_active=lambda a: a not in dead)
    assert dead <= r.stale
    # two live clusters of 3: 3 hops * 3 phases each, ring of 2 leaders
    assert r.message_count == 2 * (3 * 2) + 2 * 1


def test_round_with_nobody_alive_is_a_configuration_error():
    plan = make_plan(4, 2)
    with pytest.raises(ConfigurationError):
        run_round(plan, seed_lists(plan), is_active=lambda a: False)


def test_mid_round_churn_marks_stale_and_still_completes():
    plan = make_plan(8, 4)
    lists = seed_lists(plan)
    dead = set()
    r = start_round(plan, lists, is_active=lambda a: a not in dead)
    r.step()
    dead.add(plan.members[3])  # dies while the round is in flight
    while not r.done:
        r.step()
    assert plan.members[3] in r.stale


def test_stepping_a_done_round_raises():
    plan = make_plan(2, 2)
    r = run_round(plan, seed_lists(plan))
    with pytest.raises(ConfigurationError):
        r.step()


# -- commits -------------------------------------------------------------------


GROUP = [addr(1), addr(2), addr(3)]


def test_commit_group_of_one_commits_immediately():
    c = propose_commit([addr(1)], addr(1), "k", b"v", now=0, timeout=10)
    assert c.committed and c.resolution.full
    assert c.resolution.at == 0


def test_commit_completes_on_last_ack():
    c = propose_commit(GROUP, addr(1), "k", b"v", now=0, timeout=10)
    assert not c.committed  # proposer's own ack is not enough
    ack(c, addr(2), now=3)
    assert not c.committed
    ack(c, addr(3), now=5)
    assert c.committed and c.resolution.full
    assert c.resolution.at == 5
    assert c.resolution.acks == frozenset(GROUP)


def test_commit_duplicate_acks_are_noops():
    c = propose_commit(GROUP, addr(1), "k", b"v", now=0, timeout=10)
    ack(c, addr(2), now=1)
    ack(c, addr(2), now=2)
    assert not c.committed
    assert c.acks == {addr(1), addr(2)}


def test_commit_rejects_strangers():
    c = propose_commit(GROUP, addr(1), "k", b"v", now=0, timeout=10)
    with pytest.raises(NotInGroupError):
        ack(c, addr(9), now=1)
    with pytest.raises(ConfigurationError):
        propose_commit(GROUP, addr(9), "k", b"v", now=0, timeout=10)


def test_commit_expire_flags_absentees():
    c = propose_commit(GROUP, addr(1), "k", b"v", now=0, timeout=10)
    ack(c, addr(2), now=4)
    expire(c, now=9)  # before the deadline: nothing happens
    assert not c.committed
    expire(c, now=10)
    assert c.committed
    assert c.resolution.acks == {addr(1), addr(2)}
    assert c.resolution.absentees == {addr(3)}
    assert not c.resolution.full


def test_commit_resolves_exactly_once():
    c = propose_commit(GROUP, addr(1), "k", b"v", now=0, timeout=10)
    expire(c, now=10)
    first = c.resolution
    ack(c, addr(2), now=11)  # late ack after resolution is dropped
    expire(c, now=12)
    assert c.resolution is first
    assert addr(2) in c.resolution.absentees


def test_commit_validates_inputs():
    with pytest.raises(ValueError):
        propose_commit(GROUP, addr(1), "k", b"v", now=0, timeout=0)
    with pytest.raises(ValueError):
        propose_commit(GROUP, addr(1), "k", b"v", now=0, timeout=5, scope="weird")


# -- update cadence --------------------------------------------------------------


@pytest.mark.parametrize(
    "cls,metrics,expected",
    [
        ("aggressive", [0.0], 10),
        ("moderate", [0.0], 50),
        ("light", [0.0], 250),
        ("aggressive", [100.0], 20),  # median equal to the reference doubles the base
        ("moderate", [100.0, 0.0, 100.0], 100),
        ("aggressive", [50.0], 15),
        ("light", [10.0, 20.0, 30.0], 300),
    ],
)
def test_update_period_values(cls, metrics, expected):
    assert update_period(cls, metrics) == expected


def test_update_period_monotone_in_median():
    rng = random.Random(74)
    for _ in range(50):
        lo = sorted(rng.uniform(0, 50) for _ in range(5))
        hi = [m + 60 for m in lo]
        assert update_period("moderate", lo) <= update_period("moderate", hi)


def test_update_period_validation():
    with pytest.raises(ValueError):
        update_period("warp", [1.0])
    with pytest.raises(ValueError):
        update_period("moderate", [])
    with pytest.raises(ValueError):
        update_period("moderate", [-1.0])
    with pytest.raises(ValueError):
        update_period("moderate", [1.0], reference_metric=0)


# -- lookup ----------------------------------------------------------------------


def make_view(nid_base: int, members, entries, router=None):
    nmap = NeighborhoodMap.build(NodeRecord(a) for a in members)
    al = AttributeList(entries)
    return NeighborhoodView(nmap=nmap, attributes=al, router=router)


def test_lookup_home_sees_all_scopes_remote_only_travelling():
    home = make_view(
        0,
        [addr(1), addr(2)],
        [
            entry("game", addr(1), value=b"chess", scope="local"),
            entry("game", addr(2), value=b"chess", scope="global"),
        ],
        router=addr(1),
    )
    remote = make_view(
        1,
        [addr(10), addr(11)],
        [
            entry("game", addr(10), value=b"chess", scope="local"),  # stays local
            entry("game", addr(11), value=b"chess", scope="group:club"),
        ],
        router=addr(10),
    )
    res = lookup_by_attribute("game", b"chess", addr(1), {0: home, 1: remote})
    assert res.matches == ((addr(1), 0), (addr(2), 0), (addr(11), 1))
    assert not res.partial
    assert len(res.connections) == 1
    conn = res.connections[0]
    assert (conn.origin_router, conn.target_router) == (addr(1), addr(10))


def test_lookup_without_router_pair_is_partial():
    home = make_view(0, [addr(1)], [], router=None)
    remote = make_view(
        1, [addr(10)], [entry("game", addr(10), value=b"chess", scope="global")], router=addr(10)
    )
    res = lookup_by_attribute("game", b"chess", addr(1), {0: home, 1: remote})
    assert res.matches == ()
    assert res.partial


def test_lookup_brute_force_oracle():
    rng = random.Random(75)
    for _ in range(25):
        views = {}
        owner_pool = []
        for nid in range(3):
            members = [addr(100 * (nid + 1) + i) for i in range(rng.randrange(1, 4))]
            entries = []
            for m in members:
                if rng.random() < 0.7:
                    scope = rng.choice(["local", "global", "group:g"])
                    value = rng.choice([b"chess", b"go"])
                    entries.append(entry("game", m, value=value, scope=scope))
            router = members[0] if rng.random() < 0.7 else None
            views[nid] = make_view(nid, members, entries, router=router)
            owner_pool.extend((nid, m) for m in members)
        home_nid, origin = owner_pool[rng.randrange(len(owner_pool))]
        res = lookup_by_attribute("game", b"chess", origin, views)

        want = []
        partial = False
        for nid in sorted(views):
            for e in views[nid].attributes.entries():
                if e.key != "game" or e.value != b"chess":
                    continue
                if nid == home_nid:
                    want.append((e.owner, nid))
                elif e.scope != "local":
                    if views[home_nid].router is None or views[nid].router is None:
                        partial = True
                    else:
                        want.append((e.owner, nid))
        want.sort(key=lambda p: (p[1] != home_nid, p[1], int(p[0])))
        got = sorted(res.matches, key=lambda p: (p[1] != home_nid, p[1], int(p[0])))
        assert got == want
        assert res.partial == partial


def test_lookup_requires_membership():
    views = {0: make_view(0, [addr(1)], [])}
    with pytest.raises(ValueError):
        lookup_by_attribute("game", b"chess", addr(99), views)


def test_owners_matching():
    al = AttributeList(
        [
            entry("game", addr(1), value=b"chess"),
            entry("game", addr(2), value=b"go"),
            entry("game", addr(3), value=b"chess"),
        ]
    )
    assert al.owners_matching("game", b"chess") == (addr(1), addr(3))


def test_load_attribute_seeds(tmp_path):
    seeds = tmp_path / "attrs.seed"
    seeds.write_text(
        "# owner key scope class value\n"
        "10.0.0.1 game global moderate chess\n"
        "10.0.0.1 room group:club aggressive red room\n"
        "10.0.0.2 game local light go\n"
    )
    lists = load_attribute_seeds(seeds)
    one = lists[IPv4Address("10.0.0.1")]
    assert one.get("room", IPv4Address("10.0.0.1")).value == b"red room"
    assert len(lists[IPv4Address("10.0.0.2")]) == 1
    seeds.write_text("10.0.0.1 game global moderate\n")
    with pytest.raises(ValueError, match=":1"):
        load_attribute_seeds(seeds)
