"""Carpet-bombing aggregation: merge concurrent per-IP attacks into one
prefix-level attack.

A group of concurrent same-type events is merged when the longest
BGP-routed prefix covering all its targets has length /11 to /28 and all
targets sit in a single registry allocation block. Attacks spanning
multiple allocations stay separate even when a routed prefix covers them
(an ISP-wide attack is recorded as many attacks, not one).
"""

from __future__ import annotations

from typing import Iterable, Optional

from .model import (
    AllocationTable,
    AttackEvent,
    RoutedPrefixTable,
    US_PER_S,
    event_sort_key,
    int_to_ip,
    parse_prefix,
)

MIN_PREFIX_LEN = 11
MAX_PREFIX_LEN = 28


def aggregate_carpet(
    events: Iterable[AttackEvent],
    routed: RoutedPrefixTable,
    alloc: AllocationTable,
    concurrency_gap: float = 60.0,
    min_targets: int = 2,
) -> list[AttackEvent]:
    """Merge concurrent events per (observatory, attack type) into carpet
    events where the routed-prefix and single-allocation conditions hold;
    everything else passes through unchanged.

    Input must be sorted by start_ts. The output is a partition of the
    input: every event is represented exactly once.
    """
    if routed is None or alloc is None:
        raise ValueError("aggregate_carpet requires routed and allocation tables")
    events = list(events)
    for prev, cur in zip(events, events[1:]):
        if cur.start_ts < prev.start_ts:
            raise ValueError(
                f"events not sorted by start_ts: {cur.target} at {cur.start_ts} "
                f"after {prev.target} at {prev.start_ts}"
            )

    gap_us = int(concurrency_gap * US_PER_S)
    # Greedy temporal clustering, earliest start first, ties by target.
    groups: dict[tuple[str, str], list[list[AttackEvent]]] = {}
    for e in sorted(events, key=event_sort_key):
        clusters = groups.setdefault((e.observatory, e.attack_type), [])
        if clusters and e.start_ts <= max(x.end_ts for x in clusters[-1]) + gap_us:
            clusters[-1].append(e)
        else:
            clusters.append([e])

    out: list[AttackEvent] = []
    for clusters in groups.values():
        for cluster in clusters:
            merged = _try_merge(cluster, routed, alloc, min_targets)
            if merged is not None:
                out.append(merged)
            else:
                out.extend(cluster)
    out.sort(key=event_sort_key)
    return out


def _try_merge(
    cluster: list[AttackEvent],
    routed: RoutedPrefixTable,
    alloc: AllocationTable,
    min_targets: int,
) -> Optional[AttackEvent]:
    targets = {e.target for e in cluster}
    if len(targets) < min_targets:
        return None

    # Longest routed prefix containing every target: any covering prefix
    # must contain the targets' common ancestor, so walk its ancestors.
    lo = min(net for net, _ in map(parse_prefix, targets))
    hi_net, hi_len = max(parse_prefix(t) for t in targets)
    hi = hi_net | ((1 << (32 - hi_len)) - 1)  # top of the most-specific max prefix
    diff = lo ^ hi
    cov_len = 32 - diff.bit_length()
    cov_net = lo & ~((1 << (32 - cov_len)) - 1) if cov_len else 0
    hit = routed.longest_covering(cov_net, cov_len)
    if hit is None:
        return None
    prefix, plen, _asn = hit
    if not MIN_PREFIX_LEN <= plen <= MAX_PREFIX_LEN:
        return None

    blocks = set()
    for t in targets:
        net, tlen = parse_prefix(t)
        lo_block = alloc.block_of(int_to_ip(net))
        hi_block = alloc.block_of(int_to_ip(net | ((1 << (32 - tlen)) - 1)))
        if lo_block is None or lo_block != hi_block:
            return None
        blocks.add(lo_block)
    if len(blocks) != 1:
        return None

    members: list[str] = []
    for e in cluster:
        members.extend(e.host_targets())
    total_bytes = None
    if all(e.bytes is not None for e in cluster):
        total_bytes = sum(e.bytes for e in cluster)
    sensors = frozenset().union(*(e.sensors for e in cluster))
    return AttackEvent(
        observatory=cluster[0].observatory,
        attack_type=cluster[0].attack_type,
        target=prefix,
        start_ts=min(e.start_ts for e in cluster),
        end_ts=max(e.end_ts for e in cluster),
        packets=sum(e.packets for e in cluster),
        bytes=total_bytes,
        sensors=sensors,
        member_targets=tuple(sorted(set(members))),
    )
