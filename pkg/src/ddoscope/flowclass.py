"""Attack classification for blackholed/monitored flow summaries.

One summary describes traffic toward one target over one window; the rule
set splits reflection-amplification (UDP from amplification source ports)
from direct-path (TCP) attacks on source-count and bitrate thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .model import AttackEvent, ip_to_int

UDP = 17
TCP = 6

# Amplification service source ports: QOTD, CHARGEN, DNS, RPC portmapper,
# NTP, SNMP, CLDAP, SSDP, memcached.
AMPLIFICATION_PORTS = frozenset({17, 19, 53, 111, 123, 161, 389, 1900, 11211})

MIN_SRC_IPS = 10
RA_BITRATE_BPS = 1_000_000_000   # strict: > 1 Gbps
DP_BITRATE_BPS = 100_000_000     # strict: > 100 Mbps


@dataclass(frozen=True)
class FlowSummary:
    """Aggregate view of one candidate attack flow toward one target."""

    target_ip: str
    protocol: int
    src_port: int
    distinct_src_ips: int
    bitrate_bps: float
    start_ts: int
    end_ts: int

    def __post_init__(self):
        ip_to_int(self.target_ip)
        if self.distinct_src_ips < 1:
            raise ValueError("distinct_src_ips must be >= 1")
        if self.bitrate_bps < 0:
            raise ValueError("negative bitrate")
        if self.start_ts > self.end_ts:
            raise ValueError("window start after end")


def classify_flow(
    f: FlowSummary,
    ampl_ports: frozenset[int] = AMPLIFICATION_PORTS,
    observatory: str = "flow",
) -> Optional[AttackEvent]:
    """Classify one flow summary as an RA or DP attack, or neither.

    RA: UDP, amplification source port, >=10 source IPs, >1 Gbps.
    DP: TCP, >=10 source IPs, >100 Mbps.
    Thresholds are strict as written: exactly 1 Gbps does not qualify,
    exactly 10 source IPs does.
    """
    attack_type = None
    if (
        f.protocol == UDP
        and f.src_port in ampl_ports
        and f.distinct_src_ips >= MIN_SRC_IPS
        and f.bitrate_bps > RA_BITRATE_BPS
    ):
        attack_type = "RA"
    elif (
        f.protocol == TCP
        and f.distinct_src_ips >= MIN_SRC_IPS
        and f.bitrate_bps > DP_BITRATE_BPS
    ):
        attack_type = "DP"
    if attack_type is None:
        return None
    return AttackEvent(
        observatory=observatory,
        attack_type=attack_type,
        target=f"{f.target_ip}/32",
        start_ts=f.start_ts,
        end_ts=f.end_ts,
        packets=0,  # flow summaries carry no packet counts
        source_ips=f.distinct_src_ips,
    )
