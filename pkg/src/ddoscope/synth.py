"""Seeded synthetic multi-observatory attack scenarios with ground truth.

Three attack models are generated:

  rsdos             direct-path flood with uniformly spoofed sources; the
                    victim's responses backscatter into the telescope,
                    each attack packet landing there independently with
                    probability n_addresses / 2^32
  reflection        spoofed requests (source = victim) sent to a seeded
                    subset of the honeypot sensors
  direct_nonspoofed state-exhaustion flood; visible to the flow monitor
                    only, so it emits no packets at all

Every attack also emits one flow summary toward its victim. Randomness
comes from Philox4x64-10 keyed (seed, attack index), so per-attack streams
are independent: adding an attack never perturbs another's packets, and
identical (spec, seed) yields byte-identical outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .flowclass import FlowSummary, classify_flow
from .ioformats import write_flows, write_json, write_packets
from .model import (
    PacketRecord,
    US_PER_S,
    int_to_ip,
    ip_to_int,
    parse_prefix,
)
from .telescope import ADDRESS_SPACE

TELESCOPE_BASE = ip_to_int("10.0.0.0")  # synthetic telescope block
ATTACK_TYPES = ("rsdos", "reflection", "direct_nonspoofed")
DEFAULT_REFLECTION_PORTS = (123,)

# Flow-summary source counts are modeled, not measured: uniform spoofing
# makes nearly every packet a fresh source; a non-spoofed flood comes from
# a bounded bot population.
NONSPOOFED_SOURCES = 100


@dataclass(frozen=True)
class AttackSpec:
    type: str
    victim: str                       # host IP or prefix (carpet bombing)
    start_s: float
    duration_s: float
    rate_pps: float
    packet_bytes: int = 110
    reflector_subset: int = 0         # reflection only: sensors to select
    spoof: str = "uniform"
    ports: tuple[int, ...] = DEFAULT_REFLECTION_PORTS  # reflection dst service ports
    amplification: float = 1.0        # reflection only: response/request byte ratio

    def __post_init__(self):
        if self.type not in ATTACK_TYPES:
            raise ValueError(f"unknown attack type {self.type!r}")
        if self.rate_pps <= 0 or self.duration_s <= 0:
            raise ValueError("rate and duration must be positive")
        if self.start_s < 0:
            raise ValueError("attack cannot start before the scenario")
        if self.packet_bytes < 20:
            raise ValueError("packet_bytes below IPv4 minimum")
        if self.spoof not in ("uniform", "none"):
            raise ValueError(f"unknown spoof mode {self.spoof!r}")
        if self.type == "reflection" and self.reflector_subset < 1:
            raise ValueError("reflection attacks need at least one sensor")
        if self.amplification <= 0:
            raise ValueError("amplification must be positive")
        parse_prefix(self.victim)  # validates
        object.__setattr__(self, "ports", tuple(self.ports))


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    duration_s: float
    telescope_addresses: int
    honeypot_sensors: tuple[str, ...]
    attacks: tuple[AttackSpec, ...]

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")
        if not 1 <= self.telescope_addresses <= ADDRESS_SPACE:
            raise ValueError("telescope size out of range")
        for ip in self.honeypot_sensors:
            ip_to_int(ip)
        if len(set(self.honeypot_sensors)) != len(self.honeypot_sensors):
            raise ValueError("duplicate honeypot sensors")
        for a in self.attacks:
            if a.start_s + a.duration_s > self.duration_s:
                raise ValueError(
                    f"attack on {a.victim} runs past the scenario end"
                )
            if a.type == "reflection" and a.reflector_subset > len(self.honeypot_sensors):
                raise ValueError(
                    f"attack on {a.victim} wants {a.reflector_subset} sensors, "
                    f"only {len(self.honeypot_sensors)} exist"
                )

    @classmethod
    def from_json(cls, doc: dict) -> "ScenarioSpec":
        attacks = tuple(
            AttackSpec(
                type=a["type"],
                victim=a["victim"],
                start_s=float(a["start_s"]),
                duration_s=float(a["duration_s"]),
                rate_pps=float(a["rate_pps"]),
                packet_bytes=int(a.get("packet_bytes", 110)),
                reflector_subset=int(a.get("reflector_subset", 0)),
                spoof=a.get("spoof", "uniform"),
                ports=tuple(a.get("ports", DEFAULT_REFLECTION_PORTS)),
                amplification=float(a.get("amplification", 1.0)),
            )
            for a in doc["attacks"]
        )
        return cls(
            seed=int(doc["seed"]),
            duration_s=float(doc["duration_s"]),
            telescope_addresses=int(doc["telescope"]["n_addresses"]),
            honeypot_sensors=tuple(doc.get("honeypot_sensors", ())),
            attacks=attacks,
        )

    @classmethod
    def load(cls, path) -> "ScenarioSpec":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class GeneratedScenario:
    telescope_packets: list[PacketRecord]
    honeypot_packets: dict[str, list[PacketRecord]]  # sensor IP -> packets
    flows: list[FlowSummary]
    ground_truth: dict


def _attack_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, index], dtype=np.uint64)))


def _victim_source(rng: np.random.Generator, net: int, plen: int) -> str:
    if plen == 32:
        return int_to_ip(net)
    offset = int(rng.integers(0, 1 << (32 - plen)))
    return int_to_ip(net | offset)


def _jitter_us(rng: np.random.Generator, second: float, count: int, span_s: float = 1.0) -> list[int]:
    base = int(round(second * US_PER_S))
    width = max(1, int(round(span_s * US_PER_S)))
    offsets = sorted(int(u) for u in rng.integers(0, width, count))
    return [base + o for o in offsets]


def generate(spec: ScenarioSpec) -> GeneratedScenario:
    """Materialize a scenario: sensor packet streams, flow summaries, and
    per-attack ground truth. Deterministic given (spec, seed)."""
    telescope: list[tuple] = []
    honeypot: dict[str, list[tuple]] = {ip: [] for ip in spec.honeypot_sensors}
    flows: list[FlowSummary] = []
    truth_attacks: list[dict] = []
    sample_prob = spec.telescope_addresses / ADDRESS_SPACE

    for idx, atk in enumerate(spec.attacks):
        rng = _attack_rng(spec.seed, idx)
        net, plen = parse_prefix(atk.victim)
        start_us = int(round(atk.start_s * US_PER_S))
        end_us = int(round((atk.start_s + atk.duration_s) * US_PER_S))
        total_pkts = int(round(atk.rate_pps * atk.duration_s))
        entry: dict = {
            "index": idx,
            "type": atk.type,
            "victim": atk.victim,
            "start_ts_us": start_us,
            "end_ts_us": end_us,
            "attack_packets": total_pkts,
        }

        if atk.type == "rsdos":
            observed = _emit_rsdos(atk, rng, spec.telescope_addresses, telescope)
            entry["telescope"] = {
                "sample_probability": sample_prob,
                "expected_packets": total_pkts * sample_prob,
                "observed_packets": observed,
            }
            flow = FlowSummary(
                target_ip=int_to_ip(net),
                protocol=6,
                src_port=0,
                distinct_src_ips=min(total_pkts, ADDRESS_SPACE) if atk.spoof == "uniform" else NONSPOOFED_SOURCES,
                bitrate_bps=atk.rate_pps * atk.packet_bytes * 8.0,
                start_ts=start_us,
                end_ts=end_us,
            )
        elif atk.type == "reflection":
            sensors_hit, per_sensor, ports = _emit_reflection(atk, rng, spec.honeypot_sensors, honeypot)
            entry["honeypot"] = {
                "sensors": sensors_hit,
                "packets_per_sensor": per_sensor,
                "dst_ports": ports,
            }
            flow = FlowSummary(
                target_ip=int_to_ip(net),
                protocol=17,
                src_port=ports[0],
                distinct_src_ips=atk.reflector_subset,
                bitrate_bps=atk.rate_pps * atk.packet_bytes * 8.0 * atk.amplification,
                start_ts=start_us,
                end_ts=end_us,
            )
        else:  # direct_nonspoofed: flows only, invisible to telescope and honeypots
            flow = FlowSummary(
                target_ip=int_to_ip(net),
                protocol=6,
                src_port=0,
                distinct_src_ips=NONSPOOFED_SOURCES,
                bitrate_bps=atk.rate_pps * atk.packet_bytes * 8.0,
                start_ts=start_us,
                end_ts=end_us,
            )

        flows.append(flow)
        classified = classify_flow(flow)
        entry["flow"] = {
            "protocol": flow.protocol,
            "src_port": flow.src_port,
            "distinct_src_ips": flow.distinct_src_ips,
            "bitrate_bps": flow.bitrate_bps,
            "classification": None if classified is None else classified.attack_type,
        }
        truth_attacks.append(entry)

    telescope.sort()
    for pkts in honeypot.values():
        pkts.sort()
    flows.sort(key=lambda f: (f.start_ts, ip_to_int(f.target_ip)))

    ground_truth = {
        "seed": spec.seed,
        "duration_s": spec.duration_s,
        "telescope": {
            "n_addresses": spec.telescope_addresses,
            "sample_probability": sample_prob,
        },
        "rng": "philox4x64-10, key = (seed, attack index)",
        "attacks": truth_attacks,
    }
    return GeneratedScenario(
        telescope_packets=[_to_record(t) for t in telescope],
        honeypot_packets={ip: [_to_record(t) for t in pkts] for ip, pkts in honeypot.items()},
        flows=flows,
        ground_truth=ground_truth,
    )


def _to_record(t: tuple) -> PacketRecord:
    ts, src, dst, sport, dport, proto, length, flags = t
    return PacketRecord(
        ts=ts, protocol=proto, src_ip=src, src_port=sport,
        dst_ip=dst, dst_port=dport, len_bytes=length, tcp_flags=flags,
    )


def _emit_rsdos(atk: AttackSpec, rng, n_addresses: int, out: list[tuple]) -> int:
    """Backscatter sampling: per attack-second, a binomial draw of the
    victim's responses lands on telescope addresses. Returns the count.

    Per-second attack packet counts follow cumulative quotas, so they sum
    exactly to round(rate * duration) and the total observed count is a
    Binomial(total, n/2^32) sample.
    """
    sample_prob = n_addresses / ADDRESS_SPACE
    net, plen = parse_prefix(atk.victim)
    seconds = max(1, int(-(-atk.duration_s // 1)))
    observed = 0
    emitted = 0
    for sec in range(seconds):
        until = min(float(sec + 1), atk.duration_s)
        quota = int(round(atk.rate_pps * until)) - emitted
        emitted += quota
        if quota <= 0:
            continue
        k = int(rng.binomial(quota, sample_prob))
        if k == 0:
            continue
        observed += k
        timestamps = _jitter_us(rng, atk.start_s + sec, k, until - sec)
        dsts = rng.integers(0, 1 << (32 - plen), k) if plen < 32 else None
        tele = rng.integers(0, n_addresses, k)
        ports = rng.integers(1024, 65536, k)
        for i, ts in enumerate(timestamps):
            src = int_to_ip(net | int(dsts[i])) if dsts is not None else int_to_ip(net)
            out.append((
                ts, src, int_to_ip(TELESCOPE_BASE + int(tele[i])),
                80, int(ports[i]), 6, atk.packet_bytes, "SA",
            ))
    return observed


def _emit_reflection(
    atk: AttackSpec,
    rng,
    sensors: tuple[str, ...],
    out: dict[str, list[tuple]],
) -> tuple[list[str], int, list[int]]:
    net, plen = parse_prefix(atk.victim)
    chosen_idx = sorted(int(i) for i in rng.choice(len(sensors), atk.reflector_subset, replace=False))
    chosen = [sensors[i] for i in chosen_idx]
    per_sensor = int(round(atk.rate_pps * atk.duration_s / len(chosen)))
    src_port = int(rng.integers(1024, 65536))
    ports = list(atk.ports)
    whole_seconds = max(1, int(atk.duration_s))
    for sensor in chosen:
        emitted = 0
        for sec in range(whole_seconds):
            quota = per_sensor * (sec + 1) // whole_seconds - emitted
            if quota <= 0:
                continue
            span = min(float(sec + 1), atk.duration_s) - sec
            timestamps = _jitter_us(rng, atk.start_s + sec, quota, span)
            for ts in timestamps:
                src = _victim_source(rng, net, plen) if plen < 32 else int_to_ip(net)
                out[sensor].append((
                    ts, src, sensor, src_port,
                    ports[emitted % len(ports)], 17, atk.packet_bytes, "",
                ))
                emitted += 1
    return chosen, per_sensor, ports


# ---------------------------------------------------------------------------
# File emission
# ---------------------------------------------------------------------------

def sensor_filename(sensor_ip: str) -> str:
    return f"honeypot_{sensor_ip}.csv"


def write_scenario(generated: GeneratedScenario, out_dir) -> list[Path]:
    """Write telescope.csv, one honeypot_<sensor>.csv per sensor, flows.csv,
    and ground_truth.json into `out_dir`. Returns the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    path = out_dir / "telescope.csv"
    write_packets(path, generated.telescope_packets)
    written.append(path)

    for sensor in sorted(generated.honeypot_packets, key=ip_to_int):
        path = out_dir / sensor_filename(sensor)
        write_packets(path, generated.honeypot_packets[sensor])
        written.append(path)

    path = out_dir / "flows.csv"
    write_flows(path, generated.flows)
    written.append(path)

    path = out_dir / "ground_truth.json"
    write_json(path, generated.ground_truth)
    written.append(path)
    return written
