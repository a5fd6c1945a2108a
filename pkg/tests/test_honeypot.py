import random

import pytest

from ddoscope.honeypot import (
    PRESETS,
    aggregate_sensors,
    detect_honeypot,
    preset,
)
from ddoscope.model import AttackEvent, PacketRecord, US_PER_S

from oracles import oracle_aggregate_sensors, oracle_detect_honeypot

SENSORS = ["192.0.2.1", "192.0.2.2", "192.0.2.3"]
VICTIMS = ["203.0.113.5", "203.0.113.9", "203.0.114.20", "198.51.100.77"]


def req(ts_s, victim=VICTIMS[0], sensor=SENSORS[0], sport=5353, dport=123, size=60):
    return PacketRecord(
        ts=int(round(ts_s * US_PER_S)), protocol=17, src_ip=victim,
        src_port=sport, dst_ip=sensor, dst_port=dport, len_bytes=size,
    )


class TestPresets:
    def test_table_parameters(self):
        amppot = preset("amppot").definition
        assert amppot.key_fields == ("src_ip", "src_port", "dst_ip", "dst_port")
        assert (amppot.timeout, amppot.pkt_threshold) == (3600.0, 100)
        hop = preset("hopscotch").definition
        assert hop.key_fields == ("src_ip", "dst_ip", "dst_port")
        assert (hop.timeout, hop.pkt_threshold) == (900.0, 5)
        nk = preset("newkid").definition
        assert nk.key_fields == ("src_prefix", "dst_ip")
        assert (nk.timeout, nk.pkt_threshold, nk.port_threshold) == (60.0, 5, 2)
        assert nk.src_prefix_len == 24
        mono = preset("newkid-mono").definition
        assert mono.key_fields == ("src_prefix", "dst_ip", "dst_port")
        assert mono.port_threshold is None

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="unknown honeypot preset"):
            preset("nothere")


class TestDetectHoneypot:
    def test_below_threshold(self):
        packets = [req(i * 10.0) for i in range(4)]
        assert detect_honeypot(packets, preset("hopscotch").definition) == []

    def test_gap_splits_flow(self):
        # 5 packets with a 16-min gap after the third: flows of 3 and 2
        ts = [0, 60, 120, 120 + 16 * 60, 120 + 16 * 60 + 30]
        packets = [req(t) for t in ts]
        assert detect_honeypot(packets, preset("hopscotch").definition) == []

    def test_amppot_100_packets_10_minutes(self):
        packets = [req(i * 6.0, dport=123, sport=777) for i in range(100)]
        events = detect_honeypot(packets, preset("amppot").definition)
        assert len(events) == 1
        assert events[0].packets == 100
        assert events[0].attack_type == "RA"
        assert events[0].target == "203.0.113.5/32"
        assert events[0].sensors == {SENSORS[0]}

    def test_newkid_multi_protocol(self):
        # 3 packets to port 19 + 2 to port 123 from the same /24 in 1 minute
        packets = [
            req(0.0, victim="203.0.113.5", dport=19),
            req(10.0, victim="203.0.113.200", dport=19),
            req(20.0, victim="203.0.113.5", dport=19),
            req(30.0, victim="203.0.113.77", dport=123),
            req(40.0, victim="203.0.113.5", dport=123),
        ]
        events = detect_honeypot(packets, preset("newkid").definition)
        assert len(events) == 1
        assert events[0].target == "203.0.113.0/24"
        assert events[0].packets == 5

    def test_newkid_multi_needs_two_ports(self):
        packets = [req(i * 5.0, dport=19) for i in range(6)]
        assert detect_honeypot(packets, preset("newkid").definition) == []
        assert len(detect_honeypot(packets, preset("newkid-mono").definition)) == 1

    def test_unsorted_per_sensor_errors(self):
        packets = [req(10.0), req(5.0)]
        with pytest.raises(ValueError, match="not time-ordered"):
            detect_honeypot(packets, preset("hopscotch").definition)

    def test_interleaved_sensors_allowed(self):
        # each sensor's stream is ordered even though the merge is not
        packets = [req(0.0, sensor=SENSORS[0]), req(100.0, sensor=SENSORS[1]),
                   req(50.0, sensor=SENSORS[0])]
        detect_honeypot(packets, preset("hopscotch").definition)

    def _random_trace(self, rng):
        packets = []
        for _ in range(rng.randint(1, 8)):
            victim = rng.choice(VICTIMS)
            sensor = rng.choice(SENSORS)
            sport = rng.choice([5353, 5353, 9999])
            t = rng.uniform(0, 4000)
            for _ in range(rng.choice([2, 4, 5, 6, 99, 100, 101, rng.randint(1, 150)])):
                packets.append(req(
                    t, victim=victim, sensor=sensor, sport=sport,
                    dport=rng.choice([19, 123, 123]),
                ))
                t += rng.choice([
                    rng.uniform(0, 30), 59.9, 60.1, 899.0, 901.0, 3599.0, 3601.0,
                ])
        bysensor = {}
        for p in sorted(packets, key=lambda p: p.ts):
            bysensor.setdefault(p.dst_ip, []).append(p)
        merged = []
        for pkts in bysensor.values():
            merged.extend(pkts)
        return merged

    @pytest.mark.parametrize("preset_name", sorted(PRESETS))
    def test_matches_oracle_on_random_traces(self, preset_name):
        definition = preset(preset_name).definition
        rng = random.Random(hash(preset_name) & 0xFFFF)
        for case in range(150):
            packets = self._random_trace(rng)
            got = {
                (e.target, e.start_ts, e.end_ts, e.packets, frozenset(e.sensors))
                for e in detect_honeypot(packets, definition)
            }
            assert got == oracle_detect_honeypot(packets, definition), \
                f"{preset_name} case {case}"


class TestAggregateSensors:
    def ev(self, start_s, end_s, target="203.0.113.5/32", packets=10, sensors=("192.0.2.1",)):
        return AttackEvent(
            observatory="hp", attack_type="RA", target=target,
            start_ts=int(start_s * US_PER_S), end_ts=int(end_s * US_PER_S),
            packets=packets, sensors=frozenset(sensors),
        )

    def test_single_event_unchanged(self):
        e = self.ev(0, 100)
        assert aggregate_sensors([e], 900) == [e]

    def test_overlapping_sensors_merge(self):
        a = self.ev(0, 100, sensors=("192.0.2.1",))
        b = self.ev(50, 150, sensors=("192.0.2.2",))
        merged = aggregate_sensors([a, b], 900)
        assert len(merged) == 1
        m = merged[0]
        assert (m.start_ts, m.end_ts) == (0, 150 * US_PER_S)
        assert m.sensors == {"192.0.2.1", "192.0.2.2"}
        assert m.packets == 20

    def test_gap_beyond_merge_gap_stays_split(self):
        gap = 900.0
        a = self.ev(0, 100)
        b = self.ev(100 + gap + 1, 100 + gap + 50)
        assert len(aggregate_sensors([a, b], gap)) == 2
        c = self.ev(100 + gap, 100 + gap + 50)  # exactly the gap: merges
        assert len(aggregate_sensors([a, c], gap)) == 1

    def test_different_targets_never_merge(self):
        a = self.ev(0, 100, target="203.0.113.5/32")
        b = self.ev(0, 100, target="203.0.113.9/32")
        assert len(aggregate_sensors([a, b], 900)) == 2

    def _random_events(self, rng):
        events = []
        for _ in range(rng.randint(1, 25)):
            start = rng.uniform(0, 5000)
            events.append(self.ev(
                start, start + rng.uniform(1, 1500),
                target=rng.choice(VICTIMS) + "/32",
                packets=rng.randint(1, 500),
                sensors=(rng.choice(SENSORS),),
            ))
        return events

    def test_matches_oracle_idempotent_and_conserving(self):
        rng = random.Random(321)
        for _ in range(200):
            events = self._random_events(rng)
            gap = rng.choice([0.5, 60.0, 900.0])
            merged = aggregate_sensors(events, gap)
            got = {
                (e.target, e.start_ts, e.end_ts, e.packets, frozenset(e.sensors))
                for e in merged
            }
            assert got == oracle_aggregate_sensors(events, gap)
            # idempotence
            assert aggregate_sensors(merged, gap) == merged
            # packet conservation and span/sensor sanity
            assert sum(e.packets for e in merged) == sum(e.packets for e in events)
            for e in merged:
                assert e.sensors
            for original in events:
                holder = [m for m in merged if m.target == original.target
                          and m.start_ts <= original.start_ts
                          and original.end_ts <= m.end_ts]
                assert holder, "every input span is contained in some output"
