#!/usr/bin/env python3
"""Reference encoder for the finger wire protocol.

Writes one hex-dump fixture per message type into tests/fixtures/protocol/.
Kept deliberately separate from the C++ encoder: it builds frames with
struct.pack and zlib.crc32 straight from docs/wire_protocol.md.

    python3 tools/protocol_fixtures.py [output_dir]
"""

import pathlib
import struct
import sys
import zlib

MAGIC = b"\x48\x46"
VERSION = 1

HELLO = 0x01
POSE_TELEMETRY = 0x02
MOTOR_TELEMETRY = 0x03
SET_MOTOR_TARGETS = 0x04
SET_JOINT_TARGETS = 0x05
TOUCH_EVENT = 0x06
HEARTBEAT = 0x07
ERROR = 0x08


def frame(msg_type, finger_id, seq, timestamp_us, payload):
    assert len(payload) <= 1024
    head = MAGIC + struct.pack("<BBBIQH", VERSION, msg_type, finger_id, seq, timestamp_us, len(payload))
    body = head + payload
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


FIXTURES = {
    "hello": (HELLO, 1, 0, 0, struct.pack("<BQ", 2, 0x0123456789ABCDEF)),
    "pose_telemetry": (POSE_TELEMETRY, 2, 17, 1234567, struct.pack("<iii", 523599, -100, 6283185)),
    "motor_telemetry": (MOTOR_TELEMETRY, 3, 4, 5000000, struct.pack("<ii", 2400000, -1200000)),
    "set_motor_targets": (SET_MOTOR_TARGETS, 0, 9, 42, struct.pack("<iiI", 1000000, -500000, 8000000)),
    "set_joint_targets": (SET_JOINT_TARGETS, 4, 0xFFFFFFFF, 1 << 40, struct.pack("<iii", 900000, 750000, 500000)),
    "touch_event": (TOUCH_EVENT, 1, 3, 2500000, struct.pack("<IB", 1234, 0)),
    "heartbeat": (HEARTBEAT, 0, 0, 0, b""),
    "error": (ERROR, 2, 1, 99, struct.pack("<H", 3) + "joint target out of range".encode("utf-8")),
}


def main():
    out = pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else pathlib.Path(__file__).resolve().parents[1] / "tests/fixtures/protocol"
    out.mkdir(parents=True, exist_ok=True)
    for name, args in FIXTURES.items():
        data = frame(*args)
        lines = [f"# {name}: type=0x{args[0]:02x} finger={args[1]} seq={args[2]} t_us={args[3]} ({len(data)} bytes)"]
        for i in range(0, len(data), 16):
            lines.append(" ".join(f"{b:02x}" for b in data[i:i + 16]))
        (out / f"{name}.hex").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
