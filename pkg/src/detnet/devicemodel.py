"""Switch and end-host parameters.

The built-in switch profile holds the values measured on an 8-port FS-S2805S
managed switch.  The TBF table holds the measured excess rate of a Linux
token-bucket filter shaping at 3 Mbit/s, per configured burst size.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

from .errors import InvalidParameter, SchemaMismatch

DEFAULT_PROFILE_NAME = "FS-S2805S"
PROFILE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SwitchProfile:
    name: str
    link_rate_bps: float
    t_proc_s: float
    num_queues: int
    t_spq_s: float
    total_buffer_bits: float
    max_frame_bytes: int
    max_bridge_priorities: int = 16
    port_count: int = 8

    def __post_init__(self) -> None:
        if not 1 <= self.num_queues <= 8:
            raise InvalidParameter(f"num_queues must be in [1, 8], got {self.num_queues}")
        if self.total_buffer_bits <= 0:
            raise InvalidParameter("total_buffer_bits must be > 0")
        if self.max_bridge_priorities != 16:
            raise InvalidParameter("max_bridge_priorities must be 16")
        if self.link_rate_bps <= 0:
            raise InvalidParameter("link_rate_bps must be > 0")
        if self.t_proc_s < 0 or self.t_spq_s < 0:
            raise InvalidParameter("delays must be >= 0")
        if self.port_count < 1 or self.max_frame_bytes < 1:
            raise InvalidParameter("port_count and max_frame_bytes must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> SwitchProfile:
        try:
            return cls(
                name=str(d["name"]),
                link_rate_bps=float(d["link_rate_bps"]),
                t_proc_s=float(d["t_proc_s"]),
                num_queues=int(d["num_queues"]),
                t_spq_s=float(d["t_spq_s"]),
                total_buffer_bits=float(d["total_buffer_bits"]),
                max_frame_bytes=int(d["max_frame_bytes"]),
                max_bridge_priorities=int(d.get("max_bridge_priorities", 16)),
                port_count=int(d.get("port_count", 8)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaMismatch(f"bad switch profile record: {exc}") from exc


def _parse_profiles(doc: Mapping) -> dict[str, SwitchProfile]:
    if doc.get("schema_version") != PROFILE_SCHEMA_VERSION:
        raise SchemaMismatch(f"unsupported profile schema_version {doc.get('schema_version')!r}")
    profiles = [SwitchProfile.from_dict(p) for p in doc.get("profiles", [])]
    return {p.name: p for p in profiles}


def builtin_profiles() -> dict[str, SwitchProfile]:
    text = resources.files("detnet.data").joinpath("profiles.json").read_text(encoding="utf-8")
    return _parse_profiles(json.loads(text))


def load_profiles(path: str | Path) -> dict[str, SwitchProfile]:
    """Built-in profiles, overridden/extended by the JSON document at ``path``."""
    out = builtin_profiles()
    with open(path, encoding="utf-8") as fh:
        out.update(_parse_profiles(json.load(fh)))
    return out


def default_profile() -> SwitchProfile:
    return builtin_profiles()[DEFAULT_PROFILE_NAME]


def per_queue_buffer(profile: SwitchProfile, active_ports: int) -> int:
    """Buffer budget (bytes) of one queue when ``active_ports`` ports are in use."""
    if not 1 <= active_ports <= profile.port_count:
        raise InvalidParameter(
            f"active_ports must be in [1, {profile.port_count}], got {active_ports}"
        )
    total_bytes = int(profile.total_buffer_bits // 8)
    return total_bytes // active_ports


# (burst bytes on L1, measured excess rate in percent) at a 3 Mbit/s TBF rate
_FIG_POINTS = (
    (84, 50.00649981552046),
    (242, 13.08895590624894),
    (442, 6.7677969950345),
    (642, 4.56462923611565),
    (842, 3.44413241871526),
    (1042, 2.76546023423554),
    (1242, 2.31063597897005),
    (1442, 1.984468595702),
    (1542, 1.85364426772192),
)


@dataclass(frozen=True)
class TbfDeviationTable:
    points: tuple[tuple[int, float], ...] = field(default=_FIG_POINTS)

    def __post_init__(self) -> None:
        pts = tuple((int(b), float(d)) for b, d in self.points)
        if not pts:
            raise InvalidParameter("deviation table needs at least one point")
        bursts = [b for b, _ in pts]
        if any(b2 <= b1 for b1, b2 in zip(bursts, bursts[1:])):
            raise InvalidParameter("burst sizes must be strictly increasing")
        if any(d < 0 for _, d in pts):
            raise InvalidParameter("deviation must be >= 0")
        object.__setattr__(self, "points", pts)


DEFAULT_TBF_TABLE = TbfDeviationTable()


def tbf_deviation(table: TbfDeviationTable, burst_bytes: int) -> float:
    """Excess rate in percent for a TBF configured with ``burst_bytes``.

    Exact at measured points, linear in between, clamped outside the range.
    """
    pts = table.points
    bursts = [b for b, _ in pts]
    if burst_bytes <= bursts[0]:
        return pts[0][1]
    if burst_bytes >= bursts[-1]:
        return pts[-1][1]
    i = bisect.bisect_left(bursts, burst_bytes)
    b1, d1 = pts[i]
    if b1 == burst_bytes:
        return d1
    b0, d0 = pts[i - 1]
    frac = (burst_bytes - b0) / (b1 - b0)
    return d0 + (d1 - d0) * frac


def compensate_rate(table: TbfDeviationTable, rate_bps: float, burst_bytes: int) -> float:
    """Rate the DNC model should assume for a TBF configured at ``rate_bps``."""
    if not rate_bps > 0:
        raise InvalidParameter(f"rate must be > 0, got {rate_bps!r}")
    return rate_bps * (1.0 + tbf_deviation(table, burst_bytes) / 100.0)
