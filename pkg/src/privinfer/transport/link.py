"""Network profiles and sender-side delay emulation."""

import math
import threading
import time
from dataclasses import dataclass

from ..errors import ValidationError


@dataclass(frozen=True)
class LinkProfile:
    """Round-trip time and bandwidth of every party-to-party link.

    One-way delay of a message is ``rtt/2 + bits/bandwidth``; messages on the
    same directed link are serialised, so a message cannot start
    transmitting before the previous one has left.
    """

    rtt_ms: float = 0.0
    bandwidth_bits_per_s: float = math.inf
    name: str = ""

    def __post_init__(self):
        if not (self.rtt_ms >= 0 and math.isfinite(self.rtt_ms)):
            raise ValidationError(f"rtt must be finite and >= 0, got {self.rtt_ms}")
        if not self.bandwidth_bits_per_s > 0:
            raise ValidationError("bandwidth must be positive")

    @classmethod
    def from_mbps(cls, rtt_ms, mbps, name=""):
        bw = math.inf if mbps is None or mbps <= 0 or math.isinf(mbps) else mbps * 1e6
        return cls(float(rtt_ms), bw, name)

    @property
    def is_instant(self):
        return self.rtt_ms == 0 and math.isinf(self.bandwidth_bits_per_s)

    def transfer_time(self, nbytes):
        return 8 * nbytes / self.bandwidth_bits_per_s

    def delay(self, nbytes):
        """Analytic one-way delay in seconds for an idle link."""
        return self.rtt_ms / 2000 + self.transfer_time(nbytes)

    @property
    def label(self):
        if self.name:
            return self.name
        bw = ("unlimited" if math.isinf(self.bandwidth_bits_per_s)
              else f"{self.bandwidth_bits_per_s / 1e6:g}Mbps")
        return f"{self.rtt_ms:g}ms/{bw}"


LAN = LinkProfile(0.0, math.inf, "LAN")
WAN_A = LinkProfile(10.0, 1e9, "WAN-A")
WAN_B = LinkProfile(20.0, 1e8, "WAN-B")
PROFILES = {"lan": LAN, "wan-a": WAN_A, "wan-b": WAN_B}


class LinkClock:
    """Arrival-time scheduler for one directed link."""

    def __init__(self, profile: LinkProfile):
        self.profile = profile
        self._busy_until = 0.0
        self._lock = threading.Lock()

    def schedule(self, nbytes):
        """Return the monotonic time at which a message sent now arrives."""
        now = time.monotonic()
        if self.profile.is_instant:
            return now
        with self._lock:
            start = max(now, self._busy_until)
            self._busy_until = start + self.profile.transfer_time(nbytes)
            return self._busy_until + self.profile.rtt_ms / 2000


def sleep_until(deadline):
    remaining = deadline - time.monotonic()
    if remaining > 0:
        time.sleep(remaining)
