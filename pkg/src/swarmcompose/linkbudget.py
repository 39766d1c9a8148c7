"""Air-to-ground link budget: thermal noise, SNR, Shannon-proxy service rate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class ZeroDemand(ValueError):
    pass


# Synthetic stand-in for per-altitude mean RSS (dBm); one aggregated value per altitude.
DEFAULT_MEAN_RSS_DBM = {40.0: -70.0, 70.0: -73.0, 100.0: -76.0}


@dataclass(frozen=True)
class LinkBudget:
    tx_power_dbm: float = 20.0
    carrier_ghz: float = 3.3
    bandwidth_hz: float = 5e6
    noise_figure_db: float = 7.0
    mean_rss_dbm: dict = field(default_factory=lambda: dict(DEFAULT_MEAN_RSS_DBM))
    phy_efficiency_eta: float = 0.6
    data_packet_bits: int = 8192
    control_packet_bits: int = 256

    def __post_init__(self):
        if not self.bandwidth_hz > 0:
            raise ValueError("bandwidth must be positive")
        if not 0 < self.phy_efficiency_eta <= 1:
            raise ValueError("PHY efficiency must lie in (0, 1]")
        if self.data_packet_bits <= 0 or self.control_packet_bits <= 0:
            raise ValueError("packet sizes must be positive")

    def rss_at(self, altitude: float) -> float:
        try:
            return self.mean_rss_dbm[float(altitude)]
        except KeyError:
            raise KeyError(f"no mean RSS configured for altitude {altitude} m") from None

    def snr_at(self, altitude: float) -> float:
        return snr_db(self.rss_at(altitude), noise_power_dbm(self.bandwidth_hz, self.noise_figure_db))

    def data_rate(self, altitude: float = 40.0) -> float:
        """Data-packet service rate (packets/s) for a drone hovering at ``altitude``."""
        return service_rate(self, self.snr_at(altitude), self.data_packet_bits)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["mean_rss_dbm"] = {str(k): v for k, v in self.mean_rss_dbm.items()}
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "LinkBudget":
        data = dict(data)
        if "mean_rss_dbm" in data:
            data["mean_rss_dbm"] = {float(k): float(v) for k, v in data["mean_rss_dbm"].items()}
        return cls(**data)


def noise_power_dbm(bandwidth_hz: float, noise_figure_db: float) -> float:
    if not bandwidth_hz > 0:
        raise ValueError("bandwidth must be positive")
    return -174.0 + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


def snr_db(mean_rss_dbm: float, noise_dbm: float) -> float:
    return mean_rss_dbm - noise_dbm


def service_rate(link: LinkBudget, snr_db: float, packet_bits: int) -> float:
    """Packets per second: eta * B * log2(1 + SNR) / packet_bits."""
    if packet_bits <= 0:
        raise ValueError("packet size must be positive")
    if snr_db == -math.inf:
        return 0.0
    linear = 10.0 ** (snr_db / 10.0)
    return link.phy_efficiency_eta * link.bandwidth_hz * math.log2(1.0 + linear) / packet_bits


def device_capacity(mu: float, lam: float) -> int:
    """Devices a drone can host: floor(mu / lam). Zero when mu < lam."""
    if lam <= 0:
        raise ZeroDemand("per-device arrival rate must be positive")
    # guard against 0.3 / 0.1 == 2.9999999999999996
    return math.floor(mu / lam * (1 + 1e-12))
