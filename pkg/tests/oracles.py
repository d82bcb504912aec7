"""Closed-form references computed without the package under test."""
import math


def level_rate(flow_m3_per_hr: float, area_m2: float) -> float:
    """mm of level change per second produced by a flow into a tank."""
    return flow_m3_per_hr / 3600.0 / area_m2 * 1000.0


def fill_time(start_mm: float, target_mm: float, net_inflow: float, area: float) -> float:
    return (target_mm - start_mm) / level_rate(net_inflow, area)


def drain_time(start_mm: float, target_mm: float, net_outflow: float, area: float) -> float:
    return (start_mm - target_mm) / level_rate(net_outflow, area)


def first_sample_at_or_after(t: float, dt: float) -> float:
    return math.ceil(t / dt - 1e-9) * dt


def hold_area(values, dt):
    """Left-rectangle area of a uniformly sampled curve (last sample ends the window)."""
    return sum(v * dt for v in values[:-1])
