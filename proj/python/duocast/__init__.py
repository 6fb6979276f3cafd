"""Dual-band diffusion nowcasting on synthetic radar sequences."""

from ._duocast import (
    ConfigError,
    ContractViolation,
    FormatError,
    IoError,
    band_energy,
    confusion,
    csi,
    csi_m,
    default_thresholds,
    forecast,
    generate_event,
    hss,
    mse,
    noise_schedule,
    project_high,
    project_low,
    read_duo1,
    ssim,
    write_duo1,
)

__all__ = [
    "ConfigError",
    "ContractViolation",
    "FormatError",
    "IoError",
    "band_energy",
    "confusion",
    "csi",
    "csi_m",
    "default_thresholds",
    "forecast",
    "generate_event",
    "hss",
    "mse",
    "noise_schedule",
    "project_high",
    "project_low",
    "read_duo1",
    "ssim",
    "write_duo1",
]
