"""Every tunable threshold of the toolkit in one explicit schema.

Defaults are overridden by a JSON file passed on the command line or named
by the VOKIT_CONFIG environment variable; unknown keys are rejected so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

CONFIG_ENV = "VOKIT_CONFIG"


@dataclass(frozen=True)
class ToolkitConfig:
    geom_threshold: float = 0.5
    lang_tau: float = 5.0
    lang_window: int = 10
    lang_keep_below: bool = False
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    ssim_k1: float = 0.01
    ssim_k2: float = 0.03
    data_range: float = 1.0
    min_overlap: float = 0.01
    ate_align: bool = False

    def __post_init__(self):
        if self.lang_window < 1:
            raise ValueError("lang_window must be at least 1")
        if self.ssim_window < 3 or self.ssim_window % 2 == 0:
            raise ValueError("ssim_window must be odd and at least 3")
        for name in ("ssim_sigma", "ssim_k1", "ssim_k2", "data_range"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.min_overlap <= 1):
            raise ValueError("min_overlap must be in (0, 1]")

    def ssim_kwargs(self) -> dict:
        """Keyword arguments for the ssim family of calls."""
        return {
            "window": self.ssim_window,
            "sigma": self.ssim_sigma,
            "k1": self.ssim_k1,
            "k2": self.ssim_k2,
            "data_range": self.data_range,
            "min_overlap": self.min_overlap,
        }

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path=None) -> ToolkitConfig:
    """Defaults, then the JSON file at path or $VOKIT_CONFIG when set."""
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return ToolkitConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: invalid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    known = {f.name for f in fields(ToolkitConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"{path}: unknown config keys: {', '.join(unknown)}")
    return ToolkitConfig(**data)
