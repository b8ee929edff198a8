"""Built-in scenarios, loadable with ``Config.from_object``."""
from __future__ import annotations

from typing import Dict, Tuple

from ..exceptions import ConfigurationError

PRESETS: Tuple[str, ...] = (
    "cylinder",
    "drop",
    "hitting",
    "needles",
    "shorts",
    "sphere",
    "tablecloth",
)

#: Surface densities in kg/m² of the reference fabrics.
FABRIC_DENSITIES: Dict[str, float] = {
    "polyester": 0.1042,
    "wool": 0.1804,
    "denim": 0.3046,
    "stiff-cotton": 0.3046,
}


def preset_module(name: str) -> str:
    """Dotted path of the preset called *name*."""
    if name not in PRESETS:
        raise ConfigurationError(
            f"Unknown preset {name!r}, expected one of {', '.join(PRESETS)}"
        )
    return f"{__name__}.{name}"
