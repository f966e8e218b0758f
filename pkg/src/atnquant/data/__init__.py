"""Shipped configuration: calibration registry, masks, region lists, the
atlas label dictionary and a synthetic HAVAs model.

``ATNQUANT_DATA`` may point at a directory overriding any of these files.
"""

import os
from pathlib import Path

PACKAGE_DIR = Path(__file__).resolve().parent


def data_path(name):
    override = os.environ.get("ATNQUANT_DATA")
    if override:
        candidate = Path(override) / name
        if candidate.exists():
            return candidate
    return PACKAGE_DIR / name
