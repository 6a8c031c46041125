import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from flashquad.flashsim import FlashDevice, FlashGeometry
from flashquad.store import Store


@pytest.fixture
def device():
    """Small blank device: 4 sectors = 1024 pages = 256 KiB."""
    return FlashDevice(FlashGeometry(sector_count=4))


@pytest.fixture
def store(device):
    return Store.format(device)


def make_store(sectors: int = 4, **kw) -> Store:
    return Store.format(FlashDevice(FlashGeometry(sector_count=sectors)), **kw)
