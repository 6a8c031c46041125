"""Tiny LRU page cache used on the read path."""

from collections import OrderedDict
from typing import Optional


class PageCache:
    """LRU cache of page images keyed by page address.

    The replay harness models a RAM-constrained reader, so the default
    capacity is a deliberately small 15 pages.
    """

    def __init__(self, capacity: int = 15):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._pages: "OrderedDict[int, bytes]" = OrderedDict()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._pages)

    def get(self, addr: int) -> Optional[bytes]:
        page = self._pages.get(addr)
        if page is None:
            self.misses += 1
            return None
        self._pages.move_to_end(addr)
        self.hits += 1
        return page

    def put(self, addr: int, page: bytes) -> None:
        self._pages[addr] = page
        self._pages.move_to_end(addr)
        while len(self._pages) > self.capacity:
            self._pages.popitem(last=False)

    def invalidate(self, addr: int) -> None:
        self._pages.pop(addr, None)

    def clear(self) -> None:
        self._pages.clear()

    def reset_counters(self) -> None:
        self.hits = 0
        self.misses = 0
