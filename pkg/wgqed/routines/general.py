from keyword import iskeyword
from typing import List, Tuple


def is_identifier(name: str) -> bool:
    """True for names usable as Python attributes (valid identifier, not a keyword)"""
    return name.isidentifier() and not iskeyword(name)


def get_breaks(n_items: int, n_workers: int) -> List[Tuple[int, int]]:
    """Contiguous ``(start, stop)`` slices of ``range(n_items)``, one per worker, sizes differing by at most one"""
    n_workers = max(1, min(n_workers, n_items)) if n_items > 0 else 1
    size, remainder = divmod(n_items, n_workers)
    slices = []
    start = 0
    for i in range(n_workers):
        stop = start + size + (1 if i < remainder else 0)
        slices.append((start, stop))
        start = stop
    return slices
