"""Hooks fired whenever a dense observation-by-observation matrix is formed.

Used by tests to prove that the likelihood path never allocates an n x n
array::

    with watch_dense() as events:
        vecchia_loglik(...)
    assert not events
"""
from __future__ import annotations

from contextlib import contextmanager

_listeners: list = []


def notify_dense(rows: int, cols: int, where: str) -> None:
    for fn in list(_listeners):
        fn(rows, cols, where)


@contextmanager
def watch_dense():
    events: list[tuple[int, int, str]] = []

    def listener(rows, cols, where):
        events.append((rows, cols, where))

    _listeners.append(listener)
    try:
        yield events
    finally:
        _listeners.remove(listener)
