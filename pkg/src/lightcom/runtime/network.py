"""Simulated authenticated channels and the two schedulers that drive parties.

A party program is a generator.  It yields ``Recv(src)`` whenever it needs
the next message from ``src`` and is resumed with that message.  Sends are
non-blocking, so any program that is correct under FIFO channels runs the
same under round-robin stepping or one-thread-per-party.
"""

from __future__ import annotations

import itertools
import queue
import threading
import time
from dataclasses import dataclass
from typing import Any, Generator

from ..errors import ProtocolAbort

RU = -1  # endpoint id of the request user


@dataclass(frozen=True)
class Message:
    seq: int
    src: int
    dst: int
    tag: str
    payload: Any


@dataclass(frozen=True)
class Recv:
    src: int


class _Cancelled(Exception):
    pass


class Network:
    def __init__(self, parties: int):
        self.parties = parties
        self.unreachable: set[int] = set()
        self.recording = True
        self.log: list[Message] = []
        self._queues: dict[tuple[int, int], queue.SimpleQueue] = {}
        self._lock = threading.Lock()
        self._seq = itertools.count()

    def channel(self, src: int, dst: int) -> queue.SimpleQueue:
        key = (src, dst)
        q = self._queues.get(key)
        if q is None:
            with self._lock:
                q = self._queues.setdefault(key, queue.SimpleQueue())
        return q

    def post(self, src: int, dst: int, tag: str, payload) -> Message:
        if dst in self.unreachable or src in self.unreachable:
            raise ProtocolAbort(f"link {src}->{dst} is down")
        with self._lock:
            msg = Message(next(self._seq), src, dst, tag, payload)
            if self.recording:
                self.log.append(msg)
        self.channel(src, dst).put(msg)
        return msg

    def take(self, src: int, dst: int) -> Message:
        try:
            return self.channel(src, dst).get_nowait()
        except queue.Empty:
            raise ProtocolAbort(f"no message waiting on {src}->{dst}") from None

    def pending(self) -> list[tuple[int, int, int]]:
        return [(s, d, q.qsize()) for (s, d), q in self._queues.items() if not q.empty()]

    def flush(self) -> None:
        for q in self._queues.values():
            while not q.empty():
                q.get_nowait()

    def clear_log(self) -> None:
        with self._lock:
            self.log.clear()


Program = Generator[Recv, Message, Any]


def run_round_robin(net: Network, programs: dict[int, Program]) -> dict[int, Any]:
    """Step every program until it blocks, cycling until all finish."""
    results: dict[int, Any] = {}
    waiting: dict[int, Recv | None] = {i: None for i in programs}
    started: set[int] = set()
    live = sorted(programs)
    while live:
        progressed = False
        for i in list(live):
            gen = programs[i]
            while True:
                req = waiting[i]
                if i not in started:
                    value = None
                    started.add(i)
                else:
                    q = net.channel(req.src, i)
                    if q.empty():
                        break
                    value = q.get_nowait()
                try:
                    waiting[i] = gen.send(value)
                except StopIteration as stop:
                    results[i] = stop.value
                    live.remove(i)
                    progressed = True
                    break
                except BaseException:
                    _close_all(programs)
                    raise
                progressed = True
        if not progressed:
            _close_all(programs)
            stuck = {i: waiting[i].src for i in live}
            raise ProtocolAbort(f"deadlock: parties blocked on {stuck}")
    return results


def run_threaded(net: Network, programs: dict[int, Program], timeout: float = 60.0) -> dict[int, Any]:
    """One thread per party; a receive that waits longer than ``timeout`` aborts."""
    results: dict[int, Any] = {}
    errors: list[BaseException] = []
    abort = threading.Event()

    def drive(i: int, gen: Program) -> None:
        try:
            value = None
            while True:
                req = gen.send(value)
                q = net.channel(req.src, i)
                deadline = time.monotonic() + timeout
                while True:
                    try:
                        value = q.get(timeout=0.02)
                        break
                    except queue.Empty:
                        if abort.is_set():
                            raise _Cancelled() from None
                        if time.monotonic() > deadline:
                            raise ProtocolAbort(f"party {i} timed out waiting on {req.src}") from None
        except StopIteration as stop:
            results[i] = stop.value
        except _Cancelled:
            gen.close()
        except BaseException as exc:
            errors.append(exc)
            abort.set()

    threads = [threading.Thread(target=drive, args=(i, g), daemon=True) for i, g in programs.items()]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return results


def _close_all(programs: dict[int, Program]) -> None:
    for gen in programs.values():
        gen.close()
