"""In-process publish/subscribe bus with bounded drop-oldest queues.

Two ways to run a node graph:

* ``pump_deterministic`` drives nodes round-robin on the calling thread
  and records a transcript, so identical inputs replay identically.
* ``run_free`` gives each node its own thread; publishers never block.
"""

from __future__ import annotations

import collections
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional


class BusError(Exception):
    pass


class LivelockError(BusError):
    pass


class _Queue:
    """Bounded FIFO for one subscriber; overflow drops the oldest payload."""

    def __init__(self, capacity: int, owner: str):
        self.owner = owner
        self._items: collections.deque = collections.deque()
        self.capacity = capacity
        self.published = 0
        self.delivered = 0
        self.dropped = 0
        self.max_depth = 0
        self._lock = threading.Lock()
        self._ready = threading.Condition(self._lock)

    def put(self, payload) -> None:
        with self._lock:
            self.published += 1
            if len(self._items) >= self.capacity:
                self._items.popleft()
                self.dropped += 1
            self._items.append(payload)
            self.max_depth = max(self.max_depth, len(self._items))
            self._ready.notify()

    def get(self, timeout: Optional[float] = None, on_take: Optional[Callable[[], None]] = None):
        """Pop the oldest payload; returns (True, payload) or (False, None).

        ``on_take`` runs under the queue lock when a payload is taken, so a
        payload is never invisible to both the queue and the caller's count.
        """
        with self._lock:
            if not self._items and timeout is not None:
                self._ready.wait(timeout)
            if not self._items:
                return False, None
            self.delivered += 1
            if on_take is not None:
                on_take()
            return True, self._items.popleft()

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)


@dataclass
class Topic:
    name: str
    kind: type
    capacity: int
    queues: list[_Queue] = field(default_factory=list)
    published: int = 0


class Subscription:
    """Read handle on one topic for one subscriber."""

    def __init__(self, topic: Topic, queue: _Queue):
        self.topic = topic
        self._queue = queue

    def poll(self):
        return self._queue.get()

    def drain(self) -> list:
        out = []
        while True:
            ok, item = self._queue.get()
            if not ok:
                return out
            out.append(item)

    def __len__(self) -> int:
        return len(self._queue)


Callback = Callable[[str, Any], Iterable[tuple[str, Any]]]


@dataclass
class Node:
    name: str
    subscriptions: list[Subscription]
    publications: list[str]
    callback: Callback


@dataclass(frozen=True)
class TopicStats:
    published: int
    delivered: int
    dropped: int
    queued: int
    max_depth: int
    subscribers: int


@dataclass(frozen=True)
class BusStats:
    topics: dict[str, TopicStats]

    def to_dict(self) -> dict:
        return {name: vars(s).copy() for name, s in sorted(self.topics.items())}


class Bus:
    def __init__(self, default_capacity: int = 16):
        if default_capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.default_capacity = default_capacity
        self.topics: dict[str, Topic] = {}
        self.nodes: list[Node] = []
        self._lock = threading.Lock()

    def create_topic(self, name: str, kind: type = object, capacity: Optional[int] = None) -> Topic:
        capacity = self.default_capacity if capacity is None else capacity
        if capacity < 1:
            raise ValueError(f"topic {name!r}: capacity must be >= 1, got {capacity}")
        if name in self.topics:
            raise BusError(f"duplicate topic name {name!r}")
        topic = Topic(name, kind, capacity)
        self.topics[name] = topic
        return topic

    def _topic(self, name: str) -> Topic:
        try:
            return self.topics[name]
        except KeyError:
            raise BusError(f"unknown topic {name!r}") from None

    def subscribe(self, name: str, owner: str = "") -> Subscription:
        topic = self._topic(name)
        queue = _Queue(topic.capacity, owner)
        with self._lock:
            topic.queues.append(queue)
        return Subscription(topic, queue)

    def publish(self, name: str, payload) -> None:
        topic = self._topic(name)
        if not isinstance(payload, topic.kind):
            raise BusError(
                f"topic {name!r} carries {topic.kind.__name__}, got {type(payload).__name__}"
            )
        with self._lock:
            topic.published += 1
            queues = list(topic.queues)
        for q in queues:
            q.put(payload)

    def add_node(self, name: str, subscribe: Iterable[str], publish: Iterable[str], callback: Callback) -> Node:
        subscribe, publish = list(subscribe), list(publish)
        for t in subscribe + publish:
            self._topic(t)
        loop = set(subscribe) & set(publish)
        if loop:
            raise BusError(f"node {name!r} subscribes to its own publication {sorted(loop)}")
        node = Node(name, [self.subscribe(t, name) for t in subscribe], publish, callback)
        self.nodes.append(node)
        return node

    def _emit(self, node: Node, outputs) -> list[tuple[str, Any]]:
        emitted = []
        for topic, payload in outputs or ():
            if topic not in node.publications:
                raise BusError(f"node {node.name!r} published to undeclared topic {topic!r}")
            self.publish(topic, payload)
            emitted.append((topic, payload))
        return emitted

    def pending(self) -> int:
        return sum(len(q) for t in self.topics.values() for q in t.queues)

    def stats(self) -> BusStats:
        out = {}
        for name, t in self.topics.items():
            qs = t.queues
            out[name] = TopicStats(
                published=t.published,
                delivered=sum(q.delivered for q in qs),
                dropped=sum(q.dropped for q in qs),
                queued=sum(len(q) for q in qs),
                max_depth=max((q.max_depth for q in qs), default=0),
                subscribers=len(qs),
            )
        return BusStats(out)


TranscriptHook = Callable[[int, str, str, Any], None]


def pump_deterministic(
    bus: Bus,
    inputs: Iterable[tuple[str, Any]] = (),
    max_rounds: int = 10_000,
    on_delivery: Optional[TranscriptHook] = None,
) -> BusStats:
    """Inject each input and run nodes round-robin until every queue is empty.

    Each round gives every node, in registration order, one payload from
    each of its subscriptions. ``on_delivery(round, node, topic, payload)``
    observes every callback invocation in order.
    """
    for topic, payload in inputs:
        bus.publish(topic, payload)
        _settle(bus, max_rounds, on_delivery)
    _settle(bus, max_rounds, on_delivery)
    return bus.stats()


def _settle(bus: Bus, max_rounds: int, on_delivery: Optional[TranscriptHook]) -> None:
    rounds = 0
    while bus.pending():
        if rounds >= max_rounds:
            raise LivelockError(f"bus did not quiesce within {max_rounds} rounds")
        for node in bus.nodes:
            for sub in node.subscriptions:
                ok, payload = sub.poll()
                if not ok:
                    continue
                if on_delivery is not None:
                    on_delivery(rounds, node.name, sub.topic.name, payload)
                bus._emit(node, node.callback(sub.topic.name, payload))
        rounds += 1


def run_free(bus: Bus, inputs: Iterable[tuple[str, Any]] = (), poll_interval: float = 0.01, timeout: float = 60.0) -> BusStats:
    """Run every node on its own thread until inputs are exhausted and queues drain."""
    stop = threading.Event()
    inflight = [0, 0]  # callbacks running, payloads taken so far
    inflight_lock = threading.Lock()
    errors: list[BaseException] = []

    def take():
        with inflight_lock:
            inflight[0] += 1
            inflight[1] += 1

    def worker(node: Node):
        wait = poll_interval / max(1, len(node.subscriptions))
        while not stop.is_set():
            for sub in node.subscriptions:
                ok, payload = sub._queue.get(timeout=wait, on_take=take)
                if not ok:
                    continue
                try:
                    bus._emit(node, node.callback(sub.topic.name, payload))
                except BaseException as exc:  # re-raised on the caller's thread
                    errors.append(exc)
                    stop.set()
                finally:
                    with inflight_lock:
                        inflight[0] -= 1
            if not node.subscriptions:
                stop.wait(poll_interval)

    threads = [threading.Thread(target=worker, args=(n,), name=f"node-{n.name}", daemon=True) for n in bus.nodes]
    for t in threads:
        t.start()
    try:
        for topic, payload in inputs:
            bus.publish(topic, payload)
        waited = 0.0
        while not errors:
            # Quiescent only if nothing ran and nothing was taken around an
            # empty-queue observation.
            with inflight_lock:
                busy0, taken0 = inflight
            empty = bus.pending() == 0
            with inflight_lock:
                busy1, taken1 = inflight
            if empty and busy0 == 0 and busy1 == 0 and taken0 == taken1:
                break
            if waited > timeout:
                raise LivelockError(f"free-running bus did not drain within {timeout} s")
            stop.wait(poll_interval)
            waited += poll_interval
    finally:
        stop.set()
        for t in threads:
            t.join()
    if errors:
        raise errors[0]
    return bus.stats()
