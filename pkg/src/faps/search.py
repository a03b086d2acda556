"""Population search over alignment policies.

Every member trains one epoch, is evaluated, and then (once ready) looks at
where it ranks:

* third-worst band (``requirement1``): adopt the intersection crossover of
  the two best members;
* bottom quarter (``requirement2``): copy a top-quarter member and perturb
  its policy with :func:`explore`.

The engine runs either as a deterministic round-robin (``mode="seq"``) or
with one thread per member (``mode="async"``). Both read rankings from a
shared :class:`PopulationRegistry` of published snapshots.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import asdict, dataclass, field
from typing import IO, Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .geometry import AlignmentPolicy, SearchSpace, clip_values, enumerate_space, intersection_crossover
from .trainers import Trainer

log = logging.getLogger(__name__)

RNG_ID = "numpy.random.PCG64; per-member SeedSequence(entropy=seed, spawn_key=(member_id,))"


@dataclass(frozen=True)
class SearchConfig:
    population_size: int = 8
    total_epochs: int = 30
    seed: int = 1234
    req2_fraction: float = 1 / 4
    req1_upper_fraction: float = 3 / 8
    exploit_fraction: float = 1 / 4
    resample_prob: float = 1 / 5
    level_values: Tuple[int, ...] = (0, 1, 2, 3)
    level_probs: Tuple[float, ...] = (0.1, 0.3, 0.3, 0.3)
    direction_prob: float = 1 / 2
    s_m: int = 8
    s_delta: int = 4
    mode: str = "seq"

    def __post_init__(self):
        object.__setattr__(self, "level_values", tuple(int(v) for v in self.level_values))
        object.__setattr__(self, "level_probs", tuple(float(v) for v in self.level_probs))
        if self.population_size < 4:
            raise ValueError("population_size must be at least 4")
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be at least 1")
        for name in ("req2_fraction", "req1_upper_fraction", "exploit_fraction", "resample_prob", "direction_prob"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must be in (0, 1)")
        if self.req1_upper_fraction < self.req2_fraction:
            raise ValueError("req1_upper_fraction must not be below req2_fraction")
        if len(self.level_values) != len(self.level_probs) or not self.level_values:
            raise ValueError("level_values and level_probs must have equal, non-zero length")
        if any(p < 0 for p in self.level_probs) or not math.isclose(sum(self.level_probs), 1.0, abs_tol=1e-9):
            raise ValueError("level_probs must be non-negative and sum to 1")
        if self.s_m <= 0 or self.s_delta <= 0:
            raise ValueError("magnitudes must be positive")
        if self.mode not in ("seq", "async"):
            raise ValueError(f"mode must be 'seq' or 'async', got {self.mode!r}")

    def bands(self) -> Tuple[int, int, int]:
        """``(req2_end, req1_end, donor_start)`` as rank indices, 0 = worst."""
        n = self.population_size
        return (
            math.floor(n * self.req2_fraction),
            math.floor(n * self.req1_upper_fraction),
            n - math.floor(n * self.exploit_fraction),
        )


def member_rng(seed: int, member_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(member_id,))))


# ---------------------------------------------------------------- ranking


class UnevaluatedMemberError(RuntimeError):
    pass


@dataclass(frozen=True)
class Snapshot:
    """What a member publishes for the others to read."""

    member_id: int
    policy: AlignmentPolicy
    val_acc: Optional[float]
    epoch: int
    state: Any = field(default=None, compare=False, repr=False)


def rank_members(members: Sequence[Any]) -> List[int]:
    """Member ids from worst to best by latest ``val_acc``; ties by id."""
    for m in members:
        if m.val_acc is None:
            raise UnevaluatedMemberError(f"member {m.member_id} has not been evaluated")
    return [m.member_id for m in sorted(members, key=lambda m: (m.val_acc, m.member_id))]


def meets_requirement1(member_id: int, ranking: Sequence[int], cfg: SearchConfig) -> bool:
    req2_end, req1_end, _ = cfg.bands()
    return req2_end <= ranking.index(member_id) < req1_end


def meets_requirement2(member_id: int, ranking: Sequence[int], cfg: SearchConfig) -> bool:
    req2_end, _, _ = cfg.bands()
    return ranking.index(member_id) < req2_end


# ---------------------------------------------------------------- explore


def _draw_level(cfg: SearchConfig, u: float) -> int:
    acc = 0.0
    for value, prob in zip(cfg.level_values, cfg.level_probs):
        acc += prob
        if u < acc:
            return value
    return cfg.level_values[-1]


def explore_trace(p: AlignmentPolicy, space: SearchSpace, cfg: SearchConfig, rng) -> Tuple[AlignmentPolicy, Dict[str, Any]]:
    """:func:`explore` that also reports every draw it made.

    Only ``rng.random()`` is used, so any object with that method can drive it.
    """
    trace: Dict[str, Any] = {}
    raw = {}
    for name, value, grid, step in (
        ("m", p.m, space.m_grid, cfg.s_m),
        ("delta", p.delta, space.delta_grid, cfg.s_delta),
    ):
        if rng.random() < cfg.resample_prob:
            new = grid[min(int(rng.random() * len(grid)), len(grid) - 1)]
            trace[name] = {"branch": "resample", "value": new}
        else:
            level = _draw_level(cfg, rng.random())
            sign = -1 if rng.random() < cfg.direction_prob else 1
            new = value + sign * level * step
            trace[name] = {"branch": "perturb", "level": level, "sign": sign, "value": new}
        raw[name] = new
    out = clip_values(raw["m"], raw["delta"], space)
    trace["raw"] = [raw["m"], raw["delta"]]
    trace["clipped"] = out.as_tuple() != (raw["m"], raw["delta"])
    return out, trace


def explore(p: AlignmentPolicy, space: SearchSpace, cfg: SearchConfig, rng) -> AlignmentPolicy:
    """Perturb or resample each of ``m`` and ``delta``, then clip into the space."""
    return explore_trace(p, space, cfg, rng)[0]


# ---------------------------------------------------------------- exploit / crossover


def pick_donor(ranking: Sequence[int], cfg: SearchConfig, rng) -> int:
    """Uniform choice among the top-quarter ranks."""
    _, _, donor_start = cfg.bands()
    donors = list(ranking[donor_start:])
    return donors[min(int(rng.random() * len(donors)), len(donors) - 1)]


def exploit(
    member_id: int,
    population: Mapping[int, Snapshot],
    cfg: SearchConfig,
    rng,
    trainer: Trainer,
) -> Tuple[Any, AlignmentPolicy, int]:
    """Returns ``(cloned_state, donor_policy, donor_id)``."""
    ranking = rank_members(list(population.values()))
    donor = population[pick_donor(ranking, cfg, rng)]
    return trainer.clone(donor.state), donor.policy, donor.member_id


@dataclass
class CrossoverOutcome:
    state: Any
    policy: AlignmentPolicy
    child: AlignmentPolicy
    parents: Tuple[int, int]
    inherited_from: int
    explored: bool
    trace: Optional[Dict[str, Any]] = None


def crossover_step(
    member_id: int,
    population: Mapping[int, Snapshot],
    space: SearchSpace,
    cfg: SearchConfig,
    rng,
    trainer: Trainer,
) -> CrossoverOutcome:
    """Crossover of the two best members' policies.

    The receiving member clones the state of whichever parent the child crop
    overlaps more. If the child policy is already held by some member other
    than the receiver and the cloned parent, it is explored once more.
    """
    ranking = rank_members(list(population.values()))
    first, second = population[ranking[-1]], population[ranking[-2]]
    child, idx = intersection_crossover(first.policy, second.policy, space, first.val_acc, second.val_acc)
    parent = first if idx == 1 else second
    state = trainer.clone(parent.state)
    others = {s.policy for s in population.values() if s.member_id not in (member_id, parent.member_id)}
    if child in others:
        policy, trace = explore_trace(child, space, cfg, rng)
        return CrossoverOutcome(state, policy, child, (first.member_id, second.member_id), parent.member_id, True, trace)
    return CrossoverOutcome(state, child, child, (first.member_id, second.member_id), parent.member_id, False)


# ---------------------------------------------------------------- bookkeeping


@dataclass(frozen=True)
class EventRecord:
    seq: int
    member: int
    kind: str
    epoch: int
    payload: Dict[str, Any]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))


class EventLog:
    """Append-only event list, optionally mirrored line by line to a stream."""

    def __init__(self, sink: Optional[IO[str]] = None, header: Optional[Dict[str, Any]] = None):
        self._lock = threading.Lock()
        self.records: List[EventRecord] = []
        self.sink = sink
        self.header = header
        if sink is not None and header is not None:
            sink.write(json.dumps({"kind": "header", **header}, sort_keys=True, separators=(",", ":")) + "\n")
            sink.flush()

    def append(self, member: int, kind: str, epoch: int, **payload) -> EventRecord:
        with self._lock:
            rec = EventRecord(len(self.records), member, kind, epoch, payload)
            self.records.append(rec)
            if self.sink is not None:
                self.sink.write(rec.to_json() + "\n")
                self.sink.flush()
        return rec

    def of_kind(self, kind: str) -> List[EventRecord]:
        return [r for r in self.records if r.kind == kind]


class PopulationRegistry:
    """Latest published snapshot per member; reads and writes are atomic."""

    def __init__(self):
        self._lock = threading.Lock()
        self._snaps: Dict[int, Snapshot] = {}

    def publish(self, snap: Snapshot) -> None:
        with self._lock:
            self._snaps[snap.member_id] = snap

    def view(self) -> Dict[int, Snapshot]:
        with self._lock:
            return dict(self._snaps)


@dataclass
class Member:
    member_id: int
    policy: AlignmentPolicy
    state: Any
    rng: Any
    val_acc: Optional[float] = None
    epoch: int = 0
    changed_at: int = 0
    lineage: List[Dict[str, Any]] = field(default_factory=list)


@dataclass
class SearchResult:
    best_policy: AlignmentPolicy
    best_accuracy: float
    best_member: int
    best_epoch: int
    events: List[EventRecord]
    trainer_steps: int
    members: List[Member]

    def trajectories(self) -> List[Tuple[int, int, int, int, float]]:
        """``(epoch, member_id, m, delta, val_acc)`` for every evaluation."""
        return trajectory_rows(self.events)

    def to_json(self) -> Dict[str, Any]:
        return {
            "best_policy": list(self.best_policy.as_tuple()),
            "best_accuracy": self.best_accuracy,
            "best_member": self.best_member,
            "best_epoch": self.best_epoch,
            "trainer_steps": self.trainer_steps,
            "events": len(self.events),
            "final_policies": {str(m.member_id): list(m.policy.as_tuple()) for m in self.members},
        }


def trajectory_rows(events: Sequence[Any]) -> List[Tuple[int, int, int, int, float]]:
    rows = []
    for e in events:
        kind = e["kind"] if isinstance(e, dict) else e.kind
        if kind != "eval":
            continue
        if isinstance(e, dict):
            epoch, member, payload = e["epoch"], e["member"], e["payload"]
        else:
            epoch, member, payload = e.epoch, e.member, e.payload
        m, d = payload["policy"]
        rows.append((epoch, member, m, d, payload["val_acc"]))
    return rows


class SearchAborted(RuntimeError):
    def __init__(self, message: str, events: List[EventRecord]):
        super().__init__(message)
        self.events = events


# ---------------------------------------------------------------- engine


class _Engine:
    def __init__(self, cfg: SearchConfig, space: SearchSpace, trainer: Trainer, events: EventLog):
        self.cfg = cfg
        self.space = space
        self.trainer = trainer
        self.events = events
        self.registry = PopulationRegistry()
        self.searchable = len(enumerate_space(space)) > 1
        self._steps = 0
        self._steps_lock = threading.Lock()
        p0 = space.super_roi
        self.members = []
        for i in range(cfg.population_size):
            m = Member(i, p0, trainer.init_state(i), member_rng(cfg.seed, i))
            m.lineage.append({"event": "init", "policy": list(p0.as_tuple())})
            self.members.append(m)
            self.registry.publish(Snapshot(i, p0, None, 0))

    def _publish(self, m: Member) -> None:
        self.registry.publish(Snapshot(m.member_id, m.policy, m.val_acc, m.epoch, self.trainer.clone(m.state)))

    def run_epoch(self, m: Member) -> None:
        self.train(m)
        if self.ready(m):
            self.decide(m)

    def train(self, m: Member) -> None:
        m.state = self.trainer.step(m.state, m.policy)
        m.epoch += 1
        with self._steps_lock:
            self._steps += 1
        self.events.append(m.member_id, "step", m.epoch, policy=list(m.policy.as_tuple()))
        m.val_acc = self.trainer.evaluate(m.state, m.policy)
        self.events.append(m.member_id, "eval", m.epoch, policy=list(m.policy.as_tuple()), val_acc=m.val_acc)
        self._publish(m)

    def ready(self, m: Member) -> bool:
        if not self.searchable or m.epoch - m.changed_at < 1:
            return False
        return all(s.val_acc is not None for s in self.registry.view().values())

    def decide(self, m: Member) -> None:
        population = self.registry.view()
        ranking = rank_members(list(population.values()))
        old = m.policy
        if meets_requirement1(m.member_id, ranking, self.cfg):
            out = crossover_step(m.member_id, population, self.space, self.cfg, m.rng, self.trainer)
            self.events.append(
                m.member_id,
                "crossover",
                m.epoch,
                parents=list(out.parents),
                parent_policies=[list(population[i].policy.as_tuple()) for i in out.parents],
                child=list(out.child.as_tuple()),
                source=out.inherited_from,
                old=list(old.as_tuple()),
            )
            if out.explored:
                self._log_explore(m, out.child, out.policy, out.trace)
            state, policy, source = out.state, out.policy, out.inherited_from
            m.lineage.append({"event": "crossover-from", "sources": list(out.parents), "state_from": source})
        elif meets_requirement2(m.member_id, ranking, self.cfg):
            state, donor_policy, source = exploit(m.member_id, population, self.cfg, m.rng, self.trainer)
            self.events.append(
                m.member_id, "exploit", m.epoch, source=source, policy=list(donor_policy.as_tuple()), old=list(old.as_tuple())
            )
            policy, trace = explore_trace(donor_policy, self.space, self.cfg, m.rng)
            self._log_explore(m, donor_policy, policy, trace)
            m.lineage.append({"event": "exploit-from", "source": source})
        else:
            return
        m.state = state
        m.val_acc = population[source].val_acc
        if policy != old:
            m.state = self.trainer.on_policy_change(m.state, old, policy)
        m.policy = policy
        m.changed_at = m.epoch
        self._publish(m)

    def _log_explore(self, m: Member, start: AlignmentPolicy, out: AlignmentPolicy, trace: Dict[str, Any]) -> None:
        self.events.append(
            m.member_id,
            "explore",
            m.epoch,
            old=list(start.as_tuple()),
            new=list(out.as_tuple()),
            draws={k: trace[k] for k in ("m", "delta")},
        )
        if trace["clipped"]:
            self.events.append(m.member_id, "clip", m.epoch, raw=trace["raw"], new=list(out.as_tuple()))

    def run_sequential(self) -> None:
        # train everyone before anyone ranks, so rankings compare equal epochs
        for _ in range(self.cfg.total_epochs):
            for m in self.members:
                self.train(m)
            for m in self.members:
                if self.ready(m):
                    self.decide(m)

    def run_async(self) -> None:
        stop = threading.Event()
        errors: List[BaseException] = []

        def worker(m: Member) -> None:
            try:
                for _ in range(self.cfg.total_epochs):
                    if stop.is_set():
                        return
                    self.run_epoch(m)
            except BaseException as exc:  # noqa: BLE001 - re-raised by the caller
                errors.append(exc)
                stop.set()

        threads = [threading.Thread(target=worker, args=(m,), name=f"faps-member-{m.member_id}") for m in self.members]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]

    @property
    def trainer_steps(self) -> int:
        return self._steps


def search_header(cfg: SearchConfig, space: SearchSpace, trainer: Trainer) -> Dict[str, Any]:
    return {"config": asdict(cfg), "space": asdict(space), "trainer": trainer.describe(), "rng": RNG_ID}


def run_search(
    cfg: SearchConfig,
    space: SearchSpace,
    trainer: Trainer,
    sink: Optional[IO[str]] = None,
) -> SearchResult:
    """Run the population search and return the best policy ever evaluated.

    All members start at the SuperROI policy. With ``sink`` given, the event
    log (header first) is streamed there as JSON lines and survives a
    trainer failure, which surfaces as :class:`SearchAborted`.
    """
    events = EventLog(sink, search_header(cfg, space, trainer))
    engine = _Engine(cfg, space, trainer, events)
    try:
        if cfg.mode == "async":
            engine.run_async()
        else:
            engine.run_sequential()
    except Exception as exc:
        log.error("search aborted: %s", exc)
        raise SearchAborted(f"trainer failure: {exc!r}", events.records) from exc

    best = None
    for e in events.of_kind("eval"):
        if best is None or e.payload["val_acc"] > best.payload["val_acc"]:
            best = e
    return SearchResult(
        best_policy=AlignmentPolicy(*best.payload["policy"]),
        best_accuracy=best.payload["val_acc"],
        best_member=best.member,
        best_epoch=best.epoch,
        events=events.records,
        trainer_steps=engine.trainer_steps,
        members=engine.members,
    )
