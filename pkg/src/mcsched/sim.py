"""Event-driven simulator for global preemptive static-priority scheduling
of mixed-criticality task systems with budget monitoring and mode changes.

Scheduler rules. At every instant the m highest-priority dispatchable
entities run, one per processor. Dispatchable entities are, from high to
low band: available jobs of enabled tasks and ghost slots (both at the
owning task's rank), then rem-jobs (always below every enabled task).
The scheduler is work-conserving over dispatchable entities, with one
deliberate exception: a ghost slot whose rem-job pool ran dry idles for a
single tick while the ghost is retired.

Budget monitoring. A job of a task with L > current level that reaches its
current-level budget without completing raises the system level by one.
Tasks with L below the new level are suspended: their future arrivals are
dropped, and their already-released jobs either vanish (protocol "drop") or
join the rem-job pool to be finished at background priority. Protocols
"wcet-reclaim" and "wcrt-simulate" additionally lend rem-jobs the processor
slots that completed jobs of enabled tasks no longer need: a ghost carries
either the completing job's unused budget (C_i(level) - c) or its remaining
response-time window (until r + R_i(level)).

Level decreases are requested externally (scenario dmcr_requests). A request
is taken up at the next steady instant; the system then watches the enabled
tasks in priority order, waiting for each to complete a job within its
response bound at the target level, and re-enables every suspended task with
L >= target synchronously when the last one qualifies. Any budget overrun
while the chain is active aborts it.

All times are integers. One run is strictly deterministic in its inputs.

Internal trace events are tuples; the common prefix is (kind, t, mode):
    ("release", t, mode, task, k, d)
    ("job_dropped", t, mode, task, k, why)   why "imcr" | "suspended_arrival"
    ("complete", t, mode, task, k, c, r, d, rem)
    ("budget_exceeded", t, new_mode, task, k)
    ("dmcr_requested", t, mode, target)
    ("chain_advance", t, mode, task, k)
    ("chain_aborted", t, mode, cursor)
    ("re_enabled", t, target_mode, tasks)
    ("deadline_miss", t, mode, task, k, crit)
    ("chain_stalled", t, mode, cursor)
    ("sched", t0, mode, t1, slots)
sched slots, in priority order, one per busy processor:
    ("J", task, k)                           enabled-task job
    ("R", task, k)                           rem-job on a free processor
    ("G", ghost_task, ghost_k, task, k)      rem-job hosted by a ghost slot

Same-instant processing order: credit execution, completions (spawning
ghosts), budget-overrun cascade, ghost cleanup, level-decrease intake,
chain qualification, releases, deadline misses, dispatch. A completion at
t therefore qualifies a chain advance at t, and an overrun at t is seen
before any new dispatch at t. One consequence of this order: a level
decrease that leaves some running job already at or past the lower
level's budget raises the follow-up overrun at the next instant, since
the cascade for the decrease instant has already run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .model import Platform, Scenario, TaskSet, id_key
from .analysis import PriorityAssignment

PROTOCOLS = ("drop", "naive", "wcet-reclaim", "wcrt-simulate")
REM_ORDERS = ("crit-edf", "edf", "srpt")


class InconsistentInputs(ValueError):
    """Priority assignment or response-time table does not cover the task set."""


class ModelViolation(RuntimeError):
    """A job reached its top-level budget without completing; the scenario
    breached the execution-time contract."""


class InvalidTarget(ValueError):
    """Level-decrease request targeting a level outside [1, levels-1]."""


@dataclass(frozen=True)
class ProtocolConfig:
    protocol: str = "drop"
    rem_order: str = "crit-edf"
    cap: bool = True  # mirrors the analysis interference cap; recorded only

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.rem_order not in REM_ORDERS:
            raise ValueError(f"unknown rem_order {self.rem_order!r}")


class Trace:
    """Ordered event log of one run plus the run's frame data."""

    __slots__ = ("events", "horizon", "m", "levels", "protocol", "rem_order")

    def __init__(self, events, horizon, m, levels, protocol, rem_order):
        self.events = events
        self.horizon = horizon
        self.m = m
        self.levels = levels
        self.protocol = protocol
        self.rem_order = rem_order

    def kind(self, kind: str) -> list:
        return [e for e in self.events if e[0] == kind]

    # -- serialization ----------------------------------------------------

    def to_jsonl(self) -> str:
        """Line-delimited records with a stable field order.

        sched records become dispatch lines (one per slot, span end in
        "until"), preempt lines for entities that stop while incomplete,
        and idle lines when processors are unoccupied.
        """
        out = []
        dump = json.dumps
        meta = {"t": 0, "kind": "meta", "horizon": self.horizon, "m": self.m,
                "levels": self.levels, "protocol": self.protocol,
                "rem_order": self.rem_order}
        out.append(dump(meta, separators=(",", ":")))
        completed_at = {}
        for ev in self.events:
            if ev[0] == "complete":
                completed_at[(ev[3], ev[4])] = ev[1]
        prev_slots = ()
        for ev in self.events:
            kind = ev[0]
            if kind != "sched":
                out.append(dump(self._event_record(ev), separators=(",", ":")))
                continue
            _, t0, mode, t1, slots = ev
            for code, tid, k, proc in self._stopped(prev_slots, slots):
                if completed_at.get((tid, k)) != t0:
                    out.append(dump({"t": t0, "kind": "preempt", "task": tid,
                                     "k": k, "proc": proc, "mode": mode},
                                    separators=(",", ":")))
            for proc, slot in enumerate(slots):
                rec = {"t": t0, "kind": "dispatch"}
                if slot[0] == "G":
                    rec.update(task=slot[3], k=slot[4], proc=proc, mode=mode,
                               until=t1, rem=1, ghost_task=slot[1],
                               ghost_k=slot[2])
                else:
                    rec.update(task=slot[1], k=slot[2], proc=proc, mode=mode,
                               until=t1, rem=1 if slot[0] == "R" else 0)
                out.append(dump(rec, separators=(",", ":")))
            if len(slots) < self.m:
                out.append(dump({"t": t0, "kind": "idle", "mode": mode,
                                 "until": t1, "procs": self.m - len(slots)},
                                separators=(",", ":")))
            prev_slots = slots
        return "\n".join(out) + "\n"

    @staticmethod
    def _stopped(prev_slots, slots):
        """Entities in prev_slots but not in slots, with their old processor."""
        def entity(slot):
            return (slot[3], slot[4]) if slot[0] == "G" else (slot[1], slot[2])
        now = {entity(s) for s in slots}
        gone = []
        for proc, slot in enumerate(prev_slots):
            ent = entity(slot)
            if ent not in now:
                gone.append((slot[0], ent[0], ent[1], proc))
        return gone

    @staticmethod
    def _event_record(ev) -> dict:
        kind, t, mode = ev[0], ev[1], ev[2]
        rec = {"t": t, "kind": kind}
        if kind == "release":
            rec.update(task=ev[3], k=ev[4], mode=mode, d=ev[5])
        elif kind == "job_dropped":
            rec.update(task=ev[3], k=ev[4], mode=mode, why=ev[5])
        elif kind == "complete":
            rec.update(task=ev[3], k=ev[4], mode=mode, c=ev[5], r=ev[6],
                       d=ev[7], rem=ev[8])
        elif kind == "budget_exceeded":
            rec.update(task=ev[3], k=ev[4], mode=mode)
        elif kind == "dmcr_requested":
            rec.update(mode=mode, target=ev[3])
        elif kind == "chain_advance":
            rec.update(task=ev[3], k=ev[4], mode=mode)
        elif kind in ("chain_aborted", "chain_stalled"):
            rec.update(mode=mode, cursor=ev[3])
        elif kind == "re_enabled":
            rec.update(mode=mode, tasks=list(ev[3]))
        elif kind == "deadline_miss":
            rec.update(task=ev[3], k=ev[4], mode=mode, crit=ev[5])
        else:
            raise ValueError(f"unknown event kind {kind!r}")
        return rec


def trace_from_jsonl(text: str) -> Trace:
    """Rebuild a Trace from its serialized form.

    Dispatch and idle lines sharing (t, until) are regrouped into sched
    records; preempt lines are derived data and are dropped.
    """
    events = []
    meta = None
    groups: dict[tuple[int, int], dict] = {}
    order: list[tuple[int, int]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"trace line {lineno}: {exc.msg}") from exc
        kind = rec.get("kind")
        if kind == "meta":
            meta = rec
            continue
        if kind == "preempt":
            continue
        if kind in ("dispatch", "idle"):
            span = (rec["t"], rec["until"])
            g = groups.get(span)
            if g is None:
                g = groups[span] = {"mode": rec["mode"], "slots": {}}
                order.append(span)
            if kind == "dispatch":
                if rec.get("ghost_task") is not None:
                    slot = ("G", rec["ghost_task"], rec["ghost_k"],
                            rec["task"], rec["k"])
                elif rec.get("rem"):
                    slot = ("R", rec["task"], rec["k"])
                else:
                    slot = ("J", rec["task"], rec["k"])
                g["slots"][rec["proc"]] = slot
            continue
        t, mode = rec["t"], rec["mode"]
        if kind == "release":
            events.append(("release", t, mode, rec["task"], rec["k"], rec["d"]))
        elif kind == "job_dropped":
            events.append(("job_dropped", t, mode, rec["task"], rec["k"], rec["why"]))
        elif kind == "complete":
            events.append(("complete", t, mode, rec["task"], rec["k"], rec["c"],
                           rec["r"], rec["d"], rec["rem"]))
        elif kind == "budget_exceeded":
            events.append(("budget_exceeded", t, mode, rec["task"], rec["k"]))
        elif kind == "dmcr_requested":
            events.append(("dmcr_requested", t, mode, rec["target"]))
        elif kind == "chain_advance":
            events.append(("chain_advance", t, mode, rec["task"], rec["k"]))
        elif kind == "chain_aborted":
            events.append(("chain_aborted", t, mode, rec["cursor"]))
        elif kind == "chain_stalled":
            events.append(("chain_stalled", t, mode, rec["cursor"]))
        elif kind == "re_enabled":
            events.append(("re_enabled", t, mode, tuple(rec["tasks"])))
        elif kind == "deadline_miss":
            events.append(("deadline_miss", t, mode, rec["task"], rec["k"], rec["crit"]))
        else:
            raise ValueError(f"trace line {lineno}: unknown kind {kind!r}")
    if meta is None:
        raise ValueError("trace has no meta line")
    for span in order:
        g = groups[span]
        slots = tuple(g["slots"][p] for p in sorted(g["slots"]))
        events.append(("sched", span[0], g["mode"], span[1], slots))
    events.sort(key=lambda e: (e[1], 1 if e[0] == "sched" else 0))
    return Trace(events, meta["horizon"], meta["m"], meta["levels"],
                 meta["protocol"], meta["rem_order"])


class _Job:
    __slots__ = ("st", "tid", "k", "r", "d", "c", "executed", "f", "rem",
                 "L", "C", "rank", "idk")

    def __init__(self, st, k, r, c):
        task = st.task
        self.st = st
        self.tid = task.id
        self.k = k
        self.r = r
        self.d = r + task.D
        self.c = c
        self.executed = 0
        self.f = None
        self.rem = False
        self.L = task.L
        self.C = task.C
        self.rank = st.rank
        self.idk = st.idk


class _Ghost:
    __slots__ = ("tid", "k", "rank", "kind", "budget", "expiry")

    def __init__(self, tid, k, rank, kind, budget=0, expiry=0):
        self.tid = tid
        self.k = k
        self.rank = rank
        self.kind = kind  # "ur" carries unused budget, "win" a wall-clock window
        self.budget = budget
        self.expiry = expiry


class _TaskState:
    __slots__ = ("task", "tid", "rank", "idk", "arrivals", "execs",
                 "next_arr", "pending", "enabled")

    def __init__(self, task, rank, arrivals, execs):
        self.task = task
        self.tid = task.id
        self.rank = rank
        self.idk = id_key(task.id)
        self.arrivals = arrivals
        self.execs = execs
        self.next_arr = 0
        self.pending = []
        self.enabled = True


def _rem_key(job: _Job, order: str):
    if order == "crit-edf":
        return (-job.L, job.d, job.idk, job.k)
    if order == "edf":
        return (job.d, job.idk, job.k)
    return (job.c - job.executed, job.idk, job.k)  # srpt on actual remaining


def simulate(ts: TaskSet, platform: Platform, pa: PriorityAssignment,
             wt: dict, sc: Scenario, cfg: ProtocolConfig | None = None) -> Trace:
    """Run one scenario to its horizon and return the event trace."""
    if cfg is None:
        cfg = ProtocolConfig()
    m = platform.m
    if not pa.covers(ts):
        raise InconsistentInputs("priority assignment does not cover the task set")
    for task in ts.tasks:
        for level in range(1, task.L + 1):
            if (task.id, level) not in wt:
                raise InconsistentInputs(
                    f"response-time table missing task {task.id!r} level {level}")
    for _, target in sc.dmcr_requests:
        if not 1 <= target < ts.levels:
            raise InvalidTarget(
                f"target level {target} not in [1, {ts.levels - 1}]")

    states = [_TaskState(t, pa.rank(t.id), sc.arrivals.get(t.id, ()),
                         sc.exec_times.get(t.id, ())) for t in ts.tasks]
    reclaiming = cfg.protocol in ("wcet-reclaim", "wcrt-simulate")
    drop = cfg.protocol == "drop"
    horizon = sc.horizon
    events: list[tuple] = []
    emit = events.append

    level = 1
    rem_pool: list[_Job] = []
    ghosts: list[_Ghost] = []
    chain = None  # [task ids by rank, cursor, target]
    pending_req = None
    reqs = sorted(sc.dmcr_requests, key=lambda r: r[0])
    req_i = 0
    running: list[tuple] = []  # (code, job, ghost_or_None) in slot order
    open_rec = None  # [t0, mode, slots]
    force_tick = False
    t = 0

    while True:
        # ---- completions (execution was credited before the jump here) ----
        completions: dict = {}
        for code, job, ghost in running:
            if job.f is not None or job.executed < job.c:
                continue
            job.f = t
            emit(("complete", t, level, job.tid, job.k, job.c, job.r, job.d,
                  1 if job.rem else 0))
            if job.rem:
                rem_pool.remove(job)
                continue
            job.st.pending.remove(job)
            completions.setdefault(job.tid, []).append(job)
            if reclaiming and rem_pool:
                budget = job.C[level - 1]
                if cfg.protocol == "wcet-reclaim":
                    if job.c < budget:
                        ghosts.append(_Ghost(job.tid, job.k, job.rank, "ur",
                                             budget=budget - job.c))
                else:
                    end = job.r + wt[(job.tid, level)]
                    if end > t:
                        ghosts.append(_Ghost(job.tid, job.k, job.rank, "win",
                                             expiry=end))

        # ---- budget-overrun cascade ----
        while True:
            tripped = None
            for code, job, ghost in running:
                if (job.f is None and not job.rem and job.L > level
                        and job.executed >= job.C[level - 1]):
                    tripped = job
                    break
            if tripped is None:
                # no legal transition left; a job at its top budget without
                # completing means the scenario broke the execution contract
                for code, job, ghost in running:
                    if job.f is None and job.executed >= job.C[job.L - 1]:
                        raise ModelViolation(
                            f"job ({job.tid!r},{job.k}) exhausted its "
                            "top-level budget without completing")
                break
            level += 1
            emit(("budget_exceeded", t, level, tripped.tid, tripped.k))
            for st in states:
                if st.enabled and st.task.L < level:
                    st.enabled = False
                    jobs, st.pending = st.pending, []
                    for j in jobs:
                        if drop:
                            emit(("job_dropped", t, level, j.tid, j.k, "imcr"))
                        else:
                            j.rem = True
                            rem_pool.append(j)
            ghosts.clear()  # budget guarantees do not carry across levels
            if chain is not None:
                emit(("chain_aborted", t, level, chain[1]))
                chain = None

        # ---- ghost and phase cleanup ----
        if ghosts:
            if not rem_pool:
                ghosts.clear()
            else:
                ghosts = [g for g in ghosts
                          if (g.kind == "win" and g.expiry > t)
                          or (g.kind == "ur" and g.budget > 0)]

        # ---- level-decrease intake ----
        while req_i < len(reqs) and reqs[req_i][0] <= t:
            target = reqs[req_i][1]
            req_i += 1
            emit(("dmcr_requested", t, level, target))
            pending_req = target
        if pending_req is not None and chain is None and not rem_pool:
            target, pending_req = pending_req, None
            if target < level:
                by_rank = sorted((st for st in states if st.enabled),
                                 key=lambda s: s.rank)
                chain = [[st.tid for st in by_rank], 0, target]

        # ---- chain qualification ----
        if chain is not None:
            tasks_, cursor, target = chain
            while cursor < len(tasks_):
                adv = None
                for job in completions.get(tasks_[cursor], ()):
                    if t <= job.r + wt[(tasks_[cursor], target)]:
                        adv = job
                        break
                if adv is None:
                    break
                emit(("chain_advance", t, level, adv.tid, adv.k))
                cursor += 1
            chain[1] = cursor
            if cursor == len(tasks_):
                woken = tuple(sorted(
                    (st.tid for st in states
                     if not st.enabled and st.task.L >= target), key=id_key))
                for st in states:
                    if not st.enabled and st.task.L >= target:
                        st.enabled = True
                emit(("re_enabled", t, target, woken))
                level = target
                chain = None

        # ---- releases ----
        for st in states:
            while st.next_arr < len(st.arrivals) and st.arrivals[st.next_arr] == t:
                k = st.next_arr + 1
                c = st.execs[st.next_arr]
                st.next_arr += 1
                if st.enabled:
                    job = _Job(st, k, t, c)
                    st.pending.append(job)
                    emit(("release", t, level, st.tid, k, job.d))
                else:
                    emit(("job_dropped", t, level, st.tid, k,
                          "suspended_arrival"))

        # ---- deadline misses (completing exactly at d is on time) ----
        for st in states:
            if st.enabled:
                for job in st.pending:
                    if job.d == t:
                        emit(("deadline_miss", t, level, st.tid, job.k,
                              st.task.L))

        if t >= horizon:
            if chain is not None:
                emit(("chain_stalled", t, level, chain[1]))
            break

        # ---- dispatch ----
        cands = []
        for st in states:
            if st.enabled and st.pending:
                job = st.pending[0]
                cands.append(((0, st.rank, job.k, 0), "J", job, None))
        rem_eligible = []
        if rem_pool:
            front: dict = {}
            for job in rem_pool:
                cur = front.get(job.tid)
                if cur is None or job.k < cur.k:
                    front[job.tid] = job
            rem_eligible = sorted(front.values(),
                                  key=lambda j: _rem_key(j, cfg.rem_order))
            for job in rem_eligible:
                cands.append(((1,) + _rem_key(job, cfg.rem_order), "R", job,
                              None))
        for g in ghosts:
            cands.append(((0, g.rank, g.k, 1), "G", None, g))
        cands.sort(key=lambda e: e[0])
        selected = cands[:m]

        direct = {id(job) for _, code, job, _ in selected if job is not None}
        hosts = [j for j in rem_eligible if id(j) not in direct]
        hi = 0
        slots = []
        running = []
        for _, code, job, g in selected:
            if code == "J":
                slots.append(("J", job.tid, job.k))
                running.append(("J", job, None))
            elif code == "R":
                slots.append(("R", job.tid, job.k))
                running.append(("R", job, None))
            elif hi < len(hosts):
                host = hosts[hi]
                hi += 1
                slots.append(("G", g.tid, g.k, host.tid, host.k))
                running.append(("G", host, g))
            else:
                # pool ran dry: retire the ghost, its slot idles this tick
                ghosts.remove(g)
                force_tick = True

        # ---- next event ----
        nxt = horizon
        if force_tick:
            nxt = t + 1
            force_tick = False
        if pending_req is not None and t + 1 < nxt:
            nxt = t + 1  # re-check intake promptly once the system settles
        for code, job, g in running:
            delta = job.c - job.executed
            top_left = job.C[job.L - 1] - job.executed
            if top_left < delta:
                delta = top_left  # stop at the contract boundary
            if code == "J" and job.L > level:
                budget_left = job.C[level - 1] - job.executed
                if budget_left < delta:
                    delta = budget_left
            if g is not None and g.kind == "ur" and g.budget < delta:
                delta = g.budget
            if delta < 1:
                # a level decrease can leave a running job already at or past
                # the lower level's budget; that overrun is seen at the next
                # monitoring instant, never by stepping time backward
                delta = 1
            if t + delta < nxt:
                nxt = t + delta
        for g in ghosts:
            if g.kind == "win" and g.expiry < nxt:
                nxt = g.expiry
        for st in states:
            if st.next_arr < len(st.arrivals) and st.arrivals[st.next_arr] < nxt:
                nxt = st.arrivals[st.next_arr]
            if st.enabled:
                for job in st.pending:
                    if t < job.d < nxt:
                        nxt = job.d
        if req_i < len(reqs) and reqs[req_i][0] < nxt:
            nxt = reqs[req_i][0]
        assert nxt > t, f"simulation time stalled at {t}"

        slots_t = tuple(slots)
        if open_rec is None or open_rec[2] != slots_t or open_rec[1] != level:
            if open_rec is not None and open_rec[0] < t:
                emit(("sched", open_rec[0], open_rec[1], t, open_rec[2]))
            open_rec = [t, level, slots_t]

        span = nxt - t
        for code, job, g in running:
            job.executed += span
            if g is not None and g.kind == "ur":
                g.budget -= span
        t = nxt

    if open_rec is not None and open_rec[0] < horizon:
        emit(("sched", open_rec[0], open_rec[1], horizon, open_rec[2]))
    events.sort(key=lambda e: (e[1], 1 if e[0] == "sched" else 0))
    return Trace(events, horizon, m, ts.levels, cfg.protocol, cfg.rem_order)
