import pytest

from mcsched.analysis import PriorityAssignment
from mcsched.gen import GenParams, Infeasible, child_seed, gen_scenario, gen_taskset
from mcsched.model import MCTask, Platform, Scenario, TaskSet
from mcsched.sim import (InconsistentInputs, InvalidTarget, ModelViolation,
                         ProtocolConfig, simulate, trace_from_jsonl)
from mcsched.verify import (check_feasibility, check_periodicity,
                            check_response_bounds, compute_l_intervals)
from mcsched.analysis import opa_assign


def run(tasks, levels, m, ranks, wt, horizon, arrivals, execs, reqs=(),
        protocol="drop", rem_order="crit-edf"):
    ts = TaskSet(tasks=tuple(tasks), levels=levels)
    pa = PriorityAssignment(ranks=ranks)
    sc = Scenario(horizon=horizon, arrivals=arrivals, exec_times=execs,
                  dmcr_requests=tuple(reqs))
    cfg = ProtocolConfig(protocol=protocol, rem_order=rem_order)
    return simulate(ts, Platform(m=m), pa, wt, sc, cfg)


def slots_of(trace):
    return [(e[1], e[3], e[4]) for e in trace.kind("sched")]


# ---------------------------------------------------------------------------
# dispatching


def test_two_task_hand_schedule():
    t1 = MCTask(id=1, T=10, D=10, L=1, C=(2,))
    t2 = MCTask(id=2, T=10, D=10, L=1, C=(3,))
    trace = run([t1, t2], 1, 1, {1: 1, 2: 2}, {(1, 1): 2, (2, 1): 5},
                10, {1: (0,), 2: (0,)}, {1: (2,), 2: (3,)})
    comps = trace.kind("complete")
    assert [(e[3], e[1]) for e in comps] == [(1, 2), (2, 5)]
    assert slots_of(trace) == [
        (0, 2, (("J", 1, 1),)),
        (2, 5, (("J", 2, 1),)),
        (5, 10, ()),
    ]


def test_msm_two_processors_three_tasks():
    tasks = [MCTask(id=i, T=10, D=10, L=1, C=(4,)) for i in (1, 2, 3)]
    trace = run(tasks, 1, 2, {1: 1, 2: 2, 3: 3},
                {(1, 1): 4, (2, 1): 4, (3, 1): 8},
                10, {1: (0,), 2: (0,), 3: (0,)}, {1: (4,), 2: (4,), 3: (4,)})
    assert slots_of(trace) == [
        (0, 4, (("J", 1, 1), ("J", 2, 1))),
        (4, 8, (("J", 3, 1),)),
        (8, 10, ()),
    ]
    # the rank-3 response matches the analysis bound for this exact case
    f3 = [e for e in trace.kind("complete") if e[3] == 3][0][1]
    assert f3 == 8


def test_sequential_jobs_never_overlap():
    h = MCTask(id=1, T=4, D=4, L=1, C=(2,))
    a = MCTask(id=2, T=10, D=10, L=1, C=(6,))
    trace = run([h, a], 1, 1, {1: 1, 2: 2}, {(1, 1): 2, (2, 1): 10},
                16, {1: (0, 4, 8), 2: (0, 10)},
                {1: (2, 2, 2), 2: (6, 2)})
    misses = trace.kind("deadline_miss")
    assert [(e[1], e[3], e[4], e[5]) for e in misses] == [(10, 2, 1, 1)]
    comps = {(e[3], e[4]): e[1] for e in trace.kind("complete")}
    assert comps[(2, 1)] == 12
    assert comps[(2, 2)] == 14
    # between 10 and 12 the first job still runs; job 2 waits its turn
    rec = [e for e in trace.kind("sched") if e[1] == 10][0]
    assert rec[4] == (("J", 2, 1),)


# ---------------------------------------------------------------------------
# budget monitoring


def test_budget_trip_at_exact_budget_instant():
    a = MCTask(id=1, T=20, D=20, L=2, C=(2, 5))
    trace = run([a], 2, 1, {1: 1}, {(1, 1): 2, (1, 2): 5},
                20, {1: (0,)}, {1: (4,)})
    be = trace.kind("budget_exceeded")
    assert [(e[1], e[2], e[3]) for e in be] == [(2, 2, 1)]
    comp = trace.kind("complete")[0]
    assert (comp[1], comp[2], comp[8]) == (4, 2, 0)
    assert slots_of(trace) == [
        (0, 2, (("J", 1, 1),)),
        (2, 4, (("J", 1, 1),)),
        (4, 20, ()),
    ]
    assert compute_l_intervals(trace) == [(0, 2, 1), (2, 20, 2)]


def cascade_setup(protocol):
    a = MCTask(id=1, T=20, D=20, L=2, C=(2, 4, 4))
    b = MCTask(id=2, T=20, D=20, L=3, C=(2, 2, 5))
    v = MCTask(id=3, T=20, D=20, L=1, C=(5, 5, 5))
    wt = {(1, 1): 2, (1, 2): 4, (2, 1): 4, (2, 2): 4, (2, 3): 9, (3, 1): 11}
    return run([a, b, v], 3, 2, {1: 1, 2: 2, 3: 3}, wt,
               20, {1: (0,), 2: (0,), 3: (0,)}, {1: (3,), 2: (4,), 3: (5,)},
               protocol=protocol)


def test_same_instant_cascade_two_levels():
    trace = cascade_setup("naive")
    be = trace.kind("budget_exceeded")
    assert [(e[1], e[2], e[3]) for e in be] == [(2, 2, 1), (2, 3, 2)]
    assert compute_l_intervals(trace) == [(0, 2, 1), (2, 20, 3)]
    comps = {(e[3], e[4]): (e[1], e[8]) for e in trace.kind("complete")}
    # the tripping task's own job outlived the cascade as a rem-job
    assert comps[(1, 1)] == (3, 1)
    assert comps[(2, 1)] == (4, 0)
    assert comps[(3, 1)] == (8, 1)


def test_drop_protocol_never_runs_rem_jobs():
    trace = cascade_setup("drop")
    drops = trace.kind("job_dropped")
    assert [(e[1], e[2], e[3], e[5]) for e in drops] == [
        (2, 2, 3, "imcr"), (2, 3, 1, "imcr")]
    assert all(slot[0] == "J"
               for e in trace.kind("sched") for slot in e[4])
    comps = [(e[3], e[8]) for e in trace.kind("complete")]
    assert comps == [(2, 0)]


def test_model_violation_on_execution_contract_breach():
    a = MCTask(id=1, T=10, D=10, L=1, C=(2,))
    ts = TaskSet(tasks=(a,), levels=1)
    sc = Scenario(horizon=10, arrivals={1: (0,)}, exec_times={1: (5,)},
                  dmcr_requests=())
    with pytest.raises(ModelViolation):
        simulate(ts, Platform(m=1), PriorityAssignment(ranks={1: 1}),
                 {(1, 1): 2}, sc)


# ---------------------------------------------------------------------------
# rem-job service


def test_naive_rem_runs_below_every_enabled_task():
    a = MCTask(id=1, T=30, D=30, L=2, C=(2, 4))
    v = MCTask(id=2, T=30, D=30, L=1, C=(4, 4))
    e = MCTask(id=3, T=30, D=30, L=2, C=(2, 2))
    wt = {(1, 1): 2, (1, 2): 4, (2, 1): 8, (3, 1): 2, (3, 2): 2}
    trace = run([a, v, e], 2, 1, {1: 1, 3: 2, 2: 3}, wt,
                30, {1: (0,), 2: (0,), 3: (5,)}, {1: (4,), 2: (4,), 3: (2,)},
                protocol="naive")
    assert slots_of(trace) == [
        (0, 2, (("J", 1, 1),)),
        (2, 4, (("J", 1, 1),)),
        (4, 5, (("R", 2, 1),)),
        (5, 7, (("J", 3, 1),)),
        (7, 10, (("R", 2, 1),)),
        (10, 30, ()),
    ]
    comp_v = [e2 for e2 in trace.kind("complete") if e2[3] == 2][0]
    assert (comp_v[1], comp_v[8]) == (10, 1)


def test_rem_order_edf_versus_srpt():
    a = MCTask(id=1, T=30, D=30, L=2, C=(2, 4))
    v1 = MCTask(id=2, T=30, D=20, L=1, C=(2, 2))
    v2 = MCTask(id=3, T=28, D=15, L=1, C=(3, 3))
    wt = {(1, 1): 2, (1, 2): 4, (2, 1): 6, (3, 1): 9}
    common = dict(
        levels=2, m=1, ranks={1: 1, 2: 2, 3: 3}, wt=wt, horizon=30,
        arrivals={1: (0,), 2: (0,), 3: (0,)},
        execs={1: (4,), 2: (2,), 3: (3,)})

    def completion_order(rem_order):
        trace = run([a, v1, v2], common["levels"], common["m"],
                    common["ranks"], common["wt"], common["horizon"],
                    common["arrivals"], common["execs"],
                    protocol="naive", rem_order=rem_order)
        return [(e[3], e[1]) for e in trace.kind("complete") if e[8]]

    # earliest deadline first: v2 (d=15) before v1 (d=20)
    assert completion_order("edf") == [(3, 7), (2, 9)]
    assert completion_order("crit-edf") == [(3, 7), (2, 9)]
    # shortest remaining first: v1 (2 left) before v2 (3 left)
    assert completion_order("srpt") == [(2, 6), (3, 9)]


def test_crit_edf_prefers_higher_criticality_rem_jobs():
    # three-level set: the mid-criticality victim outranks the low one in
    # the rem pool even though its deadline is later
    a = MCTask(id=1, T=30, D=30, L=3, C=(2, 2, 6))
    v_mid = MCTask(id=2, T=30, D=28, L=2, C=(2, 2, 2))
    v_lo = MCTask(id=3, T=30, D=20, L=1, C=(2, 2, 2))
    wt = {(1, 1): 2, (1, 2): 2, (1, 3): 6, (2, 1): 4, (2, 2): 4, (3, 1): 6}
    trace = run([a, v_mid, v_lo], 3, 1, {1: 1, 2: 2, 3: 3}, wt,
                30, {1: (0,), 2: (0,), 3: (0,)}, {1: (5,), 2: (2,), 3: (2,)},
                protocol="naive")
    # one job trips straight through two levels (equal budgets)
    be = trace.kind("budget_exceeded")
    assert [(e[1], e[2]) for e in be] == [(2, 2), (2, 3)]
    rem_comps = [(e[3], e[1]) for e in trace.kind("complete") if e[8]]
    assert rem_comps == [(2, 7), (3, 9)]


def test_wcet_reclaim_ghost_carries_unused_budget():
    a = MCTask(id=1, T=30, D=30, L=2, C=(2, 6))
    v = MCTask(id=2, T=30, D=30, L=1, C=(3, 3))
    wt = {(1, 1): 2, (1, 2): 6, (2, 1): 5}
    trace = run([a, v], 2, 1, {1: 1, 2: 2}, wt,
                30, {1: (0,), 2: (0,)}, {1: (4,), 2: (3,)},
                protocol="wcet-reclaim")
    # unused budget 6 - 4 = 2 hosts the rem-job for exactly two ticks
    assert slots_of(trace) == [
        (0, 2, (("J", 1, 1),)),
        (2, 4, (("J", 1, 1),)),
        (4, 6, (("G", 1, 1, 2, 1),)),
        (6, 7, (("R", 2, 1),)),
        (7, 30, ()),
    ]
    comp_v = [e for e in trace.kind("complete") if e[3] == 2][0]
    assert (comp_v[1], comp_v[8]) == (7, 1)


def test_wcrt_simulate_ghost_occupies_response_window():
    a = MCTask(id=1, T=30, D=30, L=2, C=(2, 6))
    v = MCTask(id=2, T=30, D=30, L=1, C=(5, 5))
    wt = {(1, 1): 2, (1, 2): 8, (2, 1): 7}
    trace = run([a, v], 2, 1, {1: 1, 2: 2}, wt,
                30, {1: (0,), 2: (0,)}, {1: (5,), 2: (5,)},
                protocol="wcrt-simulate")
    # finished at 5, bound ends at r + R(2) = 0 + 8: ghost spans [5, 8)
    assert slots_of(trace) == [
        (0, 2, (("J", 1, 1),)),
        (2, 5, (("J", 1, 1),)),
        (5, 8, (("G", 1, 1, 2, 1),)),
        (8, 10, (("R", 2, 1),)),
        (10, 30, ()),
    ]


def test_nested_overrun_kills_ghosts_and_merges_pools():
    a = MCTask(id=1, T=30, D=30, L=3, C=(2, 4, 6))
    e = MCTask(id=2, T=30, D=30, L=2, C=(3, 5, 5))
    v = MCTask(id=3, T=30, D=30, L=1, C=(6, 6, 6))
    wt = {(1, 1): 2, (1, 2): 4, (1, 3): 6, (2, 1): 8, (2, 2): 10, (3, 1): 15}
    trace = run([a, e, v], 3, 2, {1: 1, 2: 2, 3: 3}, wt,
                30, {1: (0,), 2: (0,), 3: (0,)}, {1: (5,), 2: (3,), 3: (6,)},
                protocol="wcet-reclaim")
    be = trace.kind("budget_exceeded")
    assert [(e2[1], e2[2], e2[3]) for e2 in be] == [(2, 2, 1), (4, 3, 1)]
    # the ghost (unused budget 2) hosts the rem-job for one tick only:
    # the nested transition at t=4 kills it with budget remaining
    assert slots_of(trace) == [
        (0, 2, (("J", 1, 1), ("J", 2, 1))),
        (2, 3, (("J", 1, 1), ("J", 2, 1))),
        (3, 4, (("J", 1, 1), ("G", 2, 1, 3, 1))),
        (4, 5, (("J", 1, 1), ("R", 3, 1))),
        (5, 9, (("R", 3, 1),)),
        (9, 30, ()),
    ]
    comp_v = [e2 for e2 in trace.kind("complete") if e2[3] == 3][0]
    assert (comp_v[1], comp_v[8]) == (9, 1)


def test_unfilled_ghost_slot_is_retired():
    # ghost and the pool's only rem-job are dispatched together: the ghost
    # finds no job to host and is retired; no ghost slot ever appears
    a = MCTask(id=1, T=30, D=30, L=2, C=(2, 6))
    v = MCTask(id=2, T=30, D=30, L=1, C=(6, 6))
    wt = {(1, 1): 2, (1, 2): 6, (2, 1): 8}
    trace = run([a, v], 2, 2, {1: 1, 2: 2}, wt,
                30, {1: (0,), 2: (0,)}, {1: (4,), 2: (6,)},
                protocol="wcet-reclaim")
    kinds = [slot[0] for e in trace.kind("sched") for slot in e[4]]
    assert "G" not in kinds
    assert slots_of(trace) == [
        (0, 2, (("J", 1, 1), ("J", 2, 1))),
        (2, 4, (("J", 1, 1), ("R", 2, 1))),
        (4, 6, (("R", 2, 1),)),
        (6, 30, ()),
    ]
    comp_v = [e for e in trace.kind("complete") if e[3] == 2][0]
    assert (comp_v[1], comp_v[8]) == (6, 1)


# ---------------------------------------------------------------------------
# level-decrease requests


def test_one_link_chain_re_enables_at_qualifying_completion():
    a = MCTask(id=1, T=10, D=10, L=2, C=(2, 4))
    v = MCTask(id=2, T=10, D=10, L=1, C=(2, 2))
    wt = {(1, 1): 2, (1, 2): 4, (2, 1): 4}
    trace = run([a, v], 2, 1, {1: 1, 2: 2}, wt,
                20, {1: (0, 10), 2: (0, 10)}, {1: (3, 2), 2: (1, 1)},
                reqs=((5, 1),))
    assert [(e[1], e[3]) for e in trace.kind("dmcr_requested")] == [(5, 1)]
    assert [(e[1], e[3], e[4]) for e in trace.kind("chain_advance")] == [(12, 1, 2)]
    re_en = trace.kind("re_enabled")
    assert [(e[1], e[2], e[3]) for e in re_en] == [(12, 1, (2,))]
    assert compute_l_intervals(trace) == [(0, 2, 1), (2, 12, 2), (12, 20, 1)]


def test_two_link_chain_walks_priority_order():
    h1 = MCTask(id=1, T=10, D=10, L=2, C=(2, 4))
    h2 = MCTask(id=2, T=12, D=12, L=2, C=(3, 3))
    v = MCTask(id=3, T=8, D=8, L=1, C=(1, 1))
    wt = {(1, 1): 2, (1, 2): 4, (2, 1): 5, (2, 2): 7, (3, 1): 8}
    trace = run([h1, h2, v], 2, 1, {1: 1, 2: 2, 3: 3}, wt,
                20, {1: (0, 10), 2: (0, 12), 3: (0, 8, 16)},
                {1: (3, 2), 2: (3, 3), 3: (1, 1, 1)},
                reqs=((4, 1),))
    # second-ranked task completed at 6, before the first-ranked qualified:
    # the chain must not advance out of order
    advances = [(e[1], e[3]) for e in trace.kind("chain_advance")]
    assert advances == [(12, 1), (15, 2)]
    assert [(e[1], e[3]) for e in trace.kind("re_enabled")] == [(15, (3,))]
    drops = [(e[1], e[3], e[5]) for e in trace.kind("job_dropped")]
    assert (8, 3, "suspended_arrival") in drops
    # the re-enabled task's next arrival is released normally
    rel_v = [e for e in trace.kind("release") if e[3] == 3]
    assert [(e[1], e[2]) for e in rel_v] == [(0, 1), (16, 1)]


def test_chain_aborts_on_overrun_and_request_is_not_retried():
    a = MCTask(id=1, T=15, D=15, L=3, C=(2, 3, 5))
    b = MCTask(id=2, T=12, D=12, L=2, C=(2, 2, 2))
    v = MCTask(id=3, T=10, D=10, L=1, C=(1, 1, 1))
    wt = {(1, 1): 2, (1, 2): 3, (1, 3): 5, (2, 1): 4, (2, 2): 4, (3, 1): 6}
    trace = run([a, b, v], 3, 1, {1: 1, 2: 2, 3: 3}, wt,
                24, {1: (0, 15), 2: (0, 12), 3: (0, 10, 20)},
                {1: (3, 4), 2: (2, 2), 3: (1, 1, 1)},
                reqs=((6, 1),))
    assert [(e[1], e[2], e[3]) for e in trace.kind("chain_aborted")] == [(18, 3, 0)]
    assert trace.kind("re_enabled") == []
    assert trace.kind("chain_advance") == []
    assert compute_l_intervals(trace) == [(0, 2, 1), (2, 18, 2), (18, 24, 3)]


def test_request_intake_deferred_while_rem_pool_nonempty():
    a = MCTask(id=1, T=12, D=12, L=2, C=(2, 4))
    v = MCTask(id=2, T=12, D=12, L=1, C=(4, 4))
    wt = {(1, 1): 2, (1, 2): 4, (2, 1): 6}
    trace = run([a, v], 2, 1, {1: 1, 2: 2}, wt,
                24, {1: (0, 12), 2: (0, 12)}, {1: (3, 2), 2: (4, 4)},
                reqs=((4, 1),), protocol="naive")
    assert [(e[1], e[3]) for e in trace.kind("dmcr_requested")] == [(4, 1)]
    comp_v = [e for e in trace.kind("complete") if e[3] == 2][0]
    assert (comp_v[1], comp_v[8]) == (7, 1)
    # chain could only start once the pool drained at t=7
    assert [(e[1], e[3]) for e in trace.kind("chain_advance")] == [(14, 1)]
    assert [(e[1], e[2]) for e in trace.kind("re_enabled")] == [(14, 1)]


def test_request_targeting_current_or_higher_level_is_discarded():
    a = MCTask(id=1, T=10, D=10, L=2, C=(2, 2))
    wt = {(1, 1): 2, (1, 2): 2}
    trace = run([a], 2, 1, {1: 1}, wt,
                20, {1: (0, 10)}, {1: (2, 2)}, reqs=((5, 1),))
    assert len(trace.kind("dmcr_requested")) == 1
    assert trace.kind("chain_advance") == []
    assert trace.kind("re_enabled") == []
    assert compute_l_intervals(trace) == [(0, 20, 1)]


# ---------------------------------------------------------------------------
# input validation


def test_invalid_request_target_rejected():
    a = MCTask(id=1, T=10, D=10, L=2, C=(2, 2))
    with pytest.raises(InvalidTarget):
        run([a], 2, 1, {1: 1}, {(1, 1): 2, (1, 2): 2},
            20, {1: (0,)}, {1: (2,)}, reqs=((5, 2),))


def test_incomplete_response_table_rejected():
    a = MCTask(id=1, T=10, D=10, L=2, C=(2, 2))
    with pytest.raises(InconsistentInputs):
        run([a], 2, 1, {1: 1}, {(1, 1): 2}, 20, {1: (0,)}, {1: (2,)})


def test_assignment_must_cover_taskset():
    a = MCTask(id=1, T=10, D=10, L=1, C=(2,))
    b = MCTask(id=2, T=10, D=10, L=1, C=(2,))
    with pytest.raises(InconsistentInputs):
        run([a, b], 1, 1, {1: 1}, {(1, 1): 2, (2, 1): 4},
            20, {1: (0,), 2: (0,)}, {1: (2,), 2: (2,)})


# ---------------------------------------------------------------------------
# trace serialization


def rich_trace():
    a = MCTask(id=1, T=30, D=30, L=3, C=(2, 4, 6))
    e = MCTask(id=2, T=30, D=30, L=2, C=(3, 5, 5))
    v = MCTask(id=3, T=30, D=30, L=1, C=(6, 6, 6))
    wt = {(1, 1): 2, (1, 2): 4, (1, 3): 6, (2, 1): 8, (2, 2): 10, (3, 1): 15}
    return run([a, e, v], 3, 2, {1: 1, 2: 2, 3: 3}, wt,
               30, {1: (0,), 2: (0,), 3: (0,)}, {1: (5,), 2: (3,), 3: (6,)},
               protocol="wcet-reclaim")


def test_jsonl_roundtrip_preserves_events():
    trace = rich_trace()
    back = trace_from_jsonl(trace.to_jsonl())
    assert back.events == trace.events
    assert (back.horizon, back.m, back.levels) == (30, 2, 3)
    assert (back.protocol, back.rem_order) == ("wcet-reclaim", "crit-edf")


def test_jsonl_preempt_lines_for_interrupted_entities():
    a = MCTask(id=1, T=30, D=30, L=2, C=(2, 4))
    v = MCTask(id=2, T=30, D=30, L=1, C=(4, 4))
    e = MCTask(id=3, T=30, D=30, L=2, C=(2, 2))
    wt = {(1, 1): 2, (1, 2): 4, (2, 1): 8, (3, 1): 2, (3, 2): 2}
    trace = run([a, v, e], 2, 1, {1: 1, 3: 2, 2: 3}, wt,
                30, {1: (0,), 2: (0,), 3: (5,)}, {1: (4,), 2: (4,), 3: (2,)},
                protocol="naive")
    lines = trace.to_jsonl().splitlines()
    preempts = [ln for ln in lines if '"preempt"' in ln]
    assert any('"task":2' in ln and '"t":5' in ln for ln in preempts)


def test_simulation_is_deterministic():
    t1 = rich_trace()
    t2 = rich_trace()
    assert t1.to_jsonl() == t2.to_jsonl()


# ---------------------------------------------------------------------------
# integration: simulated traces satisfy the independent checkers


@pytest.mark.parametrize("protocol", ["drop", "naive", "wcet-reclaim",
                                      "wcrt-simulate"])
def test_checkers_hold_on_generated_runs(protocol):
    params = GenParams(n_tasks=4, levels=2, total_util=0.6,
                       period_range=(8, 16), ensure_overrunnable=True)
    found = 0
    seed = 0
    while found < 3:
        seed += 1
        try:
            ts, platform = gen_taskset(params, seed)
        except Infeasible:
            continue
        res = opa_assign(ts, platform.m)
        if not res.schedulable:
            continue
        found += 1
        horizon = 15 * max(t.T for t in ts.tasks)
        for i in range(5):
            sc = gen_scenario(ts, horizon, child_seed(seed, i),
                              exec_model="overrun")
            cfg = ProtocolConfig(protocol=protocol)
            trace = simulate(ts, platform, res.assignment, res.wcrt_table,
                             sc, cfg)
            feas = check_feasibility(trace, ts)
            assert feas.ok, (seed, i, feas.violations)
            per = check_periodicity(trace, ts, sc)
            assert per.ok, (seed, i, per.violations)
            resp = check_response_bounds(trace, res.wcrt_table, ts)
            assert resp.ok, (seed, i, resp.violations)
