"""Engine behaviour: routing, state tiers, modes, watchdog, lifecycle."""

import random
import threading

import pytest

from orchestra.behaviour import parse_behaviour
from orchestra.correlation import CorrelationConfig, CorrelationFunction, Message
from orchestra.deployment import Interface, MessageType, OperationDecl
from orchestra.engine import Engine, SEQUENTIAL
from orchestra.errors import Fault
from orchestra.state import EMPTY, State, UNDEFINED


def iface(**ops) -> Interface:
    decls = {}
    for name, kind in ops.items():
        decls[name] = OperationDecl(name=name, kind=kind)
    return Interface(decls)


def corr(**functions) -> CorrelationConfig:
    return CorrelationConfig({op: CorrelationFunction(m) for op, m in functions.items()})


@pytest.fixture
def engines():
    started = []

    def make(**kw) -> Engine:
        kw.setdefault("interface", iface())
        e = Engine(**kw)
        started.append(e)
        return e.start()

    yield make
    for e in started:
        if e.final_report is None:
            e.stop()


def test_firing_session_runs_without_input(engines):
    b = parse_behaviour({"assign": ["a", "1"]})
    e = engines(behaviour=b)
    assert e.wait_all_finished(2.0)
    sid = e.session_ids()[0]
    status, completion, local = e.session_view(sid)
    assert completion.kind == "success"
    assert local == State({"a": 1})


def test_no_sessions_until_initiator_message(engines):
    b = parse_behaviour({"root": {"receive": {"op": "open", "into": ""}},
                         "firing": False, "initiators": ["open"]})
    e = engines(behaviour=b, interface=iface(open="OneWay"))
    assert e.session_ids() == []
    out = e.submit(Message("open", State({"id": 7})))
    assert out.kind == "created"
    assert e.wait_all_finished(2.0)


def test_create_binds_correlation_into_fresh_local(engines):
    b = parse_behaviour({"root": {"receive": {"op": "open", "into": "m"}},
                         "firing": False, "initiators": ["open"]})
    e = engines(behaviour=b, interface=iface(open="OneWay"),
                correlation=corr(open={"id": "sid"}))
    out = e.submit(Message("open", State({"id": 7})))
    assert out.kind == "created"
    e.wait_all_finished(2.0)
    _, completion, local = e.session_view(out.session_id)
    assert local.lookup("sid") == 7
    assert local.lookup("m_id") == 7


def test_followup_routed_to_bound_session(engines):
    doc = {"root": {"seq": [{"receive": {"op": "open", "into": ""}},
                            {"receive": {"op": "put", "into": "p"}}]},
           "firing": False, "initiators": ["open"]}
    e = engines(behaviour=parse_behaviour(doc),
                interface=iface(open="OneWay", put="OneWay"),
                correlation=corr(open={"id": "sid"}, put={"id": "sid"}))
    first = e.submit(Message("open", State({"id": 7})))
    assert first.kind == "created"
    second = e.submit(Message("put", State({"id": 7, "v": 1})))
    assert second.kind == "delivered"
    assert second.session_id == first.session_id
    assert e.wait_all_finished(2.0)


def test_unmatched_non_initiator_rejected(engines):
    b = parse_behaviour({"root": {"receive": {"op": "open", "into": ""}},
                         "firing": False, "initiators": ["open"]})
    e = engines(behaviour=b, interface=iface(open="OneWay", put="OneWay"),
                correlation=corr(open={"id": "sid"}, put={"id": "sid"}))
    out = e.submit(Message("put", State({"id": 9})))
    assert out.kind == "rejected"
    assert out.fault == "CorrelationError"


def test_undeclared_operation_rejected(engines):
    b = parse_behaviour({"assign": ["a", "1"]})
    e = engines(behaviour=b)
    out = e.submit(Message("mystery", EMPTY))
    assert out.kind == "rejected"
    assert out.fault == "UnknownOperation"


def test_sequential_firing_runs_before_queued_initiators(engines):
    doc = {"root": {"seq": [{"receive": {"op": "open", "into": ""}},
                            {"assign": ["w", "3"]},
                            {"while": {"cond": "w > 0", "body": {"assign": ["w", "w - 1"]}}}]},
           "firing": True, "initiators": ["open"]}
    e = engines(behaviour=parse_behaviour(doc), interface=iface(open="OneWay"),
                correlation=corr(open={"id": "sid"}), mode=SEQUENTIAL, log_steps=True)
    # correlation binds on delivery, so the firing session takes id=1 and the
    # other two messages must create sessions that wait behind it
    o1 = e.submit(Message("open", State({"id": 1})))
    o2 = e.submit(Message("open", State({"id": 2})))
    o3 = e.submit(Message("open", State({"id": 3})))
    assert o1.kind == "delivered"
    assert o2.kind == o3.kind == "created"
    assert e.wait_all_finished(5.0)
    starts = [r["session"] for r in e.events if r["event"] == "session_started"]
    assert starts == [1, o2.session_id, o3.session_id]
    finishes = [r["session"] for r in e.events if r["event"] == "session_finished"]
    order = [r for r in e.events if r["event"] in ("session_started", "session_finished")]
    first_finish = next(i for i, r in enumerate(order) if r["event"] == "session_finished")
    later_starts = [r for r in order[:first_finish] if r["event"] == "session_started"]
    assert [r["session"] for r in later_starts] == [1]
    assert finishes[0] == 1


def test_sequential_steps_never_interleave(engines):
    doc = {"root": {"seq": [{"assign": ["a", "1"]}, {"assign": ["b", "2"]},
                            {"assign": ["c", "a + b"]}]},
           "firing": False, "initiators": ["kick"]}
    e = engines(behaviour=parse_behaviour(doc),
                interface=iface(kick="OneWay"), mode=SEQUENTIAL, log_steps=True)
    for i in range(4):
        e.submit(Message("kick", State({"n": i})))
    assert e.wait_all_finished(5.0)
    step_sessions = [r["session"] for r in e.events if r["event"] == "step"]
    seen_done = set()
    current = None
    for sid in step_sessions:
        if sid != current:
            assert sid not in seen_done, "a session stepped again after another ran"
            if current is not None:
                seen_done.add(current)
            current = sid


def test_queued_outcome_for_created_but_not_started(engines):
    doc = {"root": {"seq": [{"receive": {"op": "open", "into": ""}},
                            {"receive": {"op": "put", "into": ""}}]},
           "firing": True, "initiators": ["open"]}
    # firing session blocks forever on receive(open) with no message sent to
    # it: hold the engine by never submitting a matching open for it
    e = engines(behaviour=parse_behaviour(doc),
                interface=iface(open="OneWay", put="OneWay"),
                correlation=corr(open={"id": "sid"}, put={"id": "sid"}),
                mode=SEQUENTIAL)
    # the firing session is active and blocked; a new session is created
    # behind it and messages routed to that session report "queued"
    created = e.submit(Message("open", State({"id": 1})))
    assert created.kind == "delivered"  # firing session matched (sid unbound)
    created2 = e.submit(Message("open", State({"id": 2})))
    assert created2.kind == "created"
    followup = e.submit(Message("put", State({"id": 2})))
    assert followup.kind == "queued"
    assert followup.session_id == created2.session_id


def test_global_state_shared_and_atomic(engines):
    e = engines(behaviour=parse_behaviour({"assign": ["a", "1"]}))
    assert e.global_read("x") is UNDEFINED
    e.global_write("x", 5)
    assert e.global_read("x") == 5

    threads = [threading.Thread(target=lambda: [e.global_add("counter", 1) for _ in range(10)])
               for _ in range(10)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    sequential_sum = sum(1 for _ in range(100))
    assert e.global_read("counter") == sequential_sum


def test_global_add_type_fault(engines):
    e = engines(behaviour=parse_behaviour({"assign": ["a", "1"]}))
    e.global_write("s", "text")
    with pytest.raises(Fault) as err:
        e.global_add("s", 1)
    assert err.value.name == "TypeFault"


def test_state_tier_lifetimes(engines, tmp_path):
    store = str(tmp_path / "tier.json")
    b = parse_behaviour({"assign": ["a", "1"]})
    e1 = engines(behaviour=b, storage_path=store)
    e1.global_write("g", 1)
    e1.storage.put("k", 41)
    e1.storage.put("k", 42)
    e1.stop()
    assert e1.global_read("g") is UNDEFINED  # global dies with the engine

    e2 = engines(behaviour=b, storage_path=store)
    assert e2.global_read("g") is UNDEFINED
    assert e2.storage.get("k") == 42  # storage survives restart


def test_session_privacy(engines):
    doc = {"root": {"seq": [{"receive": {"op": "open", "into": ""}},
                            {"assign": ["secret", "sid * 10"]}]},
           "firing": False, "initiators": ["open"]}
    e = engines(behaviour=parse_behaviour(doc), interface=iface(open="OneWay"),
                correlation=corr(open={"id": "sid"}))
    a = e.submit(Message("open", State({"id": 1})))
    b = e.submit(Message("open", State({"id": 2})))
    assert e.wait_all_finished(2.0)
    _, _, local_a = e.session_view(a.session_id)
    _, _, local_b = e.session_view(b.session_id)
    assert local_a.lookup("secret") == 10
    assert local_b.lookup("secret") == 20
    assert local_a.lookup("sid") == 1 and local_b.lookup("sid") == 2


def test_stop_terminates_blocked_sessions(engines):
    b = parse_behaviour({"root": {"receive": {"op": "never", "into": ""}},
                         "firing": True, "initiators": ["never"]})
    e = engines(behaviour=b, interface=iface(never="OneWay"))
    report = e.stop()
    assert len(report) == 1
    assert list(report.values())[0].kind == "terminated"


def test_stop_runs_termination_handlers(engines):
    doc = {"scope": {"name": "s",
                     "body": {"receive": {"op": "never", "into": ""}},
                     "onTerminate": {"assign": ["cleaned", "1"]}}}
    b = parse_behaviour({"root": doc, "firing": True, "initiators": ["never"]})
    e = engines(behaviour=b, interface=iface(never="OneWay"))
    e.stop()
    sid = e.session_ids()[0]
    _, completion, local = e.session_view(sid)
    assert completion.kind == "terminated"
    assert local.lookup("cleaned") == 1


def test_message_conservation_random_traces(engines):
    doc = {"root": {"seq": [{"receive": {"op": "open", "into": ""}},
                            {"receive": {"op": "put", "into": ""}}]},
           "firing": False, "initiators": ["open"]}
    rng = random.Random(11)
    e = engines(behaviour=parse_behaviour(doc),
                interface=iface(open="OneWay", put="OneWay"),
                correlation=corr(open={"id": "sid"}, put={"id": "sid"}),
                seed=5)
    counts = {"delivered": 0, "created": 0, "queued": 0, "rejected": 0}
    n = 200
    for _ in range(n):
        op = rng.choice(["open", "put"])
        out = e.submit(Message(op, State({"id": rng.randrange(6)})))
        counts[out.kind] += 1
    assert sum(counts.values()) == n
    assert counts["created"] >= 1
    routed_events = [r for r in e.events
                     if r["event"] in ("message_routed", "message_rejected")]
    assert len(routed_events) == n


def test_rr_double_receive_is_protocol_fault(engines):
    doc = {"root": {"seq": [{"receive": {"op": "ask", "into": "a"}},
                            {"while": {"cond": "a_n == 1", "body": {"receive": {"op": "ask", "into": "b"}}}},
                            {"reply": {"op": "ask", "from": {}}}]},
           "firing": False, "initiators": ["ask"]}
    e = engines(behaviour=parse_behaviour(doc),
                interface=Interface({"ask": OperationDecl("ask", "RequestResponse",
                                                          MessageType(), MessageType())}))
    out = e.submit(Message("ask", State({"n": 1})))
    e.submit(Message("ask", State({"n": 1})))
    e.wait_all_finished(2.0)
    _, completion, _ = e.session_view(out.session_id)
    assert completion.kind == "fault"
    assert completion.fault == "ProtocolFault"


class _SilentPort:
    """An output port whose solicits never answer, for watchdog tests."""

    def solicit_begin(self, op, payload, on_result):
        return "1"

    def notify(self, op, payload):
        pass


def test_watchdog_reports_sequential_deadlock(engines):
    doc = {"root": {"seq": [{"solicit": {"port": "out", "op": "hang",
                                         "payload": {}, "into": ""}}]},
           "firing": True, "initiators": ["open"]}
    e = engines(behaviour=parse_behaviour(doc), interface=iface(open="OneWay"),
                correlation=corr(open={"id": "sid"}),
                mode=SEQUENTIAL, outputs={"out": _SilentPort()},
                watchdog_grace=0.1)
    d1 = e.submit(Message("open", State({"id": 1})))  # binds the firing session
    d2 = e.submit(Message("open", State({"id": 2})))  # stuck behind it
    assert d1.kind == "delivered"
    assert d2.kind == "created"
    assert e.wait_deadlock(3.0)
    report = e.deadlock_reports[0]
    assert report["queued"] == [d2.session_id], report


def test_no_deadlock_report_when_idle_and_finished(engines):
    b = parse_behaviour({"assign": ["a", "1"]})
    e = engines(behaviour=b, watchdog_grace=0.05)
    e.wait_all_finished(2.0)
    import time
    time.sleep(0.3)
    assert e.deadlock_reports == []
