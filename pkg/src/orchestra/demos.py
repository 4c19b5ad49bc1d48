"""Self-contained scenario demos, each a small system built and asserted.

Every demo constructs its containers from configuration data embedded
right here, runs an end-to-end exchange over loopback sockets and local
channels, and asserts the transcript it expects.  They double as the
executable documentation for the architectural patterns:

* ``rr-vs-callback``: the same answer obtained through a Request-Response
  and through a callback pair, differing only in which side needs ports;
* ``web``: GET/POST with a correlation token playing the session cookie;
* ``slave-mobility``: a workflow downloads the helper it needs and embeds
  it next to itself;
* ``master-mobility``: a device downloads the workflow and runs it against
  its own local functionality;
* ``sos``: one embedded private service per client, reachable through a
  per-client redirect resource;
* ``deadlock``: the same call cycle hanging a sequential engine and
  sailing through a concurrent one.

All scheduling is seeded; a demo is reproducible run to run.
"""

from __future__ import annotations

import json
import socket as _socket
import time

from .composition import ServiceDef, load_container
from .deployment import Connection, sync_request
from .state import EMPTY, State


def free_port() -> int:
    s = _socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


def _quote(text: str) -> str:
    """Escape arbitrary text as a single-quoted expression literal."""
    return "'" + text.replace("\\", "\\\\").replace("'", "\\'") + "'"


def dispatch_on(var: str, if_defined, if_undefined) -> dict:
    """Branch a shared behaviour on whether a correlation variable is bound.

    Sessions created by a correlated message have the variable bound;
    a firing session does not, so probing it raises UndefinedVariable and
    the handler runs the firing path instead.
    """
    return {"scope": {
        "name": "dispatch",
        "body": {"seq": [{"assign": ["dispatch_probe", var]}] + [if_defined]},
        "faults": {"UndefinedVariable": if_undefined},
    }}


def calculator_def(location: str = "local://calcsvc", name: str = "calcsvc") -> dict:
    """A one-shot calculator: one request, one session, one reply.

    Each call carries a distinct ``rid`` so concurrent requests never
    correlate to an existing session.
    """
    dispatch: dict = {"throw": "UnknownOperation"}
    for op_name, expr in [("div", "m_a / m_b"), ("mul", "m_a * m_b"),
                          ("sub", "m_a - m_b"), ("sum", "m_a + m_b")]:
        dispatch = {"if": {"cond": f"m_op == '{op_name}'",
                           "then": {"reply": {"op": "calc", "from": {"r": expr}}},
                           "else": dispatch}}
    return {
        "name": name,
        "interface": {
            "calc": {"kind": "RequestResponse",
                     "request": {"op": "string", "a": "int", "b": "int", "rid": "any"},
                     "response": {"r": "int"}},
        },
        "behaviour": {"seq": [{"receive": {"op": "calc", "into": "m"}}, dispatch]},
        "engine": {"mode": "concurrent", "firing": False, "initiators": ["calc"]},
        "correlation": {"calc": {"rid": "rid"}},
        "inputPorts": [{"name": "in", "location": location, "interface": ["calc"]}],
    }


class DemoFailure(AssertionError):
    pass


def _expect(condition: bool, transcript: list[str], line: str) -> None:
    if not condition:
        raise DemoFailure(f"expected: {line}")
    transcript.append(line)


# ---------------------------------------------------------------------------
# rr-vs-callback
# ---------------------------------------------------------------------------

def demo_rr_vs_callback(seed: int = 0) -> list[str]:
    transcript: list[str] = []

    # (a) plain Request-Response: only the answering side has a port
    b_port = free_port()
    responder = {
        "name": "responder",
        "interface": {"ask": {"kind": "RequestResponse",
                              "request": {"q": "string"}, "response": {"a": "string"}}},
        "behaviour": {"seq": [{"receive": {"op": "ask", "into": "m"}},
                              {"reply": {"op": "ask", "from": {"a": "m_q + '!'"}}}]},
        "engine": {"mode": "concurrent", "firing": False, "initiators": ["ask"]},
        "inputPorts": [{"name": "in", "location": f"socket://127.0.0.1:{b_port}",
                        "interface": ["ask"]}],
    }
    rr_client = {
        "name": "client",
        "interface": {},
        "behaviour": {"seq": [{"solicit": {"port": "toB", "op": "ask",
                                           "payload": {"q": "'ping'"}, "into": "resp"}}]},
        "engine": {"mode": "concurrent", "firing": True, "initiators": []},
        "outputPorts": [{"name": "toB", "location": f"socket://127.0.0.1:{b_port}",
                         "interface": {"ask": {"kind": "SolicitResponse",
                                               "request": {"q": "string"},
                                               "response": {"a": "string"}}}}],
    }
    c_b = load_container({"services": [responder]}, seed=seed, name="rr-server")
    c_a = load_container({"services": [rr_client]}, seed=seed, name="rr-client")
    try:
        _expect(c_a.services["client"].engine.wait_all_finished(5.0),
                transcript, "rr: client session completed")
        sid = c_a.services["client"].engine.session_ids()[0]
        _, completion, local = c_a.services["client"].engine.session_view(sid)
        rr_answer = local.lookup("resp_a")
        _expect(completion.kind == "success" and rr_answer == "ping!",
                transcript, f"rr: answer={rr_answer!r}")
        rr_input_ports = len(ServiceDef.from_json_obj(rr_client).input_ports)
        _expect(rr_input_ports == 0, transcript, "rr: client exposes no input port")
    finally:
        c_a.stop()
        c_b.stop()

    # (b) callback: both sides need a port
    cb_b_port, cb_a_port = free_port(), free_port()
    cb_responder = {
        "name": "responder",
        "interface": {"askCb": {"kind": "OneWay", "request": {"q": "string"}}},
        "behaviour": {"seq": [{"receive": {"op": "askCb", "into": "m"}},
                              {"notify": {"port": "back", "op": "answer",
                                          "payload": {"a": "m_q + '!'"}}}]},
        "engine": {"mode": "concurrent", "firing": False, "initiators": ["askCb"]},
        "inputPorts": [{"name": "in", "location": f"socket://127.0.0.1:{cb_b_port}",
                        "interface": ["askCb"]}],
        "outputPorts": [{"name": "back", "location": f"socket://127.0.0.1:{cb_a_port}",
                         "interface": {"answer": {"kind": "Notification",
                                                  "request": {"a": "string"}}}}],
    }
    cb_client = {
        "name": "client",
        "interface": {"answer": {"kind": "OneWay", "request": {"a": "string"}}},
        "behaviour": {"seq": [
            {"notify": {"port": "toB", "op": "askCb", "payload": {"q": "'ping'"}}},
            {"receive": {"op": "answer", "into": "resp"}},
        ]},
        "engine": {"mode": "concurrent", "firing": True, "initiators": []},
        "inputPorts": [{"name": "cb", "location": f"socket://127.0.0.1:{cb_a_port}",
                        "interface": ["answer"]}],
        "outputPorts": [{"name": "toB", "location": f"socket://127.0.0.1:{cb_b_port}",
                         "interface": {"askCb": {"kind": "Notification",
                                                 "request": {"q": "string"}}}}],
    }
    c_b2 = load_container({"services": [cb_responder]}, seed=seed, name="cb-server")
    c_a2 = load_container({"services": [cb_client]}, seed=seed, name="cb-client")
    try:
        _expect(c_a2.services["client"].engine.wait_all_finished(5.0),
                transcript, "callback: client session completed")
        sid = c_a2.services["client"].engine.session_ids()[0]
        _, completion, local = c_a2.services["client"].engine.session_view(sid)
        cb_answer = local.lookup("resp_a")
        _expect(completion.kind == "success" and cb_answer == "ping!",
                transcript, f"callback: answer={cb_answer!r}")
        cb_input_ports = len(ServiceDef.from_json_obj(cb_client).input_ports)
        _expect(cb_input_ports == 1, transcript, "callback: client exposes one input port")
        _expect(rr_answer == cb_answer, transcript, "both configurations delivered the same payload")
    finally:
        c_a2.stop()
        c_b2.stop()
    return transcript


# ---------------------------------------------------------------------------
# web
# ---------------------------------------------------------------------------

def demo_web(seed: int = 0) -> list[str]:
    transcript: list[str] = []
    port = free_port()
    server = {
        "name": "web",
        "interface": {
            "get": {"kind": "RequestResponse", "request": {"token": "string"},
                    "response": {"body": "string", "token": "string"}},
            "post": {"kind": "RequestResponse",
                     "request": {"token": "string", "data": "string"},
                     "response": {"count": "int"}},
        },
        "behaviour": {"seq": [
            {"receive": {"op": "get", "into": "g"}},
            {"reply": {"op": "get", "from": {"body": "'hello ' + g_token", "token": "g_token"}}},
            {"assign": ["count", "0"]},
            {"while": {"cond": "true", "body": {"seq": [
                {"receive": {"op": "post", "into": "p"}},
                {"assign": ["count", "count + 1"]},
                {"reply": {"op": "post", "from": {"count": "count"}}},
            ]}}},
        ]},
        "engine": {"mode": "concurrent", "firing": False, "initiators": ["get"]},
        "correlation": {"get": {"token": "sid"}, "post": {"token": "sid"}},
        "inputPorts": [{"name": "http", "location": f"socket://127.0.0.1:{port}",
                        "interface": ["get", "post"]}],
    }
    container = load_container({"services": [server]}, seed=seed, name="web")
    conn = Connection(container.connect(container.services["web"].listeners[0].bound_location))
    try:
        first = sync_request(conn, "get", State({"token": "tok-alpha"}))
        _expect(first.payload is not None and first.payload.lookup("token") == "tok-alpha",
                transcript, "first GET returns its session token")
        second = sync_request(conn, "get", State({"token": "tok-beta"}))
        _expect(second.payload.lookup("body") == "hello tok-beta",
                transcript, "second GET opens a second session")

        p1 = sync_request(conn, "post", State({"token": "tok-alpha", "data": "x"}))
        p2 = sync_request(conn, "post", State({"token": "tok-alpha", "data": "y"}))
        _expect((p1.payload.lookup("count"), p2.payload.lookup("count")) == (1, 2),
                transcript, "alpha session counts its own POSTs: 1 then 2")
        pb = sync_request(conn, "post", State({"token": "tok-beta", "data": "z"}))
        _expect(pb.payload.lookup("count") == 1,
                transcript, "beta session counts independently: 1")

        wrong = sync_request(conn, "post", State({"token": "tok-unknown", "data": "w"}))
        _expect(wrong.fault == "CorrelationError",
                transcript, "POST with an unknown token is rejected: CorrelationError")
    finally:
        conn.close()
        container.stop()
    return transcript


# ---------------------------------------------------------------------------
# slave-mobility
# ---------------------------------------------------------------------------

def _repository_def(name: str, op: str, documents: dict[str, str], port: int) -> dict:
    """A service answering fetch requests with service definitions as text."""
    branches: dict = {"throw": "UnknownResource"}
    for doc_name, doc_text in documents.items():
        branches = {"if": {"cond": f"f_name == {_quote(doc_name)}",
                           "then": {"reply": {"op": op, "from": {"service": _quote(doc_text)}}},
                           "else": branches}}
    return {
        "name": name,
        "interface": {op: {"kind": "RequestResponse", "request": {"name": "string"},
                           "response": {"service": "string"}}},
        "behaviour": {"seq": [{"receive": {"op": op, "into": "f"}}, branches]},
        "engine": {"mode": "concurrent", "firing": False, "initiators": [op]},
        "correlation": {op: {"name": "fname"}},
        "inputPorts": [{"name": "in", "location": f"socket://127.0.0.1:{port}",
                        "interface": [op]}],
    }


_SOLICIT_CONTROL = {
    "embed": {"kind": "SolicitResponse", "request": {"service": "string"},
              "response": {}},
    "unembed": {"kind": "SolicitResponse", "request": {"name": "string"}, "response": {}},
    "setRedirect": {"kind": "SolicitResponse",
                    "request": {"resource": "string", "target": "string"}, "response": {}},
}


def demo_slave_mobility(seed: int = 0) -> list[str]:
    transcript: list[str] = []
    repo_port = free_port()
    calc_doc = json.dumps(calculator_def(), separators=(",", ":"), sort_keys=True)
    repo = _repository_def("repo", "fetch", {"calculator": calc_doc}, repo_port)

    master = {
        "name": "master",
        "interface": {},
        "behaviour": {"seq": [
            {"solicit": {"port": "toRepo", "op": "fetch",
                         "payload": {"name": "'calculator'"}, "into": "got"}},
            {"solicit": {"port": "ctl", "op": "embed",
                         "payload": {"service": "got_service"}, "into": "e"}},
            {"solicit": {"port": "toCalc", "op": "calc",
                         "payload": {"op": "'sum'", "a": "2", "b": "3", "rid": "'r1'"},
                         "into": "ans"}},
        ]},
        "engine": {"mode": "concurrent", "firing": True, "initiators": []},
        "outputPorts": [
            {"name": "toRepo", "location": f"socket://127.0.0.1:{repo_port}",
             "interface": {"fetch": {"kind": "SolicitResponse",
                                     "request": {"name": "string"},
                                     "response": {"service": "string"}}}},
            {"name": "toCalc", "location": "local://calcsvc",
             "interface": {"calc": {"kind": "SolicitResponse",
                                    "request": {"op": "string", "a": "int", "b": "int",
                                                "rid": "any"},
                                    "response": {"r": "int"}}}},
            {"name": "ctl", "location": "local://_control", "interface": _SOLICIT_CONTROL},
        ],
    }
    c_repo = load_container({"services": [repo]}, seed=seed, name="repo")
    c_master = load_container({"services": [master]}, seed=seed, name="master")
    try:
        engine = c_master.services["master"].engine
        _expect(engine.wait_all_finished(5.0), transcript, "master work-flow completed")
        sid = engine.session_ids()[0]
        _, completion, local = engine.session_view(sid)
        _expect(completion.kind == "success", transcript, "master session succeeded")
        _expect("calcsvc" in c_master.embedded, transcript,
                "downloaded calculator is embedded in the master container")
        answer = local.lookup("ans_r")
        _expect(answer == 5, transcript, f"sum(2,3) through the embedded slave = {answer}")
        local_only = all(
            str(listener.port.location).startswith("local://")
            for listener in c_master.services["calcsvc"].listeners
        )
        _expect(local_only, transcript, "the slave listens on local transport only")
    finally:
        c_master.stop()
        c_repo.stop()
    return transcript


# ---------------------------------------------------------------------------
# master-mobility
# ---------------------------------------------------------------------------

def demo_master_mobility(seed: int = 0) -> list[str]:
    transcript: list[str] = []
    assist_port = free_port()

    workflow = {
        "name": "flow",
        "interface": {},
        "behaviour": {"seq": [
            {"solicit": {"port": "toSlave", "op": "pay",
                         "payload": {"amount": "30", "rid": "'garage'"}, "into": "p1"}},
            {"solicit": {"port": "toSlave", "op": "pay",
                         "payload": {"amount": "12", "rid": "'rental'"}, "into": "p2"}},
            {"notify": {"port": "toBoot", "op": "done", "payload": {"total": "30 + 12"}}},
        ]},
        "engine": {"mode": "concurrent", "firing": True, "initiators": []},
        "outputPorts": [
            {"name": "toSlave", "location": "local://paysvc",
             "interface": {"pay": {"kind": "SolicitResponse",
                                   "request": {"amount": "int", "rid": "any"},
                                   "response": {"receipt": "string"}}}},
            {"name": "toBoot", "location": "local://bootsvc",
             "interface": {"done": {"kind": "Notification", "request": {"total": "int"}}}},
        ],
    }
    flow_doc = json.dumps(workflow, separators=(",", ":"), sort_keys=True)
    assist = _repository_def("assist", "fetchFlow", {"recovery": flow_doc}, assist_port)

    payments = {
        "name": "payments",
        "interface": {"pay": {"kind": "RequestResponse",
                              "request": {"amount": "int", "rid": "any"},
                              "response": {"receipt": "string"}}},
        "behaviour": {"seq": [
            {"receive": {"op": "pay", "into": "m"}},
            {"reply": {"op": "pay", "from": {"receipt": "'paid:' + m_rid"}}},
        ]},
        "engine": {"mode": "concurrent", "firing": False, "initiators": ["pay"]},
        "correlation": {"pay": {"rid": "rid"}},
        "inputPorts": [{"name": "in", "location": "local://paysvc", "interface": ["pay"]}],
    }
    boot = {
        "name": "boot",
        "interface": {"done": {"kind": "OneWay", "request": {"total": "int"}}},
        "behaviour": {"seq": [
            {"solicit": {"port": "toAssist", "op": "fetchFlow",
                         "payload": {"name": "'recovery'"}, "into": "w"}},
            {"solicit": {"port": "ctl", "op": "embed",
                         "payload": {"service": "w_service"}, "into": "e"}},
            {"receive": {"op": "done", "into": "d"}},
        ]},
        "engine": {"mode": "concurrent", "firing": True, "initiators": []},
        "inputPorts": [{"name": "in", "location": "local://bootsvc", "interface": ["done"]}],
        "outputPorts": [
            {"name": "toAssist", "location": f"socket://127.0.0.1:{assist_port}",
             "interface": {"fetchFlow": {"kind": "SolicitResponse",
                                         "request": {"name": "string"},
                                         "response": {"service": "string"}}}},
            {"name": "ctl", "location": "local://_control", "interface": _SOLICIT_CONTROL},
        ],
    }

    c_assist = load_container({"services": [assist]}, seed=seed, name="assist")
    c_device = load_container({"services": [payments, boot]}, seed=seed, name="device")
    try:
        boot_engine = c_device.services["boot"].engine
        _expect(boot_engine.wait_all_finished(5.0), transcript,
                "device boot session completed")
        _, completion, local = boot_engine.session_view(boot_engine.session_ids()[0])
        _expect(completion.kind == "success", transcript, "boot session succeeded")
        _expect("flow" in c_device.embedded, transcript,
                "downloaded work-flow runs embedded on the device")
        total = local.lookup("d_total")
        _expect(total == 42, transcript, f"work-flow reported completion with total={total}")
        flow_engine = c_device.services["flow"].engine
        flow_engine.wait_all_finished(2.0)
        _, _, flow_local = flow_engine.session_view(flow_engine.session_ids()[0])
        receipts = (flow_local.lookup("p1_receipt"), flow_local.lookup("p2_receipt"))
        _expect(receipts == ("paid:garage", "paid:rental"), transcript,
                f"work-flow used the device's own payment functionality: {receipts}")
    finally:
        c_device.stop()
        c_assist.stop()
    return transcript


# ---------------------------------------------------------------------------
# sos
# ---------------------------------------------------------------------------

def _note_service_doc_template() -> tuple[str, ...]:
    """The per-client note service, split around its name placeholder."""
    placeholder = "zzPLACEHOLDERzz"
    doc = {
        "name": f"note_{placeholder}",
        "interface": {
            "put": {"kind": "RequestResponse", "request": {"v": "string"},
                    "response": {"ok": "bool"}},
            "get": {"kind": "RequestResponse", "request": {}, "response": {"v": "string"}},
        },
        "behaviour": {"while": {"cond": "true", "body": {"seq": [
            {"receive": {"op": "put", "into": "p"}},
            {"assign": ["stored", "p_v"]},
            {"reply": {"op": "put", "from": {"ok": "true"}}},
            {"receive": {"op": "get", "into": "g"}},
            {"reply": {"op": "get", "from": {"v": "stored"}}},
        ]}}},
        "engine": {"mode": "concurrent", "firing": True, "initiators": []},
        "inputPorts": [{"name": "in", "location": f"local://note_{placeholder}",
                        "interface": ["put", "get"]}],
    }
    text = json.dumps(doc, separators=(",", ":"), sort_keys=True)
    return tuple(text.split(placeholder))


def demo_sos(seed: int = 0) -> list[str]:
    transcript: list[str] = []
    repo_port, master_port, gateway_port = free_port(), free_port(), free_port()

    parts = _note_service_doc_template()
    pieces: list[str] = []
    for i, part in enumerate(parts):
        if i:
            pieces.append("f_client")
        pieces.append(_quote(part))
    template_expr = " + ".join(pieces)

    repo = {
        "name": "repo",
        "interface": {"fetchNote": {"kind": "RequestResponse",
                                    "request": {"client": "string"},
                                    "response": {"service": "string"}}},
        "behaviour": {"seq": [
            {"receive": {"op": "fetchNote", "into": "f"}},
            {"reply": {"op": "fetchNote", "from": {"service": template_expr}}},
        ]},
        "engine": {"mode": "concurrent", "firing": False, "initiators": ["fetchNote"]},
        "correlation": {"fetchNote": {"client": "cl"}},
        "inputPorts": [{"name": "in", "location": f"socket://127.0.0.1:{repo_port}",
                        "interface": ["fetchNote"]}],
    }

    master = {
        "name": "sosmaster",
        "interface": {"acquire": {"kind": "RequestResponse",
                                  "request": {"client": "string"},
                                  "response": {"resource": "string"}}},
        "behaviour": {"seq": [
            {"receive": {"op": "acquire", "into": "a"}},
            {"solicit": {"port": "toRepo", "op": "fetchNote",
                         "payload": {"client": "a_client"}, "into": "f"}},
            {"solicit": {"port": "ctl", "op": "embed",
                         "payload": {"service": "f_service"}, "into": "e"}},
            {"solicit": {"port": "ctl", "op": "setRedirect",
                         "payload": {"resource": "'note_' + a_client",
                                     "target": "'local://note_' + a_client"}, "into": "s"}},
            {"reply": {"op": "acquire", "from": {"resource": "'note_' + a_client"}}},
        ]},
        "engine": {"mode": "concurrent", "firing": False, "initiators": ["acquire"]},
        "correlation": {"acquire": {"client": "cl"}},
        "inputPorts": [{"name": "in", "location": f"socket://127.0.0.1:{master_port}",
                        "interface": ["acquire"]}],
        "outputPorts": [
            {"name": "toRepo", "location": f"socket://127.0.0.1:{repo_port}",
             "interface": {"fetchNote": {"kind": "SolicitResponse",
                                         "request": {"client": "string"},
                                         "response": {"service": "string"}}}},
            {"name": "ctl", "location": "local://_control", "interface": _SOLICIT_CONTROL},
        ],
    }

    c_repo = load_container({"services": [repo]}, seed=seed, name="sos-repo")
    c_master = load_container(
        {"services": [master], "gateway": f"socket://127.0.0.1:{gateway_port}",
         "redirects": {}},
        seed=seed, name="sos-master")
    acquire_conn = Connection(c_master.connect(
        c_master.services["sosmaster"].listeners[0].bound_location))
    gateway_conn = Connection(c_master.connect(c_master.gateway_location))
    try:
        r1 = sync_request(acquire_conn, "acquire", State({"client": "c1secret9"}))
        res1 = r1.payload.lookup("resource")
        r2 = sync_request(acquire_conn, "acquire", State({"client": "c2secret7"}))
        res2 = r2.payload.lookup("resource")
        _expect(res1 == "note_c1secret9" and res2 == "note_c2secret7" and res1 != res2,
                transcript, f"each client acquired a distinct private resource: {res1}, {res2}")

        ok1 = sync_request(gateway_conn, "put", State({"v": "alpha-data"}), resource=res1)
        ok2 = sync_request(gateway_conn, "put", State({"v": "beta-data"}), resource=res2)
        _expect(ok1.payload.lookup("ok") is True and ok2.payload.lookup("ok") is True,
                transcript, "both clients stored into their own resources")

        g1 = sync_request(gateway_conn, "get", EMPTY, resource=res1)
        g2 = sync_request(gateway_conn, "get", EMPTY, resource=res2)
        _expect(g1.payload.lookup("v") == "alpha-data" and g2.payload.lookup("v") == "beta-data",
                transcript, "each client reads back only its own data")

        probe = sync_request(gateway_conn, "get", EMPTY, resource="note_c2guessed")
        _expect(probe.fault == "UnknownResource",
                transcript, "guessing another client's resource name yields UnknownResource")
    finally:
        acquire_conn.close()
        gateway_conn.close()
        c_master.stop()
        c_repo.stop()
    return transcript


# ---------------------------------------------------------------------------
# deadlock
# ---------------------------------------------------------------------------

def _deadlock_system(mode: str, seed: int):
    a_port, b_port = free_port(), free_port()
    a_service = {
        "name": "alpha",
        "interface": {"newjob": {"kind": "RequestResponse",
                                 "request": {"rid": "int", "kind": "int"},
                                 "response": {"done": "bool"}}},
        "behaviour": dispatch_on(
            "kind",
            {"seq": [{"receive": {"op": "newjob", "into": "j"}},
                     {"reply": {"op": "newjob", "from": {"done": "true"}}}]},
            {"seq": [{"assign": ["kind", "0"]},
                     {"solicit": {"port": "toB", "op": "kick",
                                  "payload": {"n": "7"}, "into": "r"}},
                     {"assign": ["got", "r_ok"]}]},
        ),
        "engine": {"mode": mode, "firing": True, "initiators": ["newjob"]},
        "correlation": {"newjob": {"rid": "rid", "kind": "kind"}},
        "inputPorts": [{"name": "in", "location": f"socket://127.0.0.1:{a_port}",
                        "interface": ["newjob"]}],
        "outputPorts": [{"name": "toB", "location": f"socket://127.0.0.1:{b_port}",
                         "interface": {"kick": {"kind": "SolicitResponse",
                                                "request": {"n": "int"},
                                                "response": {"ok": "bool"}}}}],
    }
    b_service = {
        "name": "beta",
        "interface": {"kick": {"kind": "RequestResponse", "request": {"n": "int"},
                               "response": {"ok": "bool"}}},
        "behaviour": {"seq": [
            {"receive": {"op": "kick", "into": "k"}},
            {"solicit": {"port": "toA", "op": "newjob",
                         "payload": {"rid": "k_n", "kind": "1"}, "into": "j"}},
            {"reply": {"op": "kick", "from": {"ok": "j_done"}}},
        ]},
        "engine": {"mode": "concurrent", "firing": False, "initiators": ["kick"]},
        "correlation": {"kick": {"n": "kn"}},
        "inputPorts": [{"name": "in", "location": f"socket://127.0.0.1:{b_port}",
                        "interface": ["kick"]}],
        "outputPorts": [{"name": "toA", "location": f"socket://127.0.0.1:{a_port}",
                         "interface": {"newjob": {"kind": "SolicitResponse",
                                                  "request": {"rid": "int", "kind": "int"},
                                                  "response": {"done": "bool"}}}}],
    }
    c_b = load_container({"services": [b_service]}, seed=seed, name="deadlock-b")
    c_a = load_container({"services": [a_service]}, seed=seed, name="deadlock-a")
    return c_a, c_b


def demo_deadlock(seed: int = 0) -> list[str]:
    transcript: list[str] = []

    c_a, c_b = _deadlock_system("sequential", seed)
    try:
        engine = c_a.services["alpha"].engine
        flagged = engine.wait_deadlock(5.0)
        _expect(flagged, transcript, "sequential mode: DEADLOCK reported by the watchdog")
        report = engine.deadlock_reports[0]
        _expect(bool(report["queued"]), transcript,
                "a created session is stuck behind the blocked one")
    finally:
        c_a.stop()
        c_b.stop()

    start = time.monotonic()
    c_a, c_b = _deadlock_system("concurrent", seed)
    try:
        engine = c_a.services["alpha"].engine
        done = engine.wait_all_finished(2.0)
        elapsed = time.monotonic() - start
        _expect(done, transcript, f"concurrent mode: OK, completed in {elapsed:.2f}s")
        firing_sid = engine.session_ids()[0]
        _, completion, local = engine.session_view(firing_sid)
        _expect(completion.kind == "success" and local.lookup("got") is True,
                transcript, "the call cycle resolved and the kick was answered")
    finally:
        c_a.stop()
        c_b.stop()
    return transcript


DEMOS = {
    "rr-vs-callback": demo_rr_vs_callback,
    "web": demo_web,
    "slave-mobility": demo_slave_mobility,
    "master-mobility": demo_master_mobility,
    "sos": demo_sos,
    "deadlock": demo_deadlock,
}


def run_demo(name: str, seed: int = 0) -> list[str]:
    if name not in DEMOS:
        raise KeyError(name)
    return DEMOS[name](seed)
