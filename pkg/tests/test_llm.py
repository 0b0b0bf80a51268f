from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from hypothesis import given
from hypothesis import strategies as st

from closedloop.env import HOUSEHOLD_CATALOG
from closedloop.llm import (
    KINDS,
    CompletionRequest,
    FatalLlmError,
    Gateway,
    MissingPlaceholderError,
    QueueExhausted,
    RemoteBackend,
    ScriptedBackend,
    Transcript,
    TransientLlmError,
    UnknownPromptKind,
    classify_prompt,
    join_fixture,
    load_sample,
    load_template,
    render_template,
    split_fixture,
    strip_sentinel,
)
from closedloop.plan import parse_plan

FULL_SUBS = {
    "action_list": HOUSEHOLD_CATALOG.describe(),
    "sample": "# sample",
    "receptacle_list": "desk 1, shelf 1",
    "task": "put a book on the desk",
    "error_msg": "Error in [Step 2]: boom",
    "previous_solution": "# previous",
    "revised_solution": "# revised",
    "candidate": "# candidate",
    "question": "what is it?",
    "observation": "You see a book 1.",
}


@pytest.mark.parametrize("kind", KINDS)
def test_every_template_renders_and_classifies(kind):
    text = render_template(kind, FULL_SUBS)
    assert classify_prompt(text) == kind
    body = strip_sentinel(text)
    assert not body.startswith("#@kind=")
    for name in load_template(kind).placeholders:
        assert f"<{name}>" not in body


def test_missing_sample_names_the_placeholder():
    subs = {k: v for k, v in FULL_SUBS.items() if k != "sample"}
    with pytest.raises(MissingPlaceholderError) as info:
        render_template("initial_planning", subs)
    assert str(info.value) == "missing substitution for <sample>"


def test_substitution_is_single_pass():
    subs = dict(FULL_SUBS, observation="<question>")
    text = render_template("ask_llm", subs)
    assert "Observation: <question>" in text


def test_basic_info_lists_every_action():
    text = render_template("basic_info", FULL_SUBS, sentinel=False)
    for spec in HOUSEHOLD_CATALOG:
        assert spec.name in text


def test_unknown_kinds_are_rejected():
    with pytest.raises(UnknownPromptKind):
        classify_prompt("no marker here")
    with pytest.raises(UnknownPromptKind):
        load_template("poem")


@pytest.mark.parametrize("slug", ["pick", "clean", "heat", "cool", "examine", "picktwo"])
def test_expert_samples_parse(slug):
    assert len(parse_plan(load_sample(slug))) >= 4


_line = st.text(st.characters(whitelist_categories=("L", "N", "P", "S", "Zs")), max_size=20)
# responses are non-blank and carry no leading/trailing newline; blank ones are dropped
_response = st.lists(_line, min_size=1, max_size=3).map("\n".join).filter(
    lambda s: s.strip() and s.strip() == s and "=====" not in s
)


@given(st.lists(_response, max_size=4))
def test_fixture_split_round_trips(items):
    assert split_fixture(join_fixture(items)) == items


def test_scripted_strict_and_lenient():
    prompt = render_template("ask_llm", FULL_SUBS)
    strict = ScriptedBackend({"ask_llm": ["book 1"]})
    assert strict.complete(CompletionRequest(prompt)).text == "book 1"
    with pytest.raises(QueueExhausted, match="ask_llm"):
        strict.complete(CompletionRequest(prompt))
    assert ScriptedBackend(strict=False).complete(CompletionRequest(prompt)).text == ""


def test_scripted_conditional_items():
    backend = ScriptedBackend({"ask_llm": [{"if_prompt_contains": "book", "then": "yes", "else": "no"}] * 2})
    assert backend.complete(CompletionRequest(render_template("ask_llm", FULL_SUBS))).text == "yes"
    other = dict(FULL_SUBS, observation="You see a mug 1.")
    assert backend.complete(CompletionRequest(render_template("ask_llm", other))).text == "no"


def test_scripted_from_dir_falls_back_to_default(tmp_path):
    (tmp_path / "pick-0001").mkdir()
    (tmp_path / "_default").mkdir()
    (tmp_path / "pick-0001" / "ask_llm.txt").write_text(join_fixture(["a 1", "b 2"]), encoding="utf-8")
    (tmp_path / "_default" / "start_from.txt").write_text("3", encoding="utf-8")
    backend = ScriptedBackend.from_dir(tmp_path, "pick-0001")
    assert backend.remaining("ask_llm") == 2
    assert backend.queues["start_from"] == ["3"]


def test_gateway_logs_one_record_per_call():
    transcript = Transcript()
    gw = Gateway(ScriptedBackend({"ask_llm": ["x", "y"]}), transcript=transcript, episode="e1")
    gw.ask("ask_llm", FULL_SUBS)
    gw.ask("ask_llm", FULL_SUBS)
    assert gw.calls == len(transcript) == 2
    assert [r.response for r in transcript.for_episode("e1")] == ["x", "y"]


class Flaky:
    def __init__(self, failures: int, exc=TransientLlmError):
        self.failures = failures
        self.exc = exc
        self.requests = []

    def complete(self, request):
        from closedloop.llm import Completion

        self.requests.append(request)
        if len(self.requests) <= self.failures:
            raise self.exc("provider hiccup")
        return Completion("ok", 1, 1)


def test_gateway_retries_transient_errors():
    backend = Flaky(2)
    gw = Gateway(backend, max_retries=2)
    assert gw.ask("ask_llm", FULL_SUBS) == "ok"
    records = gw.transcript.records
    assert [(r.attempt, r.status) for r in records] == [(1, "error"), (2, "error"), (3, "ok")]
    assert gw.calls == 3


def test_gateway_gives_up_after_the_retry_budget():
    gw = Gateway(Flaky(5), max_retries=2)
    with pytest.raises(TransientLlmError):
        gw.ask("ask_llm", FULL_SUBS)
    assert gw.calls == len(gw.transcript) == 3


def test_gateway_does_not_retry_fatal_errors():
    gw = Gateway(Flaky(1, FatalLlmError), max_retries=5)
    with pytest.raises(FatalLlmError):
        gw.ask("ask_llm", FULL_SUBS)
    assert gw.calls == 1


def test_transcript_file_mirror(tmp_path):
    path = tmp_path / "t.jsonl"
    gw = Gateway(ScriptedBackend({"start_from": ["2"]}), transcript=Transcript(path), episode="ep")
    gw.ask("start_from", FULL_SUBS)
    (rec,) = Transcript.load(path)
    assert rec.kind == "start_from" and rec.response == "2" and rec.episode == "ep"


# -- HTTP backend against a local stub server ---------------------------------


class _Stub(BaseHTTPRequestHandler):
    script: list = []
    seen: list = []

    def do_POST(self):  # noqa: N802
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        type(self).seen.append({"path": self.path, "body": body, "auth": self.headers.get("Authorization")})
        status, payload = type(self).script.pop(0)
        data = payload.encode() if isinstance(payload, str) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub():
    _Stub.script = []
    _Stub.seen = []
    server = HTTPServer(("127.0.0.1", 0), _Stub)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield _Stub, f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    server.server_close()


def _ok(text):
    return 200, {"choices": [{"text": text}], "usage": {"prompt_tokens": 7, "completion_tokens": 2}}


def test_remote_backend_payload(stub):
    handler, url = stub
    handler.script.append(_ok("book 1"))
    backend = RemoteBackend.from_env({"CLOSEDLOOP_API_BASE": url, "CLOSEDLOOP_API_KEY": "k", "CLOSEDLOOP_MODEL": "m"})
    gw = Gateway(backend)
    assert gw.ask("ask_llm", FULL_SUBS) == "book 1"
    (req,) = handler.seen
    assert req["path"] == "/v1/completions"
    assert req["auth"] == "Bearer k"
    assert req["body"]["model"] == "m"
    assert req["body"]["temperature"] == 0.0
    assert not req["body"]["prompt"].startswith("#@kind=")
    assert (gw.transcript.records[0].prompt_tokens, gw.transcript.records[0].completion_tokens) == (7, 2)


def test_remote_backend_retries_server_errors(stub):
    handler, url = stub
    handler.script += [(503, "{}"), (429, "{}"), _ok("fine")]
    gw = Gateway(RemoteBackend(url, "m"), max_retries=2)
    assert gw.ask("ask_llm", FULL_SUBS) == "fine"
    assert [r.status for r in gw.transcript.records] == ["error", "error", "ok"]


def test_remote_backend_client_errors_are_fatal(stub):
    handler, url = stub
    handler.script += [(400, '{"error": "bad"}'), (200, "not json")]
    backend = RemoteBackend(url, "m")
    with pytest.raises(FatalLlmError, match="400"):
        backend.complete(CompletionRequest(render_template("ask_llm", FULL_SUBS)))
    with pytest.raises(FatalLlmError, match="malformed"):
        backend.complete(CompletionRequest(render_template("ask_llm", FULL_SUBS)))


def test_remote_backend_connection_refused_is_transient():
    backend = RemoteBackend("http://127.0.0.1:9", "m", timeout=2)
    with pytest.raises(TransientLlmError):
        backend.complete(CompletionRequest(render_template("ask_llm", FULL_SUBS)))


def test_remote_backend_requires_a_base_url():
    with pytest.raises(FatalLlmError, match="CLOSEDLOOP_API_BASE"):
        RemoteBackend.from_env({})
