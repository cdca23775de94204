import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from gvcot import EditSample, RasterImage
from gvcot.errors import BadStatus, JudgeUnavailable
from gvcot.judge import (EndpointConfig, JudgeClient, MockJudge, TemplateId, load_templates, mock_judge,
                         parse_box_response, parse_instruction_response, parse_score_response, query_judge,
                         render_prompt, to_wire_messages)
from gvcot.judge.mock import JITTER_PX


class FakeServer:
    """Chat-completion server that replays a scripted list of (status, body) replies."""

    def __init__(self, script):
        self.script = list(script)
        self.requests = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = self.rfile.read(int(self.headers["Content-Length"]))
                outer.requests.append({"path": self.path, "headers": dict(self.headers), "json": json.loads(body)})
                status, text = outer.script.pop(0) if outer.script else (500, "script exhausted")
                if isinstance(text, bytes):
                    data = text
                elif status == 200:
                    data = json.dumps({"choices": [{"message": {"role": "assistant", "content": text}}]}).encode()
                else:
                    data = text.encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def base_url(self):
        return f"http://127.0.0.1:{self.httpd.server_address[1]}/v1"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


def _cfg(url, **kw):
    kw.setdefault("backoff_base", 0.0)
    kw.setdefault("timeout", 5.0)
    return EndpointConfig(base_url=url, model_name="judge-x", **kw)


MSGS = [{"role": "user", "content": [{"type": "text", "text": "hi"}]}]


def test_echo_fixture():
    with FakeServer([(200, "fixture text")]) as srv:
        assert query_judge(_cfg(srv.base_url, api_key="k"), MSGS) == "fixture text"


def test_retries_then_success():
    with FakeServer([(500, "a"), (500, "b"), (200, "done")]) as srv:
        client = JudgeClient(_cfg(srv.base_url))
        assert client.complete(MSGS) == "done"
        assert client.attempts == 3 and len(srv.requests) == 3


def test_retry_budget_exhausted():
    with FakeServer([(500, "x")] * 5) as srv:
        client = JudgeClient(_cfg(srv.base_url, max_retries=2))
        with pytest.raises(BadStatus) as info:
            client.complete(MSGS)
        assert info.value.status == 500
        assert client.attempts == 3 and len(srv.requests) == 3


def test_non_retryable_status_fails_fast():
    with FakeServer([(400, "bad request"), (200, "never")]) as srv:
        client = JudgeClient(_cfg(srv.base_url))
        with pytest.raises(BadStatus):
            client.complete(MSGS)
        assert len(srv.requests) == 1


def test_429_is_retried():
    with FakeServer([(429, "slow down"), (200, "ok")]) as srv:
        assert JudgeClient(_cfg(srv.base_url)).complete(MSGS) == "ok"


def test_unreachable_endpoint():
    client = JudgeClient(_cfg("http://127.0.0.1:9/v1", max_retries=1, timeout=0.5))
    with pytest.raises(JudgeUnavailable):
        client.complete(MSGS)
    assert client.attempts == 2


def test_wire_format_and_auth(monkeypatch):
    monkeypatch.setenv("GVCOT_JUDGE_API_KEY", "secret")
    t = load_templates()[TemplateId.PERCEPTUAL_QUALITY]
    img = RasterImage.filled(4, 4, (1, 2, 3))
    sample = EditSample("a", img, instruction="x", target=img)
    msgs = to_wire_messages(render_prompt(t, sample))
    with FakeServer([(200, "ok")]) as srv:
        JudgeClient(_cfg(srv.base_url, temperature=0.0)).complete(msgs)
    req = srv.requests[0]
    assert req["path"] == "/v1/chat/completions"
    assert req["headers"]["Authorization"] == "Bearer secret"
    assert req["json"]["model"] == "judge-x" and req["json"]["temperature"] == 0.0
    parts = req["json"]["messages"][0]["content"]
    assert parts[0]["text"] == t.body
    assert parts[1]["image_url"]["url"].startswith("data:image/png;base64,")


def test_malformed_success_body_is_bad_status():
    with FakeServer([(200, b"not json")]) as srv:
        with pytest.raises(BadStatus) as info:
            JudgeClient(_cfg(srv.base_url)).complete(MSGS)
        assert info.value.status == 200


def test_config_validation():
    with pytest.raises(ValueError):
        EndpointConfig(max_retries=-1)
    with pytest.raises(ValueError):
        EndpointConfig(max_in_flight=0)
    assert EndpointConfig().timeout == 120 and EndpointConfig().max_retries == 3
    assert EndpointConfig().max_in_flight == 8 and EndpointConfig().temperature == 0


def test_in_flight_bound():
    import time

    active, peak, lock = [0], [0], threading.Lock()

    class Slow(BaseHTTPRequestHandler):
        def do_POST(self):
            self.rfile.read(int(self.headers["Content-Length"]))
            with lock:
                active[0] += 1
                peak[0] = max(peak[0], active[0])
            time.sleep(0.05)
            with lock:
                active[0] -= 1
            data = json.dumps({"choices": [{"message": {"content": "ok"}}]}).encode()
            self.send_response(200)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *args):
            pass

    httpd = ThreadingHTTPServer(("127.0.0.1", 0), Slow)
    threading.Thread(target=httpd.serve_forever, daemon=True).start()
    try:
        client = JudgeClient(_cfg(f"http://127.0.0.1:{httpd.server_address[1]}/v1", max_in_flight=2))
        threads = [threading.Thread(target=client.complete, args=(MSGS,)) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    finally:
        httpd.shutdown()
        httpd.server_close()
    assert 1 <= peak[0] <= 2


# -- mock judge ---------------------------------------------------------------

def _pair(seed=0, boxes=()):
    rng = np.random.default_rng(seed)
    src = rng.integers(40, 190, size=(48, 64, 3), dtype=np.uint8)
    tgt = src.copy()
    tgt[10:30, 20:40] = 255
    return EditSample("p1", RasterImage(src), instruction="Add a hat", boxes=boxes, target=RasterImage(tgt))


def test_mock_semantic_is_deterministic_and_parseable():
    a = mock_judge(TemplateId.SEMANTIC_CONSISTENCY, _pair(), seed=7)
    assert a == mock_judge(TemplateId.SEMANTIC_CONSISTENCY, _pair(), seed=7)
    v = parse_score_response(a)
    assert 0 <= v.score1 <= 10 and 0 <= v.score2 <= 10


def test_mock_bad_json_rejected_by_every_parser():
    s = _pair()
    for tid in (TemplateId.SEMANTIC_CONSISTENCY, TemplateId.COT_EDIT_CONSISTENCY, TemplateId.PERCEPTUAL_QUALITY):
        with pytest.raises(Exception) as info:
            parse_score_response(mock_judge(tid, s, mode="bad_json"))
        assert type(info.value).__name__ == "ParseFailure"
    with pytest.raises(Exception):
        parse_instruction_response(mock_judge(TemplateId.INSTRUCTION_GEN, s, mode="bad_json"))
    with pytest.raises(Exception):
        parse_box_response(mock_judge(TemplateId.GROUNDING_BOXES, s, mode="bad_json"), 64, 48)


def test_mock_clamp_and_empty_boxes():
    v = parse_score_response(mock_judge(TemplateId.PERCEPTUAL_QUALITY, _pair(), mode="clamp"))
    assert (v.score1, v.score2) == (10, 0) and v.diagnostics
    assert parse_box_response(mock_judge(TemplateId.GROUNDING_BOXES, _pair(), mode="empty_boxes"), 64, 48) == ([], [])


def test_mock_instruction_grammar():
    for i in range(20):
        s = EditSample(f"x{i}", RasterImage.filled(8, 8, (0, 0, 0)))
        parse_instruction_response(mock_judge(TemplateId.INSTRUCTION_GEN, s, seed=3))


@pytest.mark.parametrize("beam", range(10))
def test_mock_stored_box_jitter_bound(beam):
    stored = (14, 5, 50, 40)
    boxes, diags = parse_box_response(mock_judge(TemplateId.GROUNDING_BOXES, _pair(boxes=(stored,)), beam=beam),
                                      64, 48)
    assert len(boxes) == 1 and diags == []
    assert max(abs(a - b) for a, b in zip(boxes[0], stored)) <= JITTER_PX


def test_mock_grounding_falls_back_to_pixel_difference():
    boxes, _ = parse_box_response(mock_judge(TemplateId.GROUNDING_BOXES, _pair()), 64, 48)
    assert max(abs(a - b) for a, b in zip(boxes[0], (20, 10, 40, 30))) <= JITTER_PX


def test_mock_identical_pair_scores_zero_consistency():
    s = _pair()
    same = EditSample("same", s.source, target=s.source)
    assert parse_score_response(mock_judge(TemplateId.SEMANTIC_CONSISTENCY, same)).score1 == 0


def test_mock_fixed_scores_and_callable():
    judge = MockJudge(seed=1, fixed_scores={"PerceptualQuality": (2, 2)})
    v = parse_score_response(judge(TemplateId.PERCEPTUAL_QUALITY, _pair(), beam=4))
    assert (v.score1, v.score2) == (2, 2)


def test_mock_unknown_mode():
    with pytest.raises(ValueError):
        mock_judge(TemplateId.PERCEPTUAL_QUALITY, _pair(), mode="chaos")
