import http.server
import json
import math
import threading

import pytest

from streamwarden.errors import ConfigError, DataError, JudgeError
from streamwarden.judge import (
    JudgeClient,
    MockJudge,
    PROMPT_TEMPLATES,
    build_judge_prompt,
    parse_judge_reply,
    selfcheck_monitor,
    validate_checkpoints,
)

from conftest import make_random_trace


class TestBuildJudgePrompt:
    def test_toxicity_wording(self):
        prompt = build_judge_prompt("toxicity", "you are awful")
        assert prompt.startswith("Are the following sentences toxic?")
        assert "you are awful" in prompt
        assert "Yes or No" in prompt

    def test_truthfulness_contains_supported_by_context_form(self):
        prompt = build_judge_prompt("truthfulness", "Paris is in Spain")
        assert "Is the sentence supported by the context above?" in prompt
        assert "Paris is in Spain" in prompt

    def test_empty_output_rejected(self):
        with pytest.raises(DataError):
            build_judge_prompt("toxicity", "")

    def test_unknown_perspective(self):
        with pytest.raises(ConfigError):
            build_judge_prompt("numerology", "x")

    def test_deterministic(self):
        a = build_judge_prompt("code_correctness", "def f(): pass")
        b = build_judge_prompt("code_correctness", "def f(): pass")
        assert a == b

    def test_non_canonical_templates_marked(self):
        assert PROMPT_TEMPLATES["toxicity"].canonical
        assert PROMPT_TEMPLATES["truthfulness"].canonical
        assert not PROMPT_TEMPLATES["translation_quality"].canonical
        assert not PROMPT_TEMPLATES["code_correctness"].canonical


class TestParseJudgeReply:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("Yes, clearly toxic.", True),
            ("no", False),
            ("I cannot say.", None),
            ("YES", True),
            ("  No, this is fine.", False),
            ("Nothing wrong here", None),  # leading token is not "no"
            ("", None),
            ("42", None),
        ],
    )
    def test_leading_token_rule(self, text, expected):
        assert parse_judge_reply(text) is expected


class TestCheckpoints:
    def test_valid(self):
        assert validate_checkpoints([0.25, 0.5, 1.0]) == [0.25, 0.5, 1.0]

    @pytest.mark.parametrize("bad", [[], [0.0, 0.5], [0.5, 0.5], [0.5, 0.25], [0.2, 1.1]])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            validate_checkpoints(bad)


class TestSelfCheckMonitor:
    def make_marked_trace(self, rng, n_steps, marker_step):
        trace = make_random_trace(rng, "t0", n_steps=n_steps)
        trace.steps[marker_step].token_text = " @@ANOMALY@@"
        return trace

    def test_all_no_never_flags(self, rng):
        trace = make_random_trace(rng, "clean", n_steps=16)
        result = selfcheck_monitor(trace, MockJudge(), perspective="toxicity")
        assert not result.verdict.flagged
        assert result.verdict.scores == [0.0, 0.0, 0.0, 0.0]

    def test_flag_at_first_yes(self, rng):
        trace = self.make_marked_trace(rng, n_steps=16, marker_step=0)
        result = selfcheck_monitor(trace, MockJudge(), perspective="toxicity")
        assert result.verdict.flagged
        assert result.verdict.flag_fraction == 0.25
        assert result.verdict.scores[0] == 1.0

    def test_flag_position_matches_marker_and_grid(self, rng):
        # derived from the marker position and the checkpoint grid: the flag
        # lands on the first checkpoint whose prefix covers the marker
        checkpoints = [0.25, 0.5, 0.75, 1.0]
        for trial in range(20):
            n_steps = int(rng.integers(4, 40))
            marker_step = int(rng.integers(0, n_steps))
            trace = self.make_marked_trace(rng, n_steps, marker_step)
            expected = next(
                f for f in checkpoints if max(1, math.ceil(f * n_steps)) >= marker_step + 1
            )
            result = selfcheck_monitor(trace, MockJudge(), checkpoints=checkpoints)
            assert result.verdict.flagged
            assert result.verdict.flag_fraction == expected

    def test_reproducible_across_runs(self, rng):
        trace = self.make_marked_trace(rng, n_steps=20, marker_step=11)
        a = selfcheck_monitor(trace, MockJudge())
        b = selfcheck_monitor(trace, MockJudge())
        assert a.verdict == b.verdict

    def test_query_count_full(self, rng):
        trace = make_random_trace(rng, "clean", n_steps=12)
        client = MockJudge()
        result = selfcheck_monitor(trace, client, checkpoints=[0.2, 0.4, 0.6, 0.8, 1.0])
        assert result.n_queries == 5 and client.query_count == 5

    def test_query_count_early_stop(self, rng):
        trace = self.make_marked_trace(rng, n_steps=12, marker_step=0)
        client = MockJudge()
        result = selfcheck_monitor(
            trace, client, checkpoints=[0.2, 0.4, 0.6, 0.8, 1.0], early_stop=True
        )
        assert result.verdict.flag_step == 0
        assert result.n_queries == result.verdict.flag_step + 1 == 1

    def test_tokens_saved_from_flag_checkpoint(self, rng):
        trace = self.make_marked_trace(rng, n_steps=16, marker_step=0)
        result = selfcheck_monitor(trace, MockJudge(), checkpoints=[0.25, 1.0])
        assert result.tokens_saved == 16 - 4

    def test_indeterminate_counts_as_no(self, rng):
        class MumblingJudge:
            query_count = 0

            def ask(self, prompt):
                from streamwarden.judge import JudgeReply

                return JudgeReply("hard to tell", None, 0.0)

        trace = make_random_trace(rng, "t", n_steps=8)
        result = selfcheck_monitor(trace, MumblingJudge())
        assert not result.verdict.flagged
        assert result.n_indeterminate == 4


class FlakyTransport:
    """Fails n times, then returns the given reply text."""

    def __init__(self, failures, reply="No"):
        self.failures = failures
        self.reply = reply
        self.calls = 0

    def __call__(self, payload):
        self.calls += 1
        if self.calls <= self.failures:
            raise OSError("connection reset")
        return self.reply


class TestJudgeClient:
    def test_retries_then_succeeds(self):
        transport = FlakyTransport(failures=2, reply="Yes, toxic.")
        client = JudgeClient(
            url="http://judge.local/v1/chat", backoff_base=0.0, transport=transport
        )
        reply = client.ask("prompt")
        assert reply.flag is True
        assert transport.calls == 3

    def test_gives_up_after_retries(self):
        transport = FlakyTransport(failures=10)
        client = JudgeClient(
            url="http://judge.local/v1/chat", backoff_base=0.0, transport=transport
        )
        with pytest.raises(JudgeError):
            client.ask("prompt")
        assert transport.calls == 3

    def test_requires_url(self, monkeypatch):
        monkeypatch.delenv("STREAMWARDEN_JUDGE_URL", raising=False)
        with pytest.raises(ConfigError):
            JudgeClient()

    def test_env_var_fallback(self, monkeypatch):
        monkeypatch.setenv("STREAMWARDEN_JUDGE_URL", "http://judge.env/v1/chat")
        monkeypatch.setenv("STREAMWARDEN_JUDGE_KEY", "sk-test")
        client = JudgeClient(transport=lambda payload: "No")
        assert client.url == "http://judge.env/v1/chat"
        assert client.api_key == "sk-test"

    def test_http_transport_against_local_server(self):
        received = {}

        class Handler(http.server.BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                received.update(body)
                received["auth"] = self.headers.get("Authorization")
                reply = {"choices": [{"message": {"content": "Yes"}}]}
                data = json.dumps(reply).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        server = http.server.HTTPServer(("127.0.0.1", 0), Handler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            url = f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
            client = JudgeClient(url=url, api_key="sk-local", model="mini", temperature=0.0)
            reply = client.ask(build_judge_prompt("toxicity", "hello"))
            assert reply.flag is True
            assert received["model"] == "mini"
            assert received["temperature"] == 0.0
            assert received["messages"][0]["role"] == "user"
            assert received["auth"] == "Bearer sk-local"
        finally:
            server.shutdown()
