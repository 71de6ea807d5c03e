import json
from types import SimpleNamespace

import httpx
import numpy as np
import openai
import pytest

from corpus.dataset import Document, Sample
from feedback.collector import FeedbackCache, collect_feedback, llm_distribution
from feedback.evaluation import eval_output
from feedback.providers import ChatCompletionProvider, GenerationProvider, MockOracleConfig, MockOracleGenerator
from utils.errors import ConfigError, ContractError, FeedbackError, TransportError
from utils.helpers import prompt_key


def completion(content):
    return SimpleNamespace(choices=[SimpleNamespace(message=SimpleNamespace(content=content))])


class FakeCompletions:
    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = []

    def create(self, **kwargs):
        self.calls.append(kwargs)
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return completion(reply)


def fake_client(replies):
    completions = FakeCompletions(replies)
    return SimpleNamespace(chat=SimpleNamespace(completions=completions)), completions


def connection_error():
    return openai.APIConnectionError(request=httpx.Request("POST", "http://llm.test/chat/completions"))


class EchoProvider(GenerationProvider):
    """Answers with whatever document text follows 'doc:' in the prompt."""

    def __init__(self, fail_on=None, error=None):
        self.fail_on = fail_on
        self.error = error or TransportError("boom", attempts=1)
        self.calls = 0

    @property
    def provider_id(self):
        return "echo"

    def generate(self, prompt):
        self.calls += 1
        text = prompt.split("doc:", 1)[1]
        if self.fail_on and self.fail_on in text:
            raise self.error
        return json.dumps({"answer": text})


def doc_prompt(sample, doc):
    return f"{sample.query} doc:{doc.text}"


SAMPLE = Sample("s0", "u0", "where", "red apple", "synthetic")
DOCS = [Document("d0", "red apple", 0), Document("d1", "blue sky", 1), Document("d2", "red sky", 2)]


@pytest.fixture
def oracle():
    return MockOracleConfig.from_dict({
        "doc_clusters": {"e1": 0, "g1": 0, "o1": 1},
        "doc_texts": {"e1": "k1 cited c0w1", "g1": "c0w2 c0w3", "o1": "c1w1 c1w2"},
        "samples": [{
            "sample_id": "s0",
            "query": "k1 k2 c0w9",
            "target": "a1 a2 a3 a4 lab0x0 lab0x1",
            "evidence_id": "e1",
            "evidence_text": "k1 cited c0w1",
            "gold_cluster": 0,
        }],
        "cluster_labels": {"0": "lab0x0 lab0x1", "1": "lab1x0 lab1x1"},
        "noise_vocab": ["n00", "n01"],
    })


class TestEvalOutput:
    def test_generation_uses_rouge1(self):
        assert eval_output("LaMP-5", "a b c d", "a b c d") == 1.0
        assert eval_output("LaMP-5", "a b c d", "x y") == 0.0

    def test_classification_is_exact_match(self):
        assert eval_output("LaMP-2", "comedy", " Comedy ") == 1.0
        assert eval_output("LaMP-1", "[1]", "[2]") == 0.0

    def test_rating_is_negative_absolute_error(self):
        assert eval_output("LaMP-3", "4", "2") == -2.0
        assert eval_output("LaMP-3", "4", "no idea") == -4.0

    def test_unknown_task(self):
        with pytest.raises(ConfigError):
            eval_output("LaMP-9", "a", "a")


class TestMockOracle:
    def test_evidence_yields_the_target(self, oracle):
        generator = MockOracleGenerator(oracle)
        output = json.loads(generator.generate("k1 cited c0w1. k1 k2 c0w9"))
        assert output["answer"] == "a1 a2 a3 a4 lab0x0 lab0x1"

    def test_gold_cluster_yields_the_label(self, oracle):
        generator = MockOracleGenerator(oracle)
        answer = json.loads(generator.generate("c0w2 c0w3. k1 k2 c0w9"))["answer"]
        assert answer == "lab0x0 lab0x1"
        assert eval_output("synthetic", oracle.samples[0].target, answer) == pytest.approx(0.5)

    def test_other_clusters_yield_the_fallback(self, oracle):
        generator = MockOracleGenerator(oracle)
        assert json.loads(generator.generate("c1w1 c1w2. k1 k2 c0w9"))["answer"] == "unknown"
        assert json.loads(generator.generate("k1 k2 c0w9"))["answer"] == "unknown"

    def test_noise_is_deterministic(self, oracle):
        oracle.sigma = 0.5
        prompt = "k1 cited c0w1. k1 k2 c0w9"
        assert MockOracleGenerator(oracle, seed=1).generate(prompt) == MockOracleGenerator(oracle, seed=1).generate(prompt)

    def test_round_trip_through_a_file(self, oracle, tmp_path):
        path = str(tmp_path / "oracle.json")
        oracle.save(path)
        assert MockOracleConfig.load(path) == oracle

    def test_negative_sigma(self, oracle):
        with pytest.raises(ConfigError):
            MockOracleConfig(oracle.doc_clusters, oracle.doc_texts, oracle.samples, oracle.cluster_labels, sigma=-0.1)


class TestChatCompletionProvider:
    def test_greedy_request(self):
        client, completions = fake_client(['{"title": "x"}'])
        provider = ChatCompletionProvider("http://llm.test", "tiny", client=client)
        assert provider.generate("hello") == '{"title": "x"}'
        call = completions.calls[0]
        assert call["temperature"] == 0.0
        assert call["messages"] == [{"role": "user", "content": "hello"}]

    def test_retries_transient_failures(self):
        client, completions = fake_client([connection_error(), "ok"])
        provider = ChatCompletionProvider("http://llm.test", "tiny", client=client, backoff_factor=0)
        assert provider.generate("hello") == "ok"
        assert len(completions.calls) == 2

    def test_gives_up_after_max_retries(self):
        client, _ = fake_client([connection_error() for _ in range(3)])
        provider = ChatCompletionProvider("http://llm.test", "tiny", client=client, max_retries=3, backoff_factor=0)
        with pytest.raises(TransportError) as info:
            provider.generate("hello")
        assert info.value.attempts == 3

    def test_needs_a_model(self):
        with pytest.raises(ConfigError):
            ChatCompletionProvider("http://llm.test", "", client=object())


class TestFeedbackCache:
    def test_persists_across_instances(self, tmp_path):
        path = str(tmp_path / "cache.jsonl")
        cache = FeedbackCache(path)
        assert cache.get("k") is None
        cache.put("k", "out", 0.5)
        assert cache.get("k") == "out"
        assert (cache.hits, cache.misses) == (1, 1)
        assert FeedbackCache(path).get("k") == "out"

    def test_first_write_wins(self):
        cache = FeedbackCache()
        cache.put("k", "first", 1.0)
        cache.put("k", "second", 0.0)
        assert cache.get("k") == "first"
        assert len(cache) == 1


class TestCollectFeedback:
    def test_scores_each_candidate_in_order(self):
        records = collect_feedback(EchoProvider(), SAMPLE, DOCS, doc_prompt, workers=3)
        assert [r.document_id for r in records] == ["d0", "d1", "d2"]
        assert records[0].score == 1.0
        assert records[1].score == 0.0
        assert records[2].score == pytest.approx(0.5)

    def test_cache_avoids_repeated_generation(self):
        provider, cache = EchoProvider(), FeedbackCache()
        first = collect_feedback(provider, SAMPLE, DOCS, doc_prompt, cache=cache)
        second = collect_feedback(provider, SAMPLE, DOCS, doc_prompt, cache=cache)
        assert provider.calls == 3
        assert [r.score for r in first] == [r.score for r in second]
        assert cache.get(prompt_key("echo", doc_prompt(SAMPLE, DOCS[0]))) is not None

    def test_failures_name_the_candidates(self):
        with pytest.raises(FeedbackError) as info:
            collect_feedback(EchoProvider(fail_on="sky"), SAMPLE, DOCS, doc_prompt)
        assert info.value.failed_ids == ["d1", "d2"]
        assert info.value.sample_id == "s0"

    def test_api_errors_count_as_failures(self):
        error = openai.APIConnectionError(request=httpx.Request("POST", "http://llm.test"))
        with pytest.raises(FeedbackError) as info:
            collect_feedback(EchoProvider(fail_on="sky", error=error), SAMPLE, DOCS, doc_prompt)
        assert info.value.failed_ids == ["d1", "d2"]

    def test_programming_errors_propagate(self):
        with pytest.raises(TypeError):
            collect_feedback(EchoProvider(fail_on="sky", error=TypeError("bad prompt")), SAMPLE, DOCS, doc_prompt)

    def test_needs_candidates(self):
        with pytest.raises(ContractError):
            collect_feedback(EchoProvider(), SAMPLE, [], doc_prompt)


class TestLlmDistribution:
    def test_equal_scores_are_uniform(self):
        assert np.allclose(llm_distribution([0.5, 0.5]), [0.5, 0.5])

    def test_better_candidates_weigh_more(self):
        p = llm_distribution([1.0, 0.0, 0.5])
        assert p[0] > p[2] > p[1]
        assert p.sum() == pytest.approx(1.0)

    def test_rejects_empty_and_non_finite(self):
        with pytest.raises(ContractError):
            llm_distribution([])
        with pytest.raises(ContractError):
            llm_distribution([float("nan")])
