import pytest
import responses

from src.errors import ConfigError, EmptyResponseError, GenerationError, PartialSoapError, PreconditionError
from src.infer import (
    ChatCompletionClient,
    StubGenerator,
    TermTokenizer,
    WhitespaceTokenizer,
    format_soap,
    generate_summary,
    parse_soap,
    summarize_pipeline,
    tokenizer_from_kind,
)
from src.models.retrieval import FusionConfig, RetrievalQuery
from src.models.soap import SoapSummary
from src.models.transcript import Transcript
from tests.conftest import LLM_KEY

BASE_URL = "https://llm.example.com"
CHAT_URL = f"{BASE_URL}/v1/chat/completions"


def _chat_response(content):
    return {"id": "cmpl-1", "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}


# ==== Chat client


@responses.activate
def test_pass_chat_completion_client_given_prompt_posts_chat_request():
    matcher_auth = responses.matchers.header_matcher({"Authorization": f"Bearer {LLM_KEY}"})
    matcher_body = responses.matchers.json_params_matcher(
        {
            "model": "llama-2-13b-chat",
            "messages": [{"role": "user", "content": "prompt text"}],
            "temperature": 0.0,
            "max_tokens": 256,
        }
    )
    responses.add(
        responses.POST, CHAT_URL, json=_chat_response("Subjective: cough"), match=[matcher_auth, matcher_body]
    )
    client = ChatCompletionClient(BASE_URL, model="llama-2-13b-chat", max_tokens=256)

    assert client.complete("prompt text") == "Subjective: cough"
    assert client.name == "chat:llama-2-13b-chat"


@responses.activate
def test_fail_chat_completion_client_given_server_error_gives_up_after_three_attempts():
    rsps = responses.add(responses.POST, CHAT_URL, status=500)
    client = ChatCompletionClient(BASE_URL, model="m")

    with pytest.raises(GenerationError):
        generate_summary(client, "prompt text")

    assert len(rsps.calls) == 3


@responses.activate
def test_pass_chat_completion_client_given_one_transient_failure_retries():
    responses.add(responses.POST, CHAT_URL, status=503)
    responses.add(responses.POST, CHAT_URL, json=_chat_response("Plan: rest"))
    client = ChatCompletionClient(BASE_URL, model="m")

    assert client.complete("prompt text") == "Plan: rest"
    assert len(responses.calls) == 2


@responses.activate
def test_fail_generate_summary_given_empty_content():
    responses.add(responses.POST, CHAT_URL, json=_chat_response(""))
    client = ChatCompletionClient(BASE_URL, model="m")

    with pytest.raises(EmptyResponseError):
        generate_summary(client, "prompt text")


@responses.activate
def test_fail_generate_summary_given_response_without_choices():
    responses.add(responses.POST, CHAT_URL, json={"choices": []})
    client = ChatCompletionClient(BASE_URL, model="m")

    with pytest.raises(EmptyResponseError):
        generate_summary(client, "prompt text")


@responses.activate
def test_fail_chat_completion_client_given_non_string_content():
    responses.add(responses.POST, CHAT_URL, json=_chat_response(["list"]))
    client = ChatCompletionClient(BASE_URL, model="m")

    with pytest.raises(GenerationError):
        client.complete("prompt text")


def test_pass_chat_completion_client_given_local_plain_http_accepts_it():
    assert ChatCompletionClient("http://localhost:8080/", model="m").base_url == "http://localhost:8080"


def test_fail_chat_completion_client_given_remote_plain_http():
    with pytest.raises(ConfigError):
        ChatCompletionClient("http://llm.example.com", model="m")


def test_pass_stub_generator_given_response_returns_it_and_otherwise_echoes():
    assert StubGenerator("Plan: rest").complete("prompt") == "Plan: rest"
    assert StubGenerator().complete("prompt") == "prompt"


def test_fail_generate_summary_given_blank_prompt():
    with pytest.raises(PreconditionError):
        generate_summary(StubGenerator("x"), "  ")


def test_fail_generate_summary_given_whitespace_response():
    with pytest.raises(EmptyResponseError):
        generate_summary(StubGenerator(" \n"), "prompt")


# ==== SOAP parsing


def test_pass_parse_soap_given_plain_headers_splits_sections(clinical_summary):
    soap = parse_soap(clinical_summary)

    assert "Shortness of breath" in soap.subjective
    assert soap.objective.startswith("- Physical examination findings: Wheezing on auscultation")
    assert "Asthma exacerbation" in soap.assessment
    assert soap.plan.endswith("- Consider alternative treatments with caution")
    assert soap.raw_text == clinical_summary


def test_pass_parse_soap_given_bold_headers_splits_sections(appendix_soap_note):
    soap = parse_soap(appendix_soap_note)

    assert soap.subjective.startswith("- Chief Complaint: Persistent cough")
    assert "Weight loss evident" in soap.objective
    assert "possible lung cancer" in soap.assessment
    assert "Order Chest X-ray" in soap.plan
    assert not any(text.startswith("**") or text.endswith("**") for text in soap.sections().values())


def test_pass_parse_soap_given_one_letter_sections_trims_them():
    soap = parse_soap("Subjective: A\nObjective: B\nAssessment: C\nPlan: D")

    assert soap.sections() == {"subjective": "A", "objective": "B", "assessment": "C", "plan": "D"}


def test_pass_parse_soap_given_markdown_and_case_variants_matches_headers():
    soap = parse_soap("Here is the note.\n## SUBJECTIVE:\ncough\n- objective: clear\n**Assessment**: ok\nplan:\nrest")

    assert soap.sections() == {"subjective": "cough", "objective": "clear", "assessment": "ok", "plan": "rest"}


def test_pass_parse_soap_given_repeated_header_appends_text():
    soap = parse_soap("Subjective: cough\nObjective: clear\nSubjective: fever\nAssessment: flu\nPlan: rest")

    assert soap.subjective == "cough\nfever"


def test_pass_parse_soap_given_header_word_inside_a_line_ignores_it():
    soap = parse_soap("Subjective: the plan: rest\nObjective: B\nAssessment: C\nPlan: D")

    assert soap.subjective == "the plan: rest"
    assert soap.plan == "D"


def test_fail_parse_soap_given_missing_plan_carries_partial_summary():
    with pytest.raises(PartialSoapError) as exc_info:
        parse_soap("Subjective: A\nObjective: B\nAssessment: C")

    assert exc_info.value.missing == ["plan"]
    assert exc_info.value.partial.assessment == "C"
    assert exc_info.value.partial.plan == ""


def test_fail_parse_soap_given_text_without_headers_lists_all_sections():
    with pytest.raises(PartialSoapError) as exc_info:
        parse_soap("The patient is fine.")

    assert exc_info.value.missing == ["subjective", "objective", "assessment", "plan"]


def test_pass_format_soap_given_summary_parses_back_to_same_sections(clinical_summary, appendix_soap_note):
    for raw in (clinical_summary, appendix_soap_note):
        soap = parse_soap(raw)

        assert parse_soap(format_soap(soap)).sections() == soap.sections()


def test_pass_format_soap_given_summary_writes_plain_headers():
    text = format_soap(SoapSummary(subjective="A", objective="B", assessment="C", plan="D"))

    assert text == "Subjective:\nA\n\nObjective:\nB\n\nAssessment:\nC\n\nPlan:\nD\n"


# ==== Tokenizers


def test_pass_tokenizers_given_same_text_count_their_own_way():
    assert WhitespaceTokenizer().count("Dr. Smith, hi!") == 3
    assert TermTokenizer().count("Dr. Smith, hi!") == 3
    assert TermTokenizer().count("x-ray, 2.5 mg") == 5
    assert WhitespaceTokenizer().count("") == 0


def test_pass_tokenizer_from_kind_given_known_kinds_builds_them():
    assert isinstance(tokenizer_from_kind("whitespace"), WhitespaceTokenizer)
    assert isinstance(tokenizer_from_kind("terms"), TermTokenizer)


def test_fail_tokenizer_from_kind_given_unknown_kind():
    with pytest.raises(ValueError):
        tokenizer_from_kind("bpe")


# ==== Pipeline


def test_pass_summarize_pipeline_given_appendix_transcript_returns_full_note(
    appendix_transcript, appendix_soap_note, embedder
):
    result = summarize_pipeline(
        appendix_transcript, embedder, StubGenerator(appendix_soap_note), RetrievalQuery(), FusionConfig()
    )

    assert result.complete
    assert all(result.soap.sections().values())
    assert result.context_tokens < result.transcript_tokens
    assert result.context.concatenated_text in result.prompt
    assert result.prompt.endswith("### Response:\n")
    assert result.to_json()["id"] == "lung-cancer"
    assert "missing_sections" not in result.to_json()


def test_pass_summarize_pipeline_given_echo_generator_keeps_partial_note(embedder):
    transcript = Transcript(id="one", raw_text="Patient reports a dry cough.")

    result = summarize_pipeline(transcript, embedder, StubGenerator(), RetrievalQuery(), FusionConfig())

    assert result.context.concatenated_text == "Patient reports a dry cough."
    assert result.context_tokens == result.transcript_tokens == 5
    assert result.missing_sections == ["subjective", "objective", "assessment", "plan"]
    assert result.to_json()["missing_sections"] == result.missing_sections
    assert result.soap.raw_text == result.prompt


def test_fail_summarize_pipeline_given_generator_returning_nothing(embedder):
    transcript = Transcript(id="one", raw_text="Patient reports a dry cough.")

    with pytest.raises(EmptyResponseError):
        summarize_pipeline(transcript, embedder, StubGenerator(""), RetrievalQuery(), FusionConfig())
