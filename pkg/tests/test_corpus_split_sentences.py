import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.corpus import flatten_diarized, split_sentences, transcript_chunks
from src.errors import EmptyTranscriptError
from src.models.transcript import Transcript, Turn


def test_pass_transcript_chunks_given_appendix_transcript_returns_27_chunks(appendix_transcript, appendix_chunks):
    chunks = transcript_chunks(appendix_transcript)

    assert [chunk.text for chunk in chunks] == appendix_chunks
    assert len(chunks) == 27
    assert chunks[0].text == "Good morning, doctor."
    assert chunks[26].text == "Goodbye and take care."
    assert [chunk.ord for chunk in chunks] == list(range(27))
    assert {chunk.transcript_id for chunk in chunks} == {"lung-cancer"}


def test_pass_flatten_diarized_given_turns_joins_with_single_space():
    transcript = Transcript(id="t", turns=(Turn("P", "Good morning, doctor."), Turn("D", "Good morning.")))

    assert flatten_diarized(transcript) == "Good morning, doctor. Good morning."


def test_pass_flatten_diarized_given_raw_text_returns_it():
    assert flatten_diarized(Transcript(id="t", raw_text="Hello.")) == "Hello."


def test_pass_flatten_diarized_given_padded_turns_trims_them():
    transcript = Transcript(id="t", turns=(Turn("P", " Hi. "), Turn("D", "\tHello there.  "), Turn("P", "   ")))

    assert flatten_diarized(transcript) == "Hi. Hello there."


def test_fail_flatten_diarized_given_empty_transcript():
    with pytest.raises(EmptyTranscriptError):
        flatten_diarized(Transcript(id="empty"))

    with pytest.raises(EmptyTranscriptError):
        flatten_diarized(Transcript(id="blank", turns=(Turn("P", "  "),), raw_text="  "))


def test_pass_split_sentences_given_empty_text_returns_no_chunks():
    assert split_sentences("") == []
    assert split_sentences("   \n ") == []


def test_pass_split_sentences_given_three_terminators_splits_after_each():
    chunks = split_sentences("Hello. How are you? Fine!")

    assert [chunk.text for chunk in chunks] == ["Hello.", "How are you?", "Fine!"]


def test_pass_split_sentences_given_decimal_keeps_it_whole():
    chunks = split_sentences("Take 2.5 mg twice a day. Come back in a week.")

    assert [chunk.text for chunk in chunks] == ["Take 2.5 mg twice a day.", "Come back in a week."]


def test_pass_split_sentences_given_initial_keeps_name_together():
    chunks = split_sentences("I was referred by J. Smith last week. He said it was fine.")

    assert [chunk.text for chunk in chunks] == ["I was referred by J. Smith last week.", "He said it was fine."]


def test_pass_split_sentences_given_single_letter_before_lowercase_keeps_sentence():
    chunks = split_sentences("It is vitamin b. complex that I take. Nothing else.")

    assert [chunk.text for chunk in chunks] == ["It is vitamin b. complex that I take.", "Nothing else."]


def test_pass_split_sentences_given_pronoun_i_at_sentence_end_splits():
    chunks = split_sentences("That is what I. Then we left.")

    assert [chunk.text for chunk in chunks] == ["That is what I.", "Then we left."]


def test_pass_split_sentences_given_repeated_terminators_and_quotes_keeps_them_attached():
    chunks = split_sentences('Really?! She said "stop." Then left...')

    assert [chunk.text for chunk in chunks] == ["Really?!", 'She said "stop."', "Then left..."]


def test_pass_split_sentences_given_newlines_collapses_inner_whitespace():
    chunks = split_sentences("First line\ncontinues here.\n\nSecond   one.")

    assert [chunk.text for chunk in chunks] == ["First line continues here.", "Second one."]


def test_pass_split_sentences_given_text_without_terminator_returns_one_chunk():
    assert [chunk.text for chunk in split_sentences("no terminator here")] == ["no terminator here"]


_sentence_text = st.lists(
    st.sampled_from(["cough", "blood", "Dr", "2.5", "mg", "A.", "b.", "yes", "no?", "ok!", "x.", "I.", "."]),
    min_size=0,
    max_size=30,
).map(" ".join)


@given(_sentence_text)
def test_pass_split_sentences_given_any_text_is_fixpoint_after_one_pass(text):
    first = [chunk.text for chunk in split_sentences(text)]
    second = [chunk.text for chunk in split_sentences(" ".join(first))]

    assert second == first


@given(_sentence_text)
def test_pass_split_sentences_given_any_text_loses_no_characters(text):
    chunks = split_sentences(text)

    assert "".join(chunk.text for chunk in chunks).replace(" ", "") == "".join(text.split())
    assert [chunk.ord for chunk in chunks] == list(range(len(chunks)))
    assert all(chunk.text and chunk.text == chunk.text.strip() for chunk in chunks)
