"""Closed-grammar prompt tokenization for the toy text encoders.

The vocabulary is derived from the prompt grammar, so it is finite and
stable. Token id 0 is the reserved null token; an all-null sequence is
the unconditional branch used for classifier-free guidance.
"""

from __future__ import annotations

from . import render
from .scenegen import COUNT_WORDS

NULL_TOKEN = 0
MAX_TOKENS = 24


def _grammar_words():
    words = {"a", "scene", "with", "and"}
    words.update(render.SCENES)
    words.update(COUNT_WORDS.values())
    words.update(render.MATERIALS)
    words.update(render.COLORS)
    words.update(f"{s}-shaped" for s in render.SHAPES)
    words.update(render.SIZES)
    for name in render.OBJECT_NAMES:
        if name in render.TEXT_OBJECTS:
            words.add(f'"{name}"')
            words.add(f'"{name}"s')
        else:
            words.add(name)
            words.add(name + "s")
    return sorted(words)


VOCAB = ["<null>"] + _grammar_words()
_WORD_TO_ID = {w: i for i, w in enumerate(VOCAB)}


def vocab_size() -> int:
    return len(VOCAB)


def tokenize(text: str, length: int = MAX_TOKENS) -> list:
    """Fixed-length token ids, null-padded; unknown words map to null."""
    ids = [_WORD_TO_ID.get(w, NULL_TOKEN) for w in text.split()]
    ids = ids[:length]
    return ids + [NULL_TOKEN] * (length - len(ids))


def null_sequence(length: int = MAX_TOKENS) -> list:
    return [NULL_TOKEN] * length
