"""Verifiable rewards: output-format check, exact-match accuracy, weighted sum.

Simulated responses use a four-class token grammar::

    THINK* MARK <answer> END

``THINK`` tokens stand for the reasoning block, ``MARK`` for the opening of
the boxed answer. Real text responses (``<think>...</think> ... \\boxed{..}``)
are handled by :func:`parse_text` for offline log analysis.
"""

from __future__ import annotations

from dataclasses import dataclass

THINK, MARK, END = 0, 1, 2
NUM_SPECIAL = 3
FORMAT_WEIGHT = 0.1
ACCURACY_WEIGHT = 0.9


def answer_token(k):
    return NUM_SPECIAL + k


def vocab_size(num_answers):
    return NUM_SPECIAL + num_answers


@dataclass(frozen=True)
class ParsedResponse:
    has_think_block: bool
    boxed_answer: object | None
    well_formed: bool
    tokens: tuple = ()


def parse_tokens(tokens):
    """Parse a token-id sequence under the THINK* MARK answer END grammar.

    The answer is the token right after the first MARK, if it is an answer
    token. ``well_formed`` requires exactly that shape and nothing else.
    """
    tokens = tuple(int(t) for t in tokens)
    boxed = None
    if MARK in tokens:
        j = tokens.index(MARK)
        if j + 1 < len(tokens) and tokens[j + 1] >= NUM_SPECIAL:
            boxed = tokens[j + 1] - NUM_SPECIAL
    n_think = 0
    while n_think < len(tokens) and tokens[n_think] == THINK:
        n_think += 1
    tail = tokens[n_think:]
    well_formed = (
        len(tail) == 3 and tail[0] == MARK and tail[1] >= NUM_SPECIAL and tail[2] == END
    )
    return ParsedResponse(n_think > 0 or well_formed, boxed, well_formed, tokens)


def _boxed_content(text, start):
    """Return the brace-balanced content after ``\\boxed{`` at ``start``, or None."""
    depth = 1
    i = start
    while i < len(text):
        ch = text[i]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start:i]
        i += 1
    return None


def parse_text(text):
    """Scan a text response for a think block and a single boxed answer.

    Literal substring matching with first-match semantics: the think block is
    the first ``<think>`` ... ``</think>`` pair; the response is well formed
    when exactly one ``\\boxed{...}`` appears, after the closing tag.
    """
    open_at = text.find("<think>")
    close_at = text.find("</think>", open_at + len("<think>")) if open_at >= 0 else -1
    has_think = open_at >= 0 and close_at >= 0

    marker = "\\boxed{"
    first = text.find(marker)
    boxed = None
    if first >= 0:
        boxed = _boxed_content(text, first + len(marker))
        if boxed is not None:
            boxed = boxed.strip()
    count = 0
    pos = text.find(marker)
    while pos >= 0:
        count += 1
        pos = text.find(marker, pos + len(marker))
    well_formed = (
        has_think
        and text.lstrip().startswith("<think>")
        and count == 1
        and boxed is not None
        and first > close_at
    )
    return ParsedResponse(has_think, boxed, well_formed)


def format_reward(parsed):
    return 1 if parsed.well_formed else 0


def accuracy_reward(parsed, truth):
    """1 iff a boxed answer was found and equals ``truth`` exactly."""
    if parsed.boxed_answer is None:
        return 0
    if isinstance(parsed.boxed_answer, str) and not isinstance(truth, str):
        truth = str(truth)
    return 1 if parsed.boxed_answer == truth else 0


def overall_reward(fmt, acc, format_weight=FORMAT_WEIGHT, accuracy_weight=ACCURACY_WEIGHT):
    return format_weight * fmt + accuracy_weight * acc
