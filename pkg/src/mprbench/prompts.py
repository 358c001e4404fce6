"""Prompt templates for the four reasoning structures.

Bodies are kept word for word, including their quirks (the DR dividing prompt
always says "beyond 5 lines"; the MR implicit answering prompt still carries an
``Information:`` line).  Slots are bracketed names such as ``[Question]``.
"""
from __future__ import annotations

import re
from typing import Any, Mapping, Sequence


class MissingSlot(KeyError):
    pass


_ANSWER_RULES = (
    "1. your answer should be as concise as possible, commonly in a few words.\n"
    "2. if the answer is a date, please output it in YYYY-MM-DD format.\n"
    "3. if the answer is a number, please do not include commas. If the numerical answer has units, "
    "please indicate them in parentheses, such as 5 (USD).\n"
    "You should only output the answer in one line (no code block), without any other descriptions."
)
_THOUGHT_RULES = (
    "1. Your thoughts should be concise but informative sentences.\n"
    "2. You should only output the thoughts in one line (no code block)."
)
_SUBANSWER_RULES = (
    "1. The answer should be concise but informative.\n"
    "2. You should only output the answer in one line (no code block), without any other descriptions."
)
_DIVIDE = (
    "To better answer the following question, please break it down into several sub-questions.\n"
    "Question: [Question]\n"
    "Requirements:\n"
    "1. The sub-questions should be concise.\n"
    "2. Each sub-questions is on a separate line, without any other descriptions.\n"
    "3. You can decompose the problem into 1 to [Max Sub-question] sub-questions, "
    "and any content beyond 5 lines will be ignored."
)

TEMPLATES: dict[str, str] = {
    "nr_explicit": (
        "Please help me answer the following question based on the given information.\n"
        "Information: [Retrieved References]\n"
        "Question: [Question]\n"
        "Requirements:\n" + _ANSWER_RULES
    ),
    "nr_implicit": (
        "Please help me answer the following question.\n"
        "Question: [Question]\n"
        "Requirements:\n" + _ANSWER_RULES
    ),
    "sr_start_explicit": (
        "To better answer the following question, let's think step by step.\n"
        "The current step is 1, and you should provide the final answer at step [Max Steps].\n"
        "Please generate your thoughts for the current step, and you may refer to the given information.\n"
        "Information: [Retrieved References]\n"
        "Question: [Question]\n"
        "Requirements:\n" + _THOUGHT_RULES
    ),
    "sr_think_explicit": (
        "To better answer the following questions, let's think step by step.\n"
        "The current step is [Current Step], and you should provide the final answer at step [Max Steps].\n"
        "Please generate your thoughts for the current step, and you may refer to the given information "
        "and your previous thought.\n"
        "Information: [Retrieved References]\n"
        "Previous Thoughts: [Previous Thought]\n"
        "Question: [Question]\n"
        "Requirements:\n" + _THOUGHT_RULES
    ),
    "sr_answer_explicit": (
        "To better answer the following question, let's think step by step.\n"
        "Please help me generate the answer to the question based on the given information "
        "and your previous thoughts.\n"
        "Information: [Retrieved References]\n"
        "Previous Thoughts: [Previous Thought]\n"
        "Question: [Question]\n"
        "Requirements:\n" + _ANSWER_RULES
    ),
    "sr_start_implicit": (
        "To better answer the following question, let's think step by step.\n"
        "The current step is 1, and you should provide the final answer at step [Max Steps].\n"
        "Please generate your thoughts for the current step.\n"
        "Question: [Question]\n"
        "Requirements:\n" + _THOUGHT_RULES
    ),
    "sr_think_implicit": (
        "To better answer the following questions, let's think step by step.\n"
        "The current step is [Current Step], and you should provide the final answer at step [Max Steps].\n"
        "Please generate your thoughts for the current step, and you may refer to your previous thought.\n"
        "Previous Thoughts: [Previous Thought]\n"
        "Question: [Question]\n"
        "Requirements:\n" + _THOUGHT_RULES
    ),
    "sr_answer_implicit": (
        "To better answer the following question, let's think step by step.\n"
        "Please help me generate the answer to the question based on your previous thoughts.\n"
        "Previous Thoughts: [Previous Thought]\n"
        "Question: [Question]\n"
        "Requirements:\n" + _ANSWER_RULES
    ),
    "mr_start_explicit": (
        "To better answer the following question, let's think step by step.\n"
        "Please generate your thoughts for the current step, and you may refer to the given information.\n"
        "Information: [Retrieved References]\n"
        "Question: [Question]\n"
        "Requirements:\n" + _THOUGHT_RULES
    ),
    "mr_think_explicit": (
        "To better answer the following questions, let's think step by step.\n"
        "Please generate your thoughts for the current step, and you may refer to the given information "
        "and your previous thoughts.\n"
        "Information: [Retrieved References]\n"
        "Previous Thoughts: [Previous Thought]\n"
        "Question: [Question]\n"
        "Requirements:\n" + _THOUGHT_RULES
    ),
    "mr_answer_explicit": (
        "To better answer the following question, let's think step by step.\n"
        "Please help me generate the answer to the question based on the given information "
        "and your previous thoughts.\n"
        "Information: [Retrieved References]\n"
        "Previous Thoughts: [Previous Thought]\n"
        "Question: [Question]\n"
        "Requirements:\n" + _ANSWER_RULES
    ),
    "mr_start_implicit": (
        "To better answer the following question, let's think step by step.\n"
        "Please generate your thoughts for the current step.\n"
        "Question: [Question]\n"
        "Requirements:\n" + _THOUGHT_RULES
    ),
    "mr_think_implicit": (
        "To better answer the following questions, let's think step by step.\n"
        "Please generate your thoughts for the current step, and you may refer to your previous thoughts.\n"
        "Previous Thoughts: [Previous Thought]\n"
        "Question: [Question]\n"
        "Requirements:\n" + _THOUGHT_RULES
    ),
    "mr_answer_implicit": (
        "To better answer the following question, let's think step by step.\n"
        "Please help me generate the answer to the question based on your previous thoughts.\n"
        "Information: [Retrieved References]\n"
        "Previous Thoughts: [Previous Thought]\n"
        "Question: [Question]\n"
        "Requirements:\n" + _ANSWER_RULES
    ),
    "dr_divide_explicit": _DIVIDE,
    "dr_solve_explicit": (
        "In order to better answer the following question, we have decomposed them into several sub-questions.\n"
        "Please help me generate the answer to the current sub-question based on the given information.\n"
        "Question: [Question]\n"
        "Sub-questions: [Current State]\n"
        "Current Sub-question: [Current Sub-question]\n"
        "Information: [Retrieved References]\n"
        "Requirements:\n" + _SUBANSWER_RULES
    ),
    "dr_merge_explicit": (
        "In order to better answer the following question, we have decomposed them into several sub-questions "
        "and answered them separately.\n"
        "Please help me generate the final answer to the question based on the sub-questions "
        "and the given information.\n"
        "Question: [Question]\n"
        "Sub-questions and Answers: [Current State]\n"
        "Information: [Retrieved References]\n"
        "Requirements:\n" + _ANSWER_RULES
    ),
    "dr_divide_implicit": _DIVIDE,
    "dr_solve_implicit": (
        "In order to better answer the following question, we have decomposed them into several sub-questions.\n"
        "Please help me generate the answer to the current sub-question.\n"
        "Question: [Question]\n"
        "Sub-questions: [Current State]\n"
        "Current Sub-question: [Current Sub-question]\n"
        "Requirements:\n" + _SUBANSWER_RULES
    ),
    "dr_merge_implicit": (
        "In order to better answer the following question, we have decomposed them into several sub-questions "
        "and answered them separately.\n"
        "Please help me generate the final answer to the question based on the sub-questions.\n"
        "Question: [Question]\n"
        "Sub-questions and Answers: [Current State]\n"
        "Requirements:\n" + _ANSWER_RULES
    ),
    # Not from the published set: the chain-selection step of MR is unspecified there.
    "mr_select": (
        "To better answer the following question, please choose the most promising candidate thought "
        "for the current step.\n"
        "Previous Thoughts: [Previous Thought]\n"
        "Candidate Thoughts: [Candidates]\n"
        "Question: [Question]\n"
        "Requirements:\n"
        "1. You should only output the number of the chosen candidate in one line (no code block), "
        "without any other descriptions."
    ),
}

PUBLISHED = tuple(t for t in TEMPLATES if t != "mr_select")

# slot token -> render-argument key
SLOTS = {
    "[Question]": "question",
    "[Retrieved References]": "references",
    "[Previous Thought]": "thoughts",
    "[Current Step]": "current_step",
    "[Max Steps]": "max_steps",
    "[Current State]": "state",
    "[Current Sub-question]": "sub_question",
    "[Max Sub-question]": "max_subquestions",
    "[Candidates]": "candidates",
}
_SLOT_RE = re.compile("|".join(re.escape(s) for s in SLOTS))

# Explicit-memory templates refuse empty references.  The MR implicit answering
# prompt keeps an Information line but may legitimately receive nothing.
_NONEMPTY_REFS = {t for t in TEMPLATES if t.endswith("_explicit") and "[Retrieved References]" in TEMPLATES[t]}


def required_slots(template_id: str) -> list[str]:
    return [SLOTS[m] for m in dict.fromkeys(_SLOT_RE.findall(TEMPLATES[template_id]))]


def format_thoughts(thoughts: Sequence[str]) -> str:
    return "\n".join(f"Step {i}: {t}" for i, t in enumerate(thoughts, start=1))


def format_candidates(candidates: Sequence[str]) -> str:
    return "\n".join(f"Candidate {i}: {c}" for i, c in enumerate(candidates, start=1))


def format_state(pairs: Sequence[tuple[str, str | None]]) -> str:
    """Numbered sub-questions, each followed by its answer once known."""
    lines = []
    for i, (q, a) in enumerate(pairs, start=1):
        lines.append(f"{i}. {q}" if a is None else f"{i}. {q} Answer: {a}")
    return "\n".join(lines)


def _as_text(key: str, value: Any) -> str:
    if key == "references":
        return "\n".join(value) if not isinstance(value, str) else value
    if key == "thoughts":
        return format_thoughts(value) if not isinstance(value, str) else value
    if key == "candidates":
        return format_candidates(value) if not isinstance(value, str) else value
    if key == "state":
        return format_state(value) if not isinstance(value, str) else value
    return str(value)


def render_prompt(template_id: str, slots: Mapping[str, Any]) -> str:
    try:
        template = TEMPLATES[template_id]
    except KeyError:
        raise KeyError(f"unknown template {template_id!r}") from None
    values = {}
    for key in required_slots(template_id):
        if slots.get(key) is None:
            raise MissingSlot(f"{template_id} needs slot {key!r}")
        values[key] = _as_text(key, slots[key])
    if template_id in _NONEMPTY_REFS and not values["references"].strip():
        raise MissingSlot(f"{template_id} needs non-empty references")
    # single pass, so slot values that look like slot tokens stay literal
    return _SLOT_RE.sub(lambda m: values[SLOTS[m.group(0)]], template)
