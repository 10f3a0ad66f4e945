"""Prompts sent to the evaluator and parsing of its list answers."""

import json
import re
from collections.abc import Iterable, Mapping, Sequence

from qualpipe.model import Instance, Kind, Target, normalize_name

TASK_FAMILIES = ("generic", "code", "dialogue", "multiple-choice")

_NOT_OVERALL = "[IMPORTANT] Do NOT list the overall task as a subtask and be GENERAL."
_SUBTASK_FORMAT = (
    "Structure the response as: Subtask: <subtask>. Generate a numbered list."
)

DISCOVERY_TEMPLATES: dict[str, dict[Kind, str]] = {
    "generic": {
        Kind.DOMAIN: (
            "Given the following examples, what are relevant domains for the data? "
            "Focus on the example data BUT be general. "
            "Structure the response as a numbered list."
        ),
        Kind.SUBTASK: (
            "Given the following examples, what are specific ATOMIC sub-tasks a "
            "machine learning model needs to be competent at for the underlying "
            f"task? Focus on the example data BUT be general. {_NOT_OVERALL} "
            f"{_SUBTASK_FORMAT}"
        ),
    },
    "code": {
        Kind.DOMAIN: (
            "Given the following examples, what are relevant domains for the "
            "following programs? Focus on the example programs BUT be general. "
            "Structure the response as a numbered list."
        ),
        Kind.SUBTASK: (
            "Given the example programs, what are specific ATOMIC sub-tasks a "
            "machine learning model needs to be competent at for the underlying "
            f"task? Focus on the example programs BUT be general. {_NOT_OVERALL} "
            f"{_SUBTASK_FORMAT}"
        ),
    },
    "dialogue": {
        Kind.DOMAIN: (
            "Given the following conversations, what are relevant domains for the "
            "data? Focus on the example data BUT be general. "
            "Structure the response as a numbered list."
        ),
        Kind.SUBTASK: (
            "Given the example conversations, what are specific sub-tasks a machine "
            "learning model needs to be competent at for the underlying task? Focus "
            f"on the example data BUT be general. {_NOT_OVERALL} {_SUBTASK_FORMAT}"
        ),
    },
    "multiple-choice": {
        Kind.DOMAIN: (
            "Given the following examples, what are relevant domains for the data? "
            "Focus on the example data BUT be general. "
            "Structure the response as a numbered list."
        ),
        Kind.SUBTASK: (
            "Given the example questions and answers, what are the sub-tasks a "
            "machine learning model needs to be competent at to answer them well? "
            "Focus on the example data BUT please be general. [IMPORTANT] Do NOT "
            "list the overall task as a subtask and be GENERAL while being GROUNDED "
            f"in the example data. {_SUBTASK_FORMAT}"
        ),
    },
}

SCORING_TEMPLATES: dict[Kind, str] = {
    Kind.DOMAIN: (
        "Given the {subject} a language model, rate to what degree it belongs to "
        "each of the following domains. Rate on a scale of 1-5, with 5 being "
        "completely belongs and 1 being not belonging at all. [Important] For each "
        "domain, format the output as [Domain 1: <domain>, Score: <score>, "
        "Evidence: <evidence for score>] [Domain 2: <domain>, Score: <score>, "
        "Evidence: <evidence for score>] ... [Domain N: <domain>, Score: <score>, "
        "Evidence: <evidence for score>]. [Important] Make sure to include concrete "
        "evidence based on the text to JUSTIFY the score. Remember you are an "
        "ACCURATE, FAITHFUL, CRITICAL and FAIR judge."
    ),
    Kind.SUBTASK: (
        "Given the {subject} a language model, rate to what degree each of the "
        "following subtasks is needed to successfully understand and complete the "
        "task. Rate on a scale of 1-5, with 5 being very used and 1 being not used "
        "at all. [Important] For each subtask, format the output as [Subtask 1: "
        "<subtask>, Score: <score>, Evidence: <evidence for score>] [Subtask 2: "
        "<subtask>, Score: <score>, Evidence: <evidence for score>] ... [Subtask N: "
        "<subtask>, Score: <score>, Evidence: <evidence for score>]. [IMPORTANT] Do "
        "NOT add line breaks between subtask, score and evidence. [Important] Make "
        "sure to include concrete evidence based on the text to JUSTIFY the score. "
        "Remember you are an ACCURATE, FAITHFUL, CRITICAL and FAIR judge."
    ),
}

INSIGHT_SYSTEM = (
    "Given a holistic picture of the performance of a machine learning model, you "
    "are asked to summarize the model's overall performance."
)
INSIGHT_REQUEST = (
    "Given the above information, please write a brief summary highlighting "
    "important information. Please be precise and concise but please be "
    "comprehensive."
)

_NUMBERED = re.compile(r"^\s*\d+\s*[.)]\s*(?P<item>.+?)\s*$")
_LABEL = re.compile(r"^(?:sub-?task|domain)\s*\d*\s*:\s*", re.IGNORECASE)
_DESCRIPTION = re.compile(r"\s+(?:-|–|—)\s+|:\s+")
MAX_NAME_LENGTH = 80


def _retry_note(attempt: int, problem: str) -> list[str]:
    if attempt == 0:
        return []
    return ["", f"[Attempt {attempt + 1}] {problem}"]


def _numbered(names: Iterable[str]) -> list[str]:
    return [f"{n}. {name}" for n, name in enumerate(names, 1)]


def discovery_prompt(  # noqa: PLR0913
    kind: Kind,
    task: str,
    task_instruction: str,
    instances: Sequence[Instance],
    *,
    include_reference: bool = True,
    attempt: int = 0,
) -> str:
    """Ask for candidate attributes of `kind` in a chunk of instances."""
    template = DISCOVERY_TEMPLATES.get(task, DISCOVERY_TEMPLATES["generic"])[kind]
    lines = [template]
    if task_instruction:
        lines += ["", f"Task: {task_instruction}"]
    lines += ["", "Examples:"]
    for n, inst in enumerate(instances, 1):
        lines.append(f"Example {n}:")
        lines.append(f"Input: {inst.input}")
        if include_reference:
            lines.append(f"Output: {inst.reference}")
    problem = "The previous response could not be read. Answer with a numbered list."
    lines += _retry_note(attempt, problem)
    return "\n".join(lines)


def prune_prompt(
    kind: Kind,
    candidates: Sequence[str],
    size: int,
    task_instruction: str,
    attempt: int = 0,
) -> str:
    """Ask for the best `size` attributes among `candidates`."""
    lines = [f"Below are candidate {kind.plural} found in a dataset."]
    if task_instruction:
        lines.append(f"Task: {task_instruction}")
    lines += ["", "Candidates:", *_numbered(candidates), ""]
    lines.append(
        f"Select the {size} best {kind.plural} from the candidates: prefer ones "
        "that are general, distinct from each other and grounded in the data. "
        "Copy each selected item verbatim from the candidates. "
        "Structure the response as a numbered list, best first."
    )
    problem = (
        "Some items of the previous response were not candidates. "
        "Only copy items from the list."
    )
    lines += _retry_note(attempt, problem)
    return "\n".join(lines)


def scoring_prompt(
    kind: Kind,
    names: Sequence[str],
    instance: Instance,
    target: Target,
    attempt: int = 0,
) -> str:
    """Ask for the affinity of one instance to every attribute in `names`."""
    subject = "input to" if target is Target.INPUT else "output of"
    lines = [SCORING_TEMPLATES[kind].format(subject=subject), ""]
    lines += [f"{kind.label}s:", *_numbered(names), ""]
    if target is Target.INPUT:
        lines += ["Input:", instance.input]
    else:
        lines += ["Task input:", instance.input, "", "Output:", instance.text(target)]
    problem = (
        f"The previous response was incomplete. Rate all {len(names)} "
        f"{kind.plural} in the requested format."
    )
    lines += _retry_note(attempt, problem)
    return "\n".join(lines)


def canonical_json(values: Mapping[str, float]) -> str:
    """JSON object with sorted keys and four-decimal numbers."""
    items = (f"{json.dumps(k)}: {v:.4f}" for k, v in sorted(values.items()))
    return "{" + ", ".join(items) + "}"


def insight_prompt(
    task_instruction: str,
    names: Mapping[Kind, Sequence[str]],
    priors: Mapping[Kind, Mapping[str, float]],
    proficiency: Mapping[Kind, Mapping[str, float]],
    calibration: None | Mapping[str, float],
) -> str:
    """Summarize a run as structured text for the insight request.

    The distance block is only written when sub-tasks are part of `names`.
    """
    lines = [
        "A machine learning model is tasked with the following task: "
        + task_instruction,
        "",
    ]
    for kind, kind_names in names.items():
        listed = ", ".join(kind_names)
        lines.append(f"These are the {kind.plural} for the task: {listed}")
    lines.append("")
    for kind in names:
        lines.append(
            "In the evaluation data, these are the importance scores of the "
            f"{kind.plural}: {canonical_json(priors[kind])}"
        )
    lines.append("")
    for kind in names:
        lines.append(
            "The following scores show how well the model performs on the "
            f"{kind.plural}: {canonical_json(proficiency[kind])}"
        )
    if Kind.SUBTASK in names and calibration:
        lines += [
            "",
            "The following distance demonstrates how much the sub-tasks are "
            "actually used for generating the output when they are required to "
            "generate it. Therefore, a low distance implies that the model is "
            f"utilizing the sub-task when it needs to: {canonical_json(calibration)}. "
            "[Important] Lower distance implies the sub-task is leveraged when it "
            "needs to be used.",
        ]
    elif Kind.SUBTASK in names:
        lines += [
            "",
            "No skill usage distances are available for this run because no "
            "predictions were scored against the sub-tasks.",
        ]
    lines += ["", INSIGHT_REQUEST]
    return "\n".join(lines)


def clean_item(item: str) -> str:
    """Reduce a list item to an attribute name.

    Drops `Subtask:`-style labels, markdown emphasis, quotes and a trailing
    description after a colon or dash.
    """
    item = item.replace("**", "").replace("__", "").strip()
    item = _LABEL.sub("", item)
    item = _DESCRIPTION.split(item, maxsplit=1)[0]
    item = item.strip().strip("\"'`").rstrip(".;,").strip()
    return normalize_name(item)[:MAX_NAME_LENGTH]


def parse_numbered_list(text: str) -> list[str]:
    """Items of every numbered line in `text`, in order."""
    items = []
    for line in text.splitlines():
        if (m := _NUMBERED.match(line)) is not None and (item := clean_item(m["item"])):
            items.append(item)
    return items
