"""
Prompt templates for each task.

A prompt is the history preamble (retrieved documents in rank order), the
task instruction, and the user input. With no documents the preamble and the
reference to the profiles are dropped (zero-shot form).
"""

from typing import Dict, Optional, Sequence

from corpus.dataset import Document
from utils.errors import ConfigError, ContractError

PREAMBLE = "The historical profiles are as follows: {histories}. "
PROFILE_LEAD = "Based on the historical profiles provided, "

LAMP2_TAGS = (
    "sci-fi", "based on a book", "comedy", "action", "twist ending", "dystopia",
    "dark comedy", "classic", "psychology", "fantasy", "romance",
    "thought-provoking", "social commentary", "violence", "true story",
)

# task -> (lead, instruction, user input)
TEMPLATES: Dict[str, tuple] = {
    "LaMP-1": (
        PROFILE_LEAD,
        "please choose one of the following two references that is more relevant to the user's input title: "
        "[1] {reference_1}; [2] {reference_2}. Please just answer with \"[1]\" or \"[2]\" without explanation. ",
        "\"title\": {query}.",
    ),
    "LaMP-2": (
        PROFILE_LEAD,
        "please select the tag from [" + ", ".join(LAMP2_TAGS) + "] that is most relevant to the user's input "
        "description. Please just answer with the tag name without explanation. ",
        "\"description\": {query}; \"tag\": ",
    ),
    "LaMP-3": (
        PROFILE_LEAD,
        "what is the score of the following review on a scale of 1 to 5? just answer with 1, 2, 3, 4, or 5 "
        "without further explanation. ",
        "\"review\": {query}; \"score\": ",
    ),
    "LaMP-4": (
        PROFILE_LEAD,
        "please generate a title for the given user's input text. Please generate it in the following format: "
        "{{\"title\": \"generated title\"}} without explanation, and use only English. ",
        "\"text\": {query}; \"title\": ",
    ),
    "LaMP-5": (
        PROFILE_LEAD,
        "please generate a title for the given user's input abstract. Please generate it in the following "
        "format: {{\"title\": \"generated title\"}} without explanation, and use only English. ",
        "\"abstract\": {query}; \"title\": ",
    ),
    "LaMP-7": (
        "Based on the style pattern of the historical tweets provided, ",
        "please paraphrase the user's input tweet without any explanation before or after it. Please generate "
        "it in the following format: {{\"tweet\": \"generated tweet\"}} without explanation, and use only "
        "English. ",
        "\"tweet\": {query}.",
    ),
    "synthetic": (
        PROFILE_LEAD,
        "please answer the user's input query. Please generate it in the following format: "
        "{{\"answer\": \"generated answer\"}} without explanation. ",
        "\"query\": {query}; \"answer\": ",
    ),
}

# How one history document is shown; missing fields fall back to the text
HISTORY_FORMATS = {
    "LaMP-1": "\"title\": {title} \"abstract\": {abstract}",
    "LaMP-2": "\"description\": {description}; \"tag\": {tag}",
    "LaMP-3": "\"review\": {review} \"score\": {score}",
    "LaMP-4": "\"text\": {text} \"title\": {title}",
    "LaMP-5": "\"abstract\": {abstract} \"title\": {title}",
    "LaMP-7": "\"tweet\": {tweet}",
    "synthetic": "{text}",
}


class _FallbackFields(dict):
    def __init__(self, doc: Document):
        super().__init__(doc.aux)
        self["text"] = doc.aux.get("text", doc.text)
        self._default = doc.text

    def __missing__(self, key):
        return self._default


def render_history(task: str, doc: Document) -> str:
    if task not in HISTORY_FORMATS:
        raise ConfigError(f"unknown task '{task}'")
    return HISTORY_FORMATS[task].format_map(_FallbackFields(doc))


def build_prompt(
    task: str,
    query: str,
    documents: Sequence[Document],
    aux: Optional[Dict[str, str]] = None,
) -> str:
    """
    Fill the task template.

    Args:
        task: Task id
        query: The user input
        documents: Retrieved documents in rank order (empty for zero-shot)
        aux: Extra template fields (LaMP-1 references)
    """
    if task not in TEMPLATES:
        raise ConfigError(f"unknown task '{task}'")
    lead, instruction, user_input = TEMPLATES[task]
    fields = dict(aux or {})
    if task == "LaMP-1" and not {"reference_1", "reference_2"} <= fields.keys():
        raise ContractError("LaMP-1 prompts need reference_1 and reference_2")

    body = instruction.format(**fields) + user_input.format(query=query)
    if not documents:
        return body[0].upper() + body[1:]
    histories = " ".join(render_history(task, doc) for doc in documents)
    return PREAMBLE.format(histories=histories) + lead + body
