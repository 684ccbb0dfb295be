"""
Prompts, response parsing and chat backends for language-model assisted alignment.

Two prompt kinds are used: a few-shot *virtual entity* prompt asking the model to name the
counterpart of an entity in the target language, and a *multi-choice* prompt asking it to pick
the equivalent entity among at most four labeled options (or answer that none matches).

The multi-choice question over a large candidate union is decomposed into rounds:
the first round asks up to four random candidates, and every later round asks the previous
round's winner again together with up to three fresh random candidates, until every candidate
has been asked once.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
import logging
import re
import threading
import time
from typing import Any, Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import httpx
import numpy as np
import orjson

from kgalign.errors import BackendError, ResponseParseError


logger = logging.getLogger(__name__)


SYSTEM_PREAMBLE = (
    "You are an expert on multilingual knowledge graphs. You identify entities that refer to the same "
    "real-world object across languages. Answer concisely and follow the requested answer format."
)

MASK = "<mask>"
LABELS = "ABCD"
MAX_OPTIONS = len(LABELS)

VIRTUAL_ENTITY_INSTRUCTION = (
    "Given an entity name from a knowledge graph, write the name of the same entity as it would appear in "
    "a {language} knowledge graph. Answer with the name only."
)
VIRTUAL_ENTITY_QUERY = "Input: " + MASK + "\nOutput:"

MULTICHOICE_INSTRUCTION = (
    "Choose the entity that is equivalent to the given entity, meaning both names refer to the same "
    "real-world object. Answer with the label of the option. If none of the options is equivalent, "
    "answer \"none\"."
)
MULTICHOICE_QUERY = 'Which of the following entities is equivalent to "' + MASK + '"?'

ANSWER_PREFIX = re.compile(
    r"^(?:the\s+)?(?:final\s+)?(?:answer|output|virtual entity|name)(?:\s*[:：]|\s+is\b[:：]?)\s*",
    re.IGNORECASE,
)
LIST_MARKER = re.compile(r"^(?:[-*•]|\d+[.)])\s+")
QUOTES = "\"'`“”‘’「」『』《》"
EMPHASIS = re.compile(r"(?<!\w)(\*{1,3}|_{1,3})(?!\s)(.+?)(?<!\s)\1(?!\w)")
# a bare label ends its line, takes punctuation, or is followed by "is correct" and the like
CHOICE_LABEL = re.compile(
    r"^(?:(?:option|choice)\s+)?"
    r"(?:\(([A-D])\)|\[([A-D])\]|([A-D])(?=\s*$|[.):\]：,、]|\s+is\s+(?:correct|right|the\s+answer)\b))",
    re.IGNORECASE,
)
NONE_ANSWER = re.compile(
    r"\bnone\b|\bno equivalent\b|\bneither\b|not (?:in|among|one of) the (?:given )?(?:options|candidates|choices)",
    re.IGNORECASE,
)


class PromptKind(Enum):
    VIRTUAL_ENTITY = "virtual-entity"
    MULTI_CHOICE = "multi-choice"


@dataclass(frozen=True)
class Prompt:
    """
    A rendered prompt.  ``query`` is the query template with the mask slot already replaced by
    ``entity_name``; ``options`` are only set for multi-choice prompts.
    """

    kind: PromptKind
    instruction: str
    demonstrations: Tuple[Tuple[str, str], ...]
    query: str
    entity_name: str
    options: Tuple[str, ...] = ()

    def render(self) -> str:
        parts = [self.instruction]
        if self.demonstrations:
            parts.append("\n\n".join(f"Input: {source}\nOutput: {target}" for source, target in self.demonstrations))
        parts.append(self.query)
        if self.options:
            parts.append("\n".join(f"({label}) {name}" for label, name in zip(LABELS, self.options)))
        return "\n\n".join(parts)

    def messages(self) -> List[Dict[str, str]]:
        return [{"role": "system", "content": SYSTEM_PREAMBLE}, {"role": "user", "content": self.render()}]


def _fill(template: str, entity_name: str) -> str:
    query = template.replace(MASK, entity_name)
    assert MASK not in query, "mask slot left in the rendered query"
    return query


def build_virtual_entity_prompt(
    entity_name: str, demos: Sequence[Tuple[str, str]], target_language: str = "English"
) -> Prompt:
    """
    Few-shot prompt asking for the target-language name of ``entity_name``.

    Arguments
    =========
    entity_name (str)
        Display name of the source entity.
    demos (Sequence[Tuple[str, str]])
        (source name, target name) demonstrations, usually taken from training seeds.
    target_language (str)
        Language named in the instruction.
    """
    if not entity_name.strip():
        raise ValueError("entity name must not be empty")
    if not demos:
        raise ValueError("at least one demonstration pair is required")

    return Prompt(
        kind=PromptKind.VIRTUAL_ENTITY,
        instruction=VIRTUAL_ENTITY_INSTRUCTION.format(language=target_language),
        demonstrations=tuple((str(s), str(t)) for s, t in demos),
        query=_fill(VIRTUAL_ENTITY_QUERY, entity_name),
        entity_name=entity_name,
    )


def _strip_answer(text: str) -> str:
    text = EMPHASIS.sub(r"\2", text.strip())
    text = LIST_MARKER.sub("", text)
    text = ANSWER_PREFIX.sub("", text)
    return text.strip().strip(QUOTES).strip()


def parse_virtual_entity(response: str) -> str:
    """The first non-empty line of ``response`` without quotes, list markers or answer labels."""
    for line in response.splitlines():
        name = _strip_answer(line)
        if name:
            return name
    raise ResponseParseError(f"no entity name in the response {response!r}")


def build_multichoice_prompt(entity_name: str, options: Sequence[str]) -> Prompt:
    if not entity_name.strip():
        raise ValueError("entity name must not be empty")
    if not 1 <= len(options) <= MAX_OPTIONS:
        raise ValueError(f"a multi-choice prompt takes 1 to {MAX_OPTIONS} options, got {len(options)}")
    if len(set(options)) != len(options):
        raise ValueError("multi-choice options must be distinct")

    return Prompt(
        kind=PromptKind.MULTI_CHOICE,
        instruction=MULTICHOICE_INSTRUCTION,
        demonstrations=(),
        query=_fill(MULTICHOICE_QUERY, entity_name),
        entity_name=entity_name,
        options=tuple(options),
    )


class Outcome(Enum):
    SELECTED = "selected"
    NONE = "none"
    PARSE_FAILURE = "parse-failure"


class Choice(NamedTuple):
    outcome: Outcome
    index: Optional[int] = None


def parse_choice(response: str, options: Sequence[str]) -> Choice:
    """
    Resolve a multi-choice response, trying in order: a leading option label, an exact
    (case-insensitive) option name, a unique option name contained in the response, and finally
    a none-answer phrase.
    """
    assert options, "options must not be empty"

    text = _strip_answer(response)
    first_line = text.split("\n", 1)[0].strip()
    match = CHOICE_LABEL.match(first_line)
    if match:
        index = LABELS.index(next(group for group in match.groups() if group).upper())
        if index < len(options):
            return Choice(Outcome.SELECTED, index)

    folded = [name.strip().casefold() for name in options]
    answer = text.rstrip(".。").strip().casefold()
    if answer in folded:
        return Choice(Outcome.SELECTED, folded.index(answer))

    haystack = response.casefold()
    contained = [i for i, name in enumerate(folded) if name and name in haystack]
    # an option named inside a longer contained option does not count on its own
    contained = [i for i in contained if not any(i != j and folded[i] in folded[j] for j in contained)]
    if len(contained) == 1:
        return Choice(Outcome.SELECTED, contained[0])

    if NONE_ANSWER.search(response):
        return Choice(Outcome.NONE)
    return Choice(Outcome.PARSE_FAILURE)


class LlmBackend(ABC):
    """A chat model.  ``complete`` may be called from several threads at once."""

    def __init__(self, max_concurrency: int = 4) -> None:
        assert max_concurrency >= 1, "at least one request must be allowed in flight"
        self._slots = threading.BoundedSemaphore(max_concurrency)

    def complete(self, prompt: Prompt) -> str:
        with self._slots:
            return self._complete(prompt)

    @abstractmethod
    def _complete(self, prompt: Prompt) -> str: ...

    def close(self) -> None:
        pass

    def __enter__(self) -> "LlmBackend":
        return self

    def __exit__(self, *args: Any) -> None:
        self.close()


class NameOracleBackend(LlmBackend):
    """
    Deterministic backend answering from a ground-truth mapping of source to target names: the
    counterpart name for virtual-entity prompts, and the option equal to the counterpart name (or
    "none") for multi-choice prompts.
    """

    def __init__(self, truth: Mapping[str, str], max_concurrency: int = 4) -> None:
        super().__init__(max_concurrency)
        self.truth = dict(truth)

    def _complete(self, prompt: Prompt) -> str:
        counterpart = self.truth.get(prompt.entity_name)
        if prompt.kind is PromptKind.VIRTUAL_ENTITY:
            return counterpart or ""

        if counterpart in prompt.options:
            index = prompt.options.index(counterpart)
            return f"({LABELS[index]}) {counterpart}"
        return "None"


class ScriptedBackend(LlmBackend):
    """Replays canned responses in order and records every prompt it receives."""

    def __init__(self, responses: Sequence[str], cycle: bool = False, max_concurrency: int = 1) -> None:
        super().__init__(max_concurrency)
        self.responses = list(responses)
        self.cycle = cycle
        self.prompts: List[Prompt] = []
        self._lock = threading.Lock()

    def _complete(self, prompt: Prompt) -> str:
        with self._lock:
            position = len(self.prompts)
            self.prompts.append(prompt)

        if self.cycle and self.responses:
            return self.responses[position % len(self.responses)]
        if position >= len(self.responses):
            raise BackendError(f"scripted backend ran out of responses after {len(self.responses)} prompts")
        return self.responses[position]


class PolicyBackend(LlmBackend):
    """Answers each prompt with a caller-supplied function."""

    def __init__(self, policy: Callable[[Prompt], str], max_concurrency: int = 4) -> None:
        super().__init__(max_concurrency)
        self.policy = policy

    def _complete(self, prompt: Prompt) -> str:
        return self.policy(prompt)


class LiveBackend(LlmBackend):
    """
    Chat-completions client.  The request body carries the model, the message list and
    ``temperature`` 0; the reply is read from ``choices[0].message.content`` (or a top-level
    ``result`` string).  Transport errors, 429 and 5xx replies are retried with exponential backoff.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: Optional[str] = None,
        timeout: float = 60.0,
        retries: int = 3,
        backoff: float = 1.0,
        max_concurrency: int = 4,
        transport: Optional[httpx.BaseTransport] = None,
    ) -> None:
        super().__init__(max_concurrency)
        self.endpoint = endpoint
        self.model = model
        self.retries = retries
        self.backoff = backoff

        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def close(self) -> None:
        self._client.close()

    def payload(self, prompt: Prompt) -> bytes:
        return orjson.dumps({"model": self.model, "messages": prompt.messages(), "temperature": 0})

    def _complete(self, prompt: Prompt) -> str:
        body = self.payload(prompt)
        problem = ""

        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))

            try:
                response = self._client.post(self.endpoint, content=body)
            except httpx.TransportError as e:
                problem = f"{type(e).__name__}: {e}"
                logger.warning("Request to %s failed (attempt %i): %s", self.endpoint, attempt + 1, problem)
                continue

            if response.status_code == 429 or response.status_code >= 500:
                problem = f"HTTP {response.status_code}"
                logger.warning("Request to %s failed (attempt %i): %s", self.endpoint, attempt + 1, problem)
                continue
            if response.status_code >= 400:
                raise BackendError(f"HTTP {response.status_code}: {response.text[:500]}")

            return _reply_text(response)

        raise BackendError(f"giving up after {self.retries + 1} attempts, last error {problem}")


def _reply_text(response: httpx.Response) -> str:
    try:
        data = orjson.loads(response.content)
    except orjson.JSONDecodeError:
        raise BackendError("backend reply is not JSON") from None

    if isinstance(data, dict):
        try:
            return str(data["choices"][0]["message"]["content"])
        except (KeyError, IndexError, TypeError):
            pass
        if isinstance(data.get("result"), str):
            return data["result"]
    raise BackendError("backend reply carries no message content")


class Option(NamedTuple):
    entity_id: int
    name: str


@dataclass(frozen=True)
class ChoiceRound:
    index: int
    options: Tuple[Option, ...]
    fresh: Tuple[Option, ...]
    outcome: Outcome
    selected: Optional[int]
    responses: Tuple[str, ...]


@dataclass
class ProtocolState:
    source: int
    union: Tuple[Option, ...]
    unasked: List[Option]
    winner: Optional[Option] = None
    rounds: List[ChoiceRound] = field(default_factory=list)


@dataclass(frozen=True)
class Prediction:
    source: int
    target: Optional[int]
    fallback: bool
    rounds: Tuple[ChoiceRound, ...]


def ask(backend: LlmBackend, prompt: Prompt, retries: int = 2) -> Tuple[Choice, Tuple[str, ...]]:
    """Ask a multi-choice prompt, re-asking up to ``retries`` times while the reply cannot be parsed."""
    responses = []
    choice = Choice(Outcome.PARSE_FAILURE)
    for _ in range(retries + 1):
        response = backend.complete(prompt)
        responses.append(response)
        choice = parse_choice(response, prompt.options)
        if choice.outcome is not Outcome.PARSE_FAILURE:
            break
    return choice, tuple(responses)


def _play_round(
    backend: LlmBackend, state: ProtocolState, source_name: str, rng: np.random.Generator, retries: int
) -> None:
    fresh_count = MAX_OPTIONS - (state.winner is not None)
    picks = rng.choice(len(state.unasked), size=min(fresh_count, len(state.unasked)), replace=False)
    fresh = tuple(state.unasked[i] for i in picks)
    taken = set(int(i) for i in picks)
    state.unasked = [option for i, option in enumerate(state.unasked) if i not in taken]

    options = ((state.winner,) if state.winner is not None else ()) + fresh
    choice, responses = ask(backend, build_multichoice_prompt(source_name, [o.name for o in options]), retries)

    if choice.outcome is Outcome.PARSE_FAILURE:
        logger.warning(
            "Unparseable answer for entity %i after %i attempts: %r", state.source, len(responses), responses[-1]
        )

    state.winner = options[choice.index] if choice.outcome is Outcome.SELECTED and choice.index is not None else None
    state.rounds.append(
        ChoiceRound(
            index=len(state.rounds),
            options=options,
            fresh=fresh,
            outcome=choice.outcome,
            selected=state.winner.entity_id if state.winner else None,
            responses=responses,
        )
    )


def iterative_predict(
    backend: LlmBackend,
    source: int,
    source_name: str,
    union: Sequence[Tuple[int, str]],
    rng_seed: int,
    fallback: Optional[int] = None,
    retries: int = 2,
) -> Prediction:
    """
    Run the multi-round elimination protocol for one source entity.

    Arguments
    =========
    backend (LlmBackend)
        The chat model.
    source (int), source_name (str)
        Entity id and display name of the entity to align.
    union (Sequence[Tuple[int, str]])
        Deduplicated (target id, display name) candidates.
    rng_seed (int)
        Together with ``source``, fixes which candidates are asked in which round and order.
    fallback (int) [optional]
        Prediction used, and flagged, when the last round has no winner.
    retries (int)
        Re-asks per round while the reply is unparseable; a round that stays unparseable counts as
        answered with none.

    Returns
    =======
    prediction (Prediction)
        The final winner and the transcript of rounds.
    """
    assert union, "candidate union must not be empty"
    options = tuple(Option(int(i), name) for i, name in union)
    assert len({o.entity_id for o in options}) == len(options), "candidate union has duplicate entities"
    assert len({o.name for o in options}) == len(options), "candidate union has duplicate names"

    rng = np.random.default_rng([rng_seed, source])
    state = ProtocolState(source=source, union=options, unasked=list(options))
    while state.unasked:
        _play_round(backend, state, source_name, rng, retries)

    if state.winner is not None:
        return Prediction(source, state.winner.entity_id, False, tuple(state.rounds))
    return Prediction(source, fallback, fallback is not None, tuple(state.rounds))


def round_bound(union_size: int) -> int:
    """Number of rounds the protocol needs when every round produces a winner."""
    return 1 + -(-max(0, union_size - MAX_OPTIONS) // (MAX_OPTIONS - 1))


def generate_virtual_entity(
    backend: LlmBackend,
    entity_name: str,
    demos: Sequence[Tuple[str, str]],
    target_language: str = "English",
    retries: int = 2,
) -> Tuple[Optional[str], Tuple[str, ...]]:
    """Ask for a virtual equivalent entity; returns (name or None, raw responses)."""
    prompt = build_virtual_entity_prompt(entity_name, demos, target_language)
    responses = []
    for _ in range(retries + 1):
        response = backend.complete(prompt)
        responses.append(response)
        try:
            return parse_virtual_entity(response), tuple(responses)
        except ResponseParseError:
            continue

    logger.warning("No virtual entity for %r after %i attempts", entity_name, len(responses))
    return None, tuple(responses)


def transcript_records(prediction: Prediction) -> List[Dict[str, Any]]:
    """One serializable record per round of a prediction."""
    return [
        {
            "kind": PromptKind.MULTI_CHOICE.value,
            "source": prediction.source,
            "round": r.index,
            "options": [o.entity_id for o in r.options],
            "option_names": [o.name for o in r.options],
            "fresh": [o.entity_id for o in r.fresh],
            "responses": list(r.responses),
            "outcome": r.outcome.value,
            "selected": r.selected,
        }
        for r in prediction.rounds
    ]
