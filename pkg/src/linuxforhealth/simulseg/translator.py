"""
translator.py

The translation contract used by simultaneous translation sessions, and its implementations.

A translator maps (source tokens, forced prefix) to a continuation. The forced prefix holds the target tokens already
committed by the session; translators never rewrite it.

Implementations:
* EchoTranslator - copies the source, used to exercise latency metrics
* SovToyTranslator - a dictionary translator which moves verbs to the end of the sentence (SVO to SOV)
* ExternalProcessTranslator - speaks a line protocol with an external process over stdin/stdout
"""
import logging
import queue
import threading
from abc import ABC, abstractmethod
from subprocess import PIPE, Popen
from typing import Dict, FrozenSet, List, Literal, Optional, Sequence, Tuple, Union

from pydantic import Field, root_validator

from .config import ExternalProtocolFields, GlossColumns, get_config
from .models import SimulSegModel, TokenCategory
from .support import expand_path

logger = logging.getLogger(__name__)


class TranslatorException(Exception):
    """Raised when a translator cannot produce a continuation"""

    pass


class AmbiguousPrefixError(TranslatorException):
    """Raised when a forced prefix cannot be matched to the glosses of the source"""

    pass


class UnknownWordError(TranslatorException):
    """Raised when a source word has no gloss dictionary entry"""

    def __init__(self, word: str) -> None:
        super().__init__(f"no dictionary entry for {word!r}")
        self.word = word


class Translator(ABC):
    """
    Translates a source prefix under a forced target prefix.
    Implementations are deterministic and hold no per-session state.
    """

    @abstractmethod
    def translate(
        self, source: Sequence[str], forced_prefix: Sequence[str] = ()
    ) -> List[str]:
        """
        Returns the continuation of forced_prefix for the source tokens.

        :param source: The source tokens read so far
        :param forced_prefix: The committed target tokens
        :return: The continuation tokens
        :raises: TranslatorException
        """
        pass

    def continuation_units(
        self, source: Sequence[str], forced_prefix: Sequence[str] = ()
    ) -> List[List[str]]:
        """
        Returns the continuation grouped into translation units. A wait-k write step emits one unit.
        Defaults to one unit per token.
        """
        return [[token] for token in self.translate(source, forced_prefix)]

    def close(self) -> None:
        """Releases translator resources"""
        pass

    def __enter__(self) -> "Translator":
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        self.close()


class EchoTranslator(Translator):
    """
    Identity translator: the continuation is the source without the forced prefix.
    """

    def translate(
        self, source: Sequence[str], forced_prefix: Sequence[str] = ()
    ) -> List[str]:
        if list(source[: len(forced_prefix)]) != list(forced_prefix):
            raise AmbiguousPrefixError(
                f"forced prefix {list(forced_prefix)} is not a prefix of the source"
            )
        return list(source[len(forced_prefix) :])


class GlossEntry(SimulSegModel):
    """
    A dictionary gloss. The gloss may be empty, e.g. for articles.
    """

    gloss: Tuple[str, ...] = ()
    category: TokenCategory = TokenCategory.OTHER


class GlossDictionary(SimulSegModel):
    """
    Maps source words to glosses and categories.
    """

    entries: Dict[str, GlossEntry]

    def lookup(self, word: str) -> GlossEntry:
        """
        :raises: UnknownWordError if the word has no entry
        """
        try:
            return self.entries[word]
        except KeyError:
            raise UnknownWordError(word)


def load_gloss_dictionary(path: str) -> GlossDictionary:
    """
    Loads a gloss dictionary TSV with columns source word, category and space joined gloss.
    The gloss column may be empty or missing.

    :param path: The dictionary path
    :return: The GlossDictionary
    :raises: ValueError if a row is malformed
    """
    entries: Dict[str, GlossEntry] = {}

    with open(expand_path(path), "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue

            fields = line.split("\t")
            if len(fields) not in (2, 3):
                raise ValueError(f"{path} line {line_number}: expected 2 or 3 fields")

            gloss = fields[GlossColumns.GLOSS] if len(fields) == 3 else ""
            try:
                category = TokenCategory(fields[GlossColumns.CATEGORY])
            except ValueError:
                raise ValueError(
                    f"{path} line {line_number}: unknown category {fields[GlossColumns.CATEGORY]!r}"
                )
            entries[fields[GlossColumns.SOURCE_WORD]] = GlossEntry(
                gloss=tuple(gloss.split()), category=category
            )

    logger.info("loaded %d gloss entries from %s", len(entries), path)
    return GlossDictionary(entries=entries)


class SovToyTranslator(Translator):
    """
    Glosses words through a dictionary and reorders them head-final: other words in source order, then verbs, then
    punctuation.

    A forced prefix is explained by matching its tokens against the glosses of the source words. Candidates are tried
    in ideal target order and the search backtracks when a choice leaves the rest of the prefix unmatchable.
    """

    _category_rank = {
        TokenCategory.OTHER.value: 0,
        TokenCategory.VERB.value: 1,
        TokenCategory.PUNCT.value: 2,
    }

    def __init__(self, dictionary: GlossDictionary) -> None:
        self.dictionary = dictionary

    def ideal_order(self, source: Sequence[str]) -> List[int]:
        """
        Returns 0-based source positions in target order, a stable partition of other words, verbs and punctuation.
        """
        categories = [self.dictionary.lookup(w).category for w in source]
        return sorted(range(len(source)), key=lambda i: (self._category_rank[categories[i]], i))

    def consume(
        self, source: Sequence[str], forced_prefix: Sequence[str]
    ) -> FrozenSet[int]:
        """
        Returns the 0-based source positions whose glosses make up the forced prefix.

        Words with an empty gloss are consumed once every earlier non-verb, non-punctuation word is consumed.

        :raises: AmbiguousPrefixError if no assignment of source words explains the prefix
        """
        entries = [self.dictionary.lookup(w) for w in source]
        order = [i for i in self.ideal_order(source) if entries[i].gloss]
        prefix = tuple(forced_prefix)
        failed = set()

        def search(position: int, consumed: FrozenSet[int]) -> Optional[FrozenSet[int]]:
            if position == len(prefix):
                return consumed
            if (position, consumed) in failed:
                return None

            for i in order:
                gloss = entries[i].gloss
                if i not in consumed and prefix[position : position + len(gloss)] == gloss:
                    result = search(position + len(gloss), consumed | {i})
                    if result is not None:
                        return result

            failed.add((position, consumed))
            return None

        matched = search(0, frozenset())
        if matched is None:
            raise AmbiguousPrefixError(
                f"forced prefix {list(prefix)} cannot be matched to the glosses of {list(source)}"
            )

        consumed = set(matched)
        earlier_consumed = True
        for i, entry in enumerate(entries):
            if entry.category != TokenCategory.OTHER:
                continue
            if not entry.gloss and earlier_consumed:
                consumed.add(i)
            earlier_consumed = earlier_consumed and i in consumed
        return frozenset(consumed)

    def continuation_units(
        self, source: Sequence[str], forced_prefix: Sequence[str] = ()
    ) -> List[List[str]]:
        """
        Returns the glosses of the unconsumed words in ideal order, one unit per word.
        """
        consumed = self.consume(source, forced_prefix)
        units = []
        for i in self.ideal_order(source):
            gloss = self.dictionary.lookup(source[i]).gloss
            if i not in consumed and gloss:
                units.append(list(gloss))
        return units

    def translate(
        self, source: Sequence[str], forced_prefix: Sequence[str] = ()
    ) -> List[str]:
        return [t for unit in self.continuation_units(source, forced_prefix) for t in unit]


class ExternalProcessTranslator(Translator):
    """
    Delegates translation to an external process.

    Requests are single lines of tab separated fields: request id, space joined source, space joined prefix.
    Responses are single lines: request id, space joined continuation.
    """

    def __init__(self, command: Sequence[str], timeout: Optional[float] = None) -> None:
        """
        :param command: The command line used to start the external process
        :param timeout: Seconds to wait for each response. Defaults to the configured external timeout.
        """
        self.command = list(command)
        self.timeout = timeout or get_config().simulseg_external_timeout
        self._request_id = 0
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()

        logger.info("starting external translator %s", self.command)
        self._process = Popen(
            self.command,
            stdin=PIPE,
            stdout=PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
        self._reader = threading.Thread(target=self._read_lines, daemon=True)
        self._reader.start()

    def _read_lines(self) -> None:
        """Feeds process output lines to the response queue. None marks end of output."""
        for line in self._process.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def translate(
        self, source: Sequence[str], forced_prefix: Sequence[str] = ()
    ) -> List[str]:
        self._request_id += 1
        request_id = str(self._request_id)
        request = [""] * 3
        request[ExternalProtocolFields.REQUEST_ID] = request_id
        request[ExternalProtocolFields.SOURCE] = " ".join(source)
        request[ExternalProtocolFields.PREFIX] = " ".join(forced_prefix)

        try:
            self._process.stdin.write("\t".join(request) + "\n")
            self._process.stdin.flush()
        except (BrokenPipeError, OSError) as error:
            raise TranslatorException(f"external translator is not accepting requests: {error}")

        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise TranslatorException(
                f"external translator did not respond within {self.timeout} seconds"
            )
        if line is None:
            raise TranslatorException("external translator closed its output")

        fields = line.rstrip("\n").split("\t", 1)
        if fields[ExternalProtocolFields.REQUEST_ID] != request_id:
            raise TranslatorException(
                f"response id {fields[0]!r} does not match request id {request_id}"
            )
        return fields[ExternalProtocolFields.CONTINUATION].split() if len(fields) > 1 else []

    def close(self) -> None:
        if self._process.poll() is None:
            self._process.stdin.close()
            try:
                self._process.wait(timeout=self.timeout)
            except Exception:
                self._process.kill()


class TranslatorSpec(SimulSegModel):
    """
    Selects and configures a translator.

    variant "sov" requires either a dictionary path or inline entries. variant "external" requires a command.
    """

    variant: Literal["echo", "sov", "external"] = "echo"
    dictionary: Optional[str] = None
    entries: Optional[Dict[str, GlossEntry]] = None
    command: Optional[List[str]] = None
    timeout: Optional[float] = Field(None, gt=0)

    @root_validator(skip_on_failure=True)
    def validate_variant_fields(cls, values: Dict) -> Dict:
        """
        Validates that the fields required by the variant are present.

        :param values: The validated values
        """
        variant = values["variant"]
        if variant == "sov" and not (values.get("dictionary") or values.get("entries")):
            raise ValueError("the sov translator requires a dictionary path or inline entries")
        if variant == "external" and not values.get("command"):
            raise ValueError("the external translator requires a command")
        return values


def create_translator(spec: Union[TranslatorSpec, Dict]) -> Translator:
    """
    Creates a translator from its specification.

    :param spec: The TranslatorSpec or its dictionary form
    :return: The Translator
    """
    if isinstance(spec, dict):
        spec = TranslatorSpec(**spec)

    if spec.variant == "sov":
        if spec.entries:
            dictionary = GlossDictionary(entries=spec.entries)
        else:
            dictionary = load_gloss_dictionary(spec.dictionary)
        return SovToyTranslator(dictionary)
    if spec.variant == "external":
        return ExternalProcessTranslator(spec.command, spec.timeout)
    return EchoTranslator()
