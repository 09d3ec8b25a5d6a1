"""
io.py

Supports SimulSeg I/O operations: streaming treebank files, reading and writing instance, prediction and session
log files.
"""
import json
import logging
from io import StringIO, TextIOBase
from typing import Iterable, Iterator, List, Optional

from .config import InstanceColumns, PredictionColumns, get_config
from .encoding import SimulSegJsonEncoder
from .iclp import IclpFormatException, PredictionRecord
from .simulator import SessionLog
from .support import expand_path, is_bracketed_data, is_file
from .treebank import BracketedTreeParser, ParseTree, PrefixInstance

logger = logging.getLogger(__name__)


class TreebankReader:
    """
    Streams parse trees from bracketed treebank text or a treebank file.

    with TreebankReader(treebank_input) as r:
       for tree in r.trees():
          # do something interesting

    The input is read using a buffered generator function and split into complete top level trees.
    Buffer size is configured using the config/env variable SIMULSEG_READER_BUFFER_SIZE (default = 1MB).
    Parse errors carry the byte offset of the failure within the whole input.
    """

    def __init__(self, treebank_input: str) -> None:
        """
        Initializes the TreebankReader with a treebank input.
        The input may be bracketed tree text or a path to a treebank file.

        :param treebank_input: Bracketed tree text or a path to a treebank file
        """
        self._treebank_input: str = treebank_input
        self._parser = BracketedTreeParser()

        # set in __enter__
        self._buffer_size: Optional[int] = None
        self._stream: Optional[TextIOBase] = None

    @property
    def skipped(self) -> int:
        """Returns the number of trees skipped because every leaf was pruned"""
        return self._parser.skipped

    def __enter__(self) -> "TreebankReader":
        """
        Opens the treebank stream.

        :return: The TreebankReader instance
        :raise: ValueError if the treebank input is invalid
        """
        if is_file(self._treebank_input):
            self._stream = open(expand_path(self._treebank_input), "r", encoding="utf-8")
        elif is_bracketed_data(self._treebank_input):
            self._stream = StringIO(self._treebank_input)
        else:
            msg = f"Invalid treebank input {type(self._treebank_input)}. Expecting bracketed text or file path"
            raise ValueError(msg)

        self._buffer_size = get_config().simulseg_reader_buffer_size
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        """
        Closes the treebank stream.

        :param exc_type: Exception Type
        :param exc_val: Exception Value
        :param exc_tb: Exception traceback
        """
        if self._stream is not None and not self._stream.closed:
            self._stream.close()
        self._treebank_input = None

    def trees(self) -> Iterator[ParseTree]:
        """
        Iterator function used to return parse trees from the underlying stream.

        :return: Iterator of ParseTree
        :raises: TreebankParseException if the input is malformed
        """
        self._stream.seek(0)

        pending = ""
        pending_offset = 0
        depth = 0
        scan_from = 0

        while True:
            buffer: str = self._stream.read(self._buffer_size)
            if not buffer:
                break

            pending += buffer
            start = 0
            for position in range(scan_from, len(pending)):
                character = pending[position]
                if character == "(":
                    depth += 1
                elif character == ")":
                    depth -= 1
                    if depth <= 0:
                        # a negative depth raises an unbalanced bracket error
                        segment = pending[start : position + 1]
                        yield from self._parser.parse(segment, pending_offset)
                        pending_offset += len(segment.encode("utf-8"))
                        start = position + 1

            pending = pending[start:]
            scan_from = len(pending)

        if pending.strip():
            yield from self._parser.parse(pending, pending_offset)

        if self.skipped:
            logger.warning("skipped %d trees without leaves", self.skipped)


def read_treebank(treebank_input: str) -> List[ParseTree]:
    """
    Reads every tree of a treebank.

    :param treebank_input: Bracketed tree text or a path to a treebank file
    :return: list of ParseTree
    """
    with TreebankReader(treebank_input) as r:
        return list(r.trees())


def write_instances(instances: Iterable[PrefixInstance], path: str) -> int:
    """
    Writes ICLP instances as TSV rows: sentence_id, i, label, space joined prefix.

    :param instances: The instances to write
    :param path: The output path
    :return: The number of rows written
    """
    count = 0
    with open(expand_path(path), "w", encoding="utf-8") as f:
        for instance in instances:
            row = [""] * len(InstanceColumns)
            row[InstanceColumns.SENTENCE_ID] = instance.sentence_id
            row[InstanceColumns.WORD_INDEX] = str(instance.word_index)
            row[InstanceColumns.LABEL] = instance.label
            row[InstanceColumns.PREFIX] = " ".join(instance.prefix)
            f.write("\t".join(row) + "\n")
            count += 1
    return count


def read_instances(path: str) -> List[PrefixInstance]:
    """
    Reads ICLP instances written by write_instances.

    :param path: The instance file path
    :return: list of PrefixInstance
    :raises: IclpFormatException if a row is malformed
    """
    instances: List[PrefixInstance] = []
    with open(expand_path(path), "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue

            fields = line.split("\t")
            if len(fields) != len(InstanceColumns):
                raise IclpFormatException(
                    f"expected {len(InstanceColumns)} tab separated fields, found {len(fields)}",
                    line_number,
                )
            try:
                instances.append(
                    PrefixInstance(
                        sentence_id=fields[InstanceColumns.SENTENCE_ID],
                        word_index=int(fields[InstanceColumns.WORD_INDEX]),
                        label=fields[InstanceColumns.LABEL],
                        prefix=tuple(fields[InstanceColumns.PREFIX].split()),
                    )
                )
            except ValueError as error:
                raise IclpFormatException(str(error), line_number)
    return instances


def write_predictions(records: Iterable[PredictionRecord], path: str) -> int:
    """
    Writes prediction TSV rows: sentence_id, i, predicted and gold when present.

    :param records: The prediction records
    :param path: The output path
    :return: The number of rows written
    """
    count = 0
    with open(expand_path(path), "w", encoding="utf-8") as f:
        for record in records:
            row = [""] * (len(PredictionColumns) - (record.gold is None))
            row[PredictionColumns.SENTENCE_ID] = record.sentence_id
            row[PredictionColumns.WORD_INDEX] = str(record.word_index)
            row[PredictionColumns.PREDICTED] = record.predicted
            if record.gold is not None:
                row[PredictionColumns.GOLD] = record.gold
            f.write("\t".join(row) + "\n")
            count += 1
    return count


def write_jsonl(records: Iterable, path: str) -> int:
    """
    Writes records as JSON lines using the SimulSegJsonEncoder.

    :param records: Models or JSON compatible values
    :param path: The output path
    :return: The number of lines written
    """
    count = 0
    with open(expand_path(path), "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, cls=SimulSegJsonEncoder, ensure_ascii=False) + "\n")
            count += 1
    return count


def write_session_logs(logs: Iterable[SessionLog], path: str) -> int:
    """
    Writes session logs as JSON lines, one session per line.
    """
    return write_jsonl(logs, path)


def read_session_logs(path: str) -> Iterator[SessionLog]:
    """
    Streams session logs from a JSON lines file.

    :param path: The session log path
    :return: Iterator of SessionLog
    """
    with open(expand_path(path), "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                yield SessionLog.parse_obj(json.loads(line))


def read_sentences(path: str) -> List[List[str]]:
    """
    Reads one whitespace tokenized sentence per line. Empty lines are kept as empty sentences.
    """
    with open(expand_path(path), "r", encoding="utf-8") as f:
        return [line.split() for line in f]


def read_references(path: str) -> List[str]:
    """
    Reads one reference translation per line.
    """
    with open(expand_path(path), "r", encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]
