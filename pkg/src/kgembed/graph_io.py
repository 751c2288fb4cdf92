"""RDF input and output.

Two serializations are supported: line-based N-Triples (strict or lenient),
and a pragmatic Turtle subset covering ``@prefix`` declarations, prefixed
names, IRIs, quoted literals, predicate lists (``;``), object lists (``,``)
and the ``a`` shorthand. Files ending in ``.gz`` are read and written through
gzip transparently.

Term token conventions used throughout the package:

* IRIs are stored as bare IRI strings, without angle brackets.
* Blank nodes are stored as ``_:`` plus their label, optionally prefixed with
  a per-file scope so labels from different files cannot collide.
* Literals are stored as one opaque token in canonical N-Triples surface
  form, e.g. ``"42"^^<http://www.w3.org/2001/XMLSchema#integer>``.
"""

from __future__ import annotations

import gzip
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, NamedTuple

logger = logging.getLogger(__name__)

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"


class ParseError(ValueError):
    """Malformed input; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class UnsupportedConstructError(ParseError):
    """unsupported-construct: Turtle feature outside the supported subset."""


class Triple(NamedTuple):
    subject: str
    predicate: str
    object: str


@dataclass
class ParseReport:
    """Accounting for one parse: every physical input line ends up as exactly
    one emitted triple, one skipped line (blank or comment), or one error."""

    triples_emitted: int = 0
    lines_skipped: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)


def is_literal_token(token: str) -> bool:
    return token.startswith('"')


def is_blank_token(token: str) -> bool:
    return token.startswith("_:")


# Corpus and model files hold one token per whitespace-separated field, but
# literal tokens may contain spaces; this tiny reversible escaping keeps the
# file format splittable. '%' must be encoded first and decoded last.
_TOKEN_ESCAPES = (("%", "%25"), (" ", "%20"), ("\t", "%09"), ("\n", "%0A"), ("\r", "%0D"))


def escape_token(token: str) -> str:
    for raw, enc in _TOKEN_ESCAPES:
        token = token.replace(raw, enc)
    return token


def unescape_token(token: str) -> str:
    for raw, enc in reversed(_TOKEN_ESCAPES[1:]):
        token = token.replace(enc, raw)
    return token.replace("%25", "%")


def _escape_lexical(s: str) -> str:
    return (
        s.replace("\\", "\\\\")
        .replace('"', '\\"')
        .replace("\n", "\\n")
        .replace("\r", "\\r")
    )


def literal_token(lexical: str, suffix: str = "") -> str:
    """Canonical literal token: quoted escaped lexical form plus an optional
    ``@lang`` or ``^^<datatype>`` suffix."""
    return '"%s"%s' % (_escape_lexical(lexical), suffix)


_ECHAR = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}
_WS = " \t"


class _Bad(Exception):
    """Internal: syntax violation inside one term or statement."""


class _Scan:
    """Character cursor shared by the N-Triples and Turtle parsers."""

    __slots__ = ("text", "pos")

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self) -> None:
        t, n = self.text, len(self.text)
        while self.pos < n and t[self.pos] in _WS:
            self.pos += 1

    def done(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _uchar(self) -> str:
        # cursor sits on 'u' or 'U'
        kind = self.text[self.pos]
        width = 4 if kind == "u" else 8
        start = self.pos + 1
        hexs = self.text[start : start + width]
        if len(hexs) < width:
            raise _Bad(f"truncated \\{kind} escape")
        try:
            code = int(hexs, 16)
        except ValueError:
            raise _Bad(f"invalid \\{kind} escape {hexs!r}") from None
        if code > 0x10FFFF or 0xD800 <= code <= 0xDFFF:
            raise _Bad(f"escape \\{kind}{hexs} is not a valid code point")
        self.pos = start + width
        return chr(code)

    def iriref(self) -> str:
        # cursor sits on '<'
        self.pos += 1
        out: list[str] = []
        t, n = self.text, len(self.text)
        while True:
            if self.pos >= n:
                raise _Bad("unterminated IRI")
            ch = t[self.pos]
            if ch == ">":
                self.pos += 1
                break
            if ch == "\\":
                self.pos += 1
                if self.pos >= n or t[self.pos] not in "uU":
                    raise _Bad("only \\u and \\U escapes are allowed in IRIs")
                out.append(self._uchar())
                continue
            if ch in '"{}|^`<' or ord(ch) <= 0x20:
                raise _Bad(f"character {ch!r} not allowed in IRI")
            out.append(ch)
            self.pos += 1
        iri = "".join(out)
        if not iri:
            raise _Bad("empty IRI")
        return iri

    def blank(self, scope: str) -> str:
        if self.text[self.pos : self.pos + 2] != "_:":
            raise _Bad("expected blank node label")
        self.pos += 2
        start = self.pos
        t, n = self.text, len(self.text)
        while self.pos < n and (t[self.pos].isalnum() or t[self.pos] in "._-"):
            self.pos += 1
        label = t[start : self.pos]
        if not label or label.startswith(".") or label.endswith("."):
            raise _Bad("invalid blank node label")
        return f"_:{scope}.{label}" if scope else f"_:{label}"

    def literal_body(self) -> str:
        """Consume a quoted string; cursor sits on the opening quote."""
        self.pos += 1
        out: list[str] = []
        t, n = self.text, len(self.text)
        while True:
            if self.pos >= n:
                raise _Bad("unterminated literal")
            ch = t[self.pos]
            if ch == '"':
                self.pos += 1
                return "".join(out)
            if ch == "\\":
                self.pos += 1
                if self.pos >= n:
                    raise _Bad("dangling escape at end of literal")
                esc = t[self.pos]
                if esc in _ECHAR:
                    out.append(_ECHAR[esc])
                    self.pos += 1
                elif esc in "uU":
                    out.append(self._uchar())
                else:
                    raise _Bad(f"unknown escape \\{esc}")
                continue
            out.append(ch)
            self.pos += 1

    def langtag(self) -> str:
        # cursor sits just past '@'
        start = self.pos
        t, n = self.text, len(self.text)
        while self.pos < n and (t[self.pos].isalnum() or t[self.pos] == "-"):
            self.pos += 1
        tag = t[start : self.pos]
        if not tag:
            raise _Bad("empty language tag")
        return tag


def _nt_literal(sc: _Scan) -> str:
    lexical = sc.literal_body()
    suffix = ""
    if sc.peek() == "@":
        sc.pos += 1
        suffix = "@" + sc.langtag()
    elif sc.text[sc.pos : sc.pos + 2] == "^^":
        sc.pos += 2
        if sc.peek() != "<":
            raise _Bad("datatype must be an IRI")
        suffix = "^^<%s>" % sc.iriref()
    return literal_token(lexical, suffix)


def _parse_nt_statement(sc: _Scan, scope: str) -> Triple:
    sc.skip_ws()
    ch = sc.peek()
    if ch == "<":
        subject = sc.iriref()
    elif ch == "_":
        subject = sc.blank(scope)
    elif ch == '"':
        raise _Bad("literal not allowed as subject")
    else:
        raise _Bad("expected IRI or blank node subject")
    sc.skip_ws()
    if sc.peek() != "<":
        raise _Bad("expected IRI predicate")
    predicate = sc.iriref()
    sc.skip_ws()
    ch = sc.peek()
    if ch == "<":
        obj = sc.iriref()
    elif ch == "_":
        obj = sc.blank(scope)
    elif ch == '"':
        obj = _nt_literal(sc)
    else:
        raise _Bad("expected IRI, blank node, or literal object")
    sc.skip_ws()
    if sc.peek() != ".":
        raise _Bad("missing terminating '.'")
    sc.pos += 1
    sc.skip_ws()
    if not sc.done() and sc.peek() != "#":
        raise _Bad("trailing content after '.'")
    return Triple(subject, predicate, obj)


def _as_byte_stream(source: bytes | str | IO[bytes]) -> IO[bytes]:
    if isinstance(source, bytes):
        return io.BytesIO(source)
    if isinstance(source, str):
        return io.BytesIO(source.encode("utf-8"))
    return source


def _byte_lines(stream: IO[bytes]) -> Iterator[bytes]:
    """Yield lines without their terminators; an I/O failure propagates with
    the byte offset reached so far attached as a note."""
    offset = 0
    while True:
        try:
            raw = stream.readline()
        except OSError as exc:
            exc.bytes_read = offset
            if hasattr(exc, "add_note"):
                exc.add_note(f"while reading after byte offset {offset}")
            raise
        if not raw:
            return
        offset += len(raw)
        yield raw.rstrip(b"\r\n")


def parse_ntriples(
    source: bytes | str | IO[bytes],
    *,
    lenient: bool = True,
    report: ParseReport | None = None,
    bnode_scope: str = "",
) -> Iterator[Triple]:
    """Parse N-Triples from a byte stream, yielding triples in input order.

    Comment lines (leading ``#``) and blank lines are skipped and counted.
    In lenient mode malformed lines (including invalid UTF-8) are recorded in
    ``report.errors`` and skipped; in strict mode the first malformed line
    raises :class:`ParseError` with its line number. Pass a
    :class:`ParseReport` to observe counts; it is updated as the iterator is
    consumed.
    """
    if report is None:
        report = ParseReport()
    return _ntriples_iter(_as_byte_stream(source), lenient, report, bnode_scope)


def _ntriples_iter(stream, lenient, report, scope) -> Iterator[Triple]:
    for lineno, raw in enumerate(_byte_lines(stream), start=1):
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            if not lenient:
                raise ParseError(f"invalid UTF-8: {exc}", lineno) from None
            report.errors.append((lineno, f"invalid UTF-8: {exc}"))
            continue
        stripped = text.strip(_WS)
        if not stripped or stripped.startswith("#"):
            report.lines_skipped += 1
            continue
        sc = _Scan(text)
        try:
            triple = _parse_nt_statement(sc, scope)
        except _Bad as exc:
            if not lenient:
                raise ParseError(f"{exc}: {text.rstrip()!r}", lineno) from None
            report.errors.append((lineno, str(exc)))
            continue
        report.triples_emitted += 1
        yield triple


# --------------------------------------------------------------------------
# Turtle subset
# --------------------------------------------------------------------------

_PNAME_CHARS = frozenset("._-%:")


class _TurtleParser:
    """Recursive-descent parser for the Turtle subset.

    Supported: @prefix, IRIs, prefixed names (including empty prefix and
    prefixed datatypes), blank node labels, quoted literals with language
    tags or datatypes, 'a', ';' predicate lists, ',' object lists, comments.
    Blank-node property lists '[...]', collections '(...)', @base, and
    quote variants beyond plain '"' raise UnsupportedConstructError.
    """

    def __init__(self, text: str, scope: str):
        self.sc = _Scan(text)
        self.scope = scope
        self.prefixes: dict[str, str] = {}

    def _line(self) -> int:
        return self.sc.text.count("\n", 0, self.sc.pos) + 1

    def _error(self, message: str) -> ParseError:
        return ParseError(message, self._line())

    def _unsupported(self, what: str) -> UnsupportedConstructError:
        return UnsupportedConstructError(f"unsupported-construct: {what}", self._line())

    def _skip_trivia(self) -> None:
        t, n = self.sc.text, len(self.sc.text)
        while self.sc.pos < n:
            ch = t[self.sc.pos]
            if ch in " \t\r\n":
                self.sc.pos += 1
            elif ch == "#":
                nl = t.find("\n", self.sc.pos)
                self.sc.pos = n if nl < 0 else nl + 1
            else:
                return

    def statements(self) -> Iterator[Triple]:
        while True:
            self._skip_trivia()
            if self.sc.done():
                return
            if self.sc.peek() == "@":
                self._directive()
            else:
                yield from self._triples()

    def _directive(self) -> None:
        t = self.sc.text
        self.sc.pos += 1
        start = self.sc.pos
        while self.sc.pos < len(t) and t[self.sc.pos].isalpha():
            self.sc.pos += 1
        word = t[start : self.sc.pos]
        if word == "base":
            raise self._unsupported("@base directive")
        if word != "prefix":
            raise self._error(f"unknown directive @{word}")
        self._skip_trivia()
        name = self._pname_ns()
        self._skip_trivia()
        if self.sc.peek() != "<":
            raise self._error("expected IRI in @prefix")
        try:
            iri = self.sc.iriref()
        except _Bad as exc:
            raise self._error(str(exc)) from None
        self._skip_trivia()
        if self.sc.peek() != ".":
            raise self._error("expected '.' after @prefix")
        self.sc.pos += 1
        self.prefixes[name] = iri

    def _pname_ns(self) -> str:
        t, n = self.sc.text, len(self.sc.text)
        start = self.sc.pos
        while self.sc.pos < n and (t[self.sc.pos].isalnum() or t[self.sc.pos] in "._-"):
            self.sc.pos += 1
        name = t[start : self.sc.pos]
        if self.sc.peek() != ":":
            raise self._error("expected prefix name ending in ':'")
        self.sc.pos += 1
        return name

    def _word(self) -> str:
        t, n = self.sc.text, len(self.sc.text)
        start = self.sc.pos
        while self.sc.pos < n and (t[self.sc.pos].isalnum() or t[self.sc.pos] in _PNAME_CHARS):
            self.sc.pos += 1
        word = t[start : self.sc.pos]
        # a trailing '.' belongs to the statement, not the name
        while word.endswith("."):
            word = word[:-1]
            self.sc.pos -= 1
        return word

    def _expand(self, word: str) -> str:
        ns, local = word.split(":", 1)
        try:
            return self.prefixes[ns] + local
        except KeyError:
            raise self._error(f"undefined prefix {ns + ':'!r}") from None

    def _term(self, *, as_verb: bool = False, allow_literal: bool = False) -> str:
        self._skip_trivia()
        ch = self.sc.peek()
        if ch == "":
            raise self._error("unexpected end of input")
        if ch == "[":
            raise self._unsupported("blank-node property list")
        if ch == "(":
            raise self._unsupported("collection")
        if ch in "'":
            raise self._unsupported("single-quoted literal")
        if ch == "<":
            try:
                return self.sc.iriref()
            except _Bad as exc:
                raise self._error(str(exc)) from None
        if ch == "_":
            try:
                return self.sc.blank(self.scope)
            except _Bad as exc:
                raise self._error(str(exc)) from None
        if ch == '"':
            if not allow_literal:
                raise self._error("literal not allowed here")
            if self.sc.text[self.sc.pos : self.sc.pos + 3] == '"""':
                raise self._unsupported("triple-quoted literal")
            return self._literal()
        word = self._word()
        if not word:
            raise self._error(f"expected term, found {ch!r}")
        if word == "a":
            if as_verb:
                return RDF_TYPE
            raise self._error("'a' is only valid in the predicate position")
        if ":" not in word:
            raise self._error(f"expected prefixed name, found {word!r}")
        return self._expand(word)

    def _literal(self) -> str:
        try:
            lexical = self.sc.literal_body()
        except _Bad as exc:
            raise self._error(str(exc)) from None
        suffix = ""
        if self.sc.peek() == "@":
            self.sc.pos += 1
            try:
                suffix = "@" + self.sc.langtag()
            except _Bad as exc:
                raise self._error(str(exc)) from None
        elif self.sc.text[self.sc.pos : self.sc.pos + 2] == "^^":
            self.sc.pos += 2
            if self.sc.peek() == "<":
                try:
                    suffix = "^^<%s>" % self.sc.iriref()
                except _Bad as exc:
                    raise self._error(str(exc)) from None
            else:
                word = self._word()
                if ":" not in word:
                    raise self._error("datatype must be an IRI or prefixed name")
                suffix = "^^<%s>" % self._expand(word)
        return literal_token(lexical, suffix)

    def _triples(self) -> Iterator[Triple]:
        subject = self._term()
        while True:
            verb = self._term(as_verb=True)
            while True:
                obj = self._term(allow_literal=True)
                yield Triple(subject, verb, obj)
                self._skip_trivia()
                if self.sc.peek() == ",":
                    self.sc.pos += 1
                    continue
                break
            self._skip_trivia()
            ch = self.sc.peek()
            if ch == ";":
                while self.sc.peek() == ";":
                    self.sc.pos += 1
                    self._skip_trivia()
                if self.sc.peek() == ".":
                    self.sc.pos += 1
                    return
                continue
            if ch == ".":
                self.sc.pos += 1
                return
            raise self._error("expected ',', ';' or '.'")


def parse_turtle_subset(
    source: bytes | str | IO[bytes],
    *,
    report: ParseReport | None = None,
    bnode_scope: str = "",
) -> Iterator[Triple]:
    """Parse the Turtle subset, yielding fully expanded triples.

    The output is equivalent to the N-Triples serialization of the same
    logical graph. Unlike the line-based N-Triples parser this one is strict:
    syntax problems raise :class:`ParseError` and features outside the subset
    raise :class:`UnsupportedConstructError`, both with the offending line.
    """
    if report is None:
        report = ParseReport()
    data = _as_byte_stream(source).read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"invalid UTF-8: {exc}") from None
    return _turtle_iter(text, report, bnode_scope)


def _turtle_iter(text: str, report: ParseReport, scope: str) -> Iterator[Triple]:
    parser = _TurtleParser(text, scope)
    for triple in parser.statements():
        report.triples_emitted += 1
        yield triple


# --------------------------------------------------------------------------
# Files and graphs
# --------------------------------------------------------------------------

_FORMAT_ALIASES = {
    "ntriples": "ntriples",
    "nt": "ntriples",
    "turtle-subset": "turtle-subset",
    "turtle": "turtle-subset",
    "ttl": "turtle-subset",
}


def detect_format(path: str | Path) -> str:
    """Infer the RDF format from a file extension (`.nt` or `.ttl`, `.gz` aware)."""
    name = str(path)
    if name.endswith(".gz"):
        name = name[:-3]
    if name.endswith(".nt"):
        return "ntriples"
    if name.endswith(".ttl"):
        return "turtle-subset"
    raise ValueError(f"cannot infer RDF format of {path!r}; expected a .nt or .ttl suffix")


def open_bytes_read(path: str | Path) -> IO[bytes]:
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def open_text_read(path: str | Path) -> IO[str]:
    if str(path).endswith(".gz"):
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def open_text_write(path: str | Path) -> IO[str]:
    """Text writer; gzip output carries mtime 0 so identical runs produce
    identical bytes."""
    if str(path).endswith(".gz"):
        return io.TextIOWrapper(gzip.GzipFile(str(path), "wb", mtime=0), encoding="utf-8", newline="\n")
    return open(path, "w", encoding="utf-8", newline="\n")


def load_graph(sources: Iterable[tuple[str | Path, str]], *, lenient: bool = True):
    """Parse every (path, format) source and return the union as a frozen
    :class:`~kgembed.graph.KnowledgeGraph`; duplicate triples are stored once.

    Formats: ``ntriples`` and ``turtle-subset`` (aliases ``nt``, ``ttl``,
    ``turtle``). Blank nodes receive a per-file scope. Lenient N-Triples
    errors are logged as warnings; strict mode propagates them.
    """
    from .graph import KnowledgeGraph

    g = KnowledgeGraph()
    for i, (path, fmt) in enumerate(sources):
        canonical = _FORMAT_ALIASES.get(fmt)
        if canonical is None:
            raise ValueError(f"unknown RDF format {fmt!r}; expected one of {sorted(set(_FORMAT_ALIASES.values()))}")
        report = ParseReport()
        scope = f"f{i}"
        with open_bytes_read(path) as fh:
            if canonical == "ntriples":
                triples = parse_ntriples(fh, lenient=lenient, report=report, bnode_scope=scope)
            else:
                triples = parse_turtle_subset(fh, report=report, bnode_scope=scope)
            for triple in triples:
                g.add(triple)
        for lineno, message in report.errors:
            logger.warning("%s:%d: %s", path, lineno, message)
    return g.freeze()


def format_term(token: str) -> str:
    """Render a stored token back into N-Triples syntax."""
    if token.startswith('"') or token.startswith("_:"):
        return token
    return f"<{token}>"


def write_ntriples(triples: Iterable[Triple], dest: str | Path | IO[str]) -> int:
    """Serialize triples as N-Triples, one statement per line. Returns the
    number of statements written."""
    own = isinstance(dest, (str, Path))
    fh = open_text_write(dest) if own else dest
    count = 0
    try:
        for s, p, o in triples:
            fh.write(f"{format_term(s)} <{p}> {format_term(o)} .\n")
            count += 1
    finally:
        if own:
            fh.close()
    return count
