"""Tokenizer for QHDL source text.

Identifiers and keywords are case-insensitive and normalized to lower
case.  `--` starts a comment running to end of line.  Anything outside
the token alphabet is a lexical error with a 1-based position.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import LexError

KEYWORDS = frozenset({
    "entity", "architecture", "component", "signal", "port", "generic",
    "map", "begin", "end", "of", "is", "in", "out",
    "fieldmode", "real", "complex", "int",
})

_SYMBOLS = (":=", "=>", "(", ")", ";", ":", ",", "+", "-", "*", "/")


@dataclass(frozen=True)
class Token:
    kind: str   # terminal name: "ID", "NUM", a keyword, a symbol, or "EOF"
    text: str
    line: int = field(compare=False, default=0)
    col: int = field(compare=False, default=0)

    def __repr__(self) -> str:
        return f"Token({self.kind}, {self.text!r}, {self.line}:{self.col})"


def tokenize(source: str, filename: str = "<input>") -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    i, n = 0, len(source)
    while i < n:
        c = source[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if source.startswith("--", i):
            while i < n and source[i] != "\n":
                i += 1
            continue
        if c.isascii() and c.isalpha():
            start, start_col = i, col
            while i < n and (source[i].isascii() and
                             (source[i].isalnum() or source[i] == "_")):
                i += 1
                col += 1
            word = source[start:i].lower()
            kind = word if word in KEYWORDS else "ID"
            tokens.append(Token(kind, word, line, start_col))
            continue
        if c.isdigit():
            start, start_col = i, col
            while i < n and source[i].isdigit():
                i += 1
                col += 1
            if i < n and source[i] == "." and i + 1 < n and source[i + 1].isdigit():
                i += 1
                col += 1
                while i < n and source[i].isdigit():
                    i += 1
                    col += 1
            if i < n and source[i] in "eE" and (
                    (i + 1 < n and source[i + 1].isdigit()) or
                    (i + 2 < n and source[i + 1] in "+-" and source[i + 2].isdigit())):
                i += 1
                col += 1
                if source[i] in "+-":
                    i += 1
                    col += 1
                while i < n and source[i].isdigit():
                    i += 1
                    col += 1
            tokens.append(Token("NUM", source[start:i], line, start_col))
            continue
        two = source[i:i + 2]
        if two in _SYMBOLS:
            tokens.append(Token(two, two, line, col))
            i += 2
            col += 2
            continue
        if c in _SYMBOLS:
            tokens.append(Token(c, c, line, col))
            i += 1
            col += 1
            continue
        raise LexError(f"unexpected character {c!r}", filename, line, col)
    tokens.append(Token("EOF", "", line, col))
    return tokens
