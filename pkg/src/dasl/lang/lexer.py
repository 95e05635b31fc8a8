"""Tokenizer for the theory file format (`.dasl`)."""

from __future__ import annotations

from dataclasses import dataclass


class LexError(Exception):
    def __init__(self, line: int, col: int, message: str):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


KEYWORDS = {
    "sort", "const", "func", "rel", "data", "boolvec", "axiom",
    "forall", "exists", "pi", "mod", "true", "false",
    "card", "dim", "out", "mlp", "act", "extern", "learned", "from",
}

# multi-char punctuation first so '->' wins over '-'
PUNCT = ["->", "(", ")", "[", "]", ":", ";", ".", ",", "&", "|", "~", "=", "+"]


@dataclass(frozen=True)
class Token:
    kind: str  # keyword name, 'ident', 'int', 'string', or the punctuation text
    text: str
    line: int
    col: int

    def __repr__(self) -> str:
        return f"Token({self.kind!r}, {self.text!r} @ {self.line}:{self.col})"


def tokenize(source: str) -> list[Token]:
    """Split source into tokens; drops whitespace and `#` line comments."""
    tokens: list[Token] = []
    line, col = 1, 1
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue
        if ch == '"':
            j = i + 1
            while j < n and source[j] != '"':
                if source[j] == "\n":
                    raise LexError(line, col, "unterminated string")
                j += 1
            if j >= n:
                raise LexError(line, col, "unterminated string")
            tokens.append(Token("string", source[i + 1 : j], line, col))
            col += j - i + 1
            i = j + 1
            continue
        if ch.isdigit():
            j = i
            while j < n and source[j].isdigit():
                j += 1
            tokens.append(Token("int", source[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            word = source[i:j]
            kind = word if word in KEYWORDS else "ident"
            tokens.append(Token(kind, word, line, col))
            col += j - i
            i = j
            continue
        for p in PUNCT:
            if source.startswith(p, i):
                tokens.append(Token(p, p, line, col))
                col += len(p)
                i += len(p)
                break
        else:
            raise LexError(line, col, f"illegal character {ch!r}")
    return tokens
