"""Canonical object notation: a deterministic byte encoding for structured values.

Every hash in the system is computed over this encoding, so it has to be
bit-exact and independent of insertion order, locale, or float formatting:

* map keys are emitted in lexicographic (code point) order,
* no insignificant whitespace,
* floats are emitted as the 16 lowercase hex digits of their IEEE-754
  binary64 big-endian bit pattern, wrapped in ``f"..."``,
* byte strings are emitted as lowercase hex wrapped in ``b"..."``.

The parser accepts the strict form plus two input conveniences: whitespace
between tokens, and ordinary decimal float literals (``0.05``, ``1e-3``),
which makes the same notation usable for hand-written scenario config files.
Serializing a parsed value reproduces a strictly canonical document, so
canonical files round-trip byte-identically through load -> dump.
"""

from __future__ import annotations

import math
import struct

__all__ = [
    "CanonicalizationError",
    "NotationParseError",
    "canonicalize",
    "dumps",
    "dumps_pretty",
    "loads",
    "parse",
]


class CanonicalizationError(ValueError):
    """Value cannot be canonically encoded (unsupported type or non-finite real)."""


class NotationParseError(ValueError):
    """Input text is not valid canonical object notation."""


_STRING_ESCAPES = {'"': '\\"', "\\": "\\\\", "\n": "\\n", "\t": "\\t", "\r": "\\r"}


def _emit_string(text: str, out: list[str]) -> None:
    out.append('"')
    for ch in text:
        esc = _STRING_ESCAPES.get(ch)
        if esc is not None:
            out.append(esc)
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')


def _emit(value, out: list[str]) -> None:
    if isinstance(value, bool):
        out.append("true" if value else "false")
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        if not math.isfinite(value):
            raise CanonicalizationError(f"non-finite real not canonicalizable: {value!r}")
        out.append('f"' + struct.pack(">d", value).hex() + '"')
    elif isinstance(value, str):
        _emit_string(value, out)
    elif isinstance(value, (bytes, bytearray)):
        out.append('b"' + bytes(value).hex() + '"')
    elif isinstance(value, dict):
        keys = list(value.keys())
        for key in keys:
            if not isinstance(key, str):
                raise CanonicalizationError(f"map keys must be text, got {type(key).__name__}")
        out.append("{")
        for i, key in enumerate(sorted(keys)):
            if i:
                out.append(",")
            _emit_string(key, out)
            out.append(":")
            _emit(value[key], out)
        out.append("}")
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _emit(item, out)
        out.append("]")
    else:
        raise CanonicalizationError(f"type {type(value).__name__} is not canonicalizable")


def dumps(value) -> str:
    """Render a value in strict canonical notation."""
    out: list[str] = []
    _emit(value, out)
    return "".join(out)


def canonicalize(value) -> bytes:
    """Canonical byte encoding of a structured value (UTF-8 of :func:`dumps`)."""
    return dumps(value).encode("utf-8")


def _emit_pretty(value, out: list[str], indent: int, level: int) -> None:
    pad = " " * (indent * (level + 1))
    close_pad = " " * (indent * level)
    if isinstance(value, float) and math.isfinite(value):
        # Config files carry floats as decimal literals; repr round-trips.
        out.append(repr(value))
    elif isinstance(value, dict) and value:
        out.append("{\n")
        keys = sorted(value.keys())
        for i, key in enumerate(keys):
            out.append(pad)
            _emit_string(key, out)
            out.append(": ")
            _emit_pretty(value[key], out, indent, level + 1)
            out.append(",\n" if i + 1 < len(keys) else "\n")
        out.append(close_pad + "}")
    elif isinstance(value, (list, tuple)) and value and any(
        isinstance(item, (dict, list, tuple)) for item in value
    ):
        out.append("[\n")
        for i, item in enumerate(value):
            out.append(pad)
            _emit_pretty(item, out, indent, level + 1)
            out.append(",\n" if i + 1 < len(value) else "\n")
        out.append(close_pad + "]")
    elif isinstance(value, (list, tuple)) and value:
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(", ")
            _emit_pretty(item, out, indent, level + 1)
        out.append("]")
    else:
        _emit(value, out)


def dumps_pretty(value, indent: int = 2) -> str:
    """Human-oriented rendering of the same notation (parses back to the same
    value; not the canonical byte form)."""
    out: list[str] = []
    _emit_pretty(value, out, indent, 0)
    out.append("\n")
    return "".join(out)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str) -> NotationParseError:
        return NotationParseError(f"{message} at offset {self.pos}")

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def peek(self) -> str:
        if self.pos >= len(self.text):
            raise self.error("unexpected end of input")
        return self.text[self.pos]

    def expect(self, ch: str) -> None:
        if self.pos >= len(self.text) or self.text[self.pos] != ch:
            raise self.error(f"expected {ch!r}")
        self.pos += 1

    def parse_value(self):
        self.skip_ws()
        ch = self.peek()
        if ch == "{":
            return self.parse_map()
        if ch == "[":
            return self.parse_list()
        if ch == '"':
            return self.parse_string()
        if ch == "f" and self.text.startswith('f"', self.pos):
            return self.parse_hex_float()
        if ch == "b" and self.text.startswith('b"', self.pos):
            return self.parse_bytes()
        if self.text.startswith("true", self.pos):
            self.pos += 4
            return True
        if self.text.startswith("false", self.pos):
            self.pos += 5
            return False
        if ch == "-" or ch.isdigit():
            return self.parse_number()
        raise self.error(f"unexpected character {ch!r}")

    def parse_map(self) -> dict:
        self.expect("{")
        result: dict = {}
        self.skip_ws()
        if self.peek() == "}":
            self.pos += 1
            return result
        while True:
            self.skip_ws()
            key = self.parse_string()
            self.skip_ws()
            self.expect(":")
            result[key] = self.parse_value()
            self.skip_ws()
            ch = self.peek()
            self.pos += 1
            if ch == "}":
                return result
            if ch != ",":
                raise self.error("expected ',' or '}' in map")

    def parse_list(self) -> list:
        self.expect("[")
        result: list = []
        self.skip_ws()
        if self.peek() == "]":
            self.pos += 1
            return result
        while True:
            result.append(self.parse_value())
            self.skip_ws()
            ch = self.peek()
            self.pos += 1
            if ch == "]":
                return result
            if ch != ",":
                raise self.error("expected ',' or ']' in list")

    def parse_string(self) -> str:
        self.expect('"')
        chars: list[str] = []
        while True:
            if self.pos >= len(self.text):
                raise self.error("unterminated string")
            ch = self.text[self.pos]
            self.pos += 1
            if ch == '"':
                return "".join(chars)
            if ch == "\\":
                esc = self.text[self.pos : self.pos + 1]
                self.pos += 1
                if esc == "n":
                    chars.append("\n")
                elif esc == "t":
                    chars.append("\t")
                elif esc == "r":
                    chars.append("\r")
                elif esc in ('"', "\\"):
                    chars.append(esc)
                elif esc == "u":
                    code = self.text[self.pos : self.pos + 4]
                    if len(code) < 4:
                        raise self.error("truncated \\u escape")
                    chars.append(chr(int(code, 16)))
                    self.pos += 4
                else:
                    raise self.error(f"invalid escape \\{esc}")
            else:
                chars.append(ch)

    def parse_hex_float(self) -> float:
        self.pos += 2  # f"
        digits = self.text[self.pos : self.pos + 16]
        if len(digits) < 16:
            raise self.error("truncated float bit pattern")
        try:
            raw = bytes.fromhex(digits)
        except ValueError:
            raise self.error(f"invalid float bit pattern {digits!r}") from None
        self.pos += 16
        self.expect('"')
        return struct.unpack(">d", raw)[0]

    def parse_bytes(self) -> bytes:
        self.pos += 2  # b"
        end = self.text.find('"', self.pos)
        if end < 0:
            raise self.error("unterminated byte string")
        digits = self.text[self.pos : end]
        try:
            raw = bytes.fromhex(digits)
        except ValueError:
            raise self.error("byte string must be lowercase hex") from None
        self.pos = end + 1
        return raw

    def parse_number(self):
        start = self.pos
        if self.peek() == "-":
            self.pos += 1
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        is_float = False
        if self.pos < len(self.text) and self.text[self.pos] == ".":
            is_float = True
            self.pos += 1
            while self.pos < len(self.text) and self.text[self.pos].isdigit():
                self.pos += 1
        if self.pos < len(self.text) and self.text[self.pos] in "eE":
            is_float = True
            self.pos += 1
            if self.pos < len(self.text) and self.text[self.pos] in "+-":
                self.pos += 1
            while self.pos < len(self.text) and self.text[self.pos].isdigit():
                self.pos += 1
        token = self.text[start : self.pos]
        try:
            return float(token) if is_float else int(token)
        except ValueError:
            raise self.error(f"invalid number {token!r}") from None


def parse(text: str):
    """Parse canonical object notation (whitespace-insensitive on input)."""
    parser = _Parser(text)
    value = parser.parse_value()
    parser.skip_ws()
    if parser.pos != len(text):
        raise parser.error("trailing content after value")
    return value


def loads(data: bytes | str):
    """Parse canonical notation from bytes or text."""
    if isinstance(data, (bytes, bytearray)):
        data = bytes(data).decode("utf-8")
    return parse(data)
