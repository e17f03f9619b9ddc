"""Config-file loading: JSON everywhere, TOML via stdlib or a small fallback reader.

The fallback parser covers the flat subset these configs use: comments,
``[section]`` headers, bare keys, strings, booleans, integers, floats, and
one-line homogeneous arrays.  ``tomllib`` is preferred when the interpreter
ships it.
"""

from __future__ import annotations

import json

try:
    import tomllib as _tomllib
except ImportError:  # Python < 3.11
    _tomllib = None

__all__ = ["load_config_file", "parse_toml_subset"]


def _parse_scalar(text: str):
    text = text.strip()
    if not text:
        raise ValueError("empty value")
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        body = text[1:-1]
        if '"' in body or "\\" in body:
            raise ValueError(f"unsupported string escape in {text!r}")
        return body
    if text == "true":
        return True
    if text == "false":
        return False
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(part) for part in _split_array(inner)]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"cannot parse value {text!r}") from None


def _split_array(inner: str) -> list[str]:
    parts = []
    depth = 0
    in_str = False
    current = ""
    for ch in inner:
        if ch == '"':
            in_str = not in_str
        if not in_str:
            if ch == "[":
                depth += 1
            elif ch == "]":
                depth -= 1
            elif ch == "," and depth == 0:
                parts.append(current)
                current = ""
                continue
        current += ch
    if current.strip():
        parts.append(current)
    return parts


def _strip_comment(line: str) -> str:
    out = ""
    in_str = False
    for ch in line:
        if ch == '"':
            in_str = not in_str
        if ch == "#" and not in_str:
            break
        out += ch
    return out.strip()


def parse_toml_subset(text: str) -> dict:
    """Parse flat TOML: sections one level deep, scalar and array values."""
    root: dict = {}
    table = root
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name or "." in name or "[" in name:
                raise ValueError(f"line {lineno}: unsupported table header {line!r}")
            table = root.setdefault(name, {})
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip().strip('"')
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        try:
            table[key] = _parse_scalar(value)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return root


def load_config_file(path: str) -> dict:
    """Load a JSON or TOML config file into a plain dict."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if path.endswith(".json"):
        return json.loads(raw.decode("utf-8"))
    if path.endswith(".toml"):
        if _tomllib is not None:
            return _tomllib.loads(raw.decode("utf-8"))
        return parse_toml_subset(raw.decode("utf-8"))
    # sniff: JSON documents start with { after whitespace
    text = raw.decode("utf-8")
    if text.lstrip().startswith("{"):
        return json.loads(text)
    if _tomllib is not None:
        return _tomllib.loads(text)
    return parse_toml_subset(text)
