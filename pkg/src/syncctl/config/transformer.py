import json

from lark import Token, Transformer

from syncctl.exceptions import ParseError


def _unquote(token: Token) -> str:
    # the grammar only delimits the string; escapes are decoded with JSON rules
    try:
        return json.loads(str(token))
    except json.JSONDecodeError as err:
        raise ParseError(f"invalid string escape: {err.msg}", token.line, token.column)


class ConfigTransformer(Transformer):
    """transform a config parse tree into dicts, lists, strings and numbers"""

    def number(self, items):
        (token,) = items
        text = str(token)
        if text.lstrip("+-").isdigit():
            return int(text)
        return float(text)

    def string(self, items):
        return _unquote(items[0])

    def true(self, _):
        return True

    def false(self, _):
        return False

    def null(self, _):
        return None

    def array(self, items):
        return list(items)

    def pair(self, items):
        # keep the key token so duplicates can be reported with a position
        key, value = items
        return key, value

    def object(self, items):
        result = {}
        for token, value in items:
            key = _unquote(token)
            if key in result:
                raise ParseError(f"duplicate key {key!r}", token.line, token.column)
            result[key] = value
        return result
