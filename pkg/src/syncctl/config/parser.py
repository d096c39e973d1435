import os.path

from lark import Lark

grammar_path = os.path.join(os.path.dirname(__file__), "config.lark")

with open(grammar_path) as grammar:
    config_parser = Lark(grammar.read(), start="start", parser="lalr")
