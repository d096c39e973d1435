from syncctl.config.codec import parse, to_string
from syncctl.config.schema import ProblemConfig, load_config, loads

__all__ = ["ProblemConfig", "load_config", "loads", "parse", "to_string"]
