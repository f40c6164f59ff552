import json
from dataclasses import asdict, is_dataclass
from enum import Enum
from pathlib import Path
from typing import IO, Any, Dict, Union

import numpy as np
import yaml
from pydantic import BaseModel

APP_NAME = "heare-helmet"


class CustomJSONEncoder(json.JSONEncoder):
    def default(self, obj: Any) -> Any:
        if isinstance(obj, Enum):
            return obj.value
        if isinstance(obj, Path):
            return str(obj)
        if isinstance(obj, BaseModel):
            return obj.model_dump(mode="json")
        if is_dataclass(obj) and not isinstance(obj, type):
            return asdict(obj)
        if isinstance(obj, np.generic):
            return obj.item()
        return super().default(obj)


def serialize_to_file(obj: Any, fp: IO[str], indent: int = None) -> None:
    json.dump(obj, fp, cls=CustomJSONEncoder, indent=indent, sort_keys=True)
    fp.write("\n")


def load_config(path: Union[str, Path]) -> Dict[str, Dict[str, Any]]:
    """
    Load CLI defaults from a YAML file mapping subcommand names to
    {flag dest: value}.
    """
    with open(path, "r") as f:
        config = yaml.safe_load(f) or {}
    if not isinstance(config, dict) or not all(
        isinstance(v, dict) for v in config.values()
    ):
        raise ValueError(
            f"Config {path} must map subcommand names to mappings of flag values"
        )
    return config


def write_text(path: Union[str, Path], text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
