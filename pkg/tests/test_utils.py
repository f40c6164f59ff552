import io
import json
from pathlib import Path

import numpy as np
import pytest

from heare.helmet.core import ClassId, FrameDims
from heare.helmet.fusion import FusionConfig, FusionMode
from heare.helmet.utils import CustomJSONEncoder, load_config, serialize_to_file, write_text


def test_encoder_handles_domain_values():
    payload = {
        "mode": FusionMode.MEAN,
        "class": ClassId.MOTORCYCLE,
        "path": Path("out/report.json"),
        "dims": FrameDims(4, 3),
        "config": FusionConfig(),
        "score": np.float64(0.25),
    }
    decoded = json.loads(json.dumps(payload, cls=CustomJSONEncoder))
    assert decoded["mode"] == "mean"
    assert decoded["class"] == 1
    assert decoded["path"] == "out/report.json"
    assert decoded["dims"] == {"width": 4, "height": 3}
    assert decoded["config"]["mode"] == "weighted"
    assert decoded["score"] == 0.25


def test_serialize_to_file_is_sorted():
    buffer = io.StringIO()
    serialize_to_file({"b": 1, "a": 2}, buffer)
    assert buffer.getvalue() == '{"a": 2, "b": 1}\n'


def test_load_config(tmp_path):
    path = tmp_path / "flags.yaml"
    path.write_text("evaluate:\n  iou_threshold: 0.75\n")
    assert load_config(path) == {"evaluate": {"iou_threshold": 0.75}}

    path.write_text("")
    assert load_config(path) == {}

    path.write_text("- evaluate\n")
    with pytest.raises(ValueError):
        load_config(path)

    path.write_text("evaluate: 3\n")
    with pytest.raises(ValueError):
        load_config(path)


def test_write_text_creates_parents(tmp_path):
    target = tmp_path / "a" / "b" / "out.txt"
    write_text(target, "hello\n")
    assert target.read_text() == "hello\n"
