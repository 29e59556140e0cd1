from datetime import datetime, timezone

import pytest

from src.artifact_store import (
    atomic_write,
    config_hash,
    digest_bytes,
    dumps_json,
    load_json,
    store_outputs,
    verify_manifest,
    write_manifest,
)
from src.cli.models import RunManifest
from src.core.errors import InputDataError


def test_json_is_sorted_and_indented():
    assert dumps_json({"b": 1, "a": [1.5]}) == b'{\n  "a": [\n    1.5\n  ],\n  "b": 1\n}\n'
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})


def test_atomic_write_replaces_and_leaves_no_temp_files(tmp_path):
    path = tmp_path / "out" / "file.txt"
    atomic_write(str(path), b"first")
    atomic_write(str(path), b"second")
    assert path.read_bytes() == b"second"
    assert [p.name for p in path.parent.iterdir()] == ["file.txt"]


def test_load_json_errors(tmp_path):
    with pytest.raises(InputDataError):
        load_json(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{", encoding="utf-8")
    with pytest.raises(InputDataError):
        load_json(str(bad))


def test_manifest_detects_changed_and_missing_outputs(tmp_path):
    first, second = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    digests = store_outputs({first: b"x,y\n", second: b"1,2\n"})
    assert digests[first] == digest_bytes(b"x,y\n")

    manifest_path = str(tmp_path / "manifest.json")
    write_manifest(manifest_path, RunManifest(
        command=["narrinf", "test"], config={}, config_hash=config_hash({}), output_digests=digests,
        tool_version="1.0.0", started_at=datetime.now(timezone.utc), wall_time_s=0.0,
    ))
    assert verify_manifest(manifest_path).ok

    (tmp_path / "a.csv").write_bytes(b"changed\n")
    (tmp_path / "b.csv").unlink()
    check = verify_manifest(manifest_path)
    assert check.mismatched == {first: "changed", second: "missing"}
