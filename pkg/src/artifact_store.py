import hashlib
import logging
import os
import tempfile
from typing import Mapping

import orjson

from src.cli.models import ManifestCheck, RunManifest
from src.core.errors import InputDataError

logger = logging.getLogger(__name__)

JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY


def init_output_dir(directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    return directory


def dumps_json(payload) -> bytes:
    return orjson.dumps(payload, option=JSON_OPTIONS) + b"\n"


def load_json(path: str):
    try:
        with open(path, "rb") as f:
            return orjson.loads(f.read())
    except FileNotFoundError as e:
        raise InputDataError(f"File not found: {path}") from e
    except orjson.JSONDecodeError as e:
        raise InputDataError(f"Invalid JSON in {path}: {e}") from e


def digest_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_file(path: str) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            sha.update(block)
    return sha.hexdigest()


def atomic_write(path: str, data: bytes) -> None:
    """Write to a temporary file in the target directory, then rename over path."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def store_outputs(outputs: Mapping[str, bytes]) -> dict[str, str]:
    """
    Atomically write every (path, bytes) pair and return their digests.

    Callers build all outputs in memory first, so a failing command leaves
    no partial files behind.
    """
    digests = {}
    for path, data in outputs.items():
        atomic_write(path, data)
        digests[path] = digest_bytes(data)
        logger.info(f"Wrote {path} ({len(data)} bytes)")
    return digests


def input_digests(paths) -> dict[str, str]:
    return {path: digest_file(path) for path in paths if os.path.isfile(path)}


def config_hash(config: dict) -> str:
    return digest_bytes(orjson.dumps(config, option=orjson.OPT_SORT_KEYS))


def write_manifest(path: str, manifest: RunManifest) -> None:
    atomic_write(path, dumps_json(manifest.model_dump(mode="json")))


def verify_manifest(path: str) -> ManifestCheck:
    """Recompute every recorded input and output digest."""
    manifest = RunManifest.model_validate(load_json(path))
    check = ManifestCheck(manifest=path)
    for recorded in (manifest.input_digests, manifest.output_digests):
        for file_path, digest in recorded.items():
            if not os.path.isfile(file_path):
                check.mismatched[file_path] = "missing"
            elif digest_file(file_path) != digest:
                check.mismatched[file_path] = "changed"
    if check.mismatched:
        logger.warning(f"Manifest {path}: {len(check.mismatched)} digest mismatch(es)")
    return check
