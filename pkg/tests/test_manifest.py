import hashlib
import os
from unittest.mock import Mock

import pytest

from soswall.manifest import MANIFEST_NAME, STATUS_COMPLETE, STATUS_FAILED, STATUS_RUNNING, Manifest
from soswall.storage import Storage


@pytest.fixture
def storage(tmp_path):
    return Storage(str(tmp_path))


@pytest.fixture
def manifest(storage):
    return Manifest(storage, storage.root, command="sample")


def test_manifest_initialization(manifest, storage):
    assert manifest.status == STATUS_RUNNING
    assert manifest.get_artifacts() == []
    assert manifest.path == os.path.join(storage.root, MANIFEST_NAME)
    assert not manifest.is_complete()


def test_manifest_initialization_empty_location(storage):
    with pytest.raises(ValueError, match="Location cannot be empty"):
        Manifest(storage, "")


def test_add_artifact_records_digest(manifest, storage):
    path = storage.write_bytes("cell/report.json", b"{}\n")
    entry = manifest.add_artifact(path, "report")
    assert entry == {"path": "cell/report.json", "kind": "report", "sha256": hashlib.sha256(b"{}\n").hexdigest()}
    assert storage.exists(manifest.path)
    assert manifest.get_artifacts("report") == [entry]
    assert manifest.get_artifacts("field") == []


def test_load_round_trip(manifest, storage):
    manifest.add_artifact(storage.write_bytes("a.bin", b"a"), "field")
    manifest.complete()
    loaded = Manifest.load(storage, storage.root)
    assert loaded.is_complete()
    assert loaded.manifest["command"] == "sample"
    assert loaded.get_artifacts("field")[0]["path"] == "a.bin"
    assert loaded.verify() == []


def test_load_missing_manifest(storage):
    with pytest.raises(FileNotFoundError):
        Manifest.load(storage, os.path.join(storage.root, "nowhere"))


def test_load_invalid_manifest(storage):
    storage.write_json(MANIFEST_NAME, {"status": "running"})
    with pytest.raises(ValueError, match="artifact list"):
        Manifest.load(storage, storage.root)


def test_load_uses_storage():
    storage = Mock()
    storage.read_json.return_value = {"command": None, "status": "complete", "artifacts": None, "error": None}
    loaded = Manifest.load(storage, "/runs/x")
    storage.read_json.assert_called_once_with(os.path.join("/runs/x", MANIFEST_NAME))
    assert loaded.get_artifacts() == []


def test_verify_detects_changes(manifest, storage):
    manifest.add_artifact(storage.write_bytes("a.bin", b"a"), "field")
    manifest.add_artifact(storage.write_bytes("b.bin", b"b"), "field")
    storage.write_bytes("a.bin", b"changed")
    os.remove(os.path.join(storage.root, "b.bin"))
    assert manifest.verify() == ["a.bin", "b.bin"]


def test_fail_records_the_error(manifest, storage):
    manifest.fail({"type": "InvariantError", "message": "order broke"})
    loaded = Manifest.load(storage, storage.root)
    assert loaded.status == STATUS_FAILED
    assert loaded.manifest["error"] == {"type": "InvariantError", "message": "order broke"}


def test_complete(manifest):
    manifest.complete()
    assert manifest.status == STATUS_COMPLETE
