import hashlib
import os
from typing import Any, Dict, List, Optional

from soswall.logging import logger as log
from soswall.storage import Storage

MANIFEST_NAME = "manifest.json"
STATUS_RUNNING = "running"
STATUS_COMPLETE = "complete"
STATUS_FAILED = "failed"


class Manifest:
    """The list of completed artifacts of one run directory, with the run's status.

    The manifest is rewritten after every artifact, so a crashed run leaves a manifest whose
    status is still "running" and which names only the files that were fully written.
    """

    def __init__(self, storage: Storage, location: str, command: Optional[str] = None):
        """Initialize an empty manifest for a run directory.

        Args:
            storage: Storage used for every read and write
            location: The run directory, relative to the storage root or absolute
            command: Subcommand that produced the run

        Raises:
            ValueError: If location is empty
        """
        if not location:
            raise ValueError("Location cannot be empty.")
        self.storage = storage
        self.location = location
        self.manifest: Dict[str, Any] = {"command": command, "status": STATUS_RUNNING, "artifacts": [], "error": None}

    @property
    def path(self) -> str:
        return os.path.join(self.location, MANIFEST_NAME)

    @classmethod
    def load(cls, storage: Storage, location: str) -> "Manifest":
        """Read an existing manifest.

        Raises:
            FileNotFoundError: If the manifest file doesn't exist
            ValueError: If the manifest file is invalid
        """
        manifest = cls(storage, location)
        path = manifest.path
        try:
            log.info(f"Attempting to read manifest file from {path}")
            record = storage.read_json(path)
            if not isinstance(record, dict) or "artifacts" not in record:
                raise ValueError("Manifest file must contain an artifact list")
            record["artifacts"] = record["artifacts"] or []
            manifest.manifest = record
            log.info(f"Loaded manifest with {len(record['artifacts'])} artifacts from {location}")
        except FileNotFoundError:
            log.error(f"Manifest file not found at {path}")
            raise
        except ValueError as e:
            log.error(f"Invalid manifest file: {e}")
            raise
        return manifest

    def write(self) -> str:
        return self.storage.write_json(self.path, self.manifest)

    def add_artifact(self, path: str, kind: str) -> Dict[str, Any]:
        """Record a fully written file and persist the manifest.

        Args:
            path: The file written, inside the run directory
            kind: Artifact kind such as "field", "loops", "report", "table" or "svg"
        """
        full = self.storage._path(path)
        entry = {
            "path": os.path.relpath(full, self.storage._path(self.location)),
            "kind": kind,
            "sha256": hashlib.sha256(self.storage.read_bytes(full)).hexdigest(),
        }
        self.manifest["artifacts"].append(entry)
        self.write()
        return entry

    def get_artifacts(self, kind: Optional[str] = None) -> List[Dict[str, Any]]:
        return [a for a in self.manifest["artifacts"] if kind is None or a["kind"] == kind]

    def verify(self) -> List[str]:
        """Paths whose file is missing or whose digest no longer matches."""
        broken = []
        for artifact in self.manifest["artifacts"]:
            path = os.path.join(self.location, artifact["path"])
            if not self.storage.exists(path):
                broken.append(artifact["path"])
            elif hashlib.sha256(self.storage.read_bytes(path)).hexdigest() != artifact["sha256"]:
                broken.append(artifact["path"])
        return broken

    @property
    def status(self) -> str:
        return self.manifest["status"]

    def is_complete(self) -> bool:
        return self.status == STATUS_COMPLETE

    def complete(self) -> str:
        self.manifest["status"] = STATUS_COMPLETE
        return self.write()

    def fail(self, error: Dict[str, Any]) -> str:
        self.manifest["status"] = STATUS_FAILED
        self.manifest["error"] = error
        return self.write()
