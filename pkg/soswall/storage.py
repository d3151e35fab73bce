import io
import json
import os
from typing import Any, Dict, List, Optional

import numpy as np
import pyarrow as pa
import pyarrow.csv as pcsv
import pyarrow.fs as pa_fs
import pyarrow.json as pj

from soswall.errors import ConfigError
from soswall.lattice import HeightField
from soswall.logging import logger as log

FIELD_MAGIC = b"SOSF"
FIELD_VERSION = 1
FIELD_HEADER = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u1"),
        ("side_length", "<u4"),
        ("height_cap", "<u2"),
        ("beta", "<f8"),
        ("seed", "<u8"),
        ("sample_index", "<u4"),
    ]
)
FIELD_DTYPE = np.dtype("<u2")


def encode_field(field: HeightField, beta: float, seed: int, sample_index: int = 0) -> bytes:
    """Pack a field as a fixed little-endian header followed by L*L uint16 heights (x-major)."""
    if field.height_cap > np.iinfo(FIELD_DTYPE).max:
        raise ConfigError(f"height_cap {field.height_cap} does not fit the uint16 field format")
    header = np.zeros(1, dtype=FIELD_HEADER)
    header[0] = (FIELD_MAGIC, FIELD_VERSION, field.side_length, field.height_cap, beta, seed, sample_index)
    return header.tobytes() + field.heights.astype(FIELD_DTYPE).tobytes(order="C")


def decode_field(payload: bytes) -> tuple[HeightField, Dict[str, Any]]:
    """Inverse of encode_field.

    Returns:
        tuple[HeightField, Dict[str, Any]]: The field and its header (beta, seed, sample_index, ...).

    Raises:
        ConfigError: On a wrong magic, an unknown version or a truncated payload.
    """
    if len(payload) < FIELD_HEADER.itemsize:
        raise ConfigError(f"field payload of {len(payload)} bytes is shorter than the header")
    header = np.frombuffer(payload, dtype=FIELD_HEADER, count=1)[0]
    if bytes(header["magic"]) != FIELD_MAGIC:
        raise ConfigError(f"not a field file: magic {bytes(header['magic'])!r}")
    if int(header["version"]) != FIELD_VERSION:
        raise ConfigError(f"unsupported field format version {int(header['version'])}")
    L = int(header["side_length"])
    expected = FIELD_HEADER.itemsize + L * L * FIELD_DTYPE.itemsize
    if len(payload) != expected:
        raise ConfigError(f"field payload has {len(payload)} bytes, expected {expected}")
    heights = np.frombuffer(payload, dtype=FIELD_DTYPE, offset=FIELD_HEADER.itemsize).reshape(L, L)
    meta = {
        "version": int(header["version"]),
        "side_length": L,
        "height_cap": int(header["height_cap"]),
        "beta": float(header["beta"]),
        "seed": int(header["seed"]),
        "sample_index": int(header["sample_index"]),
    }
    return HeightField(L, meta["height_cap"], heights.astype(np.int32)), meta


class Storage:
    """Artifact I/O on the local filesystem through the PyArrow filesystem interface.

    Every path is resolved against ``root``; writes create parent directories.
    """

    def __init__(self, root: Optional[str] = None):
        """Initialize storage under an output root.

        Args:
            root: Output root directory. Defaults to SOSWALL_OUTPUT_ROOT, then the current directory.
        """
        self.root = os.path.abspath(root or os.environ.get("SOSWALL_OUTPUT_ROOT") or ".")
        self.filesystem = pa_fs.LocalFileSystem()
        log.debug(f"Using local storage rooted at {self.root}")

    def _path(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.root, path)

    def _ensure_parent(self, path: str) -> None:
        self.filesystem.create_dir(os.path.dirname(path), recursive=True)

    def exists(self, path: str) -> bool:
        return self.filesystem.get_file_info(self._path(path)).type != pa_fs.FileType.NotFound

    def write_bytes(self, path: str, payload: bytes) -> str:
        """Write raw bytes.

        Returns:
            The absolute path written.

        Raises:
            IOError: If writing fails
        """
        full = self._path(path)
        try:
            self._ensure_parent(full)
            with self.filesystem.open_output_stream(full) as stream:
                stream.write(payload)
            return full
        except Exception as e:
            log.error(f"Failed to write {full}: {str(e)}")
            raise

    def read_bytes(self, path: str) -> bytes:
        full = self._path(path)
        try:
            with self.filesystem.open_input_stream(full) as stream:
                return stream.read()
        except Exception as e:
            log.error(f"Failed to read {full}: {str(e)}")
            raise

    def write_field(self, path: str, field: HeightField, beta: float, seed: int, sample_index: int = 0) -> str:
        return self.write_bytes(path, encode_field(field, beta, seed, sample_index))

    def read_field(self, path: str) -> tuple[HeightField, Dict[str, Any]]:
        return decode_field(self.read_bytes(path))

    def write_json(self, path: str, record: Dict[str, Any]) -> str:
        """Write one JSON object with sorted keys, so equal records give equal bytes."""
        text = json.dumps(_finite(record), sort_keys=True, indent=2, default=_json_default) + "\n"
        return self.write_bytes(path, text.encode("utf-8"))

    def read_json(self, path: str, schema: Optional[pa.Schema] = None) -> Dict[str, Any]:
        """Read a single JSON object (it may span several lines) from storage.

        With a schema the object is parsed by pyarrow.json against it, so declared columns keep
        their exact types (uint64 seeds, int64 counts) and undeclared keys are inferred. Keys the
        object lacks come back as None. Without a schema the object is decoded as written.

        Args:
            path: Path to the JSON file
            schema: Explicit column types for flat config files

        Returns:
            Dictionary containing the JSON data

        Raises:
            FileNotFoundError: If the file doesn't exist
            ValueError: If the JSON is invalid or a value does not fit its declared type
        """
        full = self._path(path)
        try:
            payload = self.read_bytes(full)
            if schema is None:
                record = json.loads(payload)
                if not isinstance(record, dict):
                    raise ValueError(f"expected one JSON object in {full}, found {type(record).__name__}")
                return record
            options = pj.ParseOptions(newlines_in_values=True, explicit_schema=schema, unexpected_field_behavior="infer")
            rows = pj.read_json(io.BytesIO(payload), parse_options=options).to_pylist()
            if len(rows) != 1:
                raise ValueError(f"expected one JSON object in {full}, found {len(rows)}")
            return rows[0]
        except Exception as e:
            log.error(f"Failed to read JSON file {full}: {str(e)}")
            raise

    def write_jsonl(self, path: str, records: List[Dict[str, Any]]) -> str:
        lines = "".join(json.dumps(_finite(r), sort_keys=True, default=_json_default) + "\n" for r in records)
        return self.write_bytes(path, lines.encode("utf-8"))

    def read_jsonl(self, path: str) -> List[Dict[str, Any]]:
        full = self._path(path)
        try:
            text = self.read_bytes(full).decode("utf-8")
            return [json.loads(line) for line in text.splitlines() if line.strip()]
        except Exception as e:
            log.error(f"Failed to read JSON lines {full}: {str(e)}")
            raise

    def write_csv(self, path: str, rows: List[Dict[str, Any]]) -> str:
        """Write rows as a CSV table; columns are the union of keys in first-seen order."""
        full = self._path(path)
        columns: list[str] = []
        for row in rows:
            columns.extend(k for k in row if k not in columns)
        try:
            table = pa.Table.from_pylist([{c: row.get(c) for c in columns} for row in rows])
            self._ensure_parent(full)
            with self.filesystem.open_output_stream(full) as stream:
                pcsv.write_csv(table, stream)
            return full
        except Exception as e:
            log.error(f"Failed to write CSV file {full}: {str(e)}")
            raise

    def read_csv(self, path: str) -> pa.Table:
        full = self._path(path)
        try:
            with self.filesystem.open_input_stream(full) as stream:
                return pcsv.read_csv(stream)
        except Exception as e:
            log.error(f"Failed to read CSV file {full}: {str(e)}")
            raise


def _json_default(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.bool_,)):
        return bool(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def _finite(value: Any) -> Any:
    """Replace non-finite floats by None, recursively; JSON has no inf or nan."""
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    if isinstance(value, (float, np.floating)) and not np.isfinite(value):
        return None
    return value
