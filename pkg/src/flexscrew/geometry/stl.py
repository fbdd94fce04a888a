"""Binary STL read/write."""

from __future__ import annotations

import os

import numpy as np

from .mesh import TriangleMesh, check_integrity

HEADER_SIZE = 80
_RECORD = np.dtype(
    [("normal", "<f4", (3,)), ("v", "<f4", (3, 3)), ("attr", "<u2")]
)
assert _RECORD.itemsize == 50


def _header(text: str) -> bytes:
    raw = text.encode("ascii", "replace")[:HEADER_SIZE]
    # a header starting with "solid" makes some readers assume ASCII STL
    if raw.lower().startswith(b"solid"):
        raw = b"binary " + raw
    return raw[:HEADER_SIZE].ljust(HEADER_SIZE, b" ")


def stl_bytes(mesh: TriangleMesh, header: str = "flexscrew binary STL") -> bytes:
    tri = mesh.vertices[mesh.triangles]
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = np.divide(normals, norm, out=np.zeros_like(normals), where=norm > 0)

    records = np.zeros(len(tri), dtype=_RECORD)
    records["normal"] = normals
    records["v"] = tri
    return _header(header) + np.uint32(len(tri)).astype("<u4").tobytes() + records.tobytes()


def export_stl(
    mesh: TriangleMesh, destination=None, header: str = "flexscrew binary STL", check: bool = True
) -> bytes:
    """Serialize ``mesh`` as binary STL and optionally write it.

    ``destination`` may be a path or a writable binary file object. Unless
    ``check`` is False the mesh must be watertight. Returns the bytes written.
    """
    if check:
        check_integrity(mesh)
    data = stl_bytes(mesh, header)
    if destination is None:
        return data
    if hasattr(destination, "write"):
        destination.write(data)
        return data
    try:
        with open(destination, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write STL to {os.fspath(destination)}: {exc.strerror}") from exc
    return data


def read_stl(source) -> TriangleMesh:
    """Load a binary STL, merging vertices with identical float32 coordinates."""
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    elif hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    if len(data) < HEADER_SIZE + 4:
        raise ValueError("truncated STL header")
    count = int(np.frombuffer(data, "<u4", 1, HEADER_SIZE)[0])
    expected = HEADER_SIZE + 4 + count * _RECORD.itemsize
    if len(data) != expected:
        raise ValueError(f"STL size {len(data)} does not match {count} triangles ({expected} bytes)")
    records = np.frombuffer(data, _RECORD, count, HEADER_SIZE + 4)
    corners = records["v"].reshape(-1, 3)
    unique, inverse = np.unique(corners, axis=0, return_inverse=True)
    return TriangleMesh(unique.astype(float), inverse.reshape(-1, 3))


def triangle_count(data: bytes) -> int:
    return int(np.frombuffer(data, "<u4", 1, HEADER_SIZE)[0])
