"""Mesh file formats: Wavefront OBJ and PLY (ASCII or binary little endian)

Formats live in a registry that auto-detects by extension and header, the
same way option strings are dispatched in :mod:`scenereg.parsers`.
"""

import logging
import re
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..errors import EmptyMesh, ParseError
from .mesh import TriangleMesh

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _triangulate(polygon: List[int]) -> List[Tuple[int, int, int]]:
    return [(polygon[0], polygon[i], polygon[i + 1]) for i in range(1, len(polygon) - 1)]


def _finish(path: Path, vertices: np.ndarray, faces: np.ndarray) -> TriangleMesh:
    if len(faces) == 0:
        raise EmptyMesh(f"{path}: mesh has no faces")
    if faces.min() < 0 or faces.max() >= len(vertices):
        raise ParseError(f"{path}: face index out of range for {len(vertices)} vertices")
    mesh = TriangleMesh.from_soup(vertices, faces)
    if mesh.is_empty:
        raise EmptyMesh(f"{path}: every face is degenerate")
    return mesh


class MeshFormat(ABC):
    """Abstract base class for mesh file formats"""

    @property
    @abstractmethod
    def name(self) -> str:
        """Format name"""

    @property
    @abstractmethod
    def extensions(self) -> Tuple[str, ...]:
        """Lower-case file suffixes handled by the format"""

    def can_load(self, path: Path, head: bytes) -> bool:
        return path.suffix.lower() in self.extensions

    @abstractmethod
    def load(self, path: Path) -> TriangleMesh:
        """Read a mesh"""

    @abstractmethod
    def save(self, mesh: TriangleMesh, path: Path) -> None:
        """Write a mesh"""


class ObjFormat(MeshFormat):
    """Wavefront OBJ, geometry only (``v`` and ``f`` records)"""

    @property
    def name(self) -> str:
        return "obj"

    @property
    def extensions(self) -> Tuple[str, ...]:
        return (".obj",)

    def can_load(self, path: Path, head: bytes) -> bool:
        if super().can_load(path, head):
            return True
        return re.match(rb"^\s*(#[^\n]*\n\s*)*(v|o|g|mtllib)\s", head) is not None

    def load(self, path: Path) -> TriangleMesh:
        vertices: List[List[float]] = []
        faces: List[Tuple[int, int, int]] = []
        with open(path, "r", encoding="utf-8", errors="replace") as handle:
            for lineno, line in enumerate(handle, start=1):
                parts = line.split()
                if not parts:
                    continue
                try:
                    if parts[0] == "v":
                        vertices.append([float(x) for x in parts[1:4]])
                        if len(vertices[-1]) != 3:
                            raise ValueError("vertex needs three coordinates")
                    elif parts[0] == "f":
                        polygon = []
                        for token in parts[1:]:
                            index = int(token.split("/")[0])
                            polygon.append(index - 1 if index > 0 else len(vertices) + index)
                        if len(polygon) < 3:
                            raise ValueError("face needs at least three vertices")
                        faces.extend(_triangulate(polygon))
                except ValueError as e:
                    raise ParseError(f"{path}:{lineno}: {e}")
        return _finish(
            path,
            np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
            np.asarray(faces, dtype=np.int64).reshape(-1, 3),
        )

    def save(self, mesh: TriangleMesh, path: Path) -> None:
        lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


class PlyFormat(MeshFormat):
    """PLY with ``vertex`` (x, y, z) and ``face`` (vertex_indices) elements"""

    @property
    def name(self) -> str:
        return "ply"

    @property
    def extensions(self) -> Tuple[str, ...]:
        return (".ply",)

    def can_load(self, path: Path, head: bytes) -> bool:
        return head.startswith(b"ply") or super().can_load(path, head)

    def _read_header(self, path: Path, data: bytes):
        end = data.find(b"end_header")
        if not data.startswith(b"ply") or end < 0:
            raise ParseError(f"{path}: missing PLY header")
        body_start = data.index(b"\n", end) + 1
        fmt = None
        elements: List[Dict] = []
        for raw in data[:end].decode("ascii", errors="replace").splitlines()[1:]:
            parts = raw.split()
            if not parts or parts[0] in ("comment", "obj_info"):
                continue
            if parts[0] == "format":
                fmt = parts[1]
            elif parts[0] == "element":
                elements.append({"name": parts[1], "count": int(parts[2]), "props": []})
            elif parts[0] == "property":
                if not elements:
                    raise ParseError(f"{path}: property before element")
                if parts[1] == "list":
                    elements[-1]["props"].append((parts[4], "list", parts[2], parts[3]))
                else:
                    elements[-1]["props"].append((parts[2], parts[1]))
        if fmt not in ("ascii", "binary_little_endian"):
            raise ParseError(f"{path}: unsupported PLY format '{fmt}'")
        return fmt, elements, body_start

    def load(self, path: Path) -> TriangleMesh:
        data = Path(path).read_bytes()
        fmt, elements, offset = self._read_header(path, data)
        vertices = np.zeros((0, 3))
        faces = np.zeros((0, 3), dtype=np.int64)
        tokens = data[offset:].split() if fmt == "ascii" else None
        cursor = 0
        try:
            for element in elements:
                if fmt == "ascii":
                    rows, cursor = self._read_ascii(element, tokens, cursor)
                else:
                    rows, offset = self._read_binary(element, data, offset)
                if element["name"] == "vertex":
                    vertices = np.column_stack([rows["x"], rows["y"], rows["z"]]).astype(np.float64)
                elif element["name"] == "face":
                    key = next(k for k in ("vertex_indices", "vertex_index") if k in rows)
                    polys = rows[key]
                    faces = np.asarray(
                        [tri for poly in polys for tri in _triangulate(list(poly))], dtype=np.int64
                    ).reshape(-1, 3)
        except (IndexError, ValueError, KeyError, StopIteration) as e:
            raise ParseError(f"{path}: truncated or malformed PLY body ({e})")
        return _finish(path, vertices, faces)

    @staticmethod
    def _read_ascii(element, tokens, cursor):
        rows: Dict[str, list] = {p[0]: [] for p in element["props"]}
        for _ in range(element["count"]):
            for prop in element["props"]:
                if prop[1] == "list":
                    n = int(tokens[cursor])
                    rows[prop[0]].append([int(float(t)) for t in tokens[cursor + 1 : cursor + 1 + n]])
                    cursor += 1 + n
                else:
                    rows[prop[0]].append(float(tokens[cursor]))
                    cursor += 1
        return rows, cursor

    @staticmethod
    def _read_binary(element, data, offset):
        props = element["props"]
        if not any(p[1] == "list" for p in props):
            dtype = np.dtype([(p[0], "<" + _PLY_TYPES[p[1]]) for p in props])
            size = dtype.itemsize * element["count"]
            if offset + size > len(data):
                raise ValueError("vertex block shorter than declared")
            table = np.frombuffer(data, dtype=dtype, count=element["count"], offset=offset)
            return {name: table[name] for name in dtype.names}, offset + size
        rows: Dict[str, list] = {p[0]: [] for p in props}
        for _ in range(element["count"]):
            for prop in props:
                if prop[1] == "list":
                    count_type = np.dtype("<" + _PLY_TYPES[prop[2]])
                    item_type = np.dtype("<" + _PLY_TYPES[prop[3]])
                    (n,) = np.frombuffer(data, dtype=count_type, count=1, offset=offset)
                    offset += count_type.itemsize
                    items = np.frombuffer(data, dtype=item_type, count=int(n), offset=offset)
                    offset += item_type.itemsize * int(n)
                    rows[prop[0]].append(items.astype(np.int64).tolist())
                else:
                    item_type = np.dtype("<" + _PLY_TYPES[prop[1]])
                    (value,) = np.frombuffer(data, dtype=item_type, count=1, offset=offset)
                    offset += item_type.itemsize
                    rows[prop[0]].append(value)
        return rows, offset

    def save(self, mesh: TriangleMesh, path: Path) -> None:
        header = (
            "ply\nformat binary_little_endian 1.0\n"
            f"element vertex {len(mesh.vertices)}\n"
            "property double x\nproperty double y\nproperty double z\n"
            f"element face {len(mesh.faces)}\n"
            "property list uchar int vertex_indices\nend_header\n"
        ).encode("ascii")
        face_dtype = np.dtype([("n", "u1"), ("idx", "<i4", (3,))])
        face_rows = np.zeros(len(mesh.faces), dtype=face_dtype)
        face_rows["n"] = 3
        face_rows["idx"] = mesh.faces
        body = mesh.vertices.astype("<f8").tobytes() + face_rows.tobytes()
        Path(path).write_bytes(header + body)


class MeshFormatRegistry:
    """Registry of mesh formats with auto-detection"""

    def __init__(self):
        self._formats: List[MeshFormat] = []
        self.register(ObjFormat())
        self.register(PlyFormat())

    def register(self, mesh_format: MeshFormat) -> None:
        self._formats.append(mesh_format)

    def get_format(self, name: str) -> Optional[MeshFormat]:
        for mesh_format in self._formats:
            if mesh_format.name == name:
                return mesh_format
        return None

    def detect(self, path: Path) -> MeshFormat:
        with open(path, "rb") as handle:
            head = handle.read(256)
        for mesh_format in self._formats:
            if mesh_format.can_load(path, head):
                return mesh_format
        raise ParseError(f"{path}: unrecognized mesh format")

    def load(self, path: PathLike, format_name: Optional[str] = None) -> TriangleMesh:
        path = Path(path)
        mesh_format = self._resolve(path, format_name)
        mesh = mesh_format.load(path)
        logger.debug("Loaded %s (%s): %d vertices, %d faces", path, mesh_format.name, len(mesh.vertices), len(mesh.faces))
        return mesh

    def save(self, mesh: TriangleMesh, path: PathLike, format_name: Optional[str] = None) -> None:
        path = Path(path)
        if format_name is None:
            matches = [f for f in self._formats if path.suffix.lower() in f.extensions]
            if not matches:
                raise ParseError(f"{path}: no mesh format for suffix '{path.suffix}'")
            mesh_format = matches[0]
        else:
            mesh_format = self._resolve(path, format_name)
        mesh_format.save(mesh, path)

    def _resolve(self, path: Path, format_name: Optional[str]) -> MeshFormat:
        if format_name:
            mesh_format = self.get_format(format_name)
            if mesh_format is None:
                raise ParseError(f"Mesh format '{format_name}' not found")
            return mesh_format
        return self.detect(path)


_registry = MeshFormatRegistry()


def load_mesh(path: PathLike, format_name: Optional[str] = None) -> TriangleMesh:
    """Read an OBJ or PLY mesh; degenerate faces are dropped with a warning"""
    return _registry.load(path, format_name)


def save_mesh(mesh: TriangleMesh, path: PathLike, format_name: Optional[str] = None) -> None:
    _registry.save(mesh, path, format_name)


def save_obj(mesh: TriangleMesh, path: PathLike) -> None:
    _registry.save(mesh, path, "obj")


def save_ply(mesh: TriangleMesh, path: PathLike) -> None:
    _registry.save(mesh, path, "ply")
