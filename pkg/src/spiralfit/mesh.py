"""Triangle meshes: PLY reading/writing, vertex normals, connected components."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import EmptyInput, IsolatedVertex, ParseError, UnsupportedFormat

log = logging.getLogger(__name__)

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


@dataclass
class TriangleMesh:
    """Vertices ``(n, 3)`` and counter-clockwise faces ``(m, 3)``.

    ``normals`` is only set for point sets read from files that carry
    ``nx, ny, nz`` vertex properties.
    """

    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray | None = None
    n_degenerate_dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ValueError("face index out of range")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def submesh(self, keep: np.ndarray) -> "TriangleMesh":
        """Vertices selected by boolean ``keep`` and the faces lying entirely on them."""
        keep = np.asarray(keep, dtype=bool)
        new_index = np.full(len(self.vertices), -1, dtype=np.int64)
        new_index[keep] = np.arange(np.count_nonzero(keep))
        faces = self.faces[np.all(keep[self.faces], axis=1)] if self.faces.size else self.faces
        return TriangleMesh(
            vertices=self.vertices[keep],
            faces=new_index[faces],
            normals=None if self.normals is None else self.normals[keep],
        )

    def transformed(self, rotation, translation) -> "TriangleMesh":
        R = np.asarray(rotation, dtype=float)
        return TriangleMesh(
            vertices=self.vertices @ R.T + np.asarray(translation, dtype=float),
            faces=self.faces.copy(),
            normals=None if self.normals is None else self.normals @ R.T,
        )


# -- PLY ---------------------------------------------------------------------

@dataclass
class _Element:
    name: str
    count: int
    properties: list = field(default_factory=list)  # (name, dtype) or (name, count_dtype, item_dtype)


def _parse_header(fh) -> tuple[str, list[_Element], int]:
    magic = fh.readline()
    if magic.strip() != b"ply":
        raise ParseError("line 1: missing 'ply' magic")
    fmt = None
    elements: list[_Element] = []
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise ParseError(f"line {lineno}: unexpected end of file inside header")
        parts = raw.decode("ascii", errors="replace").split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        key = parts[0]
        if key == "end_header":
            break
        if key == "format":
            if len(parts) != 3:
                raise ParseError(f"line {lineno}: malformed format line")
            fmt = parts[1]
            if fmt not in ("ascii", "binary_little_endian"):
                raise UnsupportedFormat(f"PLY format {fmt!r} is not supported")
        elif key == "element":
            if len(parts) != 3:
                raise ParseError(f"line {lineno}: malformed element line")
            try:
                elements.append(_Element(parts[1], int(parts[2])))
            except ValueError:
                raise ParseError(f"line {lineno}: element count {parts[2]!r} is not an integer") from None
        elif key == "property":
            if not elements:
                raise ParseError(f"line {lineno}: property before any element")
            try:
                if parts[1] == "list":
                    elements[-1].properties.append((parts[4], _PLY_TYPES[parts[2]], _PLY_TYPES[parts[3]]))
                else:
                    elements[-1].properties.append((parts[2], _PLY_TYPES[parts[1]]))
            except (KeyError, IndexError):
                raise ParseError(f"line {lineno}: bad property declaration {raw!r}") from None
        else:
            raise ParseError(f"line {lineno}: unknown header keyword {key!r}")
    if fmt is None:
        raise ParseError("header has no format line")
    return fmt, elements, lineno


def _read_ascii(fh, elements, lineno):
    data = {}
    for el in elements:
        rows = []
        for i in range(el.count):
            raw = fh.readline()
            lineno += 1
            if not raw:
                raise ParseError(f"line {lineno}: file ends inside element {el.name!r} (row {i})")
            tokens = raw.split()
            values = []
            pos = 0
            try:
                for prop in el.properties:
                    if len(prop) == 3:
                        k = int(tokens[pos])
                        values.append([float(t) for t in tokens[pos + 1:pos + 1 + k]])
                        if len(values[-1]) != k:
                            raise IndexError
                        pos += 1 + k
                    else:
                        values.append(float(tokens[pos]))
                        pos += 1
            except (ValueError, IndexError):
                raise ParseError(f"line {lineno}: malformed {el.name} row {i}: {raw.decode(errors='replace').strip()!r}") from None
            rows.append(values)
        data[el.name] = rows
    return data


def _read_binary(buf: bytes, offset: int, elements):
    data = {}
    for el in elements:
        if all(len(p) == 2 for p in el.properties):
            dt = np.dtype([(name, "<" + t) for name, t in el.properties])
            end = offset + dt.itemsize * el.count
            if end > len(buf):
                raise ParseError(f"byte offset {offset}: file truncated inside element {el.name!r}")
            arr = np.frombuffer(buf, dtype=dt, count=el.count, offset=offset)
            data[el.name] = arr
            offset = end
            continue
        if len(el.properties) == 1 and el.count:
            # all-triangle fast path; falls through when polygon sizes vary
            _, cdt, idt = el.properties[0]
            dt = np.dtype([("k", "<" + cdt), ("v", "<" + idt, (3,))])
            end = offset + dt.itemsize * el.count
            if end <= len(buf):
                arr = np.frombuffer(buf, dtype=dt, count=el.count, offset=offset)
                if np.all(arr["k"] == 3):
                    data[el.name] = [[row] for row in arr["v"].tolist()]
                    offset = end
                    continue
        rows = []
        for i in range(el.count):
            values = []
            for prop in el.properties:
                try:
                    if len(prop) == 3:
                        cdt, idt = np.dtype("<" + prop[1]), np.dtype("<" + prop[2])
                        k = int(np.frombuffer(buf, cdt, 1, offset)[0])
                        offset += cdt.itemsize
                        values.append(np.frombuffer(buf, idt, k, offset).tolist())
                        offset += idt.itemsize * k
                    else:
                        dt = np.dtype("<" + prop[1])
                        values.append(float(np.frombuffer(buf, dt, 1, offset)[0]))
                        offset += dt.itemsize
                except ValueError:
                    raise ParseError(f"byte offset {offset}: truncated {el.name} row {i}") from None
            rows.append(values)
        data[el.name] = rows
    return data


def _column(rows, el: _Element, name: str) -> np.ndarray:
    if isinstance(rows, np.ndarray):
        return rows[name].astype(float)
    j = [p[0] for p in el.properties].index(name)
    return np.array([r[j] for r in rows], dtype=float)


def load_mesh(path) -> TriangleMesh:
    """Read an ASCII or binary little-endian PLY triangle mesh or oriented point set.

    Polygons are fan-triangulated; zero-area faces are dropped and counted in
    ``n_degenerate_dropped``.
    """
    with open(path, "rb") as fh:
        fmt, elements, lineno = _parse_header(fh)
        if fmt == "ascii":
            data = _read_ascii(fh, elements, lineno)
        else:
            data = _read_binary(fh.read(), 0, elements)
    by_name = {el.name: el for el in elements}
    if "vertex" not in by_name:
        raise ParseError("no vertex element")
    vel = by_name["vertex"]
    vnames = [p[0] for p in vel.properties]
    for axis in "xyz":
        if axis not in vnames:
            raise ParseError(f"vertex element lacks property {axis!r}")
    vrows = data["vertex"]
    vertices = np.stack([_column(vrows, vel, a) for a in "xyz"], axis=1) if vel.count else np.zeros((0, 3))
    normals = None
    if all(k in vnames for k in ("nx", "ny", "nz")) and vel.count:
        normals = np.stack([_column(vrows, vel, a) for a in ("nx", "ny", "nz")], axis=1)

    tris = []
    if "face" in by_name:
        fel = by_name["face"]
        list_props = [p for p in fel.properties if len(p) == 3]
        if not list_props:
            raise ParseError("face element has no list property")
        j = fel.properties.index(list_props[0])
        for i, row in enumerate(data["face"]):
            idx = [int(v) for v in row[j]]
            if len(idx) < 3:
                raise ParseError(f"face {i} has {len(idx)} vertices")
            for v in idx:
                if v < 0 or v >= len(vertices):
                    raise ParseError(
                        f"face {i} references vertex {v}, but there are {len(vertices)} vertices"
                    )
            for k in range(1, len(idx) - 1):
                tris.append((idx[0], idx[k], idx[k + 1]))
    faces = np.array(tris, dtype=np.int64).reshape(-1, 3)
    dropped = 0
    if len(faces):
        area2 = np.linalg.norm(face_normals_raw(vertices, faces), axis=1)
        good = area2 > 0
        dropped = int(np.count_nonzero(~good))
        if dropped:
            log.info("dropped %d degenerate faces from %s", dropped, os.fspath(path))
        faces = faces[good]
    return TriangleMesh(vertices, faces, normals, n_degenerate_dropped=dropped)


def write_ply(path, mesh: TriangleMesh, binary: bool = False, normals: np.ndarray | None = None) -> None:
    """Write vertices (float64), optional normals, and triangle faces."""
    normals = mesh.normals if normals is None else np.asarray(normals, dtype=float)
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"element vertex {mesh.n_vertices}",
              "property double x", "property double y", "property double z"]
    if normals is not None:
        header += ["property double nx", "property double ny", "property double nz"]
    if mesh.n_faces:
        header += [f"element face {mesh.n_faces}", "property list uchar int vertex_indices"]
    header.append("end_header")
    cols = mesh.vertices if normals is None else np.hstack([mesh.vertices, normals])
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(np.ascontiguousarray(cols, dtype="<f8").tobytes())
            if mesh.n_faces:
                dt = np.dtype([("k", "u1"), ("v", "<i4", (3,))])
                rec = np.empty(mesh.n_faces, dtype=dt)
                rec["k"] = 3
                rec["v"] = mesh.faces
                fh.write(rec.tobytes())
        else:
            lines = [" ".join(repr(float(x)) for x in row) for row in cols]
            lines += ["3 %d %d %d" % tuple(f) for f in mesh.faces]
            fh.write(("\n".join(lines) + "\n").encode("ascii") if lines else b"")


# -- normals and connectivity ---------------------------------------------------

def face_normals_raw(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Unnormalised face normals (length = twice the face area)."""
    a, b, c = (vertices[faces[:, k]] for k in range(3))
    return np.cross(b - a, c - a)


def vertex_normals(mesh: TriangleMesh, strict: bool = False) -> np.ndarray:
    """Angle-weighted vertex normals following the face winding.

    Vertices without faces get NaN rows (or raise IsolatedVertex when ``strict``).
    """
    V, Fc = mesh.vertices, mesh.faces
    fn = face_normals_raw(V, Fc)
    fn /= np.linalg.norm(fn, axis=1, keepdims=True)
    acc = np.zeros_like(V)
    for k in range(3):
        e1 = V[Fc[:, (k + 1) % 3]] - V[Fc[:, k]]
        e2 = V[Fc[:, (k + 2) % 3]] - V[Fc[:, k]]
        cos = np.sum(e1 * e2, axis=1)
        sin = np.linalg.norm(np.cross(e1, e2), axis=1)
        angle = np.arctan2(sin, cos)
        np.add.at(acc, Fc[:, k], angle[:, None] * fn)
    norm = np.linalg.norm(acc, axis=1)
    isolated = norm == 0
    if np.any(isolated):
        if strict:
            raise IsolatedVertex(f"{np.count_nonzero(isolated)} vertices belong to no face")
        log.info("%d isolated vertices excluded", np.count_nonzero(isolated))
    out = np.full_like(acc, np.nan)
    out[~isolated] = acc[~isolated] / norm[~isolated, None]
    return out


def component_labels(mesh: TriangleMesh) -> tuple[int, np.ndarray]:
    """Connected components of the vertex graph induced by face edges."""
    n = mesh.n_vertices
    Fc = mesh.faces
    rows = np.concatenate([Fc[:, 0], Fc[:, 1], Fc[:, 2]])
    cols = np.concatenate([Fc[:, 1], Fc[:, 2], Fc[:, 0]])
    graph = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
    return connected_components(graph, directed=False)


def largest_component_near(mesh: TriangleMesh, center) -> TriangleMesh:
    """Among components with at least half the largest vertex count, the one whose centroid is nearest ``center``."""
    if mesh.n_vertices == 0:
        raise EmptyInput("empty mesh")
    count, labels = component_labels(mesh)
    sizes = np.bincount(labels, minlength=count)
    centroids = np.zeros((count, 3))
    np.add.at(centroids, labels, mesh.vertices)
    centroids /= sizes[:, None]
    candidates = np.flatnonzero(sizes >= 0.5 * sizes.max())
    dist = np.linalg.norm(centroids[candidates] - np.asarray(center, dtype=float), axis=1)
    best = candidates[int(np.argmin(dist))]
    return mesh.submesh(labels == best)
