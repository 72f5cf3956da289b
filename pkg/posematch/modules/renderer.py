# modules/renderer.py

"""
Minimal z-buffer software rasterizer and the six canonical cube-face views.

Triangles are flat shaded with a headlight: color * (ambient + diffuse * max(0, n.L)),
L = (0, 0, -1) in the camera frame. Back faces (outward normal pointing away from
the camera) are culled, coverage follows the top-left fill rule at pixel centers,
and depth is interpolated perspective-correctly (linear in 1/z on screen).
"""

import logging
import os
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from posematch.config import RENDERING
from posematch.core.exceptions import (
    ObjectBehindCamera,
    ParseError,
    UnsupportedElement,
    ValidationError,
    handle_exceptions,
    PoseMatchError,
)
from posematch.core.model import (
    CameraIntrinsics,
    Image,
    Mask,
    Pose,
    RenderOutput,
    TriangleMesh,
    UnitQuaternion,
)
from posematch.modules.pose_core import quat_angle_deg

logger = logging.getLogger(__name__)


# Mesh IO

def _parse_header(lines: List[str]) -> Tuple[List[dict], int]:
    """Return the declared elements and the index of the first body line."""
    if not lines or lines[0].strip() != 'ply':
        raise ParseError("Missing 'ply' magic", line=1)
    elements: List[dict] = []
    for idx, raw in enumerate(lines[1:], start=1):
        tokens = raw.split()
        if not tokens or tokens[0] in ('comment', 'obj_info'):
            continue
        keyword = tokens[0]
        if keyword == 'format':
            if len(tokens) < 3 or tokens[1] != 'ascii':
                raise UnsupportedElement(f"Only ASCII PLY is supported, got '{raw.strip()}'", line=idx + 1)
        elif keyword == 'element':
            if len(tokens) != 3:
                raise ParseError(f"Malformed element line '{raw.strip()}'", line=idx + 1)
            try:
                count = int(tokens[2])
            except ValueError as e:
                raise ParseError(f"Element count is not an integer: '{tokens[2]}'", line=idx + 1, original_exception=e)
            elements.append({'name': tokens[1], 'count': count, 'properties': []})
        elif keyword == 'property':
            if not elements:
                raise ParseError("Property declared before any element", line=idx + 1)
            if tokens[1] == 'list':
                if len(tokens) != 5:
                    raise ParseError(f"Malformed list property '{raw.strip()}'", line=idx + 1)
                elements[-1]['properties'].append(('list', tokens[4]))
            else:
                if len(tokens) != 3:
                    raise ParseError(f"Malformed property '{raw.strip()}'", line=idx + 1)
                elements[-1]['properties'].append(('scalar', tokens[2]))
        elif keyword == 'end_header':
            return elements, idx + 1
        else:
            raise ParseError(f"Unknown header keyword '{keyword}'", line=idx + 1)
    raise ParseError("Missing 'end_header'", line=len(lines))


@handle_exceptions(ParseError, "Error reading PLY mesh")
def load_ply(path: str) -> TriangleMesh:
    """
    Load an ASCII PLY mesh with vertex x/y/z (optional red/green/blue) and face lists.

    Quads are fan-triangulated; faces with more than 4 vertices are rejected.
    """
    with open(path) as f:
        lines = f.read().splitlines()

    elements, cursor = _parse_header(lines)
    vertices, colors, triangles = [], [], []
    has_color = False

    for element in elements:
        names = [name for kind, name in element['properties']]
        for _ in range(element['count']):
            while cursor < len(lines) and not lines[cursor].strip():
                cursor += 1
            if cursor >= len(lines):
                raise ParseError(f"Unexpected end of file in element '{element['name']}'", line=cursor)
            line_no = cursor + 1
            tokens = lines[cursor].split()
            cursor += 1

            if element['name'] == 'vertex':
                if len(tokens) < len(names):
                    raise ParseError(f"Expected {len(names)} vertex values, got {len(tokens)}", line=line_no)
                try:
                    record = {name: float(tok) for name, tok in zip(names, tokens)}
                    vertices.append((record['x'], record['y'], record['z']))
                except KeyError as e:
                    raise ParseError(f"Vertex element lacks property {e}", line=line_no)
                except ValueError as e:
                    raise ParseError("Vertex value is not a number", line=line_no, original_exception=e)
                if {'red', 'green', 'blue'} <= record.keys():
                    has_color = True
                    colors.append((record['red'], record['green'], record['blue']))
            elif element['name'] == 'face':
                try:
                    count = int(tokens[0])
                    indices = [int(t) for t in tokens[1:1 + count]]
                except (ValueError, IndexError) as e:
                    raise ParseError("Malformed face", line=line_no, original_exception=e)
                if len(indices) != count:
                    raise ParseError(f"Face declares {count} vertices, lists {len(indices)}", line=line_no)
                if count < 3:
                    raise ParseError(f"Face with {count} vertices", line=line_no)
                if count > 4:
                    raise UnsupportedElement(f"Faces with {count} vertices are not supported", line=line_no)
                for k in range(1, count - 1):
                    triangles.append((indices[0], indices[k], indices[k + 1]))
            # Other elements are skipped line by line

    if not vertices:
        raise ParseError("PLY contains no vertices", line=len(lines))
    if not triangles:
        raise ParseError("PLY contains no faces", line=len(lines))
    if np.max(triangles) >= len(vertices):
        raise ParseError("Face index out of range", line=len(lines))

    mesh = TriangleMesh(
        vertices=np.array(vertices),
        triangles=np.array(triangles),
        colors=np.array(colors) if has_color else None,
        name=os.path.splitext(os.path.basename(path))[0],
    )
    logger.info(f"Loaded {path}: {len(mesh.vertices)} vertices, {len(mesh.triangles)} triangles, "
                f"diameter {mesh.diameter:.4f} m")
    return mesh


@handle_exceptions(PoseMatchError, "Error writing PLY mesh")
def save_ply(mesh: TriangleMesh, path: str) -> None:
    """Write an ASCII PLY with per-vertex colors."""
    lines = [
        'ply', 'format ascii 1.0',
        f'element vertex {len(mesh.vertices)}',
        'property float x', 'property float y', 'property float z',
        'property uchar red', 'property uchar green', 'property uchar blue',
        f'element face {len(mesh.triangles)}',
        'property list uchar int vertex_indices',
        'end_header',
    ]
    for v, c in zip(mesh.vertices, mesh.colors):
        lines.append(f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g} {int(c[0])} {int(c[1])} {int(c[2])}")
    for t in mesh.triangles:
        lines.append(f"3 {int(t[0])} {int(t[1])} {int(t[2])}")
    with open(path, 'w') as f:
        f.write('\n'.join(lines) + '\n')


# Built-in meshes

def _orient_outward(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Flip triangles of a convex, origin-centered solid so their normals point outward."""
    tri = triangles.copy()
    a, b, c = vertices[tri[:, 0]], vertices[tri[:, 1]], vertices[tri[:, 2]]
    normals = np.cross(b - a, c - a)
    inward = np.einsum('ij,ij->i', normals, (a + b + c) / 3.0) < 0
    tri[inward] = tri[inward][:, [0, 2, 1]]
    return tri


def make_cube(edge: float = 1.0, color=RENDERING['default_color']) -> TriangleMesh:
    """Origin-centered cube, 8 vertices and 12 outward triangles."""
    h = edge / 2.0
    vertices = np.array([[x, y, z] for x in (-h, h) for y in (-h, h) for z in (-h, h)])
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    triangles = np.array([t for q in quads for t in ((q[0], q[1], q[2]), (q[0], q[2], q[3]))])
    colors = np.tile(np.array(color, dtype=np.uint8), (8, 1))
    return TriangleMesh(vertices, _orient_outward(vertices, triangles), colors, name='cube')


def make_plate(edge: float = 1.0, thickness: float = 1e-3) -> TriangleMesh:
    """Thin square slab in the xy plane; projects to an edge x edge square."""
    mesh = make_cube(1.0)
    vertices = mesh.vertices * np.array([edge, edge, thickness])
    return TriangleMesh(vertices, _orient_outward(vertices, mesh.triangles), mesh.colors, name='plate')


def make_icosphere(radius: float = 1.0, subdivisions: int = 2) -> TriangleMesh:
    """Sphere approximation by repeated subdivision of an icosahedron."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
             (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
             (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(subdivisions):
        midpoints = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoints:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                midpoints[key] = len(verts) - 1
            return midpoints[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = refined
    vertices = np.array(verts) * radius
    triangles = _orient_outward(vertices, np.array(faces))
    return TriangleMesh(vertices, triangles, name='icosphere')


# Rasterização

def _is_top_left(a: np.ndarray, b: np.ndarray) -> bool:
    """Edge a->b of a triangle with positive screen area (y down) is a top or left edge."""
    dx, dy = b[0] - a[0], b[1] - a[1]
    return (dy == 0 and dx > 0) or dy < 0


def _edge(a: np.ndarray, b: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    return (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])


def render(mesh: TriangleMesh, pose: Pose, cam: CameraIntrinsics) -> RenderOutput:
    """Render the mesh at the given pose into RGB, mask and depth buffers."""
    cam_points = pose.transform(mesh.vertices)
    if np.all(cam_points[:, 2] <= 0):
        raise ObjectBehindCamera(f"All vertices of '{mesh.name}' are behind the camera at z={pose.z:.4f}")

    width, height = cam.width, cam.height
    depth = np.full((height, width), np.inf)
    rgb = np.zeros((height, width, 3), dtype=np.uint8)

    light = np.asarray(RENDERING['light_direction'], dtype=float)
    light = light / np.linalg.norm(light)
    near = RENDERING['near_plane']

    z = cam_points[:, 2]
    safe_z = np.where(z > near, z, 1.0)
    screen = np.stack([cam.fx * cam_points[:, 0] / safe_z + cam.px,
                       cam.fy * cam_points[:, 1] / safe_z + cam.py], axis=1)
    vertex_colors = mesh.colors.astype(float)

    drawn = 0
    for tri in mesh.triangles:
        p0, p1, p2 = cam_points[tri]
        # Triangles crossing the near plane are dropped
        if min(p0[2], p1[2], p2[2]) <= near:
            continue
        normal = np.cross(p1 - p0, p2 - p0)
        n_len = np.linalg.norm(normal)
        if n_len == 0.0 or np.dot(normal, p0) >= 0.0:
            continue
        normal = normal / n_len

        s0, s1, s2 = screen[tri]
        area = _edge(s0, s1, s2[0], s2[1])
        if area == 0.0:
            continue
        if area < 0:
            s1, s2 = s2, s1
            z1, z2 = p2[2], p1[2]
            area = -area
        else:
            z1, z2 = p1[2], p2[2]
        z0 = p0[2]

        x_min = max(int(np.floor(min(s0[0], s1[0], s2[0]) - 0.5)), 0)
        x_max = min(int(np.ceil(max(s0[0], s1[0], s2[0]) - 0.5)), width - 1)
        y_min = max(int(np.floor(min(s0[1], s1[1], s2[1]) - 0.5)), 0)
        y_max = min(int(np.ceil(max(s0[1], s1[1], s2[1]) - 0.5)), height - 1)
        if x_min > x_max or y_min > y_max:
            continue

        xs = np.arange(x_min, x_max + 1) + 0.5
        ys = np.arange(y_min, y_max + 1) + 0.5
        gx, gy = np.meshgrid(xs, ys)

        # Barycentric weight of each vertex is the edge function opposite to it
        w0 = _edge(s1, s2, gx, gy)
        w1 = _edge(s2, s0, gx, gy)
        w2 = _edge(s0, s1, gx, gy)
        inside = np.ones_like(gx, dtype=bool)
        for w, (a, b) in ((w0, (s1, s2)), (w1, (s2, s0)), (w2, (s0, s1))):
            if _is_top_left(a, b):
                inside &= w >= 0
            else:
                inside &= w > 0
        if not inside.any():
            continue

        inv_z = (w0 / z0 + w1 / z1 + w2 / z2) / area
        frag_depth = np.where(inside, 1.0 / np.where(inside, inv_z, 1.0), np.inf)

        window = depth[y_min:y_max + 1, x_min:x_max + 1]
        closer = frag_depth < window
        if not closer.any():
            continue
        window[closer] = frag_depth[closer]

        shade = RENDERING['ambient'] + RENDERING['diffuse'] * max(0.0, float(np.dot(normal, light)))
        color = np.clip(np.rint(vertex_colors[tri].mean(axis=0) * shade), 0, 255).astype(np.uint8)
        rgb[y_min:y_max + 1, x_min:x_max + 1][closer] = color
        drawn += 1

    mask = np.isfinite(depth)
    logger.debug(f"Rendered '{mesh.name}' at z={pose.z:.4f}: {drawn} triangles, {int(mask.sum())} pixels")
    return RenderOutput(rgb=Image(rgb), mask=Mask(mask), depth=depth)


# Vistas canônicas

@dataclass(frozen=True)
class CanonicalViewSet:
    """
    Six rotations presenting the faces of a cube, index 0 frontal.

    Order: frontal, yaw +90, yaw -90, yaw 180 (back), pitch +90, pitch -90.
    Yaw turns about the camera y axis, pitch about the camera x axis.
    """
    rotations: Tuple[UnitQuaternion, ...]

    NAMES = ('front', 'yaw+90', 'yaw-90', 'back', 'pitch+90', 'pitch-90')

    def __post_init__(self):
        if len(self.rotations) != 6:
            raise ValidationError(f"A canonical view set has 6 rotations, got {len(self.rotations)}")

    def __len__(self) -> int:
        return len(self.rotations)

    def __getitem__(self, index: int) -> UnitQuaternion:
        return self.rotations[index]

    def __iter__(self):
        return iter(self.rotations)

    def facing_directions(self) -> np.ndarray:
        """Object-frame unit direction each view turns toward the camera (one face normal per view)."""
        toward_camera = np.array([0.0, 0.0, -1.0])
        return np.array([q.as_matrix().T @ toward_camera for q in self.rotations])

    def face_angles_deg(self) -> np.ndarray:
        """6x6 angles between the presented faces."""
        d = self.facing_directions()
        cross = np.linalg.norm(np.cross(d[:, None, :], d[None, :, :]), axis=-1)
        return np.degrees(np.arctan2(cross, d @ d.T))

    def rotation_angles_deg(self) -> np.ndarray:
        """6x6 angle distances between the view rotations themselves."""
        return np.array([[quat_angle_deg(a, b) for b in self.rotations] for a in self.rotations])


def canonical_views() -> CanonicalViewSet:
    """Identity, yaw +-90, yaw 180, pitch +-90."""
    yaw_axis = (0.0, 1.0, 0.0)
    pitch_axis = (1.0, 0.0, 0.0)
    return CanonicalViewSet(rotations=(
        UnitQuaternion.identity(),
        UnitQuaternion.from_axis_angle(yaw_axis, 90.0),
        UnitQuaternion.from_axis_angle(yaw_axis, -90.0),
        UnitQuaternion.from_axis_angle(yaw_axis, 180.0),
        UnitQuaternion.from_axis_angle(pitch_axis, 90.0),
        UnitQuaternion.from_axis_angle(pitch_axis, -90.0),
    ))


def render_views(mesh: TriangleMesh, translation, cam: CameraIntrinsics) -> List[RenderOutput]:
    """One render per canonical view, all at the same translation."""
    translation = tuple(float(v) for v in translation)
    if not translation[2] > 0:
        raise ValidationError(f"View translation needs positive depth, got {translation}")
    return [render(mesh, Pose(rotation=q, translation=translation), cam) for q in canonical_views()]


__all__ = [
    'load_ply', 'save_ply', 'make_cube', 'make_plate', 'make_icosphere',
    'render', 'CanonicalViewSet', 'canonical_views', 'render_views',
]
