"""Pure-numpy kernels: vectorized fallback for the numba implementations.

All functions operate on flat float64 arrays so both backends share one
calling convention; see ``statics.Problem`` for the packing.

Geometry notes (shared with the numba backend):

* Joint ``i`` sits at ``pts[i]``; link ``i`` spans ``pts[i] -> pts[i+1]``
  with orientation ``phi[i] = base_rotation + q[0] + ... + q[i]``.
* Wire routing point of vertebra ``i`` is the joint position offset by the
  process offset along the link normal, toward the wire's side.  An anchor
  point fixed behind the base closes the first segment, so every segment of
  the wire polyline crosses exactly one joint and
  ``dL/dq_j = -side * c_j * (t_j . u_j)`` (segment tangent dotted with the
  link direction).
* Contact penalties sample each link at both endpoints and the midpoint;
  a point load ``w`` applied at ``x`` on link ``i`` contributes
  ``w . rot90(x - p_j)`` to ``dE/dq_j`` for every ``j <= i``, accumulated
  via suffix sums.
"""

from __future__ import annotations

import numpy as np

SAMPLES_PER_LINK = 3
_LAMBDAS = np.array([0.0, 0.5, 1.0])
_EPS = 1e-12

OBJ_NONE = 0
OBJ_CIRCLE = 1
OBJ_POLYGON = 2

BODY_OBJECT = -1


def chain_state(q, link_lengths, base_rotation):
    n = q.shape[0]
    phi = base_rotation + np.cumsum(q)
    seg = link_lengths[:, None] * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    pts = np.zeros((n + 1, 2))
    np.cumsum(seg, axis=0, out=pts[1:])
    return pts, phi


def _anchor_point(base_rotation, anchor_len, side, c0):
    cb, sb = np.cos(base_rotation), np.sin(base_rotation)
    return np.array([
        -anchor_len * cb - side * c0 * sb,
        -anchor_len * sb + side * c0 * cb,
    ])


def _wire_polyline(pts, phi, base_rotation, anchor_len, side, term, offsets):
    m = term + 1  # routed vertebrae 0..term
    c = offsets[:m]
    nrm = np.stack([-np.sin(phi[:m]), np.cos(phi[:m])], axis=1)
    r = np.empty((m + 1, 2))
    r[0] = _anchor_point(base_rotation, anchor_len, side, c[0])
    r[1:] = pts[:m] + side * c[:, None] * nrm
    return r


def wire_lengths(q, link_lengths, base_rotation, anchor_len,
                 wire_side, wire_term, wire_offsets):
    pts, phi = chain_state(q, link_lengths, base_rotation)
    out = np.empty(wire_side.shape[0])
    for w in range(wire_side.shape[0]):
        r = _wire_polyline(pts, phi, base_rotation, anchor_len,
                           wire_side[w], int(wire_term[w]), wire_offsets[w])
        seg = np.diff(r, axis=0)
        out[w] = np.sum(np.hypot(seg[:, 0], seg[:, 1]))
    return out


def wire_grads(q, link_lengths, base_rotation, anchor_len,
               wire_side, wire_term, wire_offsets):
    """Wire lengths and their configuration gradients dL/dq (W, n)."""
    n = q.shape[0]
    pts, phi = chain_state(q, link_lengths, base_rotation)
    u = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    nw = wire_side.shape[0]
    lengths = np.empty(nw)
    grads = np.zeros((nw, n))
    for w in range(nw):
        term = int(wire_term[w])
        side = wire_side[w]
        r = _wire_polyline(pts, phi, base_rotation, anchor_len,
                           side, term, wire_offsets[w])
        seg = np.diff(r, axis=0)
        lens = np.hypot(seg[:, 0], seg[:, 1])
        lengths[w] = np.sum(lens)
        that = seg / np.maximum(lens, _EPS)[:, None]
        m = term + 1
        grads[w, :m] = -side * wire_offsets[w, :m] * np.einsum(
            "ij,ij->i", that, u[:m])
    return lengths, grads


def _sd_circle(X, cx, cy, radius):
    rel = X - np.array([cx, cy])
    dist = np.hypot(rel[:, 0], rel[:, 1])
    safe = np.maximum(dist, _EPS)
    normal = rel / safe[:, None]
    normal[dist < _EPS] = (1.0, 0.0)
    return dist - radius, normal


def _polygon_vertices(cx, cy, radius, rotation, nsides):
    k = np.arange(nsides)
    ang = rotation + 2.0 * np.pi * k / nsides
    return np.stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang)], axis=1)


def _sd_polygon(X, cx, cy, radius, rotation, nsides):
    v = _polygon_vertices(cx, cy, radius, rotation, nsides)
    a = v
    b = np.roll(v, -1, axis=0)
    e = b - a  # (m, 2)
    ee = np.maximum(np.sum(e * e, axis=1), _EPS)
    rel = X[:, None, :] - a[None, :, :]  # (P, m, 2)
    t = np.clip(np.einsum("pmk,mk->pm", rel, e) / ee, 0.0, 1.0)
    cp = a[None, :, :] + t[:, :, None] * e[None, :, :]
    diff = X[:, None, :] - cp
    d2 = np.sum(diff * diff, axis=2)
    best = np.argmin(d2, axis=1)
    rows = np.arange(X.shape[0])
    dmin = np.sqrt(d2[rows, best])
    dvec = diff[rows, best]
    # vertices are CCW, so the interior is left of every edge
    cross = e[None, :, 0] * rel[:, :, 1] - e[None, :, 1] * rel[:, :, 0]
    inside = np.all(cross >= 0.0, axis=1)
    sd = np.where(inside, -dmin, dmin)
    safe = np.maximum(dmin, _EPS)
    normal = dvec / safe[:, None]
    normal[inside] = -normal[inside]
    degenerate = dmin < _EPS
    if np.any(degenerate):
        eb = e[best[degenerate]]
        en = np.stack([eb[:, 1], -eb[:, 0]], axis=1)
        normal[degenerate] = en / np.maximum(
            np.hypot(en[:, 0], en[:, 1]), _EPS)[:, None]
    return sd, normal


def _sd_capsule(X, x1, y1, x2, y2, radius):
    a = np.array([x1, y1])
    e = np.array([x2 - x1, y2 - y1])
    ee = max(e @ e, _EPS)
    rel = X - a
    t = np.clip((rel @ e) / ee, 0.0, 1.0)
    cp = a + t[:, None] * e
    diff = X - cp
    dist = np.hypot(diff[:, 0], diff[:, 1])
    safe = np.maximum(dist, _EPS)
    normal = diff / safe[:, None]
    deg = dist < _EPS
    if np.any(deg):
        en = np.array([e[1], -e[0]])
        normal[deg] = en / max(np.hypot(en[0], en[1]), _EPS)
    return dist - radius, normal


def _object_sd(X, obj_kind, obj_params, obj_xy):
    if obj_kind == OBJ_CIRCLE:
        return _sd_circle(X, obj_xy[0], obj_xy[1], obj_params[0])
    return _sd_polygon(X, obj_xy[0], obj_xy[1], obj_params[0],
                       obj_params[1], int(obj_params[2]))


def _link_samples(pts, phi, link_lengths):
    n = link_lengths.shape[0]
    u = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    step = link_lengths[:, None] * u  # (n, 2)
    X = pts[:n, None, :] + _LAMBDAS[None, :, None] * step[:, None, :]
    return X.reshape(n * SAMPLES_PER_LINK, 2), np.repeat(np.arange(n), SAMPLES_PER_LINK)


def _chain_grad_from_point_loads(g, pts, link_idx, X, loads, n):
    # loads (C,2): dE/dx at sample points; suffix sums turn the per-joint
    # rot90 moments into an O(n) pass
    A = np.zeros(n)
    Bx = np.zeros(n)
    By = np.zeros(n)
    np.add.at(A, link_idx, loads[:, 1] * X[:, 0] - loads[:, 0] * X[:, 1])
    np.add.at(Bx, link_idx, loads[:, 0])
    np.add.at(By, link_idx, loads[:, 1])
    sa = np.cumsum(A[::-1])[::-1]
    sbx = np.cumsum(Bx[::-1])[::-1]
    sby = np.cumsum(By[::-1])[::-1]
    g += sa + pts[:n, 1] * sbx - pts[:n, 0] * sby


def energy_grad(q, obj_xy,
                link_lengths, joint_k, base_rotation, anchor_len,
                wire_side, wire_term, wire_offsets,
                in_mode, in_ref, in_tension, k_cable,
                obj_kind, obj_params, obj_free,
                obstacles, k_contact, tail_radius):
    n = q.shape[0]
    pts, phi = chain_state(q, link_lengths, base_rotation)
    u = np.stack([np.cos(phi), np.sin(phi)], axis=1)

    energy = 0.5 * float(np.dot(joint_k * q, q))
    g = joint_k * q
    g_obj = np.zeros(2)

    for w in range(wire_side.shape[0]):
        mode = in_mode[w]
        if mode == 0:
            continue
        term = int(wire_term[w])
        side = wire_side[w]
        r = _wire_polyline(pts, phi, base_rotation, anchor_len,
                           side, term, wire_offsets[w])
        seg = np.diff(r, axis=0)
        lens = np.hypot(seg[:, 0], seg[:, 1])
        total = float(np.sum(lens))
        that = seg / np.maximum(lens, _EPS)[:, None]
        m = term + 1
        dL = -side * wire_offsets[w, :m] * np.einsum("ij,ij->i", that, u[:m])
        if mode == 1:  # displacement: stiff elastic coupling, bilateral
            stretch = total - in_ref[w]
            energy += 0.5 * k_cable[w] * stretch * stretch
            g[:m] += k_cable[w] * stretch * dL
        else:  # tension: pulling only
            energy += in_tension[w] * total
            g[:m] += in_tension[w] * dL

    if obj_kind != OBJ_NONE or obstacles.shape[0] > 0:
        X, link_idx = _link_samples(pts, phi, link_lengths)

        if obj_kind != OBJ_NONE:
            d, normal = _object_sd(X, obj_kind, obj_params, obj_xy)
            d = d - tail_radius
            mask = d < 0.0
            if np.any(mask):
                dm = d[mask]
                energy += 0.5 * k_contact * float(np.dot(dm, dm))
                loads = (k_contact * dm)[:, None] * normal[mask]
                _chain_grad_from_point_loads(g, pts, link_idx[mask], X[mask], loads, n)
                g_obj -= loads.sum(axis=0)

        for ob in range(obstacles.shape[0]):
            x1, y1, x2, y2, rad = obstacles[ob]
            d, normal = _sd_capsule(X, x1, y1, x2, y2, rad)
            d = d - tail_radius
            mask = d < 0.0
            if np.any(mask):
                dm = d[mask]
                energy += 0.5 * k_contact * float(np.dot(dm, dm))
                loads = (k_contact * dm)[:, None] * normal[mask]
                _chain_grad_from_point_loads(g, pts, link_idx[mask], X[mask], loads, n)

        if obj_free and obj_kind == OBJ_CIRCLE and obstacles.shape[0] > 0:
            c = obj_xy[None, :]
            for ob in range(obstacles.shape[0]):
                x1, y1, x2, y2, rad = obstacles[ob]
                d, normal = _sd_capsule(c, x1, y1, x2, y2, rad + obj_params[0])
                if d[0] < 0.0:
                    energy += 0.5 * k_contact * d[0] * d[0]
                    g_obj += k_contact * d[0] * normal[0]

    return energy, g, g_obj


def contact_points(q, obj_xy, link_lengths, base_rotation,
                   obj_kind, obj_params, obstacles, tail_radius):
    """Penetrating link samples: (link_idx, point, outward normal,
    penetration depth, body) with body -1 for the object, else obstacle row."""
    pts, phi = chain_state(q, link_lengths, base_rotation)
    X, link_idx = _link_samples(pts, phi, link_lengths)

    links, px, py, nx, ny, pen, body = [], [], [], [], [], [], []

    def _collect(d, normal, which):
        mask = d < 0.0
        if not np.any(mask):
            return
        links.append(link_idx[mask])
        px.append(X[mask, 0])
        py.append(X[mask, 1])
        nx.append(normal[mask, 0])
        ny.append(normal[mask, 1])
        pen.append(-d[mask])
        body.append(np.full(int(mask.sum()), which, dtype=np.int64))

    if obj_kind != OBJ_NONE:
        d, normal = _object_sd(X, obj_kind, obj_params, obj_xy)
        _collect(d - tail_radius, normal, BODY_OBJECT)
    for ob in range(obstacles.shape[0]):
        x1, y1, x2, y2, rad = obstacles[ob]
        d, normal = _sd_capsule(X, x1, y1, x2, y2, rad)
        _collect(d - tail_radius, normal, ob)

    if not links:
        z = np.zeros(0)
        return (np.zeros(0, dtype=np.int64), z, z, z, z, z,
                np.zeros(0, dtype=np.int64))
    return (np.concatenate(links), np.concatenate(px), np.concatenate(py),
            np.concatenate(nx), np.concatenate(ny), np.concatenate(pen),
            np.concatenate(body))
