"""Numba ``@njit`` kernels: the default backend for the hot loops.

Loop-based twins of ``_kernels_numpy`` with identical semantics and calling
conventions; the geometry notes there apply here too.  Kept allocation-free
inside the per-joint loops so an equilibrium solve costs microseconds.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

SAMPLES_PER_LINK = 3

OBJ_NONE = 0
OBJ_CIRCLE = 1
OBJ_POLYGON = 2

BODY_OBJECT = -1

_EPS = 1e-12


@njit(cache=True, nogil=True)
def chain_state(q, link_lengths, base_rotation):
    n = q.shape[0]
    pts = np.empty((n + 1, 2))
    phi = np.empty(n)
    acc = base_rotation
    x = 0.0
    y = 0.0
    pts[0, 0] = 0.0
    pts[0, 1] = 0.0
    for i in range(n):
        acc += q[i]
        phi[i] = acc
        x += link_lengths[i] * math.cos(acc)
        y += link_lengths[i] * math.sin(acc)
        pts[i + 1, 0] = x
        pts[i + 1, 1] = y
    return pts, phi


@njit(cache=True, nogil=True)
def _sd_circle_pt(px, py, cx, cy, radius):
    dx = px - cx
    dy = py - cy
    dist = math.sqrt(dx * dx + dy * dy)
    if dist < _EPS:
        return -radius, 1.0, 0.0
    return dist - radius, dx / dist, dy / dist


@njit(cache=True, nogil=True)
def _sd_polygon_pt(px, py, cx, cy, radius, rotation, nsides):
    best_d2 = 1e300
    bcx = 0.0
    bcy = 0.0
    bex = 0.0
    bey = 0.0
    inside = True
    for k in range(nsides):
        a0 = rotation + 2.0 * np.pi * k / nsides
        a1 = rotation + 2.0 * np.pi * (k + 1) / nsides
        ax = cx + radius * math.cos(a0)
        ay = cy + radius * math.sin(a0)
        bx = cx + radius * math.cos(a1)
        by = cy + radius * math.sin(a1)
        ex = bx - ax
        ey = by - ay
        relx = px - ax
        rely = py - ay
        if ex * rely - ey * relx < 0.0:
            inside = False
        ee = ex * ex + ey * ey
        if ee < _EPS:
            ee = _EPS
        t = (relx * ex + rely * ey) / ee
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        cpx = ax + t * ex
        cpy = ay + t * ey
        dx = px - cpx
        dy = py - cpy
        d2 = dx * dx + dy * dy
        if d2 < best_d2:
            best_d2 = d2
            bcx = cpx
            bcy = cpy
            bex = ex
            bey = ey
    d = math.sqrt(best_d2)
    if d < _EPS:
        nn = math.sqrt(bex * bex + bey * bey)
        if nn < _EPS:
            nn = _EPS
        return 0.0, bey / nn, -bex / nn
    nx = (px - bcx) / d
    ny = (py - bcy) / d
    if inside:
        return -d, -nx, -ny
    return d, nx, ny


@njit(cache=True, nogil=True)
def _sd_capsule_pt(px, py, x1, y1, x2, y2, radius):
    ex = x2 - x1
    ey = y2 - y1
    ee = ex * ex + ey * ey
    if ee < _EPS:
        ee = _EPS
    t = ((px - x1) * ex + (py - y1) * ey) / ee
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    cpx = x1 + t * ex
    cpy = y1 + t * ey
    dx = px - cpx
    dy = py - cpy
    dist = math.sqrt(dx * dx + dy * dy)
    if dist < _EPS:
        nn = math.sqrt(ee)
        return -radius, ey / nn, -ex / nn
    return dist - radius, dx / dist, dy / dist


@njit(cache=True, nogil=True)
def wire_lengths(q, link_lengths, base_rotation, anchor_len,
                 wire_side, wire_term, wire_offsets):
    pts, phi = chain_state(q, link_lengths, base_rotation)
    nw = wire_side.shape[0]
    out = np.empty(nw)
    cb = math.cos(base_rotation)
    sb = math.sin(base_rotation)
    for w in range(nw):
        side = wire_side[w]
        c0 = wire_offsets[w, 0]
        prevx = -anchor_len * cb - side * c0 * sb
        prevy = -anchor_len * sb + side * c0 * cb
        total = 0.0
        for j in range(wire_term[w] + 1):
            cj = wire_offsets[w, j]
            ux = math.cos(phi[j])
            uy = math.sin(phi[j])
            sx = pts[j, 0] - side * cj * uy
            sy = pts[j, 1] + side * cj * ux
            dx = sx - prevx
            dy = sy - prevy
            total += math.sqrt(dx * dx + dy * dy)
            prevx = sx
            prevy = sy
        out[w] = total
    return out


@njit(cache=True, nogil=True)
def wire_grads(q, link_lengths, base_rotation, anchor_len,
               wire_side, wire_term, wire_offsets):
    n = q.shape[0]
    pts, phi = chain_state(q, link_lengths, base_rotation)
    nw = wire_side.shape[0]
    lengths = np.empty(nw)
    grads = np.zeros((nw, n))
    cb = math.cos(base_rotation)
    sb = math.sin(base_rotation)
    for w in range(nw):
        side = wire_side[w]
        c0 = wire_offsets[w, 0]
        prevx = -anchor_len * cb - side * c0 * sb
        prevy = -anchor_len * sb + side * c0 * cb
        total = 0.0
        for j in range(wire_term[w] + 1):
            cj = wire_offsets[w, j]
            ux = math.cos(phi[j])
            uy = math.sin(phi[j])
            sx = pts[j, 0] - side * cj * uy
            sy = pts[j, 1] + side * cj * ux
            dx = sx - prevx
            dy = sy - prevy
            ln = math.sqrt(dx * dx + dy * dy)
            total += ln
            if ln < _EPS:
                ln = _EPS
            grads[w, j] = -side * cj * (dx * ux + dy * uy) / ln
            prevx = sx
            prevy = sy
        lengths[w] = total
    return lengths, grads


@njit(cache=True, nogil=True)
def energy_grad(q, obj_xy,
                link_lengths, joint_k, base_rotation, anchor_len,
                wire_side, wire_term, wire_offsets,
                in_mode, in_ref, in_tension, k_cable,
                obj_kind, obj_params, obj_free,
                obstacles, k_contact, tail_radius):
    n = q.shape[0]
    pts, phi = chain_state(q, link_lengths, base_rotation)

    energy = 0.0
    g = np.empty(n)
    g_obj = np.zeros(2)
    for i in range(n):
        energy += 0.5 * joint_k[i] * q[i] * q[i]
        g[i] = joint_k[i] * q[i]

    cb = math.cos(base_rotation)
    sb = math.sin(base_rotation)
    dL = np.empty(n)
    for w in range(wire_side.shape[0]):
        mode = in_mode[w]
        if mode == 0:
            continue
        side = wire_side[w]
        term = wire_term[w]
        c0 = wire_offsets[w, 0]
        prevx = -anchor_len * cb - side * c0 * sb
        prevy = -anchor_len * sb + side * c0 * cb
        total = 0.0
        for j in range(term + 1):
            cj = wire_offsets[w, j]
            ux = math.cos(phi[j])
            uy = math.sin(phi[j])
            sx = pts[j, 0] - side * cj * uy
            sy = pts[j, 1] + side * cj * ux
            dx = sx - prevx
            dy = sy - prevy
            ln = math.sqrt(dx * dx + dy * dy)
            total += ln
            if ln < _EPS:
                ln = _EPS
            dL[j] = -side * cj * (dx * ux + dy * uy) / ln
            prevx = sx
            prevy = sy
        if mode == 1:
            stretch = total - in_ref[w]
            energy += 0.5 * k_cable[w] * stretch * stretch
            f = k_cable[w] * stretch
        else:
            energy += in_tension[w] * total
            f = in_tension[w]
        for j in range(term + 1):
            g[j] += f * dL[j]

    n_obst = obstacles.shape[0]
    if obj_kind != OBJ_NONE or n_obst > 0:
        acc_a = np.zeros(n)
        acc_bx = np.zeros(n)
        acc_by = np.zeros(n)
        radius = obj_params[0]
        rotation = obj_params[1]
        nsides = int(obj_params[2])
        for i in range(n):
            ux = math.cos(phi[i])
            uy = math.sin(phi[i])
            for si in range(SAMPLES_PER_LINK):
                lam = 0.5 * si
                sx = pts[i, 0] + lam * link_lengths[i] * ux
                sy = pts[i, 1] + lam * link_lengths[i] * uy
                if obj_kind == OBJ_CIRCLE:
                    d, nx, ny = _sd_circle_pt(sx, sy, obj_xy[0], obj_xy[1], radius)
                elif obj_kind == OBJ_POLYGON:
                    d, nx, ny = _sd_polygon_pt(sx, sy, obj_xy[0], obj_xy[1],
                                               radius, rotation, nsides)
                else:
                    d = 1.0
                    nx = 0.0
                    ny = 0.0
                d -= tail_radius
                if obj_kind != OBJ_NONE and d < 0.0:
                    energy += 0.5 * k_contact * d * d
                    wx = k_contact * d * nx
                    wy = k_contact * d * ny
                    acc_a[i] += wy * sx - wx * sy
                    acc_bx[i] += wx
                    acc_by[i] += wy
                    g_obj[0] -= wx
                    g_obj[1] -= wy
                for ob in range(n_obst):
                    d, nx, ny = _sd_capsule_pt(sx, sy, obstacles[ob, 0],
                                               obstacles[ob, 1], obstacles[ob, 2],
                                               obstacles[ob, 3], obstacles[ob, 4])
                    d -= tail_radius
                    if d < 0.0:
                        energy += 0.5 * k_contact * d * d
                        wx = k_contact * d * nx
                        wy = k_contact * d * ny
                        acc_a[i] += wy * sx - wx * sy
                        acc_bx[i] += wx
                        acc_by[i] += wy
        sa = 0.0
        sbx = 0.0
        sby = 0.0
        for j in range(n - 1, -1, -1):
            sa += acc_a[j]
            sbx += acc_bx[j]
            sby += acc_by[j]
            g[j] += sa + pts[j, 1] * sbx - pts[j, 0] * sby

        if obj_free == 1 and obj_kind == OBJ_CIRCLE:
            for ob in range(n_obst):
                d, nx, ny = _sd_capsule_pt(obj_xy[0], obj_xy[1], obstacles[ob, 0],
                                           obstacles[ob, 1], obstacles[ob, 2],
                                           obstacles[ob, 3],
                                           obstacles[ob, 4] + radius)
                if d < 0.0:
                    energy += 0.5 * k_contact * d * d
                    g_obj[0] += k_contact * d * nx
                    g_obj[1] += k_contact * d * ny

    return energy, g, g_obj


@njit(cache=True, nogil=True)
def contact_points(q, obj_xy, link_lengths, base_rotation,
                   obj_kind, obj_params, obstacles, tail_radius):
    n = q.shape[0]
    pts, phi = chain_state(q, link_lengths, base_rotation)
    n_obst = obstacles.shape[0]
    cap = n * SAMPLES_PER_LINK * (1 + n_obst)
    links = np.empty(cap, dtype=np.int64)
    px = np.empty(cap)
    py = np.empty(cap)
    nx_out = np.empty(cap)
    ny_out = np.empty(cap)
    pen = np.empty(cap)
    body = np.empty(cap, dtype=np.int64)
    count = 0

    radius = obj_params[0]
    rotation = obj_params[1]
    nsides = int(obj_params[2])

    # object contacts first, then per obstacle, matching the numpy backend
    if obj_kind != OBJ_NONE:
        for i in range(n):
            ux = math.cos(phi[i])
            uy = math.sin(phi[i])
            for si in range(SAMPLES_PER_LINK):
                lam = 0.5 * si
                sx = pts[i, 0] + lam * link_lengths[i] * ux
                sy = pts[i, 1] + lam * link_lengths[i] * uy
                if obj_kind == OBJ_CIRCLE:
                    d, nx, ny = _sd_circle_pt(sx, sy, obj_xy[0], obj_xy[1], radius)
                else:
                    d, nx, ny = _sd_polygon_pt(sx, sy, obj_xy[0], obj_xy[1],
                                               radius, rotation, nsides)
                d -= tail_radius
                if d < 0.0:
                    links[count] = i
                    px[count] = sx
                    py[count] = sy
                    nx_out[count] = nx
                    ny_out[count] = ny
                    pen[count] = -d
                    body[count] = BODY_OBJECT
                    count += 1
    for ob in range(n_obst):
        for i in range(n):
            ux = math.cos(phi[i])
            uy = math.sin(phi[i])
            for si in range(SAMPLES_PER_LINK):
                lam = 0.5 * si
                sx = pts[i, 0] + lam * link_lengths[i] * ux
                sy = pts[i, 1] + lam * link_lengths[i] * uy
                d, nx, ny = _sd_capsule_pt(sx, sy, obstacles[ob, 0],
                                           obstacles[ob, 1], obstacles[ob, 2],
                                           obstacles[ob, 3], obstacles[ob, 4])
                d -= tail_radius
                if d < 0.0:
                    links[count] = i
                    px[count] = sx
                    py[count] = sy
                    nx_out[count] = nx
                    ny_out[count] = ny
                    pen[count] = -d
                    body[count] = ob
                    count += 1

    return (links[:count], px[:count], py[:count], nx_out[:count],
            ny_out[:count], pen[:count], body[:count])
