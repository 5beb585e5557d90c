"""Primal network simplex for the |Y| x S transportation problem.

Maximizes ``sum_{y,s} flow[y,s] * gain[s,y]`` with row masses ``rowmass`` and
unit column masses (callers scale by ``S``).  The basis is a spanning tree on
the ``|Y| + S`` nodes.  Because the tree has ``|Y| + S - 1`` arcs, at most
``|Y| - 1`` columns carry more than one basic arc ("connectors"); every other
column hangs as a leaf under one row.  Row potentials are therefore recomputed
in O(|Y|^2) per pivot by walking the small skeleton of rows and connectors, and
column potentials are read off any basic arc of the column on demand:

    z[s] = gain[s, r] - u[r]   for a basic arc (r, s).

Entering arcs are priced in cyclic blocks of columns (largest reduced gain in
the block).  After ``bland_after`` consecutive degenerate pivots the rule
switches to Bland's (first eligible arc by index ``s * |Y| + y`` and the
lowest-index blocking arc leaves) until a nondegenerate pivot occurs, which
rules out cycling.
"""

import numba as nb
import numpy as np

OPTIMAL = 0
PIVOT_LIMIT = 1


@nb.njit(cache=True)
def _row_potentials(gain, deg, adj, conn, nc, u):
    m = u.shape[0]
    seen = np.zeros(m, np.bool_)
    used = np.zeros(max(nc, 1), np.bool_)
    stack = np.empty(m, np.int64)
    u[0] = 0.0
    seen[0] = True
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        r = stack[top]
        for k in range(nc):
            if used[k]:
                continue
            c = conn[k]
            touch = False
            for j in range(deg[c]):
                if adj[c, j] == r:
                    touch = True
                    break
            if not touch:
                continue
            used[k] = True
            v = gain[c, r] - u[r]
            for j in range(deg[c]):
                r2 = adj[c, j]
                if not seen[r2]:
                    seen[r2] = True
                    u[r2] = gain[c, r2] - v
                    stack[top] = r2
                    top += 1


@nb.njit(cache=True)
def _slot(deg, adj, c, r):
    for j in range(deg[c]):
        if adj[c, j] == r:
            return j
    return -1


@nb.njit(cache=True)
def _sync_connector(deg, conn, cpos, nc, c):
    if deg[c] >= 2 and cpos[c] < 0:
        conn[nc] = c
        cpos[c] = nc
        nc += 1
    elif deg[c] < 2 and cpos[c] >= 0:
        k = cpos[c]
        last = conn[nc - 1]
        conn[k] = last
        cpos[last] = k
        cpos[c] = -1
        nc -= 1
    return nc


@nb.njit(cache=True)
def solve(gain, rowmass, order, max_pivots, gtol, ftol, block, bland_after):
    """Returns (status, deg, adj, flow, u, pivots, degenerate_pivots)."""
    S, m = gain.shape
    deg = np.zeros(S, np.int64)
    adj = np.full((S, m), -1, np.int64)
    flow = np.zeros((S, m))
    conn = np.empty(m, np.int64)
    cpos = np.full(S, -1, np.int64)
    nc = 0

    # northwest corner over the supplied column order
    ra = rowmass.copy()
    i = 0
    jj = 0
    rc = 1.0
    while True:
        s = order[jj]
        if i == m - 1:
            x = rc
        else:
            x = min(ra[i], rc)
            if x < 0.0:
                x = 0.0
        k = deg[s]
        adj[s, k] = i
        flow[s, k] = x
        deg[s] = k + 1
        ra[i] -= x
        rc -= x
        if i < m - 1 and ra[i] <= ftol:
            i += 1
        else:
            jj += 1
            rc = 1.0
            if jj == S:
                break
    # rows never reached (rounding in the masses) hang on the last column
    s = order[S - 1]
    while i < m - 1:
        i += 1
        k = deg[s]
        adj[s, k] = i
        flow[s, k] = 0.0
        deg[s] = k + 1
    for s in range(S):
        if deg[s] >= 2:
            conn[nc] = s
            cpos[s] = nc
            nc += 1

    u = np.zeros(m)
    _row_potentials(gain, deg, adj, conn, nc, u)

    prow = np.empty(m, np.int64)
    pconn = np.empty(m, np.int64)
    queue = np.empty(m, np.int64)
    path_r = np.empty(2 * m + 2, np.int64)
    path_c = np.empty(2 * m + 2, np.int64)

    pivots = 0
    degenerate = 0
    consec = 0
    bland = False
    ptr = 0
    status = OPTIMAL
    while True:
        by = -1
        bs = -1
        if bland:
            for s in range(S):
                r0 = adj[s, 0]
                v = gain[s, r0] - u[r0]
                for y in range(m):
                    if gain[s, y] - u[y] - v > gtol:
                        by = y
                        bs = s
                        break
                if by >= 0:
                    break
        else:
            best = gtol
            scanned = 0
            inblock = 0
            s = ptr
            while scanned < S:
                r0 = adj[s, 0]
                v = gain[s, r0] - u[r0]
                for y in range(m):
                    d = gain[s, y] - u[y] - v
                    if d > best:
                        best = d
                        by = y
                        bs = s
                s += 1
                if s == S:
                    s = 0
                scanned += 1
                inblock += 1
                if inblock >= block:
                    if by >= 0:
                        break
                    inblock = 0
            ptr = s
        if by < 0:
            status = OPTIMAL
            break
        if pivots >= max_pivots:
            status = PIVOT_LIMIT
            break
        pivots += 1

        # tree path from column bs to row by through rows and connectors
        for r in range(m):
            prow[r] = -1
        for k in range(nc):
            pconn[k] = -1
        qh = 0
        qt = 0
        for j in range(deg[bs]):
            r = adj[bs, j]
            prow[r] = bs
            queue[qt] = r
            qt += 1
        while qh < qt:
            r = queue[qh]
            qh += 1
            if r == by:
                break
            for k in range(nc):
                c = conn[k]
                if c == bs or pconn[k] >= 0:
                    continue
                if _slot(deg, adj, c, r) < 0:
                    continue
                pconn[k] = r
                for j in range(deg[c]):
                    r2 = adj[c, j]
                    if prow[r2] < 0:
                        prow[r2] = c
                        queue[qt] = r2
                        qt += 1

        # walk back from by: arcs alternate (-, +, -, ..., -)
        n = 0
        r = by
        c = prow[r]
        while True:
            path_r[n] = r
            path_c[n] = c
            n += 1
            if c == bs:
                break
            r = pconn[cpos[c]]
            path_r[n] = r
            path_c[n] = c
            n += 1
            c = prow[r]

        theta = np.inf
        for t in range(0, n, 2):
            f = flow[path_c[t], _slot(deg, adj, path_c[t], path_r[t])]
            if f < theta:
                theta = f
        if theta < 0.0:
            theta = 0.0
        lr = -1
        lc = -1
        lidx = -1
        for t in range(0, n, 2):
            f = flow[path_c[t], _slot(deg, adj, path_c[t], path_r[t])]
            if f <= theta + ftol:
                idx = path_c[t] * m + path_r[t]
                if lidx < 0 or idx < lidx:
                    lidx = idx
                    lr = path_r[t]
                    lc = path_c[t]

        for t in range(n):
            j = _slot(deg, adj, path_c[t], path_r[t])
            if t % 2 == 0:
                f = flow[path_c[t], j] - theta
                flow[path_c[t], j] = f if f > 0.0 else 0.0
            else:
                flow[path_c[t], j] += theta

        k = deg[bs]
        adj[bs, k] = by
        flow[bs, k] = theta
        deg[bs] = k + 1
        j = _slot(deg, adj, lc, lr)
        last = deg[lc] - 1
        adj[lc, j] = adj[lc, last]
        flow[lc, j] = flow[lc, last]
        adj[lc, last] = -1
        flow[lc, last] = 0.0
        deg[lc] = last
        nc = _sync_connector(deg, conn, cpos, nc, bs)
        nc = _sync_connector(deg, conn, cpos, nc, lc)
        _row_potentials(gain, deg, adj, conn, nc, u)

        if theta <= ftol:
            degenerate += 1
            consec += 1
            if consec >= bland_after:
                bland = True
        else:
            consec = 0
            bland = False

    return status, deg, adj, flow, u, pivots, degenerate


def initial_order(gain, rowmass, sweeps=8):
    """Column order for the northwest-corner start.

    Runs a few Gauss-Seidel sweeps of exact coordinate minimization of the dual
    (each row price set to the quantile that balances its mass), then groups
    columns by their preferred row and sorts each group by decreasing margin.
    """
    S, m = gain.shape
    lam = np.zeros(m)
    if m > 1 and m <= 12:
        for _ in range(sweeps):
            for y in range(m):
                others = np.delete(gain - lam, y, axis=1).max(axis=1)
                diff = gain[:, y] - others
                take = int(round(rowmass[y]))
                if take <= 0:
                    lam[y] = diff.max() + 1.0
                elif take >= S:
                    lam[y] = diff.min() - 1.0
                else:
                    part = np.partition(diff, (S - take - 1, S - take))
                    lam[y] = 0.5 * (part[S - take - 1] + part[S - take])
    net = gain - lam
    pref = np.argmax(net, axis=1)
    if m > 1:
        top2 = np.partition(net, m - 2, axis=1)
        margin = net[np.arange(S), pref] - top2[:, m - 2]
    else:
        margin = np.zeros(S)
    return np.lexsort((-margin, pref)).astype(np.int64)
