"""Scalar reference implementation of the detection pipeline.

Used as an oracle by the tests: plain Python floats, lists and None for
missing cells, no numpy and no imports from the package under test.
Every step follows the published estimator definitions literally, one
value at a time, so the vectorized engine can be compared against it on
small instances.
"""

import math

TOLERANCE = 0.99
# sqrt of the chi-squared(1) quantile at 0.99
CUTOFF = 2.5758293035489004
BIWEIGHT_C = 3.0
SCALE_CAP = 2.5
CONSISTENCY = 0.845
# chi-squared(2) quantile at the tolerance, in closed form
ELLIPSE_RSQ = -2.0 * math.log1p(-TOLERANCE)


def median(xs):
    s = sorted(xs)
    n = len(s)
    if n == 0:
        raise ValueError("median of empty sequence")
    mid = n // 2
    if n % 2 == 1:
        return float(s[mid])
    return 0.5 * (s[mid - 1] + s[mid])


def rloc(xs):
    """One-step biweight location: median/MAD start, one reweighting."""
    if not xs:
        raise ValueError("rloc needs data")
    m1 = median(xs)
    s1 = median([abs(x - m1) for x in xs])
    if s1 == 0.0:
        return m1
    num = 0.0
    den = 0.0
    for x in xs:
        t = (x - m1) / (BIWEIGHT_C * s1)
        if abs(t) <= 1.0:
            w = (1.0 - t * t) ** 2
            num += w * x
            den += w
    return num / den


def rscale(xs):
    """Capped-loss scale of a centered sample; 0 when the majority is 0."""
    if not xs:
        raise ValueError("rscale needs data")
    s2 = median([abs(x) for x in xs])
    if s2 == 0.0:
        return 0.0
    acc = 0.0
    for x in xs:
        t = x / s2
        acc += min(t * t, SCALE_CAP * SCALE_CAP)
    return s2 * math.sqrt(acc / len(xs) / CONSISTENCY)


def rcorr(xcol, ycol):
    """Robust correlation of two standardized columns; None if undefined."""
    pairs = [
        (a, b) for a, b in zip(xcol, ycol) if a is not None and b is not None
    ]
    if len(pairs) < 2:
        return None
    splus = rscale([a + b for a, b in pairs])
    sminus = rscale([a - b for a, b in pairs])
    rho = (splus * splus - sminus * sminus) / 4.0
    rho = min(1.0, max(-1.0, rho))
    if abs(rho) == 1.0:
        rho = math.copysign(1.0 - 1e-9, rho)
    inside = [
        (a, b)
        for a, b in pairs
        if (a * a - 2.0 * rho * a * b + b * b) / (1.0 - rho * rho) < ELLIPSE_RSQ
    ]
    if len(inside) < 2:
        return None
    sxx = sum(a * a for a, _ in inside)
    syy = sum(b * b for _, b in inside)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = sum(a * b for a, b in inside) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def rslope(resp, pred):
    """No-intercept robust slope: median of ratios, trim, least squares."""
    pairs = [
        (y, x) for y, x in zip(resp, pred) if y is not None and x is not None
    ]
    ratios = [y / x for y, x in pairs if x != 0.0]
    if not ratios:
        raise ValueError("slope undefined")
    b0 = median(ratios)
    resid = [y - b0 * x for y, x in pairs]
    s = rscale(resid)
    kept = [(y, x) for (y, x), r in zip(pairs, resid) if abs(r) <= CUTOFF * s]
    den = sum(x * x for _, x in kept)
    if den == 0.0:
        return b0
    return sum(x * y for y, x in kept) / den


def cdf1(x):
    return math.erf(math.sqrt(x / 2.0))


def run_reference(rows, corrlim=0.5, include_self=True):
    """Full single-pass pipeline on a list-of-lists matrix.

    None marks a missing cell.  All columns are assumed analyzable.
    Returns a dict of intermediate and final quantities, all as nested
    lists with None where a value is undefined.
    """
    n = len(rows)
    d = len(rows[0])

    location = []
    scale = []
    for j in range(d):
        obs = [rows[i][j] for i in range(n) if rows[i][j] is not None]
        m = rloc(obs)
        s = rscale([v - m for v in obs])
        if s == 0.0:
            raise ValueError("column %d has zero scale" % j)
        location.append(m)
        scale.append(s)

    z = [
        [
            None if rows[i][j] is None else (rows[i][j] - location[j]) / scale[j]
            for j in range(d)
        ]
        for i in range(n)
    ]
    u = [
        [
            z[i][j] if z[i][j] is not None and abs(z[i][j]) <= CUTOFF else None
            for j in range(d)
        ]
        for i in range(n)
    ]
    ucols = [[u[i][j] for i in range(n)] for j in range(d)]

    corr = [[None] * d for _ in range(d)]
    for j in range(d):
        corr[j][j] = 1.0
        for h in range(j + 1, d):
            corr[j][h] = corr[h][j] = rcorr(ucols[j], ucols[h])

    neighbors = []
    slopes = []
    weights = []
    for j in range(d):
        nbr = []
        slp = []
        wts = []
        for h in range(d):
            c = corr[j][h]
            if h == j or c is None or abs(c) < corrlim:
                continue
            try:
                b = rslope(ucols[j], ucols[h])
            except ValueError:
                continue
            nbr.append(h)
            slp.append(b)
            wts.append(abs(c))
        neighbors.append(nbr)
        slopes.append(slp)
        weights.append(wts)
    connected = [bool(neighbors[j]) for j in range(d)]

    z0 = [[0.0] * d for _ in range(n)]
    for i in range(n):
        for j in range(d):
            num = 0.0
            den = 0.0
            if include_self and u[i][j] is not None:
                num += u[i][j]
                den += 1.0
            for h, b, w in zip(neighbors[j], slopes[j], weights[j]):
                if u[i][h] is not None:
                    num += w * b * u[i][h]
                    den += w
            if den > 0.0:
                z0[i][j] = num / den

    deshrink = []
    for j in range(d):
        resp = []
        pred = []
        for i in range(n):
            if z[i][j] is not None and z0[i][j] != 0.0:
                resp.append(z[i][j])
                pred.append(z0[i][j])
        if not resp:
            deshrink.append(1.0)
            continue
        try:
            deshrink.append(rslope(resp, pred))
        except ValueError:
            deshrink.append(1.0)

    zhat = [[deshrink[j] * z0[i][j] for j in range(d)] for i in range(n)]

    residual_scale = []
    for j in range(d):
        if not connected[j]:
            residual_scale.append(None)
            continue
        resid = [
            z[i][j] - zhat[i][j] for i in range(n) if z[i][j] is not None
        ]
        s = rscale(resid)
        residual_scale.append(s if s > 0.0 else None)

    r = [[None] * d for _ in range(n)]
    for i in range(n):
        for j in range(d):
            if z[i][j] is None:
                continue
            s = residual_scale[j]
            if s is not None:
                r[i][j] = (z[i][j] - zhat[i][j]) / s
            else:
                r[i][j] = z[i][j]

    flags = [[0] * d for _ in range(n)]
    for i in range(n):
        for j in range(d):
            if r[i][j] is None:
                continue
            if r[i][j] > CUTOFF:
                flags[i][j] = 1
            elif r[i][j] < -CUTOFF:
                flags[i][j] = -1

    row_scores = []
    for i in range(n):
        vals = [cdf1(r[i][j] ** 2) for j in range(d) if r[i][j] is not None]
        row_scores.append(sum(vals) / len(vals) if vals else None)
    defined = [t for t in row_scores if t is not None]
    row_loc = rloc(defined) if defined else None
    row_sc = rscale([t - row_loc for t in defined]) if defined else 0.0
    row_std = [
        None if t is None or not row_sc else (t - row_loc) / row_sc
        for t in row_scores
    ]
    row_flags = [
        s is not None and row_sc > 0.0 and s > CUTOFF for s in row_std
    ]

    imputed = [list(row) for row in rows]
    for i in range(n):
        for j in range(d):
            if flags[i][j] != 0 or rows[i][j] is None:
                imputed[i][j] = zhat[i][j] * scale[j] + location[j]

    return {
        "location": location,
        "scale": scale,
        "z": z,
        "u": u,
        "corr": corr,
        "neighbors": neighbors,
        "slopes": slopes,
        "connected": connected,
        "z0": z0,
        "deshrink": deshrink,
        "zhat": zhat,
        "residual_scale": residual_scale,
        "r": r,
        "flags": flags,
        "row_scores": row_scores,
        "row_loc": row_loc,
        "row_scale": row_sc,
        "row_std": row_std,
        "row_flags": row_flags,
        "imputed": imputed,
    }
