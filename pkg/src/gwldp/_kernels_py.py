"""Pure-Python tree growth, used when the compiled extension is unavailable.

Consumes the generator's uniform stream exactly like ``_kernels.pyx``, so
both backends return identical trees for identical seeds.
"""

NAME = "python"


def _pick(u, cum, m):
    j = 0
    while j < m - 1 and u >= cum[j]:
        j += 1
    return j


def _grow(random, root_cum, cum, nconf, clen, coff, child_types, cap):
    types = [_pick(random(), root_cum, len(root_cum))]
    cfgs = []
    i = 0
    while i < len(types):
        t = types[i]
        j = _pick(random(), cum[t], nconf[t])
        cfgs.append(j)
        L = clen[t][j]
        if len(types) + L > cap:
            return None
        off = coff[t][j]
        types.extend(child_types[off:off + L])
        i += 1
    return types, cfgs


def _lists(tables):
    cached = getattr(tables, "_py_lists", None)
    if cached is None:
        cached = (
            tables.root_cum.tolist(),
            tables.cum.tolist(),
            tables.nconf.tolist(),
            tables.clen.tolist(),
            tables.coff.tolist(),
            tables.child_types.tolist(),
        )
        object.__setattr__(tables, "_py_lists", cached)
    return cached


def _store(tree, types_out, cfg_out):
    types, cfgs = tree
    types_out[: len(types)] = types
    cfg_out[: len(cfgs)] = cfgs
    return len(types)


def grow(generator, tables, cap, types_out, cfg_out):
    tree = _grow(generator.random, *_lists(tables), cap)
    return -1 if tree is None else _store(tree, types_out, cfg_out)


def grow_sized(generator, tables, n, max_attempts, types_out, cfg_out):
    random, args = generator.random, _lists(tables)
    for a in range(1, max_attempts + 1):
        tree = _grow(random, *args, n)
        if tree is not None and len(tree[0]) == n:
            _store(tree, types_out, cfg_out)
            return a
    return -max_attempts
