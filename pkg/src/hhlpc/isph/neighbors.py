"""Fixed-radius neighbour search on a uniform cell list (cell edge >= cutoff)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class NeighborTable:
    """Directed pair list sorted by (i, j); every unordered pair appears twice.

    ``rij`` holds x_i - x_j (minimum image under periodicity) and ``r`` its
    length.  ``offsets`` indexes the pairs of particle i as
    ``offsets[i]:offsets[i+1]``.
    """

    n: int
    i: np.ndarray
    j: np.ndarray
    rij: np.ndarray
    r: np.ndarray
    offsets: np.ndarray

    def neighbors(self, k: int) -> np.ndarray:
        return self.j[self.offsets[k]:self.offsets[k + 1]]

    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def as_lists(self) -> list[list[int]]:
        return [self.neighbors(k).tolist() for k in range(self.n)]


def _min_image(d: np.ndarray, box_len: np.ndarray, periodic: np.ndarray) -> np.ndarray:
    if periodic.any():
        d = d.copy()
        for ax in np.flatnonzero(periodic):
            d[:, ax] -= box_len[ax] * np.round(d[:, ax] / box_len[ax])
    return d


def _finish(n, pi, pj, d, cutoff) -> NeighborTable:
    r = np.sqrt(np.einsum("ij,ij->i", d, d))
    keep = (r < cutoff) & (pi != pj)
    pi, pj, d, r = pi[keep], pj[keep], d[keep], r[keep]
    order = np.lexsort((pj, pi))
    pi, pj, d, r = pi[order], pj[order], d[order], r[order]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(pi, minlength=n), out=offsets[1:])
    return NeighborTable(n, pi, pj, d, r, offsets)


def brute_force_neighbors(positions, cutoff, box_lo, box_hi, periodic=(False, False)) -> NeighborTable:
    """O(n^2) reference search."""
    x = np.asarray(positions, dtype=np.float64)
    n = len(x)
    box_len = np.asarray(box_hi, float) - np.asarray(box_lo, float)
    pi, pj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    pi, pj = pi.ravel(), pj.ravel()
    d = _min_image(x[pi] - x[pj], box_len, np.asarray(periodic, bool))
    return _finish(n, pi, pj, d, cutoff)


def build_neighbors(positions, cutoff: float, box_lo, box_hi, periodic=(False, False)) -> NeighborTable:
    x = np.asarray(positions, dtype=np.float64)
    n = len(x)
    periodic = np.asarray(periodic, dtype=bool)
    lo = np.asarray(box_lo, dtype=np.float64).copy()
    hi = np.asarray(box_hi, dtype=np.float64).copy()
    # open directions: cover whatever the particles currently span
    if n:
        lo[~periodic] = np.minimum(lo[~periodic], x[:, ~periodic].min(axis=0))
        hi[~periodic] = np.maximum(hi[~periodic], x[:, ~periodic].max(axis=0) + 1e-12)
    box_len = hi - lo
    ncell = np.maximum(1, np.floor(box_len / cutoff).astype(np.int64))
    # fewer than three cells along a periodic axis would alias neighbour cells
    if n == 0 or np.any(periodic & (ncell < 3)):
        return brute_force_neighbors(x, cutoff, box_lo, box_hi, periodic)
    cell_len = box_len / ncell
    c = np.floor((x - lo) / cell_len).astype(np.int64)
    c = np.minimum(np.maximum(c, 0), ncell - 1)
    cid = c[:, 0] * ncell[1] + c[:, 1]
    order = np.argsort(cid, kind="stable")
    ncells = int(ncell[0] * ncell[1])
    count = np.bincount(cid, minlength=ncells)
    start = np.zeros(ncells, dtype=np.int64)
    np.cumsum(count[:-1], out=start[1:])

    pis, pjs = [], []
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            nc = c + np.array([dx, dy])
            valid = np.ones(n, dtype=bool)
            for ax in range(2):
                if periodic[ax]:
                    nc[:, ax] %= ncell[ax]
                else:
                    valid &= (nc[:, ax] >= 0) & (nc[:, ax] < ncell[ax])
            src = np.flatnonzero(valid)
            ncid = nc[src, 0] * ncell[1] + nc[src, 1]
            cnt = count[ncid]
            tot = int(cnt.sum())
            if tot == 0:
                continue
            pi = np.repeat(src, cnt)
            first = np.repeat(np.cumsum(cnt) - cnt, cnt)
            slot = np.arange(tot) - first + np.repeat(start[ncid], cnt)
            pis.append(pi)
            pjs.append(order[slot])
    pi = np.concatenate(pis)
    pj = np.concatenate(pjs)
    d = _min_image(x[pi] - x[pj], box_len, periodic)
    return _finish(n, pi, pj, d, cutoff)
