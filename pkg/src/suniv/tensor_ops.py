"""Index-aware tensors and strided convolutions.

A DTensor is a dense d-dimensional array (d = 1 or 2) together with an
explicit integer index range per axis, so entries live at logical indices
``lo[ax] .. hi[ax]`` instead of ``0 .. n-1``.  Two convolution primitives are
provided:

* ``down_conv(gamma, a)``: (gamma *v a)(k) = sum_l gamma[l] a[2k - l]
* ``up_conv(gamma, a)``:   (gamma *^ a)(k) = sum_l gamma[l] a[(k+l)/2],
  the sum running over l with (k + l)/2 an integer.

Both exist in two boundary modes.  The default ("zero") treats out-of-range
entries as undefined and simply drops those terms, which is the same as
zero-extension; the output index range is the interval of k with at least one
defined term.  With ``periodic=True`` the second argument is read as one
period of a periodic signal with logical origin 0, index arithmetic is
taken modulo the period, and the output has period n/2 (down) or 2n (up).
"""

import numpy as np

__all__ = [
    "DTensor",
    "down_conv",
    "up_conv",
    "tensor_product",
    "l2_norm",
    "reflect",
    "dt_add",
    "restrict",
]


class DTensor:
    """Dense array with explicit per-axis logical index bounds.

    Parameters
    ----------
    values : array_like
        1- or 2-dimensional float data.
    lo : int or tuple of int, optional
        Logical index of ``values[0, ...]`` per axis.  Defaults to 0.
    """

    __slots__ = ("values", "lo")

    def __init__(self, values, lo=0):
        v = np.asarray(values, dtype=float)
        if v.ndim not in (1, 2):
            raise ValueError(f"DTensor supports dim 1 or 2, got {v.ndim}")
        if v.size == 0:
            raise ValueError("DTensor must not be empty")
        if np.isscalar(lo) or isinstance(lo, (int, np.integer)):
            lo = (int(lo),) * v.ndim
        else:
            lo = tuple(int(x) for x in lo)
        if len(lo) != v.ndim:
            raise ValueError(f"lo has {len(lo)} entries for a {v.ndim}-d tensor")
        self.values = v
        self.lo = lo

    @property
    def dim(self):
        return self.values.ndim

    @property
    def shape(self):
        return self.values.shape

    @property
    def hi(self):
        return tuple(l + n - 1 for l, n in zip(self.lo, self.shape))

    def __getitem__(self, idx):
        """Entry at a logical multi-index (int for 1-d, pair for 2-d)."""
        if self.dim == 1 and isinstance(idx, (int, np.integer)):
            idx = (idx,)
        pos = tuple(int(i) - l for i, l in zip(idx, self.lo))
        for p, n in zip(pos, self.shape):
            if not 0 <= p < n:
                raise IndexError(f"logical index {idx} outside range")
        return self.values[pos]

    def copy(self):
        return DTensor(self.values.copy(), self.lo)

    def to_dict(self):
        return {"lo": list(self.lo), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["values"], dtype=float), tuple(d["lo"]))

    def __repr__(self):
        return f"DTensor(lo={self.lo}, hi={self.hi}, shape={self.shape})"


def l2_norm(a):
    """Euclidean norm of all entries of a DTensor."""
    return float(np.linalg.norm(a.values))


def reflect(a):
    """Index-negated copy: reflect(a)[k] = a[-k]."""
    rev = a.values[tuple(slice(None, None, -1) for _ in range(a.dim))]
    lo = tuple(-h for h in a.hi)
    return DTensor(rev.copy(), lo)


def restrict(a, lo, hi):
    """Entries of ``a`` on the window [lo, hi], zero-padded where undefined."""
    lo = (lo,) * a.dim if isinstance(lo, (int, np.integer)) else tuple(lo)
    hi = (hi,) * a.dim if isinstance(hi, (int, np.integer)) else tuple(hi)
    shape = tuple(h - l + 1 for l, h in zip(lo, hi))
    out = np.zeros(shape)
    src = []
    dst = []
    for ax in range(a.dim):
        s0 = max(lo[ax], a.lo[ax])
        s1 = min(hi[ax], a.hi[ax])
        if s0 > s1:
            return DTensor(out, lo)
        src.append(slice(s0 - a.lo[ax], s1 - a.lo[ax] + 1))
        dst.append(slice(s0 - lo[ax], s1 - lo[ax] + 1))
    out[tuple(dst)] = a.values[tuple(src)]
    return DTensor(out, lo)


def dt_add(a, b):
    """Sum of two DTensors on the union bounding box of their ranges."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch in dt_add")
    lo = tuple(min(x, y) for x, y in zip(a.lo, b.lo))
    hi = tuple(max(x, y) for x, y in zip(a.hi, b.hi))
    out = restrict(a, lo, hi)
    sl = tuple(slice(l - m, l - m + n) for l, m, n in zip(b.lo, lo, b.shape))
    out.values[sl] += b.values
    return out


def tensor_product(u, v):
    """Outer product of two 1-d DTensors as a 2-d DTensor."""
    if u.dim != 1 or v.dim != 1:
        raise ValueError("tensor_product expects 1-d factors")
    return DTensor(np.outer(u.values, v.values), (u.lo[0], v.lo[0]))


def _check_periodic_arg(a):
    if any(l != 0 for l in a.lo):
        raise ValueError("periodic mode requires the signal to have lo = 0")


def down_conv(gamma, a, periodic=False):
    """Downsampled convolution (gamma *v a)(k) = sum_l gamma[l] a[2k - l].

    In the default mode the output covers every k for which at least one
    term is defined; undefined terms are dropped.  In periodic mode ``a``
    is one period (per-axis length even) and the output is one period of
    length n/2 per axis.
    """
    if gamma.dim != a.dim:
        raise ValueError("dimension mismatch in down_conv")
    if periodic:
        return _down_conv_periodic(gamma, a)
    d = a.dim
    out_lo = tuple(-(-(al + gl) // 2) for al, gl in zip(a.lo, gamma.lo))
    out_hi = tuple((ah + gh) // 2 for ah, gh in zip(a.hi, gamma.hi))
    out = np.zeros(tuple(h - l + 1 for l, h in zip(out_lo, out_hi)))
    for tap in np.ndindex(*gamma.shape):
        v = gamma.values[tap]
        if v == 0.0:
            continue
        l = tuple(t + gl for t, gl in zip(tap, gamma.lo))
        dst, src = [], []
        ok = True
        for ax in range(d):
            # need a.lo <= 2k - l <= a.hi and out_lo <= k <= out_hi
            k0 = max(out_lo[ax], -(-(a.lo[ax] + l[ax]) // 2))
            k1 = min(out_hi[ax], (a.hi[ax] + l[ax]) // 2)
            if k0 > k1:
                ok = False
                break
            dst.append(slice(k0 - out_lo[ax], k1 - out_lo[ax] + 1))
            j0 = 2 * k0 - l[ax] - a.lo[ax]
            src.append(slice(j0, j0 + 2 * (k1 - k0) + 1, 2))
        if ok:
            out[tuple(dst)] += v * a.values[tuple(src)]
    return DTensor(out, out_lo)


def _down_conv_periodic(gamma, a):
    _check_periodic_arg(a)
    d = a.dim
    n = a.shape
    if any(m % 2 for m in n):
        raise ValueError("periodic down_conv needs even period per axis")
    out = np.zeros(tuple(m // 2 for m in n))
    axes_idx = [2 * np.arange(m // 2) for m in n]
    for tap in np.ndindex(*gamma.shape):
        v = gamma.values[tap]
        if v == 0.0:
            continue
        l = tuple(t + gl for t, gl in zip(tap, gamma.lo))
        idx = [np.mod(axes_idx[ax] - l[ax], n[ax]) for ax in range(d)]
        out += v * a.values[np.ix_(*idx)] if d == 2 else v * a.values[idx[0]]
    return DTensor(out, (0,) * d)


def up_conv(gamma, a, periodic=False):
    """Upsampled convolution (gamma *^ a)(k) = sum_l gamma[l] a[(k+l)/2].

    Only l with (k + l)/2 integral contribute; an empty sum yields 0.  The
    default-mode output covers the interval of k with at least one defined
    term.  In periodic mode the output is one period of length 2n per axis.
    """
    if gamma.dim != a.dim:
        raise ValueError("dimension mismatch in up_conv")
    if periodic:
        return _up_conv_periodic(gamma, a)
    d = a.dim
    out_lo = tuple(2 * al - gh for al, gh in zip(a.lo, gamma.hi))
    out_hi = tuple(2 * ah - gl for ah, gl in zip(a.hi, gamma.lo))
    out = np.zeros(tuple(h - l + 1 for l, h in zip(out_lo, out_hi)))
    for tap in np.ndindex(*gamma.shape):
        v = gamma.values[tap]
        if v == 0.0:
            continue
        l = tuple(t + gl for t, gl in zip(tap, gamma.lo))
        dst = []
        for ax in range(d):
            # entry a[m] lands at k = 2m - l
            t0 = 2 * a.lo[ax] - l[ax] - out_lo[ax]
            dst.append(slice(t0, t0 + 2 * a.shape[ax], 2))
        out[tuple(dst)] += v * a.values
    return DTensor(out, out_lo)


def _up_conv_periodic(gamma, a):
    _check_periodic_arg(a)
    d = a.dim
    n = a.shape
    out = np.zeros(tuple(2 * m for m in n))
    axes_idx = [2 * np.arange(m) for m in n]
    for tap in np.ndindex(*gamma.shape):
        v = gamma.values[tap]
        if v == 0.0:
            continue
        l = tuple(t + gl for t, gl in zip(tap, gamma.lo))
        idx = [np.mod(axes_idx[ax] - l[ax], 2 * n[ax]) for ax in range(d)]
        if d == 2:
            out[np.ix_(*idx)] += v * a.values
        else:
            out[idx[0]] += v * a.values
    return DTensor(out, (0,) * d)
