"""Arithmetic cost model: real multiplies, real adds, stored parameters.

Counting conventions (shared by the closed forms and the instrumented
evaluators, and matching what the datapath actually instantiates):

* complex multiply = 3 real multiplies + 5 real adds (Karatsuba-style form);
  complex add = 2 real adds.
* a MAC canceller summing M complex products costs M complex multiplies and
  M-1 complex adds: 3M multiplies, 7M-2 adds.
* a hidden ReLU neuron with n real inputs costs n multiplies and n+1 adds
  (n-1 accumulation adds, one bias add, one comparator for the ReLU).
* a linear output neuron with n inputs costs n multiplies and n adds
  (n-1 accumulation adds plus the bias).
* not counted: the polynomial basis values and the input windows (computed
  once by the input interface), the power-of-two denormalisation shift, and
  the final add combining the FIR and MLP paths.

With L=13, P=7, N_h=18 this gives 780/1818/520 (poly) versus 543/611/550
(NN+FIR) multiplies/adds/parameters per output sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cancellers import LinearModel, PolyModel, basis_terms, num_basis
from .errors import ConfigurationError
from .network import NNModel
from .signals import as_samples


@dataclass(frozen=True)
class OpCount:
    real_mults: int
    real_adds: int
    params: int


def linear_counts(memory_len: int) -> OpCount:
    m = memory_len
    return OpCount(3 * m, 7 * m - 2, 2 * m)


def poly_counts(memory_len: int, max_order: int) -> OpCount:
    if max_order < 1 or max_order % 2 == 0:
        raise ConfigurationError("max_order must be odd and >= 1")
    m = num_basis(memory_len, max_order)
    return OpCount(3 * m, 7 * m - 2, 2 * m)


def nn_counts(memory_len: int, n_hidden: int) -> OpCount:
    """FIR plus MLP cost; n_hidden = 0 degenerates to the bare FIR canceller."""
    if n_hidden < 0:
        raise ConfigurationError("n_hidden must be non-negative")
    l = memory_len
    mults = (2 * l + 2) * n_hidden + 3 * l
    adds = (2 * l + 3) * n_hidden + 7 * l - 2
    params = (2 * l + 1) * n_hidden + (2 * n_hidden + 2) + 2 * l if n_hidden else 2 * l
    return OpCount(mults, adds, params)


class OpCounter:
    """Performs float arithmetic while tallying real multiplies and adds."""

    def __init__(self):
        self.mults = 0
        self.adds = 0

    def mul(self, a: float, b: float) -> float:
        self.mults += 1
        return a * b

    def add(self, a: float, b: float) -> float:
        self.adds += 1
        return a + b

    def relu(self, a: float) -> float:
        self.adds += 1  # comparator
        return a if a > 0.0 else 0.0

    def cmul(self, a: complex, b: complex) -> complex:
        t1 = self.mul(b.real, self.add(a.real, a.imag))
        t2 = self.mul(a.real, self.add(b.imag, -b.real))
        t3 = self.mul(a.imag, self.add(b.real, b.imag))
        return complex(self.add(t1, -t3), self.add(t1, t2))

    def cadd(self, a: complex, b: complex) -> complex:
        self.adds += 2
        return a + b

    def snapshot(self) -> tuple:
        return (self.mults, self.adds)


def _window(xs: np.ndarray, n: int, memory_len: int) -> np.ndarray:
    w = np.zeros(memory_len, dtype=np.complex128)
    take = min(memory_len, n + 1)
    w[:take] = xs[n - take + 1 : n + 1][::-1]
    return w


def counted_linear(model: LinearModel, x, max_samples: int = 32):
    """Instrumented per-sample FIR evaluation; returns (yhat, per-sample OpCount)."""
    xs = as_samples(x)[:max_samples]
    out = np.empty(xs.size, dtype=np.complex128)
    per_sample = None
    counter = OpCounter()
    for n in range(xs.size):
        before = counter.snapshot()
        w = _window(xs, n, model.memory_len)
        acc = counter.cmul(complex(model.taps[0]), complex(w[0]))
        for l in range(1, model.memory_len):
            acc = counter.cadd(acc, counter.cmul(complex(model.taps[l]), complex(w[l])))
        out[n] = acc
        per_sample = _consume(counter, before, per_sample)
    return out, OpCount(*per_sample, 2 * model.memory_len)


def counted_poly(model: PolyModel, x, max_samples: int = 32):
    """Instrumented memory-polynomial evaluation over the canonical term order.

    Basis values come from plain powers (uncounted input-interface work), so
    this is also an independent check of the vectorized predictor.
    """
    xs = as_samples(x)[:max_samples]
    out = np.empty(xs.size, dtype=np.complex128)
    per_sample = None
    counter = OpCounter()
    for n in range(xs.size):
        before = counter.snapshot()
        w = _window(xs, n, model.memory_len)
        acc = None
        for i, (l, p, q) in enumerate(basis_terms(model.memory_len, model.max_order)):
            u = complex(w[l])
            basis = u**q * u.conjugate() ** (p - q)
            prod = counter.cmul(complex(model.coeffs[i]), basis)
            acc = prod if acc is None else counter.cadd(acc, prod)
        out[n] = acc
        per_sample = _consume(counter, before, per_sample)
    return out, OpCount(*per_sample, 2 * model.coeffs.size)


def counted_nn(model: NNModel, x, max_samples: int = 32):
    """Instrumented FIR + MLP evaluation (denorm shift and path combine free)."""
    xs = as_samples(x)[:max_samples]
    out = np.empty(xs.size, dtype=np.complex128)
    per_sample = None
    counter = OpCounter()
    for n in range(xs.size):
        before = counter.snapshot()
        w = _window(xs, n, model.memory_len)
        feats = [v.real for v in w] + [v.imag for v in w]

        hidden = []
        for j in range(model.n_hidden):
            acc = counter.mul(model.w1[j, 0], feats[0])
            for i in range(1, len(feats)):
                acc = counter.add(acc, counter.mul(model.w1[j, i], feats[i]))
            hidden.append(counter.relu(counter.add(acc, model.b1[j])))

        outs = []
        for j in range(2):
            acc = counter.mul(model.w2[j, 0], hidden[0])
            for i in range(1, model.n_hidden):
                acc = counter.add(acc, counter.mul(model.w2[j, i], hidden[i]))
            outs.append(counter.add(acc, model.b2[j]))

        lin = counter.cmul(complex(model.linear.taps[0]), complex(w[0]))
        for l in range(1, model.memory_len):
            lin = counter.cadd(lin, counter.cmul(complex(model.linear.taps[l]), complex(w[l])))

        out[n] = lin + complex(outs[0], outs[1]) * 2.0**model.denorm_shift
        per_sample = _consume(counter, before, per_sample)

    params = nn_counts(model.memory_len, model.n_hidden).params
    return out, OpCount(*per_sample, params)


def _consume(counter: OpCounter, before: tuple, per_sample):
    delta = (counter.mults - before[0], counter.adds - before[1])
    if per_sample is not None and delta != per_sample:
        raise AssertionError(f"op count changed between samples: {per_sample} vs {delta}")
    return delta


def comparison_table(memory_len: int, max_order: int, n_hidden: int) -> str:
    """Side-by-side cost table for the two nonlinear cancellers."""
    p = poly_counts(memory_len, max_order)
    n = nn_counts(memory_len, n_hidden)
    rows = [
        ("", "poly", "nn+fir"),
        ("real multiplications", str(p.real_mults), str(n.real_mults)),
        ("real additions", str(p.real_adds), str(n.real_adds)),
        ("parameters", str(p.params), str(n.params)),
    ]
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
    header = f"L={memory_len} P={max_order} N_h={n_hidden}"
    return "\n".join([header] + lines) + "\n"
