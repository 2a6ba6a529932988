"""Cycle-accurate model of the canceller processing-element array.

The hardware under study streams one sample into a small array of processing
elements (PEs) fed from a packed weight memory, one control word per cycle.
Three stage kinds cover the cancellers:

``nbn``
    Neuron-by-neuron dot products.  Every PE multiplies a different input of
    the same neuron; a balanced pairwise adder tree combines the lane
    products.  With more PEs than inputs the array evaluates
    k = n_pe / n_inputs neurons per word; otherwise each neuron takes
    r = n_inputs / n_pe words and an accumulator follows the tree.
``ibi``
    Input-by-input broadcast.  Each PE accumulates one neuron locally while
    inputs stream past.  With more PEs than neurons, k = n_pe / n_neurons
    inputs are consumed per word and each neuron's k lane accumulators are
    combined by the tree at the end.  With fewer, the neuron set is worked
    through in groups of n_pe.
``cmac``
    Complex multiply-accumulate producing a single complex output, used for
    the FIR path and the polynomial term sum.  Lanes use the 3-multiplier
    complex product; ``ragged=True`` lets the last word run partially filled
    (idle lanes feed zeros into the tree).

Timing model: the products (or local MACs) of a word latch into a register at
the end of their cycle; the tree, cross-word accumulator, bias add and
activation are combinational on that register and the results latch into the
stage output one cycle later.  A stage therefore needs words_per_sample
cycles per sample once the pipe is full and words_per_sample + 1 cycles from
first word to last output.  Reported output timestamps are the cycle in which
a value latches and becomes visible downstream.

Stall accounting counts cycles in which a stage computed something it could
not hand off (output register or FIFO full).  Waiting for inputs during
pipeline fill is not a stall.

The machines run the scalar fixed-point ops value by value; the reference
evaluators in this module replay the identical word schedule and adder-tree
grouping with the vectorized kernels.  Both routes must agree bit for bit.
The polynomial term generator is modeled functionally: a dedicated ladder
block computes terms at line rate ahead of the MAC array, so it adds no
cycles to the report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cancellers import num_basis
from .errors import ConfigurationError, DataFormatError, NumericError
from .fixed_point import (
    FxFormat,
    QuantLinearModel,
    QuantNNModel,
    QuantPolyModel,
    add_raw,
    basis_ladder,
    cadd,
    cmul3,
    fx_window_raw,
    mul_raw,
    shift_raw,
    vadd,
    vmul,
    vrelu,
    vshift,
)
from .signals import as_samples

STAGE_KINDS = ("nbn", "ibi", "cmac")
ACTIVATIONS = ("linear", "relu")


@dataclass(frozen=True)
class StageConfig:
    """Geometry of one PE-array stage.

    n_inputs counts real inputs for nbn/ibi and complex terms for cmac.
    Divisibility rules keep every control word fully scheduled; only a
    ragged cmac stage may leave lanes idle in its last word.
    """

    kind: str
    n_pe: int
    n_inputs: int
    n_neurons: int = 1
    activation: str = "linear"
    ragged: bool = False

    def __post_init__(self):
        if self.kind not in STAGE_KINDS:
            raise ConfigurationError(f"unknown stage kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if min(self.n_pe, self.n_inputs, self.n_neurons) < 1:
            raise ConfigurationError("stage dimensions must be positive")
        if self.ragged and self.kind != "cmac":
            raise ConfigurationError("ragged schedules are only supported for cmac stages")
        if self.kind == "nbn":
            if self.n_pe <= self.n_inputs:
                if self.n_inputs % self.n_pe:
                    raise ConfigurationError("nbn needs n_pe to divide n_inputs")
            elif self.n_pe % self.n_inputs or self.n_neurons % (self.n_pe // self.n_inputs):
                raise ConfigurationError(
                    "nbn with n_pe > n_inputs needs n_inputs | n_pe and "
                    "(n_pe / n_inputs) | n_neurons"
                )
        elif self.kind == "ibi":
            if self.n_pe <= self.n_neurons:
                if self.n_neurons % self.n_pe:
                    raise ConfigurationError("ibi needs n_pe to divide n_neurons")
            elif self.n_pe % self.n_neurons or self.n_inputs % (self.n_pe // self.n_neurons):
                raise ConfigurationError(
                    "ibi with n_pe > n_neurons needs n_neurons | n_pe and "
                    "(n_pe / n_neurons) | n_inputs"
                )
        else:
            if self.n_neurons != 1:
                raise ConfigurationError("cmac stages produce a single output")
            if self.activation != "linear":
                raise ConfigurationError("cmac stages have no activation")
            if not self.ragged and self.n_inputs % self.n_pe:
                raise ConfigurationError("cmac needs n_pe to divide n_inputs unless ragged")

    @property
    def neurons_per_word(self) -> int:
        # nbn only; 1 means r = n_inputs / n_pe words per neuron
        if self.kind != "nbn" or self.n_pe <= self.n_inputs:
            return 1
        return self.n_pe // self.n_inputs

    @property
    def inputs_per_word(self) -> int:
        # ibi only; 1 means neurons are worked through in groups of n_pe
        if self.kind != "ibi" or self.n_pe <= self.n_neurons:
            return 1
        return self.n_pe // self.n_neurons

    @property
    def words_per_sample(self) -> int:
        if self.kind == "cmac":
            return -(-self.n_inputs // self.n_pe)
        return self.n_neurons * self.n_inputs // self.n_pe


@dataclass(frozen=True)
class StagePerf:
    """Closed-form timing of a stage with inputs ready and no backpressure."""

    words_per_sample: int
    cycles_per_sample: int
    first_output_cycle: int
    latency_cycles: int


def analytic_performance(cfg: StageConfig) -> StagePerf:
    words = cfg.words_per_sample
    if cfg.kind == "nbn":
        if cfg.neurons_per_word > 1:
            first = 2
        else:
            first = cfg.n_inputs // cfg.n_pe + 1
    elif cfg.kind == "ibi":
        first = cfg.n_inputs + 1 if cfg.n_pe <= cfg.n_neurons else words + 1
    else:
        first = words + 1
    return StagePerf(words, words, first, words + 1)


def composition_cycles_per_sample(*configs) -> int:
    """Steady-state spacing of a chain of stages: the slowest stage rules."""
    return max(cfg.words_per_sample for cfg in configs)


# ------------------------------------------------------------- weight packing

def pack_weights(cfg: StageConfig, w_raw) -> np.ndarray:
    """Arrange a [n_neurons, n_inputs] raw weight matrix into control words.

    Returns int64 [words_per_sample, n_pe]; element [m, p] is the weight PE p
    multiplies during word m.
    """
    w = np.asarray(w_raw, dtype=np.int64)
    if w.shape != (cfg.n_neurons, cfg.n_inputs):
        raise ConfigurationError(
            f"weight shape {w.shape} does not match stage ({cfg.n_neurons}, {cfg.n_inputs})"
        )
    words = cfg.words_per_sample
    packed = np.zeros((words, cfg.n_pe), dtype=np.int64)
    if cfg.kind == "nbn":
        k = cfg.neurons_per_word
        if k == 1:
            r = cfg.n_inputs // cfg.n_pe
            for m in range(words):
                j, t = divmod(m, r)
                packed[m] = w[j, t * cfg.n_pe:(t + 1) * cfg.n_pe]
        else:
            for m in range(words):
                for p in range(cfg.n_pe):
                    packed[m, p] = w[m * k + p // cfg.n_inputs, p % cfg.n_inputs]
    elif cfg.kind == "ibi":
        k = cfg.inputs_per_word
        if k == 1:
            for m in range(words):
                g, i = divmod(m, cfg.n_inputs)
                packed[m] = w[g * cfg.n_pe:(g + 1) * cfg.n_pe, i]
        else:
            for m in range(words):
                for p in range(cfg.n_pe):
                    packed[m, p] = w[p // k, m * k + p % k]
    else:
        raise ConfigurationError("cmac stages use pack_cmac_weights")
    return packed


def unpack_weights(cfg: StageConfig, packed) -> np.ndarray:
    """Inverse of pack_weights."""
    packed = np.asarray(packed, dtype=np.int64)
    if packed.shape != (cfg.words_per_sample, cfg.n_pe):
        raise ConfigurationError(f"packed shape {packed.shape} does not match stage schedule")
    w = np.zeros((cfg.n_neurons, cfg.n_inputs), dtype=np.int64)
    if cfg.kind == "nbn":
        k = cfg.neurons_per_word
        if k == 1:
            r = cfg.n_inputs // cfg.n_pe
            for m in range(packed.shape[0]):
                j, t = divmod(m, r)
                w[j, t * cfg.n_pe:(t + 1) * cfg.n_pe] = packed[m]
        else:
            for m in range(packed.shape[0]):
                for p in range(cfg.n_pe):
                    w[m * k + p // cfg.n_inputs, p % cfg.n_inputs] = packed[m, p]
    elif cfg.kind == "ibi":
        k = cfg.inputs_per_word
        if k == 1:
            for m in range(packed.shape[0]):
                g, i = divmod(m, cfg.n_inputs)
                w[g * cfg.n_pe:(g + 1) * cfg.n_pe, i] = packed[m]
        else:
            for m in range(packed.shape[0]):
                for p in range(cfg.n_pe):
                    w[p // k, m * k + p % k] = packed[m, p]
    else:
        raise ConfigurationError("cmac stages use pack_cmac_weights")
    return w


def pack_cmac_weights(cfg: StageConfig, taps_re, taps_im):
    """Complex taps in term order, zero padded when the schedule is ragged."""
    t_re = np.asarray(taps_re, dtype=np.int64)
    t_im = np.asarray(taps_im, dtype=np.int64)
    if cfg.kind != "cmac":
        raise ConfigurationError("pack_cmac_weights needs a cmac stage")
    if t_re.shape != (cfg.n_inputs,) or t_im.shape != (cfg.n_inputs,):
        raise ConfigurationError("tap arrays must have n_inputs entries")
    words = cfg.words_per_sample
    pad = words * cfg.n_pe - cfg.n_inputs
    p_re = np.concatenate([t_re, np.zeros(pad, dtype=np.int64)]).reshape(words, cfg.n_pe)
    p_im = np.concatenate([t_im, np.zeros(pad, dtype=np.int64)]).reshape(words, cfg.n_pe)
    return p_re, p_im


# ------------------------------------------------------------- memory images

def interleave_complex(packed_re, packed_im) -> np.ndarray:
    """Merge re/im word planes into one plane with 2*n_pe lanes (re0, im0, ...)."""
    re = np.asarray(packed_re, dtype=np.int64)
    im = np.asarray(packed_im, dtype=np.int64)
    if re.shape != im.shape:
        raise ConfigurationError("re/im planes must have equal shape")
    out = np.empty((re.shape[0], 2 * re.shape[1]), dtype=np.int64)
    out[:, 0::2] = re
    out[:, 1::2] = im
    return out


def deinterleave_complex(packed):
    packed = np.asarray(packed, dtype=np.int64)
    if packed.shape[1] % 2:
        raise ConfigurationError("complex plane needs an even lane count")
    return packed[:, 0::2].copy(), packed[:, 1::2].copy()


def memory_image_lines(packed, total_bits: int) -> list:
    """Hex dump of a packed weight plane, one memory word per line.

    Lane p occupies bits [p*Q, (p+1)*Q) of the word, two's complement.
    """
    packed = np.asarray(packed, dtype=np.int64)
    lo, hi = -(1 << (total_bits - 1)), (1 << (total_bits - 1)) - 1
    if packed.size and (packed.min() < lo or packed.max() > hi):
        raise ConfigurationError(f"raw weight outside {total_bits}-bit range")
    lanes = packed.shape[1]
    mask = (1 << total_bits) - 1
    width = -(-lanes * total_bits // 4)
    lines = [f"NPE={lanes} Q={total_bits} WORDS={packed.shape[0]}"]
    for row in packed:
        word = 0
        for p, v in enumerate(row):
            word |= (int(v) & mask) << (p * total_bits)
        lines.append(f"{word:0{width}x}")
    return lines


def write_memory_image(path, packed, total_bits: int) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(memory_image_lines(packed, total_bits)) + "\n")


def read_memory_image(path):
    """Load a memory image; returns (int64 [words, lanes], total_bits)."""
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines or not lines[0].startswith("NPE="):
        raise DataFormatError(f"{path}: missing memory image header")
    try:
        fields = dict(part.split("=", 1) for part in lines[0].split())
        lanes, q, words = int(fields["NPE"]), int(fields["Q"]), int(fields["WORDS"])
    except (ValueError, KeyError) as exc:
        raise DataFormatError(f"{path}: bad memory image header") from exc
    if len(lines) - 1 != words:
        raise DataFormatError(f"{path}: expected {words} words, found {len(lines) - 1}")
    mask = (1 << q) - 1
    sign = 1 << (q - 1)
    out = np.zeros((words, lanes), dtype=np.int64)
    for m, line in enumerate(lines[1:]):
        try:
            word = int(line, 16)
        except ValueError as exc:
            raise DataFormatError(f"{path}: bad hex word on line {m + 2}") from exc
        for p in range(lanes):
            v = (word >> (p * q)) & mask
            out[m, p] = v - (1 << q) if v & sign else v
    return out, q


# ----------------------------------------------------------------- adder tree
#
# Balanced pairwise reduction, pairing ascending lane indices; an odd element
# passes through to the next level.  Written twice on purpose: the machine
# reduces scalar lane values, the references reduce whole sample columns.

def _tree_raw(vals, fmt: FxFormat):
    level = list(vals)
    while len(level) > 1:
        nxt = [add_raw(level[i], level[i + 1], fmt) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def _tree_vec(cols, fmt: FxFormat):
    level = list(cols)
    while len(level) > 1:
        nxt = [vadd(level[i], level[i + 1], fmt) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


# ---------------------------------------------------- vectorized references

def _vact(z, cfg: StageConfig, fmt: FxFormat):
    return vrelu(z, fmt) if cfg.activation == "relu" else z


def ref_nbn(cfg: StageConfig, w_raw, b_raw, x_raw, fmt: FxFormat) -> np.ndarray:
    """Word-schedule-faithful nbn evaluation on [N, n_inputs] raw inputs."""
    w = np.asarray(w_raw, dtype=np.int64)
    b = np.asarray(b_raw, dtype=np.int64)
    x = np.asarray(x_raw, dtype=np.int64)
    n = x.shape[0]
    out = np.empty((n, cfg.n_neurons), dtype=np.int64)
    seg = cfg.n_pe if cfg.n_pe <= cfg.n_inputs else cfg.n_inputs
    r = cfg.n_inputs // seg
    for j in range(cfg.n_neurons):
        acc = None
        for t in range(r):
            lanes = [
                vmul(int(w[j, t * seg + p]), x[:, t * seg + p], fmt) for p in range(seg)
            ]
            s = _tree_vec(lanes, fmt)
            acc = s if acc is None else vadd(acc, s, fmt)
        out[:, j] = _vact(vadd(acc, int(b[j]), fmt), cfg, fmt)
    return out


def ref_ibi(cfg: StageConfig, w_raw, b_raw, x_raw, fmt: FxFormat) -> np.ndarray:
    """Word-schedule-faithful ibi evaluation on [N, n_inputs] raw inputs."""
    w = np.asarray(w_raw, dtype=np.int64)
    b = np.asarray(b_raw, dtype=np.int64)
    x = np.asarray(x_raw, dtype=np.int64)
    n = x.shape[0]
    k = cfg.inputs_per_word
    out = np.empty((n, cfg.n_neurons), dtype=np.int64)
    for j in range(cfg.n_neurons):
        lane_accs = []
        for c in range(k):
            acc = None
            for i in range(c, cfg.n_inputs, k):
                p = vmul(int(w[j, i]), x[:, i], fmt)
                acc = p if acc is None else vadd(acc, p, fmt)
            lane_accs.append(acc)
        s = _tree_vec(lane_accs, fmt)
        out[:, j] = _vact(vadd(s, int(b[j]), fmt), cfg, fmt)
    return out


def ref_cmac(cfg: StageConfig, taps_re, taps_im, xw_re, xw_im, fmt: FxFormat):
    """Word-schedule-faithful complex MAC on [N, n_inputs] raw term columns."""
    t_re = np.asarray(taps_re, dtype=np.int64)
    t_im = np.asarray(taps_im, dtype=np.int64)
    n = np.asarray(xw_re).shape[0]
    zero = np.zeros(n, dtype=np.int64)
    acc = None
    for m in range(cfg.words_per_sample):
        lanes_re, lanes_im = [], []
        for p in range(cfg.n_pe):
            i = m * cfg.n_pe + p
            if i < cfg.n_inputs:
                pr, pi = cmul3(int(t_re[i]), int(t_im[i]), xw_re[:, i], xw_im[:, i], fmt)
            else:
                pr, pi = zero, zero
            lanes_re.append(pr)
            lanes_im.append(pi)
        sr, si = _tree_vec(lanes_re, fmt), _tree_vec(lanes_im, fmt)
        acc = (sr, si) if acc is None else (vadd(acc[0], sr, fmt), vadd(acc[1], si, fmt))
    return acc


def poly_basis_raw(qpoly: QuantPolyModel, x):
    """Quantized basis term columns [N, num_basis] in canonical term order."""
    fmt = qpoly.fmt
    xs = as_samples(x) * 2.0**-qpoly.input_shift
    win_re, win_im = fx_window_raw(xs, qpoly.memory_len, fmt)
    per_delay = (qpoly.max_order + 1) * (qpoly.max_order + 3) // 4
    n = win_re.shape[0]
    total = qpoly.memory_len * per_delay
    b_re = np.empty((n, total), dtype=np.int64)
    b_im = np.empty((n, total), dtype=np.int64)
    for l in range(qpoly.memory_len):
        terms = basis_ladder(win_re[:, l], win_im[:, l], qpoly.max_order, fmt)
        for t, (tr, ti) in enumerate(terms):
            b_re[:, l * per_delay + t] = tr
            b_im[:, l * per_delay + t] = ti
    return b_re, b_im


def nn_stage_configs(qnn: QuantNNModel, n_pe_hidden: int, n_pe_out: int, n_pe_fir: int):
    """Stage geometries for the FIR + two-layer network canceller."""
    two_l = 2 * qnn.memory_len
    return {
        "hidden": StageConfig("nbn", n_pe_hidden, two_l, qnn.n_hidden, "relu"),
        "output": StageConfig("ibi", n_pe_out, qnn.n_hidden, 2, "linear"),
        "fir": StageConfig("cmac", n_pe_fir, qnn.memory_len, ragged=True),
    }


def reference_nn_canceller(qnn: QuantNNModel, x, n_pe_hidden: int, n_pe_out: int,
                           n_pe_fir: int):
    """Vectorized replay of the full network canceller pipeline arithmetic."""
    fmt = qnn.fmt
    cfgs = nn_stage_configs(qnn, n_pe_hidden, n_pe_out, n_pe_fir)
    win_re, win_im = fx_window_raw(x, qnn.memory_len, fmt)
    win2 = np.hstack([win_re, win_im])
    hidden = ref_nbn(cfgs["hidden"], qnn.w1, qnn.b1, win2, fmt)
    out = ref_ibi(cfgs["output"], qnn.w2, qnn.b2, hidden, fmt)
    fir_re, fir_im = ref_cmac(
        cfgs["fir"], qnn.linear.taps_re, qnn.linear.taps_im, win_re, win_im, fmt
    )
    nn_re = vshift(out[:, 0], qnn.denorm_shift, fmt)
    nn_im = vshift(out[:, 1], qnn.denorm_shift, fmt)
    return cadd(fir_re, fir_im, nn_re, nn_im, fmt)


def reference_poly_canceller(qpoly: QuantPolyModel, x, n_pe: int):
    b_re, b_im = poly_basis_raw(qpoly, x)
    cfg = StageConfig("cmac", n_pe, b_re.shape[1])
    return ref_cmac(cfg, qpoly.coef_re, qpoly.coef_im, b_re, b_im, fmt=qpoly.fmt)


def reference_linear_canceller(qlin: QuantLinearModel, x, n_pe: int):
    win_re, win_im = fx_window_raw(x, qlin.memory_len, qlin.fmt)
    cfg = StageConfig("cmac", n_pe, qlin.memory_len, ragged=True)
    return ref_cmac(cfg, qlin.taps_re, qlin.taps_im, win_re, win_im, qlin.fmt)


# -------------------------------------------------------------- cycle machines

@dataclass
class TraceRecord:
    cycle: int
    stage: str
    pe_activity: int
    stall: int
    outputs_valid: int

    def __str__(self) -> str:
        return (
            f"cycle={self.cycle} stage={self.stage} pe_activity={self.pe_activity} "
            f"stall={self.stall} outputs_valid={self.outputs_valid}"
        )


class _Entry:
    """One sample's input vector, possibly still filling up."""

    __slots__ = ("sample", "data", "data_im", "arrived")

    def __init__(self, sample, data, data_im=None, arrived=None):
        self.sample = sample
        self.data = data
        self.data_im = data_im
        self.arrived = len(data) if arrived is None else arrived


class _MachineBase:
    def __init__(self, name: str, cfg: StageConfig, fmt: FxFormat):
        self.name = name
        self.cfg = cfg
        self.fmt = fmt
        self.words = cfg.words_per_sample
        self.inq: list = []
        self.word = 0
        self.stalls = 0

    def _act(self, z: int) -> int:
        return max(z, 0) if self.cfg.activation == "relu" else z

    def _advance(self):
        self.word += 1
        if self.word == self.words:
            self.inq.pop(0)
            self.word = 0


class _NbnMachine(_MachineBase):
    """Products latch per word; tree/acc/bias/act run the following cycle."""

    def __init__(self, name, cfg, w_raw, b_raw, fmt):
        super().__init__(name, cfg, fmt)
        self.packed = [[int(v) for v in row] for row in pack_weights(cfg, w_raw)]
        self.bias = [int(v) for v in np.asarray(b_raw, dtype=np.int64)]
        self.prodreg = None  # [sample, word, lanes, outs, post_done]
        self.acc = 0

    def _need(self, w: int) -> int:
        if self.cfg.neurons_per_word > 1:
            return self.cfg.n_inputs
        r = self.cfg.n_inputs // self.cfg.n_pe
        return (w % r + 1) * self.cfg.n_pe

    def _post(self, w: int, lanes):
        k = self.cfg.neurons_per_word
        if k > 1:
            outs = []
            ni = self.cfg.n_inputs
            for i in range(k):
                z = add_raw(_tree_raw(lanes[i * ni:(i + 1) * ni], self.fmt),
                            self.bias[w * k + i], self.fmt)
                outs.append((w * k + i, self._act(z)))
            return outs
        r = self.cfg.n_inputs // self.cfg.n_pe
        tree = _tree_raw(lanes, self.fmt)
        self.acc = tree if w % r == 0 else add_raw(self.acc, tree, self.fmt)
        if w % r == r - 1:
            j = w // r
            z = add_raw(self.acc, self.bias[j], self.fmt)
            return [(j, self._act(z))]
        return []

    def tick(self, cycle: int, accept):
        active = emitted = 0
        stalled = False
        if self.prodreg is not None:
            s, w, lanes, outs, done = self.prodreg
            if not done:
                outs = self._post(w, lanes)
                self.prodreg = [s, w, lanes, outs, True]
            if outs:
                if accept(s, outs, cycle):
                    emitted = len(outs)
                    self.prodreg = None
                else:
                    stalled = True
            else:
                self.prodreg = None
        if self.prodreg is None and self.inq:
            entry = self.inq[0]
            if entry.arrived >= self._need(self.word):
                row = self.packed[self.word]
                if self.cfg.neurons_per_word > 1:
                    idx = lambda p: p % self.cfg.n_inputs
                else:
                    r = self.cfg.n_inputs // self.cfg.n_pe
                    base = (self.word % r) * self.cfg.n_pe
                    idx = lambda p: base + p
                lanes = [
                    mul_raw(row[p], int(entry.data[idx(p)]), self.fmt)
                    for p in range(self.cfg.n_pe)
                ]
                active = self.cfg.n_pe
                self.prodreg = [entry.sample, self.word, lanes, None, False]
                self._advance()
        if stalled:
            self.stalls += 1
        return active, stalled, emitted


class _IbiMachine(_MachineBase):
    """Per-lane MAC accumulators; a group snapshot is combined one cycle later."""

    def __init__(self, name, cfg, w_raw, b_raw, fmt):
        super().__init__(name, cfg, fmt)
        self.packed = [[int(v) for v in row] for row in pack_weights(cfg, w_raw)]
        self.bias = [int(v) for v in np.asarray(b_raw, dtype=np.int64)]
        self.accs = [0] * cfg.n_pe
        self.combine = None  # [sample, group, snapshot, outs]

    def _need(self, w: int) -> int:
        k = self.cfg.inputs_per_word
        if k == 1:
            return w % self.cfg.n_inputs + 1
        return (w + 1) * k

    def _group_final(self, w: int) -> bool:
        if self.cfg.inputs_per_word == 1:
            return w % self.cfg.n_inputs == self.cfg.n_inputs - 1
        return w == self.words - 1

    def _combine_outs(self, group: int, snap):
        k = self.cfg.inputs_per_word
        outs = []
        if k == 1:
            for p in range(self.cfg.n_pe):
                j = group * self.cfg.n_pe + p
                z = add_raw(snap[p], self.bias[j], self.fmt)
                outs.append((j, self._act(z)))
        else:
            for j in range(self.cfg.n_neurons):
                s = _tree_raw(snap[j * k:(j + 1) * k], self.fmt)
                z = add_raw(s, self.bias[j], self.fmt)
                outs.append((j, self._act(z)))
        return outs

    def tick(self, cycle: int, accept):
        active = emitted = 0
        stalled = False
        if self.combine is not None:
            s, g, snap, outs = self.combine
            if outs is None:
                outs = self._combine_outs(g, snap)
                self.combine = [s, g, snap, outs]
            if accept(s, outs, cycle):
                emitted = len(outs)
                self.combine = None
            else:
                stalled = True
        if self.inq:
            entry = self.inq[0]
            if self.word < self.words and entry.arrived >= self._need(self.word):
                final = self._group_final(self.word)
                if final and self.combine is not None:
                    stalled = True  # cannot snapshot into a busy combine register
                else:
                    k = self.cfg.inputs_per_word
                    row = self.packed[self.word]
                    fresh = (self.word % self.cfg.n_inputs == 0) if k == 1 else self.word == 0
                    for p in range(self.cfg.n_pe):
                        i = self.word % self.cfg.n_inputs if k == 1 else self.word * k + p % k
                        prod = mul_raw(row[p], int(entry.data[i]), self.fmt)
                        self.accs[p] = prod if fresh else add_raw(self.accs[p], prod, self.fmt)
                    active = self.cfg.n_pe
                    if final:
                        group = self.word // self.cfg.n_inputs if k == 1 else 0
                        self.combine = [entry.sample, group, list(self.accs), None]
                    self._advance()
        if stalled:
            self.stalls += 1
        return active, stalled, emitted


class _CmacMachine(_MachineBase):
    """Complex MAC lanes; tree and cross-word accumulation one cycle behind."""

    def __init__(self, name, cfg, taps_re, taps_im, fmt):
        super().__init__(name, cfg, fmt)
        p_re, p_im = pack_cmac_weights(cfg, taps_re, taps_im)
        self.packed_re = [[int(v) for v in row] for row in p_re]
        self.packed_im = [[int(v) for v in row] for row in p_im]
        self.prodreg = None  # [sample, word, lanes_re, lanes_im, outs, post_done]
        self.acc_re = self.acc_im = 0

    def _need(self, w: int) -> int:
        return min((w + 1) * self.cfg.n_pe, self.cfg.n_inputs)

    def _post(self, w: int, lanes_re, lanes_im):
        sr = _tree_raw(lanes_re, self.fmt)
        si = _tree_raw(lanes_im, self.fmt)
        if w == 0:
            self.acc_re, self.acc_im = sr, si
        else:
            self.acc_re = add_raw(self.acc_re, sr, self.fmt)
            self.acc_im = add_raw(self.acc_im, si, self.fmt)
        if w == self.words - 1:
            return [(0, (self.acc_re, self.acc_im))]
        return []

    def tick(self, cycle: int, accept):
        active = emitted = 0
        stalled = False
        if self.prodreg is not None:
            s, w, lre, lim, outs, done = self.prodreg
            if not done:
                outs = self._post(w, lre, lim)
                self.prodreg = [s, w, lre, lim, outs, True]
            if outs:
                if accept(s, outs, cycle):
                    emitted = 1
                    self.prodreg = None
                else:
                    stalled = True
            else:
                self.prodreg = None
        if self.prodreg is None and self.inq:
            entry = self.inq[0]
            if entry.arrived >= self._need(self.word):
                lanes_re, lanes_im = [], []
                for p in range(self.cfg.n_pe):
                    i = self.word * self.cfg.n_pe + p
                    if i < self.cfg.n_inputs:
                        pr, pi = cmul3(
                            self.packed_re[self.word][p], self.packed_im[self.word][p],
                            int(entry.data[i]), int(entry.data_im[i]), self.fmt,
                        )
                        active += 1
                    else:
                        pr = pi = 0
                    lanes_re.append(pr)
                    lanes_im.append(pi)
                self.prodreg = [entry.sample, self.word, lanes_re, lanes_im, None, False]
                self._advance()
        if stalled:
            self.stalls += 1
        return active, stalled, emitted


# --------------------------------------------------------------- run reports

@dataclass(frozen=True)
class CycleReport:
    latency_cycles: int
    first_output_cycle: int
    cycles_per_sample: float
    stall_cycles: int
    total_cycles: int
    per_stage: dict = field(default_factory=dict)


def _spacing(completions, fallback: int) -> float:
    if len(completions) >= 2:
        return float(completions[-1] - completions[-2])
    return float(fallback)


def _ready_fn(ready):
    if ready is None:
        return lambda cycle: True
    if callable(ready):
        return ready
    seq = list(ready)
    if not seq:
        raise ConfigurationError("ready pattern must not be empty")
    return lambda cycle: bool(seq[(cycle - 1) % len(seq)])


def _max_cycles_default(n_samples: int, words: int) -> int:
    return 64 + 8 * (n_samples + 4) * (words + 4)


# ---------------------------------------------------------- stage-level runs

def simulate_stage(cfg: StageConfig, weights, biases, fmt: FxFormat, inputs,
                   ready=None, trace: bool = False, max_cycles=None):
    """Run one stage cycle by cycle over complete per-sample input vectors.

    ``inputs`` is int64 [N, n_inputs] for nbn/ibi or an (re, im) pair of such
    arrays for cmac.  ``ready`` throttles the collector: None (always ready),
    a callable of the cycle number, or a boolean sequence cycled modulo its
    length.  Returns (outputs, CycleReport, trace_records).
    """
    if cfg.kind == "cmac":
        x_re = np.asarray(inputs[0], dtype=np.int64)
        x_im = np.asarray(inputs[1], dtype=np.int64)
        n = x_re.shape[0]
        machine = _CmacMachine(cfg.kind, cfg, weights[0], weights[1], fmt)
        machine.inq = [_Entry(s, x_re[s], x_im[s]) for s in range(n)]
        out_re = np.zeros(n, dtype=np.int64)
        out_im = np.zeros(n, dtype=np.int64)
        per_sample = 1
    else:
        x = np.asarray(inputs, dtype=np.int64)
        n = x.shape[0]
        cls = _NbnMachine if cfg.kind == "nbn" else _IbiMachine
        machine = cls(cfg.kind, cfg, weights, biases, fmt)
        machine.inq = [_Entry(s, x[s]) for s in range(n)]
        out = np.zeros((n, cfg.n_neurons), dtype=np.int64)
        per_sample = cfg.n_neurons

    is_ready = _ready_fn(ready)
    records = [] if trace else None
    got = [0] * n
    completions = [0] * n
    first_cycle = 0
    done = 0

    def collect(sample, outs, cycle):
        nonlocal first_cycle, done
        if not is_ready(cycle):
            return False
        for idx, val in outs:
            if cfg.kind == "cmac":
                out_re[sample], out_im[sample] = val
            else:
                out[sample, idx] = val
        got[sample] += len(outs)
        completions[sample] = cycle
        if first_cycle == 0:
            first_cycle = cycle
        if got[sample] == per_sample:
            done += 1
        return True

    limit = max_cycles if max_cycles is not None else _max_cycles_default(n, machine.words)
    cycle = 0
    while done < n:
        cycle += 1
        if cycle > limit:
            raise NumericError(f"stage made no progress within {limit} cycles")
        active, stalled, emitted = machine.tick(cycle, collect)
        if records is not None:
            records.append(TraceRecord(cycle, machine.name, active, int(stalled), emitted))

    report = CycleReport(
        latency_cycles=completions[0] if n else 0,
        first_output_cycle=first_cycle,
        cycles_per_sample=_spacing(completions, machine.words),
        stall_cycles=machine.stalls,
        total_cycles=cycle,
        per_stage={machine.name: machine.stalls},
    )
    outputs = (out_re, out_im) if cfg.kind == "cmac" else out
    return outputs, report, records or []


# ------------------------------------------------------- canceller-level runs

class _MergeStage:
    """Denormalize the network output, add the FIR path, register the result."""

    def __init__(self, denorm_shift: int, fmt: FxFormat):
        self.shift = denorm_shift
        self.fmt = fmt
        self.r_fir = None   # (sample, re, im)
        self.r_ibi = None   # [sample, {neuron: value}]
        self.out_reg = None
        self.stalls = 0

    def tick(self, cycle: int, collect):
        emitted = 0
        if self.out_reg is not None:
            s, re, im = self.out_reg
            collect(s, re, im, cycle)
            self.out_reg = None
            emitted = 1
        if (
            self.out_reg is None
            and self.r_fir is not None
            and self.r_ibi is not None
            and len(self.r_ibi[1]) == 2
        ):
            s, fir_re, fir_im = self.r_fir
            if self.r_ibi[0] != s:
                raise NumericError("merge saw out-of-order samples")
            nn_re = shift_raw(self.r_ibi[1][0], self.shift, self.fmt)
            nn_im = shift_raw(self.r_ibi[1][1], self.shift, self.fmt)
            re, im = cadd(fir_re, fir_im, nn_re, nn_im, self.fmt)
            self.out_reg = (s, re, im)
            self.r_fir = None
            self.r_ibi = None
        return emitted


def simulate_nn_canceller(qnn: QuantNNModel, x, n_pe_hidden: int = 52,
                          n_pe_out: int = 4, n_pe_fir: int = 2,
                          fifo_depth: int = 2, trace: bool = False,
                          max_cycles=None):
    """Cycle-accurate run of the FIR + network canceller.

    The hidden stage feeds the output stage through a FIFO of ``fifo_depth``
    sample entries that fill as neuron values arrive.  Output values are
    collected from the merge register one cycle after the merge computes.
    Returns (re_raws, im_raws, CycleReport, trace_records).
    """
    if fifo_depth < 1:
        raise ConfigurationError("fifo_depth must be at least 1")
    fmt = qnn.fmt
    cfgs = nn_stage_configs(qnn, n_pe_hidden, n_pe_out, n_pe_fir)
    win_re, win_im = fx_window_raw(x, qnn.memory_len, fmt)
    win2 = np.hstack([win_re, win_im])
    n = win2.shape[0]

    hidden = _NbnMachine("hidden", cfgs["hidden"], qnn.w1, qnn.b1, fmt)
    output = _IbiMachine("output", cfgs["output"], qnn.w2, qnn.b2, fmt)
    fir = _CmacMachine("fir", cfgs["fir"], qnn.linear.taps_re, qnn.linear.taps_im, fmt)
    merge = _MergeStage(qnn.denorm_shift, fmt)

    hidden.inq = [_Entry(s, win2[s]) for s in range(n)]
    fir.inq = [_Entry(s, win_re[s], win_im[s]) for s in range(n)]
    fifo = output.inq  # hidden fills sample entries in place, output drains them

    def accept_hidden(sample, outs, cycle):
        if not fifo or fifo[-1].sample != sample:
            if len(fifo) >= fifo_depth:
                return False
            fifo.append(_Entry(sample, np.zeros(qnn.n_hidden, dtype=np.int64), arrived=0))
        entry = fifo[-1]
        for idx, val in outs:
            entry.data[idx] = val
        entry.arrived += len(outs)
        return True

    def accept_output(sample, outs, cycle):
        if merge.r_ibi is None:
            merge.r_ibi = [sample, {}]
        elif merge.r_ibi[0] != sample:
            return False
        merge.r_ibi[1].update(dict(outs))
        return True

    def accept_fir(sample, outs, cycle):
        if merge.r_fir is not None:
            return False
        merge.r_fir = (sample, outs[0][1][0], outs[0][1][1])
        return True

    out_re = np.zeros(n, dtype=np.int64)
    out_im = np.zeros(n, dtype=np.int64)
    completions = [0] * n
    collected = 0

    def collect(sample, re, im, cycle):
        nonlocal collected
        out_re[sample], out_im[sample] = re, im
        completions[sample] = cycle
        collected += 1

    words_max = max(c.words_per_sample for c in cfgs.values())
    limit = max_cycles if max_cycles is not None else _max_cycles_default(n, words_max) + 8 * n
    records = [] if trace else None
    cycle = 0
    while collected < n:
        cycle += 1
        if cycle > limit:
            raise NumericError(f"pipeline made no progress within {limit} cycles")
        merge.tick(cycle, collect)
        for machine, accept in (
            (output, accept_output), (hidden, accept_hidden), (fir, accept_fir),
        ):
            active, stalled, emitted = machine.tick(cycle, accept)
            if records is not None:
                records.append(TraceRecord(cycle, machine.name, active, int(stalled), emitted))

    per_stage = {"hidden": hidden.stalls, "output": output.stalls, "fir": fir.stalls}
    report = CycleReport(
        latency_cycles=completions[0] if n else 0,
        first_output_cycle=completions[0] if n else 0,
        cycles_per_sample=_spacing(completions, words_max),
        stall_cycles=sum(per_stage.values()),
        total_cycles=cycle,
        per_stage=per_stage,
    )
    return out_re, out_im, report, records or []


def simulate_poly_canceller(qpoly: QuantPolyModel, x, n_pe: int = 20,
                            trace: bool = False, max_cycles=None):
    """Cycle-accurate run of the memory-polynomial canceller MAC array.

    Basis terms stream from the ladder front end at line rate; the report
    covers the MAC array, whose term count must divide evenly over the PEs.
    Returns (re_raws, im_raws, CycleReport, trace_records).
    """
    total = num_basis(qpoly.memory_len, qpoly.max_order)
    if total % n_pe:
        raise ConfigurationError(f"n_pe must divide the {total} basis terms")
    b_re, b_im = poly_basis_raw(qpoly, x)
    cfg = StageConfig("cmac", n_pe, total)
    (out_re, out_im), report, records = simulate_stage(
        cfg, (qpoly.coef_re, qpoly.coef_im), None, qpoly.fmt, (b_re, b_im),
        trace=trace, max_cycles=max_cycles,
    )
    return out_re, out_im, report, records


def simulate_linear_canceller(qlin: QuantLinearModel, x, n_pe: int = 2,
                              trace: bool = False, max_cycles=None):
    """Cycle-accurate run of the FIR canceller alone (ragged schedule allowed)."""
    win_re, win_im = fx_window_raw(x, qlin.memory_len, qlin.fmt)
    cfg = StageConfig("cmac", n_pe, qlin.memory_len, ragged=True)
    (out_re, out_im), report, records = simulate_stage(
        cfg, (qlin.taps_re, qlin.taps_im), None, qlin.fmt, (win_re, win_im),
        trace=trace, max_cycles=max_cycles,
    )
    return out_re, out_im, report, records
