#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rcc/reservoir.hpp"

namespace rcc {

using IntMatrix = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>;
using Int64Matrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;
using Int64Vector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

inline std::int64_t qmin_code(int q) { return -(std::int64_t(1) << (q - 1)); }
inline std::int64_t qmax_code(int q) { return (std::int64_t(1) << (q - 1)) - 1; }

// Symmetric linear quantization parameters: x_int = round(scale * (x - bias)).
struct QuantParams {
    double scale = 1.0;
    double bias = 0.0;  // always 0 under the symmetric scheme; kept for generality
    int q = 8;
    bool flagged = false;  // degenerate (all-zero) source tensor
};

// Symmetric scheme: the extreme magnitude maps to the extreme positive code.
// q = 1 has no positive code, so the scale degenerates to 1/max|x| and the
// representable codes are {-1, 0}.
inline QuantParams compute_quant_params(const Eigen::MatrixXd& tensor, int q) {
    if (q < 1 || q > 8) throw std::invalid_argument("bit-width q must be in [1,8]");
    if (tensor.size() == 0) throw std::invalid_argument("empty tensor");
    if (!tensor.allFinite()) throw std::invalid_argument("non-finite tensor");
    QuantParams p;
    p.q = q;
    const double amax = tensor.cwiseAbs().maxCoeff();
    if (amax == 0.0) {
        p.scale = 1.0;
        p.flagged = true;
    } else {
        const double top = q == 1 ? 1.0 : static_cast<double>(qmax_code(q));
        p.scale = top / amax;
    }
    return p;
}

// Rounding is half-away-from-zero (llround), clamped to the q-bit range.
inline std::int64_t quantize_value(double x, const QuantParams& p) {
    const std::int64_t v = std::llround(p.scale * (x - p.bias));
    return std::clamp(v, qmin_code(p.q), qmax_code(p.q));
}

inline double dequantize_value(std::int64_t x_int, const QuantParams& p) {
    return static_cast<double>(x_int) / p.scale + p.bias;
}

inline IntMatrix quantize_tensor(const Eigen::MatrixXd& t, const QuantParams& p) {
    IntMatrix out(t.rows(), t.cols());
    for (long r = 0; r < t.rows(); ++r)
        for (long c = 0; c < t.cols(); ++c)
            out(r, c) = static_cast<std::int32_t>(quantize_value(t(r, c), p));
    return out;
}

// ---- Streamlined activation ------------------------------------------------
//
// The integer accumulator carries an implied scale `acc_scale`: its float
// value is acc / acc_scale. Applying the table to an accumulator equals
// quantize(f(acc / acc_scale)) with the given state quantizer, for every
// representable accumulator value. Thresholds are found by binary search on
// that composition, so equality is exact by construction.
struct ThresholdTable {
    std::vector<std::int64_t> thresholds;  // non-decreasing, 2^q - 1 entries
    std::vector<std::int64_t> codes;       // non-decreasing, 2^q entries
    int q_act = 0;
    double acc_scale = 1.0;

    std::int64_t apply(std::int64_t acc) const {
        const auto it =
            std::upper_bound(thresholds.begin(), thresholds.end(), acc);
        return codes[static_cast<std::size_t>(it - thresholds.begin())];
    }

    // Real code transitions (skips the low-end padding): pairs of
    // (threshold, code reached at or above it). Hardware comparators come
    // from this list; the padded entries exist only to fix the table shape.
    std::vector<std::pair<std::int64_t, std::int64_t>> transitions() const {
        std::vector<std::pair<std::int64_t, std::int64_t>> out;
        for (std::size_t i = 0; i < thresholds.size(); ++i)
            if (codes[i + 1] != codes[i]) out.emplace_back(thresholds[i], codes[i + 1]);
        return out;
    }
};

inline ThresholdTable build_thresholds(int q_act, double acc_scale,
                                       const QuantParams& state_params,
                                       Activation act = Activation::hardtanh,
                                       std::int64_t acc_min = -(std::int64_t(1) << 62),
                                       std::int64_t acc_max = (std::int64_t(1) << 62)) {
    if (q_act < 1 || q_act > 8) throw std::invalid_argument("q_act must be in [1,8]");
    if (acc_scale <= 0.0) throw std::invalid_argument("acc_scale must be > 0");

    auto composed = [&](std::int64_t acc) {
        return quantize_value(
            apply_activation(act, static_cast<double>(acc) / acc_scale),
            state_params);
    };

    const std::int64_t c_lo = composed(acc_min);
    const std::int64_t c_hi = composed(acc_max);

    // Smallest accumulator whose composed output reaches each code above c_lo.
    std::vector<std::int64_t> real_thresholds;
    std::vector<std::int64_t> real_codes{c_lo};
    for (std::int64_t code = c_lo + 1; code <= c_hi; ++code) {
        std::int64_t lo = acc_min, hi = acc_max;  // composed(hi) >= code
        while (lo < hi) {
            // Unsigned difference: lo and hi may straddle most of the int64
            // range, so (hi - lo) can overflow signed arithmetic.
            const std::uint64_t span = static_cast<std::uint64_t>(hi) -
                                       static_cast<std::uint64_t>(lo);
            const std::int64_t mid =
                lo + static_cast<std::int64_t>(span / 2);
            if (composed(mid) >= code)
                hi = mid;
            else
                lo = mid + 1;
        }
        if (composed(lo) < code)
            throw std::runtime_error("build_thresholds: unreachable code (scale bug)");
        real_thresholds.push_back(lo);
        real_codes.push_back(composed(lo));
    }

    // Pad at the low end to the fixed 2^q - 1 / 2^q table shape: duplicate
    // the bottom code under synthetic thresholds below every real one.
    ThresholdTable table;
    table.q_act = q_act;
    table.acc_scale = acc_scale;
    const std::size_t want = (std::size_t(1) << q_act) - 1;
    if (real_thresholds.size() > want)
        throw std::runtime_error("build_thresholds: too many transitions (scale bug)");
    const std::size_t pad = want - real_thresholds.size();
    const std::int64_t first =
        real_thresholds.empty() ? 0 : real_thresholds.front();
    for (std::size_t i = 0; i < pad; ++i) {
        table.thresholds.push_back(first - static_cast<std::int64_t>(pad - i));
        table.codes.push_back(c_lo);
    }
    table.thresholds.insert(table.thresholds.end(), real_thresholds.begin(),
                            real_thresholds.end());
    table.codes.insert(table.codes.end(), real_codes.begin(), real_codes.end());

    // A coarse accumulator scale can make several codes first reachable at
    // the same accumulator value, so equal adjacent thresholds are legal;
    // each duplicate still costs one comparator in hardware.
    for (std::size_t i = 1; i < table.thresholds.size(); ++i)
        if (table.thresholds[i] < table.thresholds[i - 1])
            throw std::runtime_error("build_thresholds: non-monotone thresholds");
    for (std::size_t i = 1; i < table.codes.size(); ++i)
        if (table.codes[i] < table.codes[i - 1])
            throw std::runtime_error("build_thresholds: non-monotone codes");
    return table;
}

// ---- Quantized model -------------------------------------------------------

struct PruneMask {
    std::vector<std::pair<int, int>> pruned;  // removed w_r positions
    double rate = 0.0;                        // percent
};

struct QuantizedModel {
    int q = 8;
    long n = 0;
    long d_in = 0;
    IntMatrix w_in_int;  // N x d_in
    Int64Vector bias_int;  // per-neuron bias at accumulator scale
    IntMatrix w_r_int;   // N x N
    std::vector<std::pair<int, int>> nonzeros;  // surviving w_r positions
    QuantParams p_w_in, p_w_r, p_state, p_input;
    ThresholdTable table;
    PruneMask mask;
    Eigen::MatrixXd w_out;   // float readout (measurement path)
    Int64Matrix w_out_int;   // q-bit readout (hardware path)
    QuantParams p_w_out;
    int acc_width = 0;       // accumulator bit-width, overflow-free by construction
    std::uint64_t source_seed = 0;  // provenance: seed of the float model

    double acc_scale() const { return table.acc_scale; }
};

inline int ceil_log2(long x) {
    int b = 0;
    while ((1L << b) < x) ++b;
    return b;
}

inline int signed_width_for_value(std::int64_t v) {
    int w = 1;
    while (v < -(std::int64_t(1) << (w - 1)) ||
           v > (std::int64_t(1) << (w - 1)) - 1)
        ++w;
    return w;
}

// Quantizes a trained float model. The recurrent weights and state codes use
// the symmetric q-bit per-tensor scheme; inputs get their own q-bit scale
// from the training range. W_in then absorbs the alignment:
//   scale_win = scale_wr * scale_state / scale_in
// so W_in_int*u_int and W_r_int*s_int both carry acc_scale = scale_wr *
// scale_state, sharing one threshold table. W_in's integers may need more
// than q bits, but they are compile-time constants (CSD shift/add chains in
// hardware), whereas runtime input codes stay q-bit and never clamp inside
// the training range. Requires lr = 1 (all reference configurations).
inline QuantizedModel quantize_model(const ReservoirModel& m, int q) {
    if (!m.trained()) throw std::runtime_error("quantize_model: untrained model");
    if (m.hp.leaking_rate != 1.0)
        throw std::invalid_argument(
            "quantize_model: integer forward requires leaking rate 1");

    QuantizedModel qm;
    qm.q = q;
    qm.n = m.n;
    qm.d_in = m.d_in;
    qm.source_seed = m.hp.seed;

    qm.p_w_r = compute_quant_params(m.w_r, q);
    qm.p_state.q = q;
    qm.p_state.scale = q == 1 ? 1.0 : static_cast<double>(qmax_code(q));

    qm.w_r_int = IntMatrix::Zero(m.n, m.n);
    for (const auto& [r, c] : m.nonzeros)
        qm.w_r_int(r, c) = static_cast<std::int32_t>(
            quantize_value(m.w_r(r, c), qm.p_w_r));
    qm.nonzeros = m.nonzeros;

    const double acc_scale = qm.p_w_r.scale * qm.p_state.scale;
    qm.p_input.q = q;
    qm.p_input.scale =
        (q == 1 ? 1.0 : static_cast<double>(qmax_code(q))) / m.input_absmax;

    qm.p_w_in.q = 30;  // static constants, wide enough to never clamp
    qm.p_w_in.scale = acc_scale / qm.p_input.scale;
    qm.w_in_int = quantize_tensor(m.w_in, qm.p_w_in);

    // Bias joins the accumulator directly, so it quantizes at acc_scale.
    qm.bias_int = Int64Vector::Zero(m.n);
    if (m.bias.size() > 0)
        for (long i = 0; i < m.n; ++i)
            qm.bias_int(i) = std::llround(m.bias(i) * acc_scale);

    qm.table = build_thresholds(q, acc_scale, qm.p_state, m.hp.activation);

    qm.w_out = m.w_out;
    qm.p_w_out = compute_quant_params(m.w_out, q);
    qm.w_out_int.resize(m.w_out.rows(), m.w_out.cols());
    for (long r = 0; r < m.w_out.rows(); ++r)
        for (long c = 0; c < m.w_out.cols(); ++c)
            qm.w_out_int(r, c) = quantize_value(m.w_out(r, c), qm.p_w_out);

    // Overflow-free accumulator width from the actual integer maxima: n
    // recurrent products of two q-bit codes plus the input partial, whose
    // weights may be wider than q bits.
    const std::int64_t w_in_absmax =
        qm.w_in_int.size() > 0
            ? static_cast<std::int64_t>(qm.w_in_int.cwiseAbs().maxCoeff())
            : 0;
    const std::int64_t bias_absmax =
        qm.bias_int.size() > 0
            ? static_cast<std::int64_t>(qm.bias_int.cwiseAbs().maxCoeff())
            : 0;
    const std::int64_t bound = m.n * qmax_code(q) * qmax_code(q) +
                               m.d_in * w_in_absmax * qmax_code(q) +
                               bias_absmax;
    qm.acc_width = std::max(2 * q + ceil_log2(m.n + m.d_in) + 1,
                            signed_width_for_value(bound) + 1);
    return qm;
}

// ---- Integer forward pass --------------------------------------------------

struct QuantForwardResult {
    IntMatrix states;          // T x N, integer state codes
    Int64Matrix outputs_int;   // T x d_out, integer readout (hardware path)
    Eigen::MatrixXd predictions;  // T x d_out, float readout on dequantized states
};

// Precomputed W_in_int * u_int per time step; flips touch only W_r, so this
// part of the accumulator can be shared across a sensitivity sweep. Must be
// bit-transparent with the direct path.
struct InputPartials {
    Int64Matrix partials;  // T x N
    IntMatrix u_int;       // T x d_in
};

inline IntMatrix quantize_inputs(const QuantizedModel& qm,
                                 const Eigen::MatrixXd& inputs) {
    IntMatrix u(inputs.rows(), inputs.cols());
    for (long t = 0; t < inputs.rows(); ++t)
        for (long c = 0; c < inputs.cols(); ++c)
            u(t, c) = static_cast<std::int32_t>(
                quantize_value(inputs(t, c), qm.p_input));
    return u;
}

inline InputPartials compute_input_partials(const QuantizedModel& qm,
                                            const Eigen::MatrixXd& inputs) {
    InputPartials ip;
    ip.u_int = quantize_inputs(qm, inputs);
    ip.partials = Int64Matrix::Zero(inputs.rows(), qm.n);
    for (long t = 0; t < inputs.rows(); ++t)
        for (long i = 0; i < qm.n; ++i) {
            std::int64_t acc =
                qm.bias_int.size() > 0 ? qm.bias_int(i) : 0;
            for (long j = 0; j < qm.d_in; ++j)
                acc += static_cast<std::int64_t>(qm.w_in_int(i, j)) *
                       ip.u_int(t, j);
            ip.partials(t, i) = acc;
        }
    return ip;
}

// State update entirely in integers: accumulate, threshold-activate. When
// seq_length > 0 the state resets to zero at every sequence boundary.
inline QuantForwardResult quantized_forward(const QuantizedModel& qm,
                                            const Eigen::MatrixXd& inputs,
                                            long seq_length = 0,
                                            const InputPartials* cached = nullptr) {
    const long t_total = inputs.rows();
    if (t_total < 1) throw std::invalid_argument("quantized_forward: empty series");
    if (inputs.cols() != qm.d_in)
        throw std::invalid_argument("quantized_forward: input dimension mismatch");

    InputPartials local;
    const InputPartials* ip = cached;
    if (ip == nullptr) {
        local = compute_input_partials(qm, inputs);
        ip = &local;
    }

    const std::int64_t acc_limit = std::int64_t(1) << (qm.acc_width - 1);
    const long d_out = qm.w_out.rows();

    QuantForwardResult res;
    res.states.resize(t_total, qm.n);
    res.outputs_int.resize(t_total, d_out);
    res.predictions.resize(t_total, d_out);

    // CSR view of the surviving reservoir weights.
    std::vector<long> row_ptr(static_cast<std::size_t>(qm.n + 1), 0);
    std::vector<std::int32_t> cols, vals;
    cols.reserve(qm.nonzeros.size());
    vals.reserve(qm.nonzeros.size());
    for (const auto& [r, c] : qm.nonzeros)
        ++row_ptr[static_cast<std::size_t>(r + 1)];
    for (long i = 0; i < qm.n; ++i)
        row_ptr[static_cast<std::size_t>(i + 1)] +=
            row_ptr[static_cast<std::size_t>(i)];
    for (const auto& [r, c] : qm.nonzeros) {  // nonzeros is row-major sorted
        cols.push_back(c);
        vals.push_back(qm.w_r_int(r, c));
    }

    std::vector<std::int64_t> s(static_cast<std::size_t>(qm.n), 0);
    std::vector<std::int64_t> s_next(static_cast<std::size_t>(qm.n), 0);
    for (long t = 0; t < t_total; ++t) {
        if (seq_length > 0 && t % seq_length == 0)
            std::fill(s.begin(), s.end(), 0);
        for (long i = 0; i < qm.n; ++i) {
            std::int64_t acc = ip->partials(t, i);
            for (long k = row_ptr[static_cast<std::size_t>(i)];
                 k < row_ptr[static_cast<std::size_t>(i + 1)]; ++k)
                acc += static_cast<std::int64_t>(vals[static_cast<std::size_t>(k)]) *
                       s[static_cast<std::size_t>(cols[static_cast<std::size_t>(k)])];
            if (acc <= -acc_limit || acc >= acc_limit)
                throw std::runtime_error(
                    "quantized_forward: accumulator overflow (internal error)");
            s_next[static_cast<std::size_t>(i)] = qm.table.apply(acc);
        }
        std::swap(s, s_next);
        for (long i = 0; i < qm.n; ++i)
            res.states(t, i) = static_cast<std::int32_t>(
                s[static_cast<std::size_t>(i)]);
        for (long o = 0; o < d_out; ++o) {
            std::int64_t acc = 0;
            double facc = 0.0;
            for (long i = 0; i < qm.n; ++i) {
                acc += qm.w_out_int(o, i) * s[static_cast<std::size_t>(i)];
                facc += qm.w_out(o, i) *
                        dequantize_value(s[static_cast<std::size_t>(i)],
                                         qm.p_state);
            }
            res.outputs_int(t, o) = acc;
            res.predictions(t, o) = facc;
        }
    }
    return res;
}

// ---- Evaluation sets -------------------------------------------------------

// A self-contained slice of a dataset for measuring Performance: inputs plus
// regression targets or per-sequence labels.
struct EvalSet {
    TaskKind task = TaskKind::regression;
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd targets;  // regression
    std::vector<int> labels;  // classification
    long seq_length = 0;
    int n_classes = 0;
    std::string id;
};

// Held-out calibration slice: last 20% of the training split. Sensitivity
// sweeps measure Perf here so the test split is never touched during scoring.
inline EvalSet make_calibration_set(const TimeSeriesDataset& ds) {
    EvalSet es;
    es.task = ds.task;
    es.id = ds.id + ":calibration";
    if (ds.task == TaskKind::regression) {
        const long n_cal = std::max<long>(1, ds.n_train / 5);
        const long begin = ds.n_train - n_cal;
        es.inputs = ds.inputs.middleRows(begin, n_cal);
        es.targets = ds.targets.middleRows(begin, n_cal);
    } else {
        const long n_cal = std::max<long>(1, ds.n_train / 5);
        const long begin = ds.n_train - n_cal;
        es.seq_length = ds.seq_length;
        es.n_classes = ds.n_classes;
        es.inputs = ds.inputs.middleRows(begin * ds.seq_length,
                                         n_cal * ds.seq_length);
        es.labels.assign(ds.labels.begin() + begin,
                         ds.labels.begin() + begin + n_cal);
    }
    return es;
}

inline EvalSet make_test_set(const TimeSeriesDataset& ds) {
    EvalSet es;
    es.task = ds.task;
    es.id = ds.id + ":test";
    if (ds.task == TaskKind::regression) {
        es.inputs = ds.inputs.middleRows(ds.n_train, ds.n_test);
        es.targets = ds.targets.middleRows(ds.n_train, ds.n_test);
    } else {
        es.seq_length = ds.seq_length;
        es.n_classes = ds.n_classes;
        es.inputs = ds.inputs.middleRows(ds.n_train * ds.seq_length,
                                         ds.n_test * ds.seq_length);
        es.labels.assign(ds.labels.begin() + ds.n_train, ds.labels.end());
    }
    return es;
}

inline Performance score_eval_set(const EvalSet& es,
                                  const Eigen::MatrixXd& preds) {
    Performance perf;
    if (es.task == TaskKind::regression) {
        perf.kind = Performance::Kind::rmse;
        const Eigen::MatrixXd diff = preds - es.targets;
        perf.value = std::sqrt(diff.array().square().sum() /
                               static_cast<double>(diff.size()));
    } else {
        perf.kind = Performance::Kind::accuracy;
        const long n_seq = static_cast<long>(es.labels.size());
        long correct = 0;
        for (long s = 0; s < n_seq; ++s) {
            const Eigen::VectorXd mean =
                preds.middleRows(s * es.seq_length, es.seq_length)
                    .colwise()
                    .mean();
            Eigen::Index arg;
            mean.maxCoeff(&arg);
            if (static_cast<int>(arg) == es.labels[static_cast<std::size_t>(s)])
                ++correct;
        }
        perf.value = static_cast<double>(correct) / static_cast<double>(n_seq);
    }
    return perf;
}

// Integer forward from zero state over the whole set, float readout scored.
inline Performance evaluate_quantized(const QuantizedModel& qm,
                                      const EvalSet& es,
                                      const InputPartials* cached = nullptr) {
    if (es.inputs.rows() < 1)
        throw std::invalid_argument("evaluate_quantized: empty evaluation set");
    const QuantForwardResult r =
        quantized_forward(qm, es.inputs, es.seq_length, cached);
    return score_eval_set(es, r.predictions);
}

// Refits the linear readout to the model's own integer state trace on the
// training split. The reservoir weights are untouched; only the ridge solve
// is repeated, so the quantized (and possibly pruned) dynamics are read by a
// readout that was fit to them rather than to the float states.
inline void retrain_readout(QuantizedModel& qm, const TimeSeriesDataset& ds,
                            double lambda) {
    Eigen::MatrixXd states, targets_w;
    if (ds.task == TaskKind::regression) {
        const long t_train = ds.n_train;
        if (t_train < 2)
            throw std::invalid_argument("retrain_readout: training split too small");
        const auto fw = quantized_forward(qm, ds.inputs.topRows(t_train));
        const long w = washout_length(t_train);
        states.resize(t_train - w, qm.n);
        for (long t = 0; t < t_train - w; ++t)
            for (long i = 0; i < qm.n; ++i)
                states(t, i) =
                    dequantize_value(fw.states(w + t, i), qm.p_state);
        targets_w = ds.targets.middleRows(w, t_train - w);
    } else {
        const long n_seq = ds.n_train;
        const long len = ds.seq_length;
        if (n_seq < 1)
            throw std::invalid_argument("retrain_readout: no training sequences");
        const auto fw = quantized_forward(qm, ds.inputs.topRows(n_seq * len), len);
        states.resize(n_seq * len, qm.n);
        for (long t = 0; t < n_seq * len; ++t)
            for (long i = 0; i < qm.n; ++i)
                states(t, i) = dequantize_value(fw.states(t, i), qm.p_state);
        targets_w = Eigen::MatrixXd::Zero(n_seq * len, ds.n_classes);
        for (long s = 0; s < n_seq; ++s)
            targets_w.block(s * len, ds.labels[static_cast<std::size_t>(s)],
                            len, 1).setOnes();
    }
    qm.w_out = train_readout(states, targets_w, lambda);
    qm.p_w_out = compute_quant_params(qm.w_out, qm.q);
    qm.w_out_int.resize(qm.w_out.rows(), qm.w_out.cols());
    for (long r = 0; r < qm.w_out.rows(); ++r)
        for (long c = 0; c < qm.w_out.cols(); ++c)
            qm.w_out_int(r, c) = quantize_value(qm.w_out(r, c), qm.p_w_out);
}

}  // namespace rcc
