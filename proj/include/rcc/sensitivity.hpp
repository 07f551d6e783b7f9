#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcc/parallel.hpp"
#include "rcc/quantize.hpp"

namespace rcc {

// XOR of bit position b-1 of the q-bit two's-complement encoding,
// reinterpreted as signed. Involution by construction.
inline std::int64_t flip_bit(std::int64_t w, int b, int q) {
    if (b < 1 || b > q) throw std::invalid_argument("flip_bit: bit position out of range");
    if (w < qmin_code(q) || w > qmax_code(q))
        throw std::invalid_argument("flip_bit: value outside q-bit range");
    const std::uint64_t mask = (q == 64) ? ~0ULL : ((std::uint64_t(1) << q) - 1);
    std::uint64_t enc = static_cast<std::uint64_t>(w) & mask;
    enc ^= std::uint64_t(1) << (b - 1);
    // Sign-extend from bit q-1.
    if (enc & (std::uint64_t(1) << (q - 1))) enc |= ~mask;
    return static_cast<std::int64_t>(enc);
}

struct SensitivityReport {
    std::vector<double> scores;         // aligned with model nonzeros
    std::vector<std::size_t> ranking;   // indices into scores, ascending
    int q = 0;
    std::string calibration_id;
    Performance base_perf;
    std::string pruner = "sensitivity";
};

// FNV-1a over the integer reservoir weights; used to assert a sensitivity
// sweep leaves the model untouched.
inline std::uint64_t weight_checksum(const QuantizedModel& qm) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [r, c] : qm.nonzeros) {
        mix(static_cast<std::uint64_t>(r));
        mix(static_cast<std::uint64_t>(c));
        mix(static_cast<std::uint64_t>(qm.w_r_int(r, c)));
    }
    return h;
}

// Ascending stable sort of weight indices by score; ties break by the
// (row, col) position of the weight.
inline std::vector<std::size_t> rank_weights(
    const std::vector<double>& scores,
    const std::vector<std::pair<int, int>>& positions) {
    if (scores.size() != positions.size())
        throw std::invalid_argument("rank_weights: score/position size mismatch");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return positions[a] < positions[b];
    });
    return idx;
}

// Mean absolute Perf deviation over the q single-bit flips of one weight,
// measured on the calibration set against the cached base Perf. The model is
// copied per evaluation; the input-to-reservoir partial sums are shared since
// flips only touch W_r.
inline double sensitivity_score(const QuantizedModel& qm, std::size_t weight_index,
                                const EvalSet& calib, const InputPartials& partials,
                                const Performance& base) {
    if (weight_index >= qm.nonzeros.size())
        throw std::invalid_argument("sensitivity_score: weight index out of range");
    if (calib.inputs.rows() < 1)
        throw std::invalid_argument("sensitivity_score: empty calibration set");
    const auto [r, c] = qm.nonzeros[weight_index];
    const std::int64_t original = qm.w_r_int(r, c);
    QuantizedModel probe = qm;
    double total = 0.0;
    for (int b = 1; b <= qm.q; ++b) {
        probe.w_r_int(r, c) =
            static_cast<std::int32_t>(flip_bit(original, b, qm.q));
        const Performance flipped = evaluate_quantized(probe, calib, &partials);
        total += std::abs(base.value - flipped.value);
        probe.w_r_int(r, c) = static_cast<std::int32_t>(original);
    }
    return total / static_cast<double>(qm.q);
}

inline SensitivityReport compute_sensitivity(const QuantizedModel& qm,
                                             const EvalSet& calib,
                                             unsigned jobs = 1) {
    if (calib.inputs.rows() < 1)
        throw std::invalid_argument("compute_sensitivity: empty calibration set");
    const InputPartials partials = compute_input_partials(qm, calib.inputs);
    SensitivityReport report;
    report.q = qm.q;
    report.calibration_id = calib.id;
    report.base_perf = evaluate_quantized(qm, calib, &partials);
    report.scores.resize(qm.nonzeros.size());
    parallel_for(qm.nonzeros.size(), jobs, [&](std::size_t i) {
        report.scores[i] =
            sensitivity_score(qm, i, calib, partials, report.base_perf);
    });
    report.ranking = rank_weights(report.scores, qm.nonzeros);
    return report;
}

// Functional pruning: zeroes the lowest-ranked round(p% * ncrl) weights and
// removes them from the stored-nonzero set. The input model is untouched.
inline QuantizedModel prune(const QuantizedModel& qm,
                            const std::vector<std::size_t>& ranking, double p) {
    if (p < 0.0 || p > 100.0)
        throw std::invalid_argument("prune: rate must be in [0,100]");
    if (ranking.size() != qm.nonzeros.size())
        throw std::invalid_argument("prune: ranking does not cover current nonzeros");
    const auto n_prune = static_cast<std::size_t>(
        std::llround(p / 100.0 * static_cast<double>(qm.nonzeros.size())));

    QuantizedModel out = qm;
    out.mask.rate = p;
    out.mask.pruned.clear();
    std::vector<bool> removed(qm.nonzeros.size(), false);
    for (std::size_t i = 0; i < n_prune; ++i) {
        const std::size_t w = ranking[i];
        removed[w] = true;
        const auto& [r, c] = qm.nonzeros[w];
        out.w_r_int(r, c) = 0;
        out.mask.pruned.emplace_back(r, c);
    }
    std::sort(out.mask.pruned.begin(), out.mask.pruned.end());
    out.nonzeros.clear();
    for (std::size_t i = 0; i < qm.nonzeros.size(); ++i)
        if (!removed[i]) out.nonzeros.push_back(qm.nonzeros[i]);
    return out;
}

}  // namespace rcc
