#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcc/quantize.hpp"
#include "rcc/rng.hpp"
#include "rcc/sensitivity.hpp"

namespace rcc {

enum class PrunerKind {
    random,
    mutual_information,
    spearman,
    pca,
    lasso,
    sensitivity
};

inline std::string to_string(PrunerKind k) {
    switch (k) {
        case PrunerKind::random: return "random";
        case PrunerKind::mutual_information: return "mi";
        case PrunerKind::spearman: return "spearman";
        case PrunerKind::pca: return "pca";
        case PrunerKind::lasso: return "lasso";
        case PrunerKind::sensitivity: return "sensitivity";
    }
    throw std::logic_error("unreachable");
}

inline PrunerKind pruner_from_string(const std::string& s) {
    if (s == "random") return PrunerKind::random;
    if (s == "mi") return PrunerKind::mutual_information;
    if (s == "spearman") return PrunerKind::spearman;
    if (s == "pca") return PrunerKind::pca;
    if (s == "lasso") return PrunerKind::lasso;
    if (s == "sensitivity") return PrunerKind::sensitivity;
    throw std::invalid_argument("unknown pruner: " + s);
}

namespace detail {

// Calibration-set state trace (dequantized) and target matrix. Classification
// targets are per-step one-hot labels.
struct CalibTrace {
    Eigen::MatrixXd states;   // T x N
    Eigen::MatrixXd targets;  // T x d_out
};

inline CalibTrace calib_trace(const QuantizedModel& qm, const EvalSet& calib) {
    const QuantForwardResult r =
        quantized_forward(qm, calib.inputs, calib.seq_length);
    CalibTrace ct;
    ct.states.resize(r.states.rows(), r.states.cols());
    for (long t = 0; t < r.states.rows(); ++t)
        for (long i = 0; i < r.states.cols(); ++i)
            ct.states(t, i) = dequantize_value(r.states(t, i), qm.p_state);
    if (calib.task == TaskKind::regression) {
        ct.targets = calib.targets;
    } else {
        ct.targets = Eigen::MatrixXd::Zero(calib.inputs.rows(), calib.n_classes);
        for (std::size_t s = 0; s < calib.labels.size(); ++s)
            ct.targets
                .block(static_cast<long>(s) * calib.seq_length,
                       calib.labels[s], calib.seq_length, 1)
                .setOnes();
    }
    return ct;
}

// Average-tie ranks, 1-based.
inline Eigen::VectorXd tied_ranks(const Eigen::VectorXd& v) {
    const long n = v.size();
    std::vector<long> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0L);
    std::sort(idx.begin(), idx.end(),
              [&](long a, long b) { return v(a) < v(b); });
    Eigen::VectorXd ranks(n);
    long i = 0;
    while (i < n) {
        long j = i;
        while (j + 1 < n && v(idx[static_cast<std::size_t>(j + 1)]) ==
                                v(idx[static_cast<std::size_t>(i)]))
            ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (long k = i; k <= j; ++k)
            ranks(idx[static_cast<std::size_t>(k)]) = avg;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::VectorXd ac = a.array() - a.mean();
    const Eigen::VectorXd bc = b.array() - b.mean();
    const double denom = ac.norm() * bc.norm();
    if (denom < 1e-300) return 0.0;
    return ac.dot(bc) / denom;
}

// Neuron importances broadcast to weight scores: the weight w_r(r, c) feeds
// neuron r, so it inherits the destination-neuron importance.
inline SensitivityReport importance_report(const QuantizedModel& qm,
                                           const Eigen::VectorXd& importance,
                                           PrunerKind kind,
                                           const std::string& calib_id) {
    SensitivityReport rep;
    rep.q = qm.q;
    rep.pruner = to_string(kind);
    rep.calibration_id = calib_id;
    rep.scores.resize(qm.nonzeros.size());
    for (std::size_t i = 0; i < qm.nonzeros.size(); ++i)
        rep.scores[i] = importance(qm.nonzeros[i].first);
    rep.ranking = rank_weights(rep.scores, qm.nonzeros);
    return rep;
}

// Equal-frequency bin index per sample; ties broken by sample index so the
// assignment is deterministic.
inline std::vector<int> equal_frequency_bins(const Eigen::VectorXd& v,
                                             int n_bins, bool& degenerate) {
    const long n = v.size();
    std::vector<long> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0L);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](long a, long b) { return v(a) < v(b); });
    degenerate = v.maxCoeff() == v.minCoeff();
    std::vector<int> bins(static_cast<std::size_t>(n));
    for (long pos = 0; pos < n; ++pos)
        bins[static_cast<std::size_t>(idx[static_cast<std::size_t>(pos)])] =
            static_cast<int>((pos * n_bins) / n);
    return bins;
}

inline double mutual_information_nats(const std::vector<int>& a,
                                      const std::vector<int>& b, int n_bins) {
    const double n = static_cast<double>(a.size());
    std::vector<double> joint(static_cast<std::size_t>(n_bins) * n_bins, 0.0);
    std::vector<double> pa(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<double> pb(static_cast<std::size_t>(n_bins), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[static_cast<std::size_t>(a[i]) * n_bins + b[i]] += 1.0;
        pa[static_cast<std::size_t>(a[i])] += 1.0;
        pb[static_cast<std::size_t>(b[i])] += 1.0;
    }
    double mi = 0.0;
    for (int x = 0; x < n_bins; ++x)
        for (int y = 0; y < n_bins; ++y) {
            const double pxy = joint[static_cast<std::size_t>(x) * n_bins + y] / n;
            if (pxy <= 0.0) continue;
            mi += pxy * std::log(pxy * n * n / (pa[static_cast<std::size_t>(x)] *
                                                pb[static_cast<std::size_t>(y)]));
        }
    return std::max(mi, 0.0);
}

}  // namespace detail

// I.i.d. uniform scores per weight, deterministic per seed.
inline SensitivityReport random_scores(const QuantizedModel& qm,
                                       std::uint64_t seed) {
    Rng rng(seed);
    SensitivityReport rep;
    rep.q = qm.q;
    rep.pruner = to_string(PrunerKind::random);
    rep.scores.resize(qm.nonzeros.size());
    for (auto& s : rep.scores) s = rng.next_double();
    rep.ranking = rank_weights(rep.scores, qm.nonzeros);
    return rep;
}

// Neuron importance = max over output channels of |Spearman rank correlation|
// between the neuron's state trace and the target.
inline SensitivityReport spearman_scores(const QuantizedModel& qm,
                                         const EvalSet& calib) {
    const auto ct = detail::calib_trace(qm, calib);
    const long n = ct.states.cols();
    std::vector<Eigen::VectorXd> target_ranks;
    for (long c = 0; c < ct.targets.cols(); ++c)
        target_ranks.push_back(detail::tied_ranks(ct.targets.col(c)));
    Eigen::VectorXd importance(n);
    for (long j = 0; j < n; ++j) {
        const Eigen::VectorXd sr = detail::tied_ranks(ct.states.col(j));
        double best = 0.0;
        for (const auto& tr : target_ranks)
            best = std::max(best, std::abs(detail::pearson(sr, tr)));
        importance(j) = best;
    }
    return detail::importance_report(qm, importance, PrunerKind::spearman,
                                     calib.id);
}

// Neuron importance = histogram mutual information I(s_j; y) with
// equal-frequency binning, max over output channels.
inline SensitivityReport mi_scores(const QuantizedModel& qm,
                                   const EvalSet& calib, int n_bins = 8) {
    if (n_bins < 2) throw std::invalid_argument("mi_scores: n_bins must be >= 2");
    const auto ct = detail::calib_trace(qm, calib);
    const long n = ct.states.cols();
    std::vector<std::vector<int>> target_bins;
    std::vector<bool> target_degenerate;
    for (long c = 0; c < ct.targets.cols(); ++c) {
        bool deg = false;
        target_bins.push_back(
            detail::equal_frequency_bins(ct.targets.col(c), n_bins, deg));
        target_degenerate.push_back(deg);
    }
    Eigen::VectorXd importance(n);
    for (long j = 0; j < n; ++j) {
        bool deg = false;
        const auto sb =
            detail::equal_frequency_bins(ct.states.col(j), n_bins, deg);
        double best = 0.0;
        if (!deg)
            for (std::size_t c = 0; c < target_bins.size(); ++c)
                if (!target_degenerate[c])
                    best = std::max(best, detail::mutual_information_nats(
                                              sb, target_bins[c], n_bins));
        importance(j) = best;
    }
    return detail::importance_report(qm, importance,
                                     PrunerKind::mutual_information, calib.id);
}

// Neuron importance = sum over the top-k principal components of
// explained-variance-ratio times the neuron's squared loading.
inline SensitivityReport pca_scores(const QuantizedModel& qm,
                                    const EvalSet& calib, int k) {
    const auto ct = detail::calib_trace(qm, calib);
    const long n = ct.states.cols();
    if (k < 1 || k > n) throw std::invalid_argument("pca_scores: k out of range");
    const Eigen::MatrixXd centered =
        ct.states.rowwise() - ct.states.colwise().mean();
    const Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(ct.states.rows());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    // Eigenvalues ascending; walk from the top, skipping numerically
    // nonpositive components (rank-deficient trace uses what is available).
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    const double total = ev.sum();
    Eigen::VectorXd importance = Eigen::VectorXd::Zero(n);
    if (total > 0.0) {
        for (int i = 0; i < k; ++i) {
            const long idx = n - 1 - i;
            if (ev(idx) <= 0.0) break;
            const double ratio = ev(idx) / total;
            importance += ratio * es.eigenvectors().col(idx).array().square().matrix();
        }
    }
    return detail::importance_report(qm, importance, PrunerKind::pca, calib.id);
}

// L1-regularized least squares by cyclic coordinate descent with soft
// thresholding: minimize 0.5*||y - X*beta||^2 + alpha*||beta||_1.
inline Eigen::VectorXd lasso_coordinate_descent(const Eigen::MatrixXd& x,
                                                const Eigen::VectorXd& y,
                                                double alpha,
                                                double gap_tol = 1e-6,
                                                long max_sweeps = 10000) {
    if (alpha <= 0.0) throw std::invalid_argument("lasso: alpha must be > 0");
    const long n_feat = x.cols();
    Eigen::VectorXd col_sq(n_feat);
    for (long j = 0; j < n_feat; ++j) col_sq(j) = x.col(j).squaredNorm();

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(n_feat);
    Eigen::VectorXd residual = y;
    const double y_sq = y.squaredNorm();
    const double tol = gap_tol * std::max(0.5 * y_sq, 1.0);

    double gap = std::numeric_limits<double>::infinity();
    for (long sweep = 0; sweep < max_sweeps; ++sweep) {
        for (long j = 0; j < n_feat; ++j) {
            if (col_sq(j) == 0.0) continue;
            const double rho = x.col(j).dot(residual) + col_sq(j) * beta(j);
            const double soft =
                std::copysign(std::max(std::abs(rho) - alpha, 0.0), rho);
            const double new_beta = soft / col_sq(j);
            if (new_beta != beta(j)) {
                residual += x.col(j) * (beta(j) - new_beta);
                beta(j) = new_beta;
            }
        }
        // Duality gap: dual point is the residual scaled into the feasible set.
        const double dual_inf = (x.transpose() * residual).cwiseAbs().maxCoeff();
        const double scaling = dual_inf > alpha ? alpha / dual_inf : 1.0;
        const Eigen::VectorXd theta = residual * scaling;
        const double primal =
            0.5 * residual.squaredNorm() + alpha * beta.cwiseAbs().sum();
        const double dual = 0.5 * y_sq - 0.5 * (y - theta).squaredNorm();
        gap = primal - dual;
        if (gap <= tol) return beta;
    }
    throw std::runtime_error("lasso: no convergence within sweep limit, gap=" +
                             std::to_string(gap));
}

// Neuron importance = L1 norm of the neuron's lasso readout coefficients
// across output channels. `alpha_ratio` is relative to the per-channel
// alpha_max = ||Xᵀy||_inf (the smallest alpha with an all-zero solution), so
// the regularization strength is invariant to the data scale; an absolute
// alpha degenerates to unregularized least squares on the nearly collinear
// state columns and coordinate descent stalls there.
inline SensitivityReport lasso_scores(const QuantizedModel& qm,
                                      const EvalSet& calib,
                                      double alpha_ratio) {
    const auto ct = detail::calib_trace(qm, calib);
    const long n = ct.states.cols();
    Eigen::VectorXd importance = Eigen::VectorXd::Zero(n);
    for (long c = 0; c < ct.targets.cols(); ++c) {
        const double alpha_max =
            (ct.states.transpose() * ct.targets.col(c)).cwiseAbs().maxCoeff();
        const double alpha = alpha_ratio * std::max(alpha_max, 1e-12);
        // The exactly collinear columns of a quantized state trace make the
        // duality gap creep at the default tolerance; 1e-4 relative is far
        // tighter than an importance ranking can resolve anyway.
        const Eigen::VectorXd beta = lasso_coordinate_descent(
            ct.states, ct.targets.col(c), alpha, 1e-4);
        importance += beta.cwiseAbs();
    }
    return detail::importance_report(qm, importance, PrunerKind::lasso,
                                     calib.id);
}

// Baseline defaults used by the DSE engine when no overrides are given.
struct BaselineParams {
    int mi_bins = 8;
    int pca_k = 0;  // 0 means max(1, N/5)
    double lasso_alpha = 1e-2;  // ratio of per-channel alpha_max
};

inline SensitivityReport compute_ranking(PrunerKind kind,
                                         const QuantizedModel& qm,
                                         const EvalSet& calib,
                                         std::uint64_t seed,
                                         const BaselineParams& bp = {},
                                         unsigned jobs = 1) {
    switch (kind) {
        case PrunerKind::random: return random_scores(qm, seed);
        case PrunerKind::mutual_information: return mi_scores(qm, calib, bp.mi_bins);
        case PrunerKind::spearman: return spearman_scores(qm, calib);
        case PrunerKind::pca: {
            const int k = bp.pca_k > 0
                              ? bp.pca_k
                              : std::max(1, static_cast<int>(qm.n / 5));
            return pca_scores(qm, calib, k);
        }
        case PrunerKind::lasso: return lasso_scores(qm, calib, bp.lasso_alpha);
        case PrunerKind::sensitivity: return compute_sensitivity(qm, calib, jobs);
    }
    throw std::logic_error("unreachable");
}

}  // namespace rcc
