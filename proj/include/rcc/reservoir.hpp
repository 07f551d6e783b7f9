#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rcc/dataset.hpp"
#include "rcc/parallel.hpp"
#include "rcc/rng.hpp"

namespace rcc {

enum class Activation { tanh_fn, hardtanh };

inline std::string to_string(Activation a) {
    return a == Activation::tanh_fn ? "tanh" : "hardtanh";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh_fn;
    if (s == "hardtanh") return Activation::hardtanh;
    throw std::invalid_argument("unknown activation: " + s);
}

inline double apply_activation(Activation a, double x) {
    if (a == Activation::tanh_fn) return std::tanh(x);
    return std::clamp(x, -1.0, 1.0);
}

struct Hyperparams {
    double spectral_radius = 0.9;
    double leaking_rate = 1.0;
    long ncrl = 250;  // stored nonzeros in the reservoir matrix
    double ridge_lambda = 1e-8;
    Activation activation = Activation::tanh_fn;
    std::uint64_t seed = 0;
};

struct Performance {
    enum class Kind { accuracy, rmse } kind = Kind::rmse;
    double value = 0.0;

    // Higher accuracy is better; lower rmse is better.
    bool better_than(const Performance& other) const {
        if (kind == Kind::accuracy) return value > other.value;
        return value < other.value;
    }
};

inline std::string to_string(Performance::Kind k) {
    return k == Performance::Kind::accuracy ? "accuracy" : "rmse";
}

struct ReservoirModel {
    Eigen::MatrixXd w_in;   // N x d_in
    Eigen::VectorXd bias;   // per-neuron activation bias (empty = zero)
    Eigen::MatrixXd w_r;    // N x N, exactly ncrl nonzeros
    Eigen::MatrixXd w_out;  // d_out x N, empty until trained
    std::vector<std::pair<int, int>> nonzeros;  // (row, col), lexicographic
    Hyperparams hp;
    long n = 0;
    long d_in = 0;
    bool spectral_fallback = false;  // power iteration failed, row-sum rescale
    double input_absmax = 1.0;  // max |input| over the training split

    bool trained() const { return w_out.size() > 0; }
};

struct StateTrace {
    Eigen::MatrixXd states;  // T x N
    long t_begin = 0;
    long t_end = 0;
};

// Dominant-eigenvalue magnitude by power iteration with a deterministic
// all-ones start. A complex dominant pair makes the plain iterate oscillate,
// so the estimate is read off a two-step linear fit: with z = A*w, w = A*v,
// solve z ≈ alpha*w + beta*v and take the larger root magnitude of
// x^2 - alpha*x - beta. Returns 0 when the iterate collapses (nilpotent).
inline double spectral_radius_estimate(const Eigen::MatrixXd& a,
                                       int max_iters = 1000,
                                       double tol = 1e-9) {
    const long n = a.rows();
    Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(double(n));
    for (int it = 0; it < max_iters; ++it) {
        Eigen::VectorXd w = a * v;
        const double wn = w.norm();
        if (wn < 1e-300) return 0.0;
        Eigen::VectorXd z = a * w;

        // Least-squares fit of z in span{w, v}.
        Eigen::Matrix2d g;
        g << w.dot(w), w.dot(v), w.dot(v), v.dot(v);
        Eigen::Vector2d rhs(w.dot(z), v.dot(z));
        const Eigen::Vector2d ab = g.ldlt().solve(rhs);
        const double alpha = ab(0), beta = ab(1);
        const double resid = (z - alpha * w - beta * v).norm();
        if (resid <= tol * std::max(z.norm(), 1e-300)) {
            const double disc = alpha * alpha + 4.0 * beta;
            if (disc >= 0.0) {
                const double r = std::sqrt(disc);
                return std::max(std::abs((alpha + r) / 2.0),
                                std::abs((alpha - r) / 2.0));
            }
            // Complex pair: |roots|^2 = -beta.
            return std::sqrt(-beta);
        }
        v = w / wn;
    }
    // Slow spectra (several near-equal magnitudes) can outlast the iteration
    // budget; fall back to the exact dense solve.
    return a.eigenvalues().cwiseAbs().maxCoeff();
}

inline ReservoirModel init_reservoir(const Hyperparams& hp, long n, long d_in,
                                     std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("init_reservoir: n must be >= 1");
    if (d_in < 1) throw std::invalid_argument("init_reservoir: d_in must be >= 1");
    if (hp.ncrl < 1) throw std::invalid_argument("init_reservoir: ncrl must be >= 1");
    if (hp.ncrl > n * n)
        throw std::invalid_argument("init_reservoir: invalid sparsity, ncrl=" +
                                    std::to_string(hp.ncrl) + " exceeds n^2=" +
                                    std::to_string(n * n));
    if (hp.spectral_radius <= 0.0)
        throw std::invalid_argument("init_reservoir: spectral radius must be > 0");
    if (hp.leaking_rate <= 0.0 || hp.leaking_rate > 1.0)
        throw std::invalid_argument("init_reservoir: leaking rate must be in (0,1]");

    ReservoirModel m;
    m.hp = hp;
    m.hp.seed = seed;
    m.n = n;
    m.d_in = d_in;

    Rng rng(seed);
    m.w_in.resize(n, d_in);
    for (long r = 0; r < n; ++r)
        for (long c = 0; c < d_in; ++c) m.w_in(r, c) = rng.uniform(-1.0, 1.0);

    // Per-neuron bias: tanh/hardtanh are odd, so without it the state space
    // can only carry odd functions of the input history.
    m.bias.resize(n);
    for (long r = 0; r < n; ++r) m.bias(r) = rng.uniform(-1.0, 1.0);

    // Nonzero positions drawn without replacement (partial Fisher-Yates).
    std::vector<long> cells(static_cast<std::size_t>(n * n));
    std::iota(cells.begin(), cells.end(), 0L);
    for (long i = 0; i < hp.ncrl; ++i) {
        const long j = i + static_cast<long>(rng.next_below(
                               static_cast<std::uint64_t>(n * n - i)));
        std::swap(cells[static_cast<std::size_t>(i)],
                  cells[static_cast<std::size_t>(j)]);
    }
    std::vector<long> picked(cells.begin(), cells.begin() + hp.ncrl);
    std::sort(picked.begin(), picked.end());

    m.w_r = Eigen::MatrixXd::Zero(n, n);
    m.nonzeros.reserve(static_cast<std::size_t>(hp.ncrl));
    for (const long cell : picked) {
        const int r = static_cast<int>(cell / n);
        const int c = static_cast<int>(cell % n);
        double v = rng.uniform(-1.0, 1.0);
        if (v == 0.0) v = 0.5;  // keep the stored-nonzero count exact
        m.w_r(r, c) = v;
        m.nonzeros.emplace_back(r, c);
    }

    const double rho = spectral_radius_estimate(m.w_r);
    if (rho > 0.0) {
        m.w_r *= hp.spectral_radius / rho;
    } else {
        // Nilpotent pattern or non-convergence: rescale by max row-sum norm.
        const double norm = m.w_r.cwiseAbs().rowwise().sum().maxCoeff();
        if (norm > 0.0) m.w_r *= hp.spectral_radius / norm;
        m.spectral_fallback = true;
    }
    return m;
}

// Leaky state update; reduces to plain s = f(W_in u + W_r s) at lr = 1.
inline Eigen::VectorXd update_state(const ReservoirModel& m,
                                    const Eigen::VectorXd& u,
                                    const Eigen::VectorXd& s_prev) {
    if (u.size() != m.d_in || s_prev.size() != m.n)
        throw std::invalid_argument("update_state: dimension mismatch");
    if (!u.allFinite() || !s_prev.allFinite())
        throw std::runtime_error("update_state: non-finite state or input");
    Eigen::VectorXd pre = m.w_in * u + m.w_r * s_prev;
    if (m.bias.size() > 0) pre += m.bias;
    const double lr = m.hp.leaking_rate;
    Eigen::VectorXd s(m.n);
    for (long i = 0; i < m.n; ++i)
        s(i) = (1.0 - lr) * s_prev(i) + lr * apply_activation(m.hp.activation, pre(i));
    return s;
}

inline StateTrace run_reservoir(const ReservoirModel& m,
                                const Eigen::MatrixXd& series,
                                Eigen::VectorXd s0 = Eigen::VectorXd()) {
    if (series.rows() < 1)
        throw std::invalid_argument("run_reservoir: empty series");
    if (s0.size() == 0) s0 = Eigen::VectorXd::Zero(m.n);
    StateTrace trace;
    trace.states.resize(series.rows(), m.n);
    trace.t_begin = 0;
    trace.t_end = series.rows();
    Eigen::VectorXd s = std::move(s0);
    for (long t = 0; t < series.rows(); ++t) {
        s = update_state(m, series.row(t).transpose(), s);
        trace.states.row(t) = s.transpose();
    }
    return trace;
}

// Ridge readout: w_out = Y X^T (X X^T + lambda I)^-1 with states as columns
// of X. No intercept term.
inline Eigen::MatrixXd train_readout(const Eigen::MatrixXd& states,
                                     const Eigen::MatrixXd& targets,
                                     double lambda) {
    if (states.rows() != targets.rows())
        throw std::invalid_argument("train_readout: row count mismatch");
    if (lambda < 0.0)
        throw std::invalid_argument("train_readout: lambda must be >= 0");
    const long n = states.cols();
    const Eigen::MatrixXd gram =
        states.transpose() * states +
        lambda * Eigen::MatrixXd::Identity(n, n);  // X X^T + lambda I
    const Eigen::MatrixXd yxt = targets.transpose() * states;  // Y X^T
    if (lambda == 0.0 && !gram.fullPivLu().isInvertible())
        throw std::runtime_error(
            "train_readout: singular normal equations with lambda=0; "
            "use lambda > 0");
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    Eigen::MatrixXd w_out = ldlt.solve(yxt.transpose()).transpose();
    const double resid = (w_out * gram - yxt).norm();
    const double scale = std::max(yxt.norm(), 1e-300);
    if (resid > 1e-8 * scale) {
        if (lambda == 0.0)
            throw std::runtime_error(
                "train_readout: singular normal equations with lambda=0; "
                "use lambda > 0");
        throw std::runtime_error("train_readout: ill-conditioned system, "
                                 "relative residual " + std::to_string(resid / scale));
    }
    return w_out;
}

inline Eigen::MatrixXd predict(const ReservoirModel& m,
                               const Eigen::MatrixXd& series) {
    if (!m.trained())
        throw std::runtime_error("predict: model has no trained readout");
    const StateTrace trace = run_reservoir(m, series);
    return trace.states * m.w_out.transpose();  // T x d_out
}

// Washout applied before readout training on continuous regression traces.
inline long washout_length(long t_train) {
    return std::min<long>(100, t_train / 10);
}

// Trains the readout in place. Regression: one continuous run over the
// training split with washout. Classification: per-sequence runs from zero
// state, one-hot targets at every step, no washout (sequences are short).
inline void train(ReservoirModel& m, const TimeSeriesDataset& ds,
                  long train_rows_override = -1) {
    if (ds.task == TaskKind::regression) {
        const long t_train =
            train_rows_override >= 0 ? train_rows_override : ds.n_train;
        if (t_train < 2) throw std::invalid_argument("train: training split too small");
        m.input_absmax =
            std::max(ds.inputs.topRows(t_train).cwiseAbs().maxCoeff(), 1e-12);
        const StateTrace trace =
            run_reservoir(m, ds.inputs.topRows(t_train));
        const long w = washout_length(t_train);
        m.w_out = train_readout(trace.states.bottomRows(t_train - w),
                                ds.targets.middleRows(w, t_train - w),
                                m.hp.ridge_lambda);
    } else {
        const long n_seq =
            train_rows_override >= 0 ? train_rows_override : ds.n_train;
        if (n_seq < 1) throw std::invalid_argument("train: no training sequences");
        const long len = ds.seq_length;
        m.input_absmax = std::max(
            ds.inputs.topRows(n_seq * len).cwiseAbs().maxCoeff(), 1e-12);
        Eigen::MatrixXd states(n_seq * len, m.n);
        Eigen::MatrixXd targets = Eigen::MatrixXd::Zero(n_seq * len, ds.n_classes);
        for (long s = 0; s < n_seq; ++s) {
            const StateTrace tr =
                run_reservoir(m, ds.inputs.middleRows(s * len, len));
            states.middleRows(s * len, len) = tr.states;
            targets.block(s * len, ds.labels[static_cast<std::size_t>(s)],
                          len, 1).setOnes();
        }
        m.w_out = train_readout(states, targets, m.hp.ridge_lambda);
    }
}

// Evaluates predictions already computed for a row range of the dataset.
inline Performance score_predictions(const TimeSeriesDataset& ds,
                                     const Eigen::MatrixXd& preds,
                                     long row_begin, long seq_begin,
                                     long n_seq) {
    Performance perf;
    if (ds.task == TaskKind::regression) {
        perf.kind = Performance::Kind::rmse;
        const long t = preds.rows();
        const Eigen::MatrixXd diff =
            preds - ds.targets.middleRows(row_begin, t);
        perf.value = std::sqrt(diff.array().square().sum() /
                               static_cast<double>(diff.size()));
    } else {
        perf.kind = Performance::Kind::accuracy;
        const long len = ds.seq_length;
        long correct = 0;
        for (long s = 0; s < n_seq; ++s) {
            // Mean readout over the sequence, argmax decides.
            const Eigen::VectorXd mean =
                preds.middleRows(s * len, len).colwise().mean();
            Eigen::Index arg;
            mean.maxCoeff(&arg);
            if (static_cast<int>(arg) ==
                ds.labels[static_cast<std::size_t>(seq_begin + s)])
                ++correct;
        }
        perf.value = static_cast<double>(correct) / static_cast<double>(n_seq);
    }
    return perf;
}

// Test-split evaluation. Regression runs the reservoir over the full series
// so the test portion starts from the carried state.
inline Performance evaluate(const ReservoirModel& m,
                            const TimeSeriesDataset& ds) {
    if (!m.trained()) throw std::runtime_error("evaluate: untrained model");
    if (ds.n_test < 1) throw std::invalid_argument("evaluate: empty test set");
    if (ds.task == TaskKind::regression) {
        const Eigen::MatrixXd preds = predict(m, ds.inputs);
        return score_predictions(ds, preds.bottomRows(ds.n_test), ds.n_train,
                                 0, 0);
    }
    const long len = ds.seq_length;
    Eigen::MatrixXd preds(ds.n_test * len, ds.n_classes);
    for (long s = 0; s < ds.n_test; ++s)
        preds.middleRows(s * len, len) =
            predict(m, ds.inputs.middleRows((ds.n_train + s) * len, len));
    return score_predictions(ds, preds, 0, ds.n_train, ds.n_test);
}

// ---- Hyperparameter random search ----------------------------------------

struct SearchSpace {
    std::pair<double, double> spectral_radius{0.1, 1.5};
    std::pair<double, double> leaking_rate{0.1, 1.0};
    std::pair<long, long> ncrl{0, 0};  // zeros mean [N, 10N]
    std::pair<double, double> ridge_lambda_log10{-12.0, -2.0};
};

struct SearchTrial {
    Hyperparams hp;
    Performance perf;
};

struct SearchResult {
    Hyperparams best;
    Performance best_perf;
    std::vector<SearchTrial> trials;
};

// Uniform random search over the space; trains on 80% of the training split
// and scores on the held-out last 20% (validation). The test split is never
// touched.
inline SearchResult random_search(const SearchSpace& space, long n_trials,
                                  const TimeSeriesDataset& ds, long n,
                                  std::uint64_t seed, unsigned jobs = 1) {
    if (n_trials < 1) throw std::invalid_argument("random_search: n_trials must be >= 1");
    if (space.spectral_radius.first > space.spectral_radius.second ||
        space.leaking_rate.first > space.leaking_rate.second)
        throw std::invalid_argument("random_search: empty search space");

    std::pair<long, long> ncrl_range = space.ncrl;
    if (ncrl_range.first == 0 && ncrl_range.second == 0)
        ncrl_range = {n, std::min(10 * n, n * n)};

    // Sample all trials up front from one stream so results do not depend on
    // the job count.
    Rng rng(seed);
    std::vector<Hyperparams> hps(static_cast<std::size_t>(n_trials));
    for (auto& hp : hps) {
        hp.spectral_radius = rng.uniform(space.spectral_radius.first,
                                         space.spectral_radius.second);
        hp.leaking_rate =
            rng.uniform(space.leaking_rate.first, space.leaking_rate.second);
        hp.ncrl = ncrl_range.first +
                  static_cast<long>(rng.next_below(static_cast<std::uint64_t>(
                      ncrl_range.second - ncrl_range.first + 1)));
        hp.ridge_lambda = std::pow(10.0, rng.uniform(space.ridge_lambda_log10.first,
                                                     space.ridge_lambda_log10.second));
        hp.seed = rng.next_u64();
    }

    // Validation split: last 20% of the training data.
    const long n_units = ds.n_train;  // rows or sequences
    const long n_val = std::max<long>(1, n_units / 5);
    const long n_fit = n_units - n_val;
    if (n_fit < 1) throw std::invalid_argument("random_search: training split too small");

    std::vector<SearchTrial> trials(static_cast<std::size_t>(n_trials));
    parallel_for(static_cast<std::size_t>(n_trials), jobs, [&](std::size_t i) {
        const Hyperparams& hp = hps[i];
        SearchTrial trial;
        trial.hp = hp;
        try {
            ReservoirModel m = init_reservoir(hp, n, ds.d_in(), hp.seed);
            train(m, ds, n_fit);
            if (ds.task == TaskKind::regression) {
                const Eigen::MatrixXd preds =
                    predict(m, ds.inputs.topRows(n_units));
                trial.perf = score_predictions(
                    ds, preds.bottomRows(n_val), n_fit, 0, 0);
            } else {
                const long len = ds.seq_length;
                Eigen::MatrixXd preds(n_val * len, ds.n_classes);
                for (long s = 0; s < n_val; ++s)
                    preds.middleRows(s * len, len) = predict(
                        m, ds.inputs.middleRows((n_fit + s) * len, len));
                trial.perf = score_predictions(ds, preds, 0, n_fit, n_val);
            }
        } catch (const std::exception&) {
            // Degenerate draw (e.g. singular readout); worst possible score.
            trial.perf.kind = ds.task == TaskKind::regression
                                  ? Performance::Kind::rmse
                                  : Performance::Kind::accuracy;
            trial.perf.value = ds.task == TaskKind::regression
                                   ? std::numeric_limits<double>::infinity()
                                   : 0.0;
        }
        trials[i] = std::move(trial);
    });

    SearchResult result;
    result.trials = std::move(trials);
    std::size_t best = 0;
    for (std::size_t i = 1; i < result.trials.size(); ++i)
        if (result.trials[i].perf.better_than(result.trials[best].perf))
            best = i;
    result.best = result.trials[best].hp;
    result.best_perf = result.trials[best].perf;
    return result;
}

}  // namespace rcc
