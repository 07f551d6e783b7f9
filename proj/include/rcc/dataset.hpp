#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rcc/rng.hpp"

namespace rcc {

enum class TaskKind { regression, classification };

inline std::string to_string(TaskKind k) {
    return k == TaskKind::regression ? "regression" : "classification";
}

inline TaskKind task_from_string(const std::string& s) {
    if (s == "regression") return TaskKind::regression;
    if (s == "classification") return TaskKind::classification;
    throw std::invalid_argument("unknown task kind: " + s);
}

// Per-channel affine statistics, sufficient to invert the transform.
struct NormalizationRecord {
    std::vector<double> input_mean, input_scale;
    std::vector<bool> input_flagged;  // zero-variance channels, left unscaled
    std::vector<double> target_mean, target_scale;
    std::vector<bool> target_flagged;
    bool applied = false;
};

struct TimeSeriesDataset {
    TaskKind task = TaskKind::regression;
    Eigen::MatrixXd inputs;   // T x d_in, rows are time steps
    Eigen::MatrixXd targets;  // T x d_out (regression only)
    std::vector<int> labels;  // one per sequence (classification only)
    long seq_length = 0;      // classification: fixed sequence length
    // Regression: counts are time steps. Classification: counts are sequences.
    long n_train = 0;
    long n_test = 0;
    int n_classes = 0;
    NormalizationRecord norm;
    std::string id;

    long d_in() const { return inputs.cols(); }
    long d_out() const {
        return task == TaskKind::regression ? targets.cols() : n_classes;
    }
    long n_sequences() const {
        return task == TaskKind::classification
                   ? inputs.rows() / seq_length
                   : 1;
    }
    // Row range [begin, end) of the given split in `inputs`.
    std::pair<long, long> train_rows() const {
        if (task == TaskKind::classification)
            return {0, n_train * seq_length};
        return {0, n_train};
    }
    std::pair<long, long> test_rows() const {
        if (task == TaskKind::classification)
            return {n_train * seq_length, (n_train + n_test) * seq_length};
        return {n_train, n_train + n_test};
    }
};

// Raw Henon orbit: x_{t+1} = 1 - a*x_t^2 + y_t, y_{t+1} = b*x_t.
// Returns x_0 .. x_{n-1}. Throws on divergence.
inline std::vector<double> henon_orbit(long n, double a, double b, double x0,
                                       double y0) {
    std::vector<double> xs;
    xs.reserve(static_cast<std::size_t>(n));
    double x = x0, y = y0;
    for (long t = 0; t < n; ++t) {
        xs.push_back(x);
        const double xn = 1.0 - a * x * x + y;
        const double yn = b * x;
        x = xn;
        y = yn;
        if (std::abs(x) > 1e6)
            throw std::runtime_error(
                "henon orbit diverged at step " + std::to_string(t + 1) +
                " (a=" + std::to_string(a) + ", b=" + std::to_string(b) + ")");
    }
    return xs;
}

// One-step-ahead Henon regression benchmark. The orbit is iterated
// `transient` extra steps first so the recorded series lies on the attractor.
inline TimeSeriesDataset gen_henon(long n_steps, double a = 1.4,
                                   double b = 0.3, double x0 = 0.0,
                                   double y0 = 0.0, long transient = 200,
                                   long n_test = -1) {
    if (n_steps < 2) throw std::invalid_argument("gen_henon: n_steps must be >= 2");
    const auto xs = henon_orbit(transient + n_steps + 1, a, b, x0, y0);

    TimeSeriesDataset ds;
    ds.task = TaskKind::regression;
    ds.id = "henon";
    ds.inputs.resize(n_steps, 1);
    ds.targets.resize(n_steps, 1);
    for (long t = 0; t < n_steps; ++t) {
        ds.inputs(t, 0) = xs[static_cast<std::size_t>(transient + t)];
        ds.targets(t, 0) = xs[static_cast<std::size_t>(transient + t + 1)];
    }
    if (n_test < 0) n_test = n_steps / 5;
    if (n_test >= n_steps) throw std::invalid_argument("gen_henon: n_test >= n_steps");
    ds.n_test = n_test;
    ds.n_train = n_steps - n_test;
    return ds;
}

// Class-conditional noisy sinusoids; class index sets the frequency.
// Stand-in classification benchmark with a known-deterministic generator.
inline TimeSeriesDataset gen_synthetic_classification(int n_classes,
                                                      long seq_len,
                                                      long n_train,
                                                      long n_test,
                                                      std::uint64_t seed,
                                                      double noise = 0.1) {
    if (n_classes < 2)
        throw std::invalid_argument("gen_synthetic_classification: n_classes must be >= 2");
    if (seq_len < 1) throw std::invalid_argument("seq_len must be >= 1");
    if (n_train < 1) throw std::invalid_argument("n_train must be >= 1");
    if (n_test < 1) throw std::invalid_argument("n_test must be >= 1 (empty test set rejected)");

    TimeSeriesDataset ds;
    ds.task = TaskKind::classification;
    ds.id = "synthetic-classification";
    ds.seq_length = seq_len;
    ds.n_train = n_train;
    ds.n_test = n_test;
    ds.n_classes = n_classes;

    const long n_seq = n_train + n_test;
    ds.inputs.resize(n_seq * seq_len, 1);
    ds.labels.resize(static_cast<std::size_t>(n_seq));

    Rng rng(seed);
    auto gauss = [&rng] {
        // Box-Muller; one draw per call keeps the stream simple.
        const double u1 = 1.0 - rng.next_double();
        const double u2 = rng.next_double();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * M_PI * u2);
    };

    for (long s = 0; s < n_seq; ++s) {
        const int label = static_cast<int>(rng.next_below(
            static_cast<std::uint64_t>(n_classes)));
        ds.labels[static_cast<std::size_t>(s)] = label;
        const double freq = 0.5 + static_cast<double>(label);
        const double phase = rng.uniform(0.0, 2.0 * M_PI);
        for (long t = 0; t < seq_len; ++t) {
            const double arg =
                2.0 * M_PI * freq * static_cast<double>(t) /
                    static_cast<double>(seq_len) +
                phase;
            ds.inputs(s * seq_len + t, 0) = std::sin(arg) + noise * gauss();
        }
    }
    return ds;
}

// -------------------------------------------------------------------------
// CSV format: header `seq_id,t,x_0..x_{d-1}[,label|target_0..]`.
// One row per time step; `seq_id` groups rows into sequences.

struct CsvSchema {
    TaskKind task = TaskKind::regression;
    double train_fraction = 0.8;
};

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_cell(const std::string& cell, long line_no,
                         const std::string& col) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("csv line " + std::to_string(line_no) +
                                 ": non-numeric cell '" + cell +
                                 "' in column " + col);
    }
}
}  // namespace detail

inline TimeSeriesDataset load_csv(const std::string& path,
                                  const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open csv file: " + path);

    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("csv file is empty: " + path);
    const auto header = detail::split_csv_line(line);
    if (header.size() < 3 || header[0] != "seq_id" || header[1] != "t")
        throw std::runtime_error(
            "csv header must start with seq_id,t — got: " + line);

    long d_in = 0;
    long d_out = 0;
    bool has_label = false;
    for (std::size_t c = 2; c < header.size(); ++c) {
        if (header[c].rfind("x_", 0) == 0) {
            ++d_in;
        } else if (header[c] == "label") {
            has_label = true;
        } else if (header[c].rfind("target", 0) == 0) {
            ++d_out;
        } else {
            throw std::runtime_error("csv: unknown column '" + header[c] + "'");
        }
    }
    if (d_in == 0) throw std::runtime_error("csv: no x_* input columns found");
    if (schema.task == TaskKind::classification && !has_label)
        throw std::runtime_error("csv: classification schema requires a label column");
    if (schema.task == TaskKind::regression && d_out == 0)
        throw std::runtime_error("csv: regression schema requires target columns");

    std::vector<std::vector<double>> rows;
    std::vector<long> seq_ids;
    std::vector<int> row_labels;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw std::runtime_error(
                "csv line " + std::to_string(line_no) + ": expected " +
                std::to_string(header.size()) + " cells, got " +
                std::to_string(cells.size()));
        seq_ids.push_back(static_cast<long>(
            detail::parse_cell(cells[0], line_no, "seq_id")));
        std::vector<double> row;
        for (std::size_t c = 2; c < cells.size(); ++c)
            row.push_back(detail::parse_cell(cells[c], line_no, header[c]));
        rows.push_back(std::move(row));
        if (has_label)
            row_labels.push_back(static_cast<int>(rows.back().back()));
    }
    if (rows.empty()) throw std::runtime_error("csv has a header but no data rows: " + path);

    TimeSeriesDataset ds;
    ds.task = schema.task;
    ds.id = path;
    const long t_total = static_cast<long>(rows.size());
    ds.inputs.resize(t_total, d_in);
    for (long r = 0; r < t_total; ++r)
        for (long c = 0; c < d_in; ++c)
            ds.inputs(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];

    if (schema.task == TaskKind::regression) {
        ds.targets.resize(t_total, d_out);
        for (long r = 0; r < t_total; ++r)
            for (long c = 0; c < d_out; ++c)
                ds.targets(r, c) =
                    rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(d_in + c)];
        ds.n_train = static_cast<long>(
            std::llround(schema.train_fraction * static_cast<double>(t_total)));
        ds.n_test = t_total - ds.n_train;
    } else {
        // Group rows into sequences and check consistent lengths.
        std::vector<long> seq_starts{0};
        for (long r = 1; r < t_total; ++r)
            if (seq_ids[static_cast<std::size_t>(r)] !=
                seq_ids[static_cast<std::size_t>(r - 1)])
                seq_starts.push_back(r);
        seq_starts.push_back(t_total);
        const long n_seq = static_cast<long>(seq_starts.size()) - 1;
        const long len = seq_starts[1] - seq_starts[0];
        for (long s = 0; s < n_seq; ++s) {
            const long l = seq_starts[static_cast<std::size_t>(s + 1)] -
                           seq_starts[static_cast<std::size_t>(s)];
            if (l != len)
                throw std::runtime_error(
                    "csv: inconsistent sequence lengths (" + std::to_string(len) +
                    " vs " + std::to_string(l) + " for sequence " +
                    std::to_string(s) + ")");
        }
        ds.seq_length = len;
        ds.labels.resize(static_cast<std::size_t>(n_seq));
        int max_label = 0;
        for (long s = 0; s < n_seq; ++s) {
            const int lab = row_labels[static_cast<std::size_t>(
                seq_starts[static_cast<std::size_t>(s)])];
            ds.labels[static_cast<std::size_t>(s)] = lab;
            max_label = std::max(max_label, lab);
        }
        ds.n_classes = max_label + 1;
        ds.n_train = static_cast<long>(
            std::llround(schema.train_fraction * static_cast<double>(n_seq)));
        ds.n_test = n_seq - ds.n_train;
    }
    return ds;
}

inline void save_csv(const TimeSeriesDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write csv file: " + path);
    out.precision(17);
    out << "seq_id,t";
    for (long c = 0; c < ds.d_in(); ++c) out << ",x_" << c;
    if (ds.task == TaskKind::regression) {
        for (long c = 0; c < ds.targets.cols(); ++c) out << ",target_" << c;
    } else {
        out << ",label";
    }
    out << "\n";
    const long seq_len =
        ds.task == TaskKind::classification ? ds.seq_length : ds.inputs.rows();
    for (long r = 0; r < ds.inputs.rows(); ++r) {
        const long seq = r / seq_len;
        out << seq << "," << (r % seq_len);
        for (long c = 0; c < ds.d_in(); ++c) out << "," << ds.inputs(r, c);
        if (ds.task == TaskKind::regression) {
            for (long c = 0; c < ds.targets.cols(); ++c)
                out << "," << ds.targets(r, c);
        } else {
            out << "," << ds.labels[static_cast<std::size_t>(seq)];
        }
        out << "\n";
    }
}

// -------------------------------------------------------------------------

// Zero-mean unit-variance per channel, statistics from the training split
// only. Zero-variance channels are flagged and left unscaled.
inline TimeSeriesDataset normalize(const TimeSeriesDataset& ds) {
    if (ds.norm.applied) return ds;
    TimeSeriesDataset out = ds;
    const auto [tr_begin, tr_end] = ds.train_rows();
    const long n = tr_end - tr_begin;
    if (n < 1) throw std::invalid_argument("normalize: empty training split");

    auto fit_apply = [&](Eigen::MatrixXd& m, std::vector<double>& means,
                         std::vector<double>& scales,
                         std::vector<bool>& flags) {
        for (long c = 0; c < m.cols(); ++c) {
            const auto col = m.col(c).segment(tr_begin, n);
            const double mean = col.mean();
            const double var =
                (col.array() - mean).square().sum() / static_cast<double>(n);
            const double sd = std::sqrt(var);
            const bool degenerate = sd < 1e-300;
            means.push_back(mean);
            scales.push_back(degenerate ? 1.0 : sd);
            flags.push_back(degenerate);
            if (!degenerate)
                m.col(c) = (m.col(c).array() - mean) / sd;
        }
    };
    fit_apply(out.inputs, out.norm.input_mean, out.norm.input_scale,
              out.norm.input_flagged);
    if (ds.task == TaskKind::regression)
        fit_apply(out.targets, out.norm.target_mean, out.norm.target_scale,
                  out.norm.target_flagged);
    out.norm.applied = true;
    return out;
}

inline TimeSeriesDataset denormalize(const TimeSeriesDataset& ds) {
    if (!ds.norm.applied) return ds;
    TimeSeriesDataset out = ds;
    auto invert = [](Eigen::MatrixXd& m, const std::vector<double>& means,
                     const std::vector<double>& scales,
                     const std::vector<bool>& flags) {
        for (long c = 0; c < m.cols(); ++c) {
            const auto i = static_cast<std::size_t>(c);
            if (!flags[i]) m.col(c) = m.col(c).array() * scales[i] + means[i];
        }
    };
    invert(out.inputs, ds.norm.input_mean, ds.norm.input_scale,
           ds.norm.input_flagged);
    if (ds.task == TaskKind::regression)
        invert(out.targets, ds.norm.target_mean, ds.norm.target_scale,
               ds.norm.target_flagged);
    out.norm = NormalizationRecord{};
    return out;
}

// ---- JSON cache ----------------------------------------------------------

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (long r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (long c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const long rows = static_cast<long>(j.size());
    const long cols = rows == 0 ? 0 : static_cast<long>(j.at(0).size());
    Eigen::MatrixXd m(rows, cols);
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c)
            m(r, c) = j.at(static_cast<std::size_t>(r))
                          .at(static_cast<std::size_t>(c))
                          .get<double>();
    return m;
}

inline nlohmann::json dataset_to_json(const TimeSeriesDataset& ds) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["kind"] = "dataset";
    j["id"] = ds.id;
    j["task"] = to_string(ds.task);
    j["inputs"] = matrix_to_json(ds.inputs);
    j["targets"] = matrix_to_json(ds.targets);
    j["labels"] = ds.labels;
    j["seq_length"] = ds.seq_length;
    j["n_train"] = ds.n_train;
    j["n_test"] = ds.n_test;
    j["n_classes"] = ds.n_classes;
    j["normalization"] = {
        {"applied", ds.norm.applied},
        {"input_mean", ds.norm.input_mean},
        {"input_scale", ds.norm.input_scale},
        {"input_flagged", ds.norm.input_flagged},
        {"target_mean", ds.norm.target_mean},
        {"target_scale", ds.norm.target_scale},
        {"target_flagged", ds.norm.target_flagged},
    };
    return j;
}

inline TimeSeriesDataset dataset_from_json(const nlohmann::json& j) {
    if (j.at("kind") != "dataset")
        throw std::runtime_error("not a dataset artifact");
    TimeSeriesDataset ds;
    ds.id = j.at("id").get<std::string>();
    ds.task = task_from_string(j.at("task").get<std::string>());
    ds.inputs = matrix_from_json(j.at("inputs"));
    ds.targets = matrix_from_json(j.at("targets"));
    ds.labels = j.at("labels").get<std::vector<int>>();
    ds.seq_length = j.at("seq_length").get<long>();
    ds.n_train = j.at("n_train").get<long>();
    ds.n_test = j.at("n_test").get<long>();
    ds.n_classes = j.at("n_classes").get<int>();
    const auto& n = j.at("normalization");
    ds.norm.applied = n.at("applied").get<bool>();
    ds.norm.input_mean = n.at("input_mean").get<std::vector<double>>();
    ds.norm.input_scale = n.at("input_scale").get<std::vector<double>>();
    ds.norm.input_flagged = n.at("input_flagged").get<std::vector<bool>>();
    ds.norm.target_mean = n.at("target_mean").get<std::vector<double>>();
    ds.norm.target_scale = n.at("target_scale").get<std::vector<double>>();
    ds.norm.target_flagged = n.at("target_flagged").get<std::vector<bool>>();
    return ds;
}

}  // namespace rcc
