#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rcc/baselines.hpp"
#include "rcc/netlist.hpp"
#include "rcc/quantize.hpp"
#include "rcc/sensitivity.hpp"

namespace rcc {

// One (q, p, pruner) design point.
struct AcceleratorConfig {
    int q = 0;
    double p = 0.0;
    PrunerKind pruner = PrunerKind::sensitivity;
    Performance perf;       // test-split Perf of the pruned model
    Performance base_perf;  // test-split Perf of the unpruned q-bit model
    std::shared_ptr<const QuantizedModel> model;  // pruned model
    std::optional<CostEstimate> cost;
    bool failed = false;
    std::string error;
};

struct DseResult {
    std::vector<AcceleratorConfig> configs;  // (q, pruner, p) lexicographic
    std::vector<int> q_grid;
    std::vector<double> p_grid;
    std::vector<PrunerKind> pruners;
    std::string dataset_id;
    std::uint64_t seed = 0;
};

struct DseOptions {
    std::uint64_t seed = 0;
    BaselineParams baseline_params{};
    unsigned jobs = 1;
    bool keep_models = true;
    // Optional per-cell progress callback.
    std::function<void(const AcceleratorConfig&)> on_cell;
};

// Exhaustive grid: per q — quantize once, measure the baseline, compute one
// ranking per pruner on the calibration slice, then prune and measure every
// rate on the test split. Rankings are reused across rates, so masks nest.
// A failing cell is recorded with its cause and the grid proceeds.
inline DseResult explore(const ReservoirModel& model,
                         const TimeSeriesDataset& ds,
                         const std::vector<int>& q_grid,
                         const std::vector<double>& p_grid,
                         const std::vector<PrunerKind>& pruners,
                         const DseOptions& opts = {}) {
    if (q_grid.empty()) throw std::invalid_argument("explore: empty Q grid");
    if (p_grid.empty()) throw std::invalid_argument("explore: empty P grid");
    if (pruners.empty()) throw std::invalid_argument("explore: no pruners requested");
    for (const int q : q_grid)
        if (q < 1 || q > 8)
            throw std::invalid_argument("explore: q must be in [1,8], got " +
                                        std::to_string(q));
    for (const double p : p_grid)
        if (p < 0.0 || p > 100.0)
            throw std::invalid_argument("explore: p must be in [0,100]");

    const EvalSet calib = make_calibration_set(ds);
    const EvalSet test = make_test_set(ds);

    DseResult result;
    result.q_grid = q_grid;
    result.p_grid = p_grid;
    result.pruners = pruners;
    result.dataset_id = ds.id;
    result.seed = opts.seed;

    for (const int q : q_grid) {
        std::shared_ptr<QuantizedModel> qm;
        Performance base;
        std::string q_error;
        try {
            qm = std::make_shared<QuantizedModel>(quantize_model(model, q));
            // The q-bit baseline readout is refit to the integer states it
            // actually reads; the float-fit readout would otherwise charge
            // quantization with error a fresh ridge solve removes.
            retrain_readout(*qm, ds, model.hp.ridge_lambda);
            base = evaluate_quantized(*qm, test);
        } catch (const std::exception& e) {
            q_error = e.what();
        }
        for (const PrunerKind pruner : pruners) {
            SensitivityReport ranking;
            std::string ranking_error = q_error;
            if (ranking_error.empty()) {
                try {
                    ranking = compute_ranking(pruner, *qm, calib, opts.seed,
                                              opts.baseline_params, opts.jobs);
                } catch (const std::exception& e) {
                    ranking_error = e.what();
                }
            }
            for (const double p : p_grid) {
                AcceleratorConfig cfg;
                cfg.q = q;
                cfg.p = p;
                cfg.pruner = pruner;
                if (!ranking_error.empty()) {
                    cfg.failed = true;
                    cfg.error = ranking_error;
                } else {
                    try {
                        auto pruned = std::make_shared<QuantizedModel>(
                            prune(*qm, ranking.ranking, p));
                        // Pruning changes the state distribution the readout
                        // sees; refit it before measuring. p = 0 leaves the
                        // model bit-identical to the baseline, so its perf
                        // stays exactly equal to base by construction.
                        if (p > 0.0)
                            retrain_readout(*pruned, ds, model.hp.ridge_lambda);
                        cfg.perf = evaluate_quantized(*pruned, test);
                        cfg.base_perf = base;
                        if (opts.keep_models) cfg.model = std::move(pruned);
                    } catch (const std::exception& e) {
                        cfg.failed = true;
                        cfg.error = e.what();
                    }
                }
                if (opts.on_cell) opts.on_cell(cfg);
                result.configs.push_back(std::move(cfg));
            }
        }
    }
    return result;
}

// Lowers every successful config and attaches structural cost estimates.
inline void attach_costs(DseResult& result) {
    for (AcceleratorConfig& cfg : result.configs) {
        if (cfg.failed || !cfg.model) continue;
        const Netlist net = lower(*cfg.model);
        cfg.cost = estimate_cost(net);
    }
}

namespace detail {
inline std::string format_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}
}  // namespace detail

inline nlohmann::json dse_to_json(const DseResult& result) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["kind"] = "dse-result";
    j["dataset"] = result.dataset_id;
    j["seed"] = result.seed;
    j["q_grid"] = result.q_grid;
    j["p_grid"] = result.p_grid;
    nlohmann::json pruners = nlohmann::json::array();
    for (const PrunerKind k : result.pruners) pruners.push_back(to_string(k));
    j["pruners"] = std::move(pruners);
    nlohmann::json configs = nlohmann::json::array();
    for (const AcceleratorConfig& cfg : result.configs) {
        nlohmann::json c = {{"q", cfg.q},
                            {"p", cfg.p},
                            {"pruner", to_string(cfg.pruner)},
                            {"failed", cfg.failed}};
        if (cfg.failed) {
            c["error"] = cfg.error;
        } else {
            c["perf"] = {{"kind", to_string(cfg.perf.kind)},
                         {"value", cfg.perf.value}};
            c["base_perf"] = {{"kind", to_string(cfg.base_perf.kind)},
                              {"value", cfg.base_perf.value}};
        }
        if (cfg.cost) {
            c["cost"] = {{"n_adders", cfg.cost->n_adders},
                         {"n_comparators", cfg.cost->n_comparators},
                         {"n_registers", cfg.cost->n_registers},
                         {"n_shift_terms", cfg.cost->n_shift_terms},
                         {"est_luts", cfg.cost->est_luts},
                         {"critical_path_levels", cfg.cost->critical_path_levels}};
        }
        configs.push_back(std::move(c));
    }
    j["configs"] = std::move(configs);
    return j;
}

// Perf-vs-p table (plus cost columns once attached), sorted (q asc, p asc,
// pruner asc). Formats: "csv" or "json".
inline std::string report(const DseResult& result, const std::string& format) {
    if (format != "csv" && format != "json")
        throw std::invalid_argument("report: unknown format '" + format +
                                    "' (supported: csv, json)");
    std::vector<const AcceleratorConfig*> ordered;
    ordered.reserve(result.configs.size());
    for (const auto& cfg : result.configs) ordered.push_back(&cfg);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const AcceleratorConfig* a, const AcceleratorConfig* b) {
                         if (a->q != b->q) return a->q < b->q;
                         if (a->p != b->p) return a->p < b->p;
                         return to_string(a->pruner) < to_string(b->pruner);
                     });
    if (format == "json") {
        DseResult sorted = result;
        sorted.configs.clear();
        for (const auto* cfg : ordered) sorted.configs.push_back(*cfg);
        return dse_to_json(sorted).dump(2) + "\n";
    }
    std::ostringstream out;
    out << "q,p,pruner,perf_kind,perf,base_perf,est_luts,n_adders,"
           "n_comparators,n_registers,n_shift_terms,critical_path_levels,"
           "failed,error\n";
    for (const auto* cfg : ordered) {
        out << cfg->q << "," << detail::format_double(cfg->p) << ","
            << to_string(cfg->pruner) << ",";
        if (cfg->failed) {
            out << ",,,,,,,,," << 1 << "," << cfg->error << "\n";
            continue;
        }
        out << to_string(cfg->perf.kind) << ","
            << detail::format_double(cfg->perf.value) << ","
            << detail::format_double(cfg->base_perf.value) << ",";
        if (cfg->cost) {
            out << cfg->cost->est_luts << "," << cfg->cost->n_adders << ","
                << cfg->cost->n_comparators << "," << cfg->cost->n_registers
                << "," << cfg->cost->n_shift_terms << ","
                << cfg->cost->critical_path_levels;
        } else {
            out << ",,,,,";
        }
        out << ",0,\n";
    }
    return out.str();
}

struct ConfigBounds {
    std::optional<double> accuracy_floor;
    std::optional<double> rmse_ceiling;
    std::optional<long> lut_ceiling;
};

// Keeps configs meeting all supplied bounds. Contradictory bounds yield an
// empty (not erroneous) result.
inline DseResult filter_configs(const DseResult& result,
                                const ConfigBounds& bounds) {
    if (!bounds.accuracy_floor && !bounds.rmse_ceiling && !bounds.lut_ceiling)
        throw std::invalid_argument("filter_configs: no bounds supplied");
    DseResult out = result;
    out.configs.clear();
    for (const AcceleratorConfig& cfg : result.configs) {
        if (cfg.failed) continue;
        if (bounds.accuracy_floor &&
            (cfg.perf.kind != Performance::Kind::accuracy ||
             cfg.perf.value < *bounds.accuracy_floor))
            continue;
        if (bounds.rmse_ceiling && (cfg.perf.kind != Performance::Kind::rmse ||
                                    cfg.perf.value > *bounds.rmse_ceiling))
            continue;
        if (bounds.lut_ceiling &&
            (!cfg.cost || cfg.cost->est_luts > *bounds.lut_ceiling))
            continue;
        out.configs.push_back(cfg);
    }
    return out;
}

}  // namespace rcc
