#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "rcc/baselines.hpp"
#include "rcc/dataset.hpp"
#include "rcc/netlist.hpp"
#include "rcc/quantize.hpp"
#include "rcc/reservoir.hpp"
#include "rcc/sensitivity.hpp"

namespace rcc {

inline constexpr int kSchemaVersion = 1;

inline nlohmann::json int_matrix_to_json(const IntMatrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (long r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (long c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline IntMatrix int_matrix_from_json(const nlohmann::json& j) {
    const long rows = static_cast<long>(j.size());
    const long cols = rows == 0 ? 0 : static_cast<long>(j.at(0).size());
    IntMatrix m(rows, cols);
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c)
            m(r, c) = j.at(static_cast<std::size_t>(r))
                          .at(static_cast<std::size_t>(c))
                          .get<std::int32_t>();
    return m;
}

// ---- ReservoirModel ---------------------------------------------------------

inline nlohmann::json model_to_json(const ReservoirModel& m) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = "reservoir-model";
    j["n"] = m.n;
    j["d_in"] = m.d_in;
    j["metadata"] = {
        {"seed", m.hp.seed},
        {"spectral_radius", m.hp.spectral_radius},
        {"leaking_rate", m.hp.leaking_rate},
        {"ncrl", m.hp.ncrl},
        {"ridge_lambda", m.hp.ridge_lambda},
        {"activation", to_string(m.hp.activation)},
        {"spectral_fallback", m.spectral_fallback},
        {"input_absmax", m.input_absmax},
    };
    j["w_in"] = matrix_to_json(m.w_in);
    j["bias"] = std::vector<double>(m.bias.data(), m.bias.data() + m.bias.size());
    nlohmann::json nz = nlohmann::json::array();
    for (const auto& [r, c] : m.nonzeros)
        nz.push_back({r, c, m.w_r(r, c)});
    j["w_r_nonzeros"] = std::move(nz);
    j["w_out"] = matrix_to_json(m.w_out);
    return j;
}

inline ReservoirModel model_from_json(const nlohmann::json& j) {
    if (j.at("kind") != "reservoir-model")
        throw std::runtime_error("not a reservoir-model artifact");
    ReservoirModel m;
    m.n = j.at("n").get<long>();
    m.d_in = j.at("d_in").get<long>();
    const auto& md = j.at("metadata");
    m.hp.seed = md.at("seed").get<std::uint64_t>();
    m.hp.spectral_radius = md.at("spectral_radius").get<double>();
    m.hp.leaking_rate = md.at("leaking_rate").get<double>();
    m.hp.ncrl = md.at("ncrl").get<long>();
    m.hp.ridge_lambda = md.at("ridge_lambda").get<double>();
    m.hp.activation = activation_from_string(md.at("activation").get<std::string>());
    m.spectral_fallback = md.at("spectral_fallback").get<bool>();
    m.input_absmax = md.value("input_absmax", 1.0);
    m.w_in = matrix_from_json(j.at("w_in"));
    if (j.contains("bias")) {
        const auto b = j.at("bias").get<std::vector<double>>();
        m.bias = Eigen::Map<const Eigen::VectorXd>(b.data(),
                                                   static_cast<long>(b.size()));
    }
    m.w_r = Eigen::MatrixXd::Zero(m.n, m.n);
    for (const auto& t : j.at("w_r_nonzeros")) {
        const int r = t.at(0).get<int>();
        const int c = t.at(1).get<int>();
        m.w_r(r, c) = t.at(2).get<double>();
        m.nonzeros.emplace_back(r, c);
    }
    m.w_out = matrix_from_json(j.at("w_out"));
    return m;
}

// ---- QuantizedModel ----------------------------------------------------------

inline nlohmann::json quant_params_to_json(const QuantParams& p) {
    return {{"scale", p.scale}, {"bias", p.bias}, {"q", p.q}, {"flagged", p.flagged}};
}

inline QuantParams quant_params_from_json(const nlohmann::json& j) {
    QuantParams p;
    p.scale = j.at("scale").get<double>();
    p.bias = j.at("bias").get<double>();
    p.q = j.at("q").get<int>();
    p.flagged = j.at("flagged").get<bool>();
    return p;
}

inline nlohmann::json quantized_model_to_json(const QuantizedModel& qm) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = "quantized-model";
    j["q"] = qm.q;
    j["n"] = qm.n;
    j["d_in"] = qm.d_in;
    j["acc_width"] = qm.acc_width;
    j["source_seed"] = qm.source_seed;
    j["w_in_int"] = int_matrix_to_json(qm.w_in_int);
    j["bias_int"] = std::vector<std::int64_t>(
        qm.bias_int.data(), qm.bias_int.data() + qm.bias_int.size());
    nlohmann::json nz = nlohmann::json::array();
    for (const auto& [r, c] : qm.nonzeros)
        nz.push_back({r, c, qm.w_r_int(r, c)});
    j["w_r_nonzeros"] = std::move(nz);
    j["quant_params"] = {
        {"w_in", quant_params_to_json(qm.p_w_in)},
        {"w_r", quant_params_to_json(qm.p_w_r)},
        {"state", quant_params_to_json(qm.p_state)},
        {"input", quant_params_to_json(qm.p_input)},
        {"w_out", quant_params_to_json(qm.p_w_out)},
    };
    j["threshold_table"] = {
        {"q_act", qm.table.q_act},
        {"acc_scale", qm.table.acc_scale},
        {"thresholds", qm.table.thresholds},
        {"codes", qm.table.codes},
    };
    nlohmann::json pr = nlohmann::json::array();
    for (const auto& [r, c] : qm.mask.pruned) pr.push_back({r, c});
    j["prune_mask"] = {{"rate", qm.mask.rate}, {"pruned", std::move(pr)}};
    j["w_out"] = matrix_to_json(qm.w_out);
    nlohmann::json wout_int = nlohmann::json::array();
    for (long r = 0; r < qm.w_out_int.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (long c = 0; c < qm.w_out_int.cols(); ++c)
            row.push_back(qm.w_out_int(r, c));
        wout_int.push_back(std::move(row));
    }
    j["w_out_int"] = std::move(wout_int);
    return j;
}

inline QuantizedModel quantized_model_from_json(const nlohmann::json& j) {
    if (j.at("kind") != "quantized-model")
        throw std::runtime_error("not a quantized-model artifact");
    QuantizedModel qm;
    qm.q = j.at("q").get<int>();
    qm.n = j.at("n").get<long>();
    qm.d_in = j.at("d_in").get<long>();
    qm.acc_width = j.at("acc_width").get<int>();
    qm.source_seed = j.at("source_seed").get<std::uint64_t>();
    qm.w_in_int = int_matrix_from_json(j.at("w_in_int"));
    if (j.contains("bias_int")) {
        const auto b = j.at("bias_int").get<std::vector<std::int64_t>>();
        qm.bias_int = Eigen::Map<const Int64Vector>(b.data(),
                                                    static_cast<long>(b.size()));
    }
    qm.w_r_int = IntMatrix::Zero(qm.n, qm.n);
    for (const auto& t : j.at("w_r_nonzeros")) {
        const int r = t.at(0).get<int>();
        const int c = t.at(1).get<int>();
        qm.w_r_int(r, c) = t.at(2).get<std::int32_t>();
        qm.nonzeros.emplace_back(r, c);
    }
    const auto& qp = j.at("quant_params");
    qm.p_w_in = quant_params_from_json(qp.at("w_in"));
    qm.p_w_r = quant_params_from_json(qp.at("w_r"));
    qm.p_state = quant_params_from_json(qp.at("state"));
    qm.p_input = quant_params_from_json(qp.at("input"));
    qm.p_w_out = quant_params_from_json(qp.at("w_out"));
    const auto& tt = j.at("threshold_table");
    qm.table.q_act = tt.at("q_act").get<int>();
    qm.table.acc_scale = tt.at("acc_scale").get<double>();
    qm.table.thresholds = tt.at("thresholds").get<std::vector<std::int64_t>>();
    qm.table.codes = tt.at("codes").get<std::vector<std::int64_t>>();
    qm.mask.rate = j.at("prune_mask").at("rate").get<double>();
    for (const auto& t : j.at("prune_mask").at("pruned"))
        qm.mask.pruned.emplace_back(t.at(0).get<int>(), t.at(1).get<int>());
    qm.w_out = matrix_from_json(j.at("w_out"));
    const auto& wi = j.at("w_out_int");
    qm.w_out_int.resize(static_cast<long>(wi.size()),
                        wi.empty() ? 0 : static_cast<long>(wi.at(0).size()));
    for (long r = 0; r < qm.w_out_int.rows(); ++r)
        for (long c = 0; c < qm.w_out_int.cols(); ++c)
            qm.w_out_int(r, c) = wi.at(static_cast<std::size_t>(r))
                                     .at(static_cast<std::size_t>(c))
                                     .get<std::int64_t>();
    return qm;
}

// ---- SensitivityReport --------------------------------------------------------

inline nlohmann::json report_to_json(const SensitivityReport& rep) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = "sensitivity-report";
    j["pruner"] = rep.pruner;
    j["q"] = rep.q;
    j["calibration_id"] = rep.calibration_id;
    j["base_perf"] = {{"kind", to_string(rep.base_perf.kind)},
                      {"value", rep.base_perf.value}};
    j["scores"] = rep.scores;
    j["ranking"] = rep.ranking;
    return j;
}

inline SensitivityReport report_from_json(const nlohmann::json& j) {
    if (j.at("kind") != "sensitivity-report")
        throw std::runtime_error("not a sensitivity-report artifact");
    SensitivityReport rep;
    rep.pruner = j.at("pruner").get<std::string>();
    rep.q = j.at("q").get<int>();
    rep.calibration_id = j.at("calibration_id").get<std::string>();
    rep.base_perf.kind = j.at("base_perf").at("kind") == "accuracy"
                             ? Performance::Kind::accuracy
                             : Performance::Kind::rmse;
    rep.base_perf.value = j.at("base_perf").at("value").get<double>();
    rep.scores = j.at("scores").get<std::vector<double>>();
    rep.ranking = j.at("ranking").get<std::vector<std::size_t>>();
    return rep;
}

// ---- Netlist / cost -------------------------------------------------------------

inline nlohmann::json netlist_to_json(const Netlist& net) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = "netlist";
    j["module_name"] = net.module_name;
    j["q"] = net.q;
    j["n"] = net.n;
    j["d_in"] = net.d_in;
    j["d_out"] = net.d_out;
    nlohmann::json nodes = nlohmann::json::array();
    for (const Node& node : net.nodes)
        nodes.push_back({{"id", node.id},
                         {"kind", to_string(node.kind)},
                         {"width", node.width},
                         {"operands", node.operands},
                         {"constant", node.constant},
                         {"shift", node.shift},
                         {"name", node.name}});
    j["nodes"] = std::move(nodes);
    j["inputs"] = net.inputs;
    j["outputs"] = net.outputs;
    j["registers"] = net.registers;
    return j;
}

inline nlohmann::json cost_to_json(const CostEstimate& c) {
    return {{"schema_version", kSchemaVersion},
            {"kind", "cost-estimate"},
            {"n_adders", c.n_adders},
            {"n_comparators", c.n_comparators},
            {"n_registers", c.n_registers},
            {"n_shift_terms", c.n_shift_terms},
            {"est_luts", c.est_luts},
            {"critical_path_levels", c.critical_path_levels}};
}

// ---- File helpers ----------------------------------------------------------------

inline void write_json_file(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << j.dump(2) << "\n";
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing artifact file: " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

inline void write_text_file(const std::string& text, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << text;
}

}  // namespace rcc
