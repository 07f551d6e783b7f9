#include <catch_amalgamated.hpp>

#include <fstream>

#include "helpers.hpp"
#include "rcc/baselines.hpp"
#include "rcc/netlist.hpp"
#include "rcc/rng.hpp"
#include "rcc/sensitivity.hpp"
#include "rcc/verilog.hpp"

using namespace rcc;

namespace {

QuantizedModel henon_model(int q, std::uint64_t seed = 7) {
    const auto ds = normalize(gen_henon(2000));
    Hyperparams hp;
    hp.ncrl = 60;
    auto m = init_reservoir(hp, 12, 1, seed);
    train(m, ds);
    return quantize_model(m, q);
}

long count_kind(const Netlist& net, NodeKind kind) {
    long n = 0;
    for (const auto& node : net.nodes)
        if (node.kind == kind) ++n;
    return n;
}

}  // namespace

TEST_CASE("csd: 6 decomposes as 8 - 2") {
    const auto terms = csd_decompose(6);
    REQUIRE(terms.size() == 2);
    // Terms in ascending shift order: -2^1 + 2^3.
    REQUIRE(terms[0].sign == -1);
    REQUIRE(terms[0].shift == 1);
    REQUIRE(terms[1].sign == 1);
    REQUIRE(terms[1].shift == 3);
}

TEST_CASE("csd: reconstructs every q<=8 value within the digit bound") {
    for (int q = 1; q <= 8; ++q) {
        for (std::int64_t v = qmin_code(q); v <= qmax_code(q); ++v) {
            const auto terms = csd_decompose(v);
            std::int64_t sum = 0;
            for (const auto& t : terms) sum += t.sign * (std::int64_t(1) << t.shift);
            REQUIRE(sum == v);
            REQUIRE(static_cast<long>(terms.size()) <= q / 2 + 2);  // ceil(q/2)+1
            // Non-adjacency of nonzero digits.
            for (std::size_t i = 1; i < terms.size(); ++i)
                REQUIRE(terms[i].shift > terms[i - 1].shift + 1);
        }
    }
}

TEST_CASE("lower: zero weight emits no hardware") {
    auto qm = henon_model(4);
    const auto full = lower(qm);
    // Remove one weight structurally; the lowering must shrink.
    const auto calib = make_calibration_set(normalize(gen_henon(2000)));
    const auto report = compute_sensitivity(qm, calib);
    const auto pruned = prune(qm, report.ranking, 50.0);
    const auto half = lower(pruned);
    REQUIRE(half.nodes.size() < full.nodes.size());
    REQUIRE(count_kind(half, NodeKind::register_node) ==
            count_kind(full, NodeKind::register_node));
}

TEST_CASE("lower: structure of the netlist") {
    const auto qm = henon_model(4);
    const auto net = lower(qm);
    REQUIRE(net.q == 4);
    REQUIRE(net.n == 12);
    REQUIRE(static_cast<long>(net.inputs.size()) == qm.d_in);
    REQUIRE(static_cast<long>(net.outputs.size()) == qm.w_out.rows());
    REQUIRE(static_cast<long>(net.registers.size()) == qm.n);
    check_acyclic(net);
    // Comparator thresholds all come from the model's threshold table.
    const auto transitions = qm.table.transitions();
    for (const auto& node : net.nodes) {
        if (node.kind != NodeKind::comparator) continue;
        bool found = false;
        for (const auto& [thr, code] : transitions)
            if (thr == node.constant) found = true;
        REQUIRE(found);
    }
}

TEST_CASE("lower: fully degenerate model rejected") {
    auto qm = henon_model(4);
    qm.nonzeros.clear();
    qm.w_r_int.setZero();
    qm.w_in_int.setZero();
    REQUIRE_THROWS(lower(qm));
}

TEST_CASE("interpreter: zero inputs keep zero outputs") {
    auto qm = henon_model(4);
    qm.bias_int.setZero();  // bias would move the state off zero by design
    const auto net = lower(qm);
    const auto out = interpret_netlist(net, IntMatrix::Zero(10, 1));
    REQUIRE(out.cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("interpreter: reset clears state registers") {
    const auto qm = henon_model(4);
    const auto net = lower(qm);
    NetlistInterpreter interp(net);
    Rng rng(3);
    std::vector<std::int64_t> u(1);
    for (int t = 0; t < 20; ++t) {
        u[0] = rng.next_below(15) - 7;
        interp.step(u);
    }
    interp.reset();
    // After reset, a zero input step yields the same outputs as a fresh
    // interpreter's first zero step.
    NetlistInterpreter fresh(net);
    u[0] = 0;
    REQUIRE(interp.step(u) == fresh.step(u));
}

TEST_CASE("interpreter: bit-exact against the integer forward pass") {
    const auto ds = normalize(gen_henon(2000));
    const auto qm = henon_model(6);
    const auto net = lower(qm);
    const IntMatrix u_int = quantize_inputs(qm, ds.inputs.topRows(200));
    const auto hw = interpret_netlist(net, u_int);
    const auto sw = quantized_forward(qm, ds.inputs.topRows(200));
    REQUIRE(bits_equal(hw, sw.outputs_int));
}

TEST_CASE("verilog: deterministic emission and self-check") {
    const auto qm = henon_model(4);
    const auto net = lower(qm, "toy_core");
    const std::string a = emit_verilog(net);
    const std::string b = emit_verilog(lower(qm, "toy_core"));
    REQUIRE(a == b);
    REQUIRE_NOTHROW(check_verilog_subset(a));
    REQUIRE(a.find("module toy_core") != std::string::npos);
    REQUIRE(a.find("endmodule") != std::string::npos);
}

TEST_CASE("verilog: golden file for a one-neuron model") {
    // Hand-constructed single-neuron, single-input model with fixed scales:
    // the emitted text is pinned as a reviewed golden file.
    QuantizedModel qm;
    qm.q = 3;
    qm.n = 1;
    qm.d_in = 1;
    qm.w_in_int = IntMatrix::Zero(1, 1);
    qm.w_in_int(0, 0) = 3;
    qm.w_r_int = IntMatrix::Zero(1, 1);
    qm.w_r_int(0, 0) = 2;
    qm.nonzeros = {{0, 0}};
    qm.p_w_r.q = 3;
    qm.p_w_r.scale = 3.0;
    qm.p_state.q = 3;
    qm.p_state.scale = 3.0;
    qm.table = build_thresholds(3, 9.0, qm.p_state, Activation::hardtanh);
    qm.w_out = Eigen::MatrixXd::Ones(1, 1);
    qm.w_out_int = Int64Matrix::Zero(1, 1);
    qm.w_out_int(0, 0) = 3;
    qm.p_w_out.q = 3;
    qm.p_w_out.scale = 3.0;
    qm.acc_width = 2 * 3 + 1 + 1;

    const std::string text = emit_verilog(lower(qm, "one_neuron"));
    std::ifstream golden("golden/one_neuron.v");
    REQUIRE(golden.good());
    std::stringstream want;
    want << golden.rdbuf();
    REQUIRE(text == want.str());
}

TEST_CASE("cost: empty netlist costs nothing") {
    Netlist net;
    const auto cost = estimate_cost(net);
    REQUIRE(cost.n_adders == 0);
    REQUIRE(cost.n_comparators == 0);
    REQUIRE(cost.est_luts == 0);
    REQUIRE(cost.critical_path_levels == 0);
}

TEST_CASE("cost: adding one adder raises est_luts by its operand width") {
    Netlist net;
    detail::NetlistBuilder b(net);
    const int c1 = b.add(NodeKind::constant, 5, {}, 7);
    const int c2 = b.add(NodeKind::constant, 5, {}, -3);
    const auto before = estimate_cost(net);
    b.add(NodeKind::adder, 6, {c1, c2});
    const auto after = estimate_cost(net);
    REQUIRE(after.n_adders == before.n_adders + 1);
    REQUIRE(after.est_luts == before.est_luts + 5);
    REQUIRE(after.critical_path_levels >= before.critical_path_levels);
}

TEST_CASE("cost: monotone decline under nested pruning") {
    const auto ds = normalize(gen_henon(2000));
    const auto qm = henon_model(4);
    const auto calib = make_calibration_set(ds);
    const auto report = compute_sensitivity(qm, calib);
    long previous = std::numeric_limits<long>::max();
    for (const double p : {0.0, 30.0, 60.0, 90.0}) {
        const auto pruned = prune(qm, report.ranking, p);
        const auto cost = estimate_cost(lower(pruned));
        REQUIRE(cost.est_luts < previous);
        previous = cost.est_luts;
    }
}

TEST_CASE("verilog subset checker rejects malformed text") {
    REQUIRE_THROWS(check_verilog_subset("assign x = y;\n"));
    const std::string undeclared =
        "module m (\n  input wire clk\n);\nwire signed [3:0] a;\nassign a = b;\n"
        "endmodule\n";
    REQUIRE_THROWS_WITH(check_verilog_subset(undeclared),
                        Catch::Matchers::ContainsSubstring("undeclared"));
}
