#include <catch_amalgamated.hpp>

#include "helpers.hpp"
#include "rcc/quantize.hpp"
#include "rcc/rng.hpp"
#include "rcc/serialize.hpp"

using namespace rcc;

TEST_CASE("quant params: symmetric scale definition") {
    Eigen::MatrixXd t(1, 2);
    t << -1.0, 0.25;
    const auto p = compute_quant_params(t, 4);
    REQUIRE(p.scale == 7.0);
    REQUIRE(p.bias == 0.0);
    REQUIRE_FALSE(p.flagged);
}

TEST_CASE("quant params: [-2, 0.5] at q=8 gives scale 63.5") {
    Eigen::MatrixXd t(1, 2);
    t << -2.0, 0.5;
    const auto p = compute_quant_params(t, 8);
    REQUIRE(p.scale == 63.5);
}

TEST_CASE("quant params: all-zero tensor flagged with scale 1") {
    const auto p = compute_quant_params(Eigen::MatrixXd::Zero(3, 3), 6);
    REQUIRE(p.scale == 1.0);
    REQUIRE(p.flagged);
}

TEST_CASE("quantize: identity on in-range integers at unit scale") {
    QuantParams p;
    p.scale = 1.0;
    p.q = 4;
    for (int v = -8; v <= 7; ++v)
        REQUIRE(quantize_value(static_cast<double>(v), p) == v);
}

TEST_CASE("quantize: rounding half away from zero") {
    QuantParams p;
    p.scale = 7.0;
    p.q = 4;
    REQUIRE(quantize_value(-1.0, p) == -7);
    REQUIRE(quantize_value(0.5, p) == 4);    // round(3.5) -> 4
    REQUIRE(quantize_value(-0.5, p) == -4);  // round(-3.5) -> -4
}

TEST_CASE("quantize: clamping to the q-bit range") {
    QuantParams p;
    p.scale = 100.0;
    p.q = 4;
    REQUIRE(quantize_value(5.0, p) == 7);
    REQUIRE(quantize_value(-5.0, p) == -8);
}

TEST_CASE("dequantize: trivial identities") {
    QuantParams p;
    p.scale = 4.0;
    p.q = 4;
    REQUIRE(dequantize_value(0, p) == 0.0);
    REQUIRE(dequantize_value(-8, p) == -2.0);  // extreme code / scale
}

TEST_CASE("quantization error bound holds on random tensors") {
    Rng rng(21);
    Eigen::MatrixXd t(40, 40);
    for (long r = 0; r < 40; ++r)
        for (long c = 0; c < 40; ++c) t(r, c) = rng.uniform(-1.0, 1.0);
    for (const int q : {2, 4, 8}) {
        const auto p = compute_quant_params(t, q);
        const auto ti = quantize_tensor(t, p);
        double max_err = 0.0;
        for (long r = 0; r < 40; ++r)
            for (long c = 0; c < 40; ++c)
                max_err = std::max(
                    max_err, std::abs(t(r, c) - dequantize_value(ti(r, c), p)));
        REQUIRE(max_err <= 0.5 / p.scale + 1e-15);
    }
}

TEST_CASE("threshold table: q=1 is the sign function") {
    QuantParams state;
    state.q = 1;
    state.scale = 1.0;
    const auto table = build_thresholds(1, 16.0, state, Activation::hardtanh);
    REQUIRE(table.thresholds.size() == 1);
    REQUIRE(table.codes.size() == 2);
    // Codes are {-1, 0}: the only representable 1-bit values.
    REQUIRE(table.apply(-1000) == -1);
    REQUIRE(table.apply(1000) == 0);
}

TEST_CASE("threshold table: shape and saturation") {
    QuantParams state;
    state.q = 4;
    state.scale = 7.0;
    const auto table = build_thresholds(4, 100.0, state, Activation::hardtanh);
    REQUIRE(table.thresholds.size() == 15);
    REQUIRE(table.codes.size() == 16);
    for (std::size_t i = 1; i < table.thresholds.size(); ++i)
        REQUIRE(table.thresholds[i] > table.thresholds[i - 1]);
    for (std::size_t i = 1; i < table.codes.size(); ++i)
        REQUIRE(table.codes[i] >= table.codes[i - 1]);
    // Beyond saturation the extreme codes appear.
    REQUIRE(table.apply(1L << 40) == 7);
    REQUIRE(table.apply(-(1L << 40)) == -7);  // hardtanh(-x) saturates at -1
}

TEST_CASE("threshold table: exhaustive streamline equivalence per width") {
    // The real accumulator range of a small quantized model, swept fully.
    for (int q = 1; q <= 8; ++q) {
        QuantParams state;
        state.q = q;
        state.scale = q == 1 ? 1.0 : static_cast<double>(qmax_code(q));
        const double acc_scale = 37.0;  // arbitrary positive scale
        const auto table = build_thresholds(q, acc_scale, state,
                                            Activation::hardtanh,
                                            -4096, 4096);
        for (std::int64_t acc = -4096; acc <= 4096; ++acc) {
            const double x = static_cast<double>(acc) / acc_scale;
            const std::int64_t want = quantize_value(
                apply_activation(Activation::hardtanh, x), state);
            REQUIRE(table.apply(acc) == want);
        }
    }
}

TEST_CASE("quantized model: derived scales are consistent") {
    const auto ds = normalize(gen_henon(2000));
    Hyperparams hp;
    hp.ncrl = 100;
    auto m = init_reservoir(hp, 20, 1, 4);
    train(m, ds);
    const auto qm = quantize_model(m, 6);
    REQUIRE(qm.q == 6);
    // Input partials and recurrent partials must share one accumulator scale.
    REQUIRE(qm.p_w_in.scale * qm.p_input.scale ==
            Catch::Approx(qm.p_w_r.scale * qm.p_state.scale));
    // Overflow-free: the accumulator width covers the worst-case sum of all
    // integer products.
    const std::int64_t w_in_absmax = qm.w_in_int.cwiseAbs().maxCoeff();
    const std::int64_t bound =
        20 * qmax_code(6) * qmax_code(6) + 1 * w_in_absmax * qmax_code(6);
    REQUIRE((std::int64_t(1) << (qm.acc_width - 1)) - 1 >= bound);
    REQUIRE(qm.acc_width >= 2 * 6 + ceil_log2(20 + 1) + 1);
    for (const auto& [r, c] : qm.nonzeros) {
        REQUIRE(qm.w_r_int(r, c) >= qmin_code(6));
        REQUIRE(qm.w_r_int(r, c) <= qmax_code(6));
    }
}

TEST_CASE("quantized model: untrained and leaky models rejected") {
    Hyperparams hp;
    hp.ncrl = 10;
    auto m = init_reservoir(hp, 5, 1, 0);
    REQUIRE_THROWS(quantize_model(m, 4));  // untrained
    const auto ds = normalize(gen_henon(800));
    hp.leaking_rate = 0.5;
    auto leaky = init_reservoir(hp, 5, 1, 0);
    train(leaky, ds);
    REQUIRE_THROWS(quantize_model(leaky, 4));
}

TEST_CASE("quantized forward: zero weights give zero outputs") {
    const auto ds = normalize(gen_henon(800));
    Hyperparams hp;
    hp.ncrl = 10;
    auto m = init_reservoir(hp, 5, 1, 2);
    train(m, ds);
    auto qm = quantize_model(m, 4);
    qm.w_in_int.setZero();
    qm.bias_int.setZero();
    qm.w_r_int.setZero();
    const auto r = quantized_forward(qm, ds.inputs.topRows(50));
    REQUIRE(r.states.cwiseAbs().maxCoeff() == 0);
    REQUIRE(r.predictions.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("quantized forward: deterministic and cache-transparent") {
    const auto ds = normalize(gen_henon(1500));
    Hyperparams hp;
    hp.ncrl = 100;
    auto m = init_reservoir(hp, 20, 1, 8);
    train(m, ds);
    const auto qm = quantize_model(m, 4);
    const Eigen::MatrixXd inputs = ds.inputs.topRows(300);
    const auto a = quantized_forward(qm, inputs);
    const auto b = quantized_forward(qm, inputs);
    REQUIRE(bits_equal(a.states, b.states));
    const auto partials = compute_input_partials(qm, inputs);
    const auto c = quantized_forward(qm, inputs, 0, &partials);
    REQUIRE(bits_equal(a.states, c.states));
    REQUIRE(bits_equal(a.outputs_int, c.outputs_int));
}

TEST_CASE("quantized forward: 8-bit stays close to the float model") {
    const auto ds = normalize(gen_henon(5000));
    Hyperparams hp;
    hp.spectral_radius = 0.9;
    hp.ncrl = 250;
    hp.ridge_lambda = 1e-8;
    auto m = init_reservoir(hp, 50, 1, 7);
    train(m, ds);
    const double float_rmse = evaluate(m, ds).value;
    const auto qm = quantize_model(m, 8);
    const double q8_rmse = evaluate_quantized(qm, make_test_set(ds)).value;
    // The 8-bit state step (~0.008) recirculates through the recurrence, so
    // the quantized error floor is absolute rather than proportional to the
    // float baseline; 3x leaves room for that floor without hiding blowups.
    REQUIRE(q8_rmse <= 3.0 * float_rmse);
}

TEST_CASE("quantized model json round trip") {
    const auto ds = normalize(gen_henon(1200));
    Hyperparams hp;
    hp.ncrl = 60;
    auto m = init_reservoir(hp, 15, 1, 5);
    train(m, ds);
    const auto qm = quantize_model(m, 5);
    const auto back = quantized_model_from_json(quantized_model_to_json(qm));
    REQUIRE(back.q == qm.q);
    REQUIRE(bits_equal(back.w_in_int, qm.w_in_int));
    REQUIRE(bits_equal(back.w_r_int, qm.w_r_int));
    REQUIRE(back.nonzeros == qm.nonzeros);
    REQUIRE(back.table.thresholds == qm.table.thresholds);
    REQUIRE(back.table.codes == qm.table.codes);
    REQUIRE(back.p_w_r.scale == qm.p_w_r.scale);
    REQUIRE(back.acc_width == qm.acc_width);
    REQUIRE(bits_equal(back.w_out, qm.w_out));
    // Forward passes agree bit-exactly after the round trip.
    const auto a = quantized_forward(qm, ds.inputs.topRows(100));
    const auto b = quantized_forward(back, ds.inputs.topRows(100));
    REQUIRE(bits_equal(a.states, b.states));
}
