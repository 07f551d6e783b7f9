#include <catch_amalgamated.hpp>

#include "helpers.hpp"

#include <cstdio>
#include <filesystem>

#include "rcc/dataset.hpp"
#include "rcc/reservoir.hpp"

using namespace rcc;

TEST_CASE("henon orbit hand values") {
    // x1 = 1 - 1.4*0 + 0 = 1, x2 = 1 - 1.4 + 0.3*... hand recurrence:
    // x_{t+1} = 1 - a x_t^2 + y_t, y_{t+1} = b x_t.
    const auto xs = henon_orbit(4, 1.4, 0.3, 0.0, 0.0);
    REQUIRE(xs[0] == 0.0);
    REQUIRE(xs[1] == 1.0);
    REQUIRE(xs[2] == Catch::Approx(-0.4).margin(1e-15));
    REQUIRE(xs[3] == Catch::Approx(1.076).margin(1e-12));
}

TEST_CASE("henon a=0 b=0 collapses to constant 1") {
    const auto xs = henon_orbit(5, 0.0, 0.0, 0.0, 0.0);
    for (std::size_t t = 1; t < xs.size(); ++t) REQUIRE(xs[t] == 1.0);
}

TEST_CASE("henon divergence reported with parameters") {
    REQUIRE_THROWS_WITH(henon_orbit(100, 10.0, 0.3, 2.0, 0.0),
                        Catch::Matchers::ContainsSubstring("a=10"));
}

TEST_CASE("gen_henon default split 4000/1000") {
    const auto ds = gen_henon(5000);
    REQUIRE(ds.inputs.rows() == 5000);
    REQUIRE(ds.inputs.cols() == 1);
    REQUIRE(ds.n_train == 4000);
    REQUIRE(ds.n_test == 1000);
    REQUIRE(ds.task == TaskKind::regression);
    // One-step-ahead targets.
    for (long t = 0; t + 1 < 50; ++t)
        REQUIRE(ds.targets(t, 0) == ds.inputs(t + 1, 0));
}

TEST_CASE("gen_henon deterministic") {
    const auto a = gen_henon(1000);
    const auto b = gen_henon(1000);
    REQUIRE(bits_equal(a.inputs, b.inputs));
    REQUIRE(bits_equal(a.targets, b.targets));
}

TEST_CASE("gen_henon rejects too-short series") {
    REQUIRE_THROWS(gen_henon(1));
}

TEST_CASE("split disjointness") {
    const auto ds = gen_henon(5000);
    const auto [tr_begin, tr_end] = ds.train_rows();
    const auto [te_begin, te_end] = ds.test_rows();
    REQUIRE(tr_end <= te_begin);
    REQUIRE(te_end <= ds.inputs.rows());
}

TEST_CASE("normalize: train-split statistics, invertible") {
    const auto raw = gen_henon(2000);
    const auto ds = normalize(raw);
    const auto [tr_begin, tr_end] = ds.train_rows();
    double mean = 0.0, sq = 0.0;
    const long n = tr_end - tr_begin;
    for (long t = tr_begin; t < tr_end; ++t) mean += ds.inputs(t, 0);
    mean /= double(n);
    for (long t = tr_begin; t < tr_end; ++t)
        sq += (ds.inputs(t, 0) - mean) * (ds.inputs(t, 0) - mean);
    REQUIRE(mean == Catch::Approx(0.0).margin(1e-10));
    REQUIRE(std::sqrt(sq / double(n)) == Catch::Approx(1.0).margin(1e-10));

    const auto back = denormalize(ds);
    for (long t = 0; t < raw.inputs.rows(); ++t) {
        REQUIRE(back.inputs(t, 0) == Catch::Approx(raw.inputs(t, 0)).margin(1e-12));
        REQUIRE(back.targets(t, 0) == Catch::Approx(raw.targets(t, 0)).margin(1e-12));
    }
}

TEST_CASE("normalize twice is identity") {
    const auto once = normalize(gen_henon(2000));
    const auto twice = normalize(once);
    REQUIRE(bits_equal(once.inputs, twice.inputs));
}

TEST_CASE("normalize flags constant channel") {
    TimeSeriesDataset ds;
    ds.task = TaskKind::regression;
    ds.inputs = Eigen::MatrixXd::Ones(100, 2);
    ds.inputs.col(1) = Eigen::VectorXd::LinSpaced(100, 0.0, 1.0);
    ds.targets = Eigen::MatrixXd::Zero(100, 1);
    ds.n_train = 80;
    ds.n_test = 20;
    ds.id = "const-channel";
    const auto out = normalize(ds);
    REQUIRE(out.norm.input_flagged[0]);
    REQUIRE_FALSE(out.norm.input_flagged[1]);
    // The flagged channel is left untouched (no division by zero).
    REQUIRE(out.inputs(0, 0) == 1.0);
}

TEST_CASE("csv round trip is bit-equal") {
    const auto ds = gen_henon(500);
    const std::string path = "henon_roundtrip_test.csv";
    save_csv(ds, path);
    CsvSchema schema;
    schema.task = TaskKind::regression;
    schema.train_fraction = double(ds.n_train) / double(ds.inputs.rows());
    const auto back = load_csv(path, schema);
    std::remove(path.c_str());
    REQUIRE(back.inputs.rows() == ds.inputs.rows());
    for (long t = 0; t < ds.inputs.rows(); ++t) {
        REQUIRE(back.inputs(t, 0) == ds.inputs(t, 0));
        REQUIRE(back.targets(t, 0) == ds.targets(t, 0));
    }
}

TEST_CASE("csv header-only body rejected") {
    const std::string path = "empty_body_test.csv";
    {
        std::ofstream out(path);
        out << "seq_id,t,x_0,target_0\n";
    }
    CsvSchema schema;
    REQUIRE_THROWS_WITH(load_csv(path, schema),
                        Catch::Matchers::ContainsSubstring("no data rows"));
    std::remove(path.c_str());
}

TEST_CASE("csv malformed cell reported with line number") {
    const std::string path = "malformed_test.csv";
    {
        std::ofstream out(path);
        out << "seq_id,t,x_0,target_0\n";
        out << "0,0,0.5,0.25\n";
        out << "0,1,oops,0.5\n";
    }
    CsvSchema schema;
    REQUIRE_THROWS_WITH(load_csv(path, schema),
                        Catch::Matchers::ContainsSubstring("line 3"));
    std::remove(path.c_str());
}

TEST_CASE("dataset json round trip") {
    const auto ds = normalize(gen_henon(300));
    const auto j = dataset_to_json(ds);
    REQUIRE(j.at("schema_version") == 1);
    const auto back = dataset_from_json(j);
    REQUIRE(bits_equal(back.inputs, ds.inputs));
    REQUIRE(bits_equal(back.targets, ds.targets));
    REQUIRE(back.n_train == ds.n_train);
    REQUIRE(back.norm.applied == ds.norm.applied);
}

TEST_CASE("synthetic classification shapes and rejection") {
    const auto ds = gen_synthetic_classification(10, 8, 50, 20, 3);
    REQUIRE(ds.task == TaskKind::classification);
    REQUIRE(ds.seq_length == 8);
    REQUIRE(ds.n_classes == 10);
    REQUIRE(ds.inputs.rows() == (50 + 20) * 8);
    for (const int label : ds.labels) {
        REQUIRE(label >= 0);
        REQUIRE(label < 10);
    }
    REQUIRE_THROWS(gen_synthetic_classification(2, 8, 50, 0, 3));
    REQUIRE_THROWS(gen_synthetic_classification(1, 8, 50, 20, 3));
}

TEST_CASE("synthetic classification is learnable by a float reservoir") {
    const auto ds = normalize(
        gen_synthetic_classification(2, 24, 120, 60, 11, /*noise=*/0.0));
    Hyperparams hp;
    hp.spectral_radius = 0.9;
    hp.leaking_rate = 1.0;
    hp.ncrl = 200;
    hp.ridge_lambda = 1e-6;
    auto m = init_reservoir(hp, 30, ds.d_in(), 5);
    train(m, ds);
    const auto perf = evaluate(m, ds);
    REQUIRE(perf.kind == Performance::Kind::accuracy);
    REQUIRE(perf.value >= 0.95);
}
