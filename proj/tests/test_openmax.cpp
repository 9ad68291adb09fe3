#include <catch2/catch.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fosr/openmax.hpp"
#include "fosr/random.hpp"

using namespace fosr;

namespace {

// Identity-like K x K two-layer network: logits equal the input for
// positive features.
ModelParameters identity_model(std::size_t k) {
    ModelParameters m;
    m.shapes = {{k, k}, {k, k}};
    m.values.assign(m.expected_size(), 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        m.values[m.weight_offset(0) + i * k + i] = 1.0;
        m.values[m.weight_offset(1) + i * k + i] = 1.0;
    }
    return m;
}

GlobalCalibration make_calibration(std::vector<ActivationVector> mavs,
                                   std::vector<WeibullModel> weibulls,
                                   CalibrationConfig cfg) {
    GlobalCalibration cal;
    cal.config = cfg;
    for (std::size_t c = 0; c < mavs.size(); ++c) {
        cal.classes.push_back({static_cast<int>(c), std::move(mavs[c]), weibulls[c],
                               weibulls[c].tail_size_used});
    }
    return cal;
}

// A calibration whose Weibull scales are so large that every cdf is 0.
GlobalCalibration all_pass_calibration(std::size_t k, CalibrationConfig cfg) {
    std::vector<ActivationVector> mavs(k, ActivationVector(k, 0.0));
    std::vector<WeibullModel> weibulls(k, WeibullModel{1.0, 1e300, 2});
    return make_calibration(std::move(mavs), std::move(weibulls), cfg);
}

// Independent re-implementation of the rank-weighted revision rule, used as
// the oracle for recalibrate().
struct OracleResult {
    std::vector<double> revised;
    double unknown = 0.0;
    std::vector<double> omega;
};

OracleResult oracle_recalibrate(const ActivationVector& v, const GlobalCalibration& cal) {
    const std::size_t k = v.size();
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < k; ++i) ranked.emplace_back(-v[i], i);
    std::sort(ranked.begin(), ranked.end());
    OracleResult res;
    res.omega.assign(k, 1.0);
    const double alpha = static_cast<double>(cal.config.alpha_rank);
    for (int j = 1; j <= cal.config.alpha_rank; ++j) {
        const std::size_t c = ranked[static_cast<std::size_t>(j - 1)].second;
        const double d = distance(v, cal.classes[c].mav, cal.config.metric);
        res.omega[c] = 1.0 - ((alpha - j + 1) / alpha) * weibull_cdf(cal.classes[c].weibull, d);
    }
    res.revised.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        res.revised[i] = v[i] * res.omega[i];
        res.unknown += v[i] * (1.0 - res.omega[i]);
    }
    return res;
}

} // namespace

TEST_CASE("collect_correct_activations keeps only correct samples") {
    const auto m = identity_model(2);

    // perfect model: every sample appears under its label
    const std::vector<LabeledSample> perfect = {{{3.0, 1.0}, 0},
                                                {{1.0, 4.0}, 1},
                                                {{5.0, 2.0}, 0}};
    auto by_class = collect_correct_activations(m, perfect);
    REQUIRE(by_class.size() == 2);
    CHECK(by_class[0].size() == 2);
    CHECK(by_class[1].size() == 1);

    // all-zero model predicts class 0 everywhere: only class 0 survives
    ModelParameters zero = m;
    zero.values.assign(zero.values.size(), 0.0);
    const std::vector<LabeledSample> balanced = {{{1.0, 0.0}, 0}, {{0.0, 1.0}, 1}};
    auto only_zero = collect_correct_activations(zero, balanced);
    REQUIRE(only_zero.size() == 1);
    CHECK(only_zero.count(0) == 1);

    // one correct, one wrong
    const std::vector<LabeledSample> mixed = {{{3.0, 1.0}, 0}, {{3.0, 1.0}, 1}};
    auto part = collect_correct_activations(m, mixed);
    REQUIRE(part.size() == 1);
    CHECK(part[0].size() == 1);

    CHECK_THROWS_AS(collect_correct_activations(m, {}), InvalidInputError);
}

TEST_CASE("compute_mav is the element-wise mean") {
    CHECK(compute_mav({{2.0, 4.0}}) == ActivationVector{2.0, 4.0});
    CHECK(compute_mav({{0.0, 0.0}, {2.0, 2.0}}) == ActivationVector{1.0, 1.0});

    const ActivationVector v{0.25, -1.5, 3.0};
    CHECK(compute_mav({v, v, v, v}) == v);

    CHECK_THROWS_AS(compute_mav({}), InvalidInputError);
    CHECK_THROWS_AS(compute_mav({{1.0}, {1.0, 2.0}}), InvalidInputError);
}

TEST_CASE("compute_distances preserves order") {
    const ActivationVector mav{0.0, 0.0};
    const std::vector<ActivationVector> acts{{0.0, 0.0}, {3.0, 4.0}};
    CHECK(compute_distances({mav}, mav, DistanceMetric::Euclidean) ==
          std::vector<double>{0.0});
    CHECK(compute_distances(acts, mav, DistanceMetric::Euclidean) ==
          std::vector<double>{0.0, 5.0});

    const std::vector<ActivationVector> swapped{acts[1], acts[0]};
    CHECK(compute_distances(swapped, mav, DistanceMetric::Euclidean) ==
          std::vector<double>{5.0, 0.0});
}

TEST_CASE("build_client_upload composes the client-side steps") {
    const auto m = identity_model(2);
    const std::vector<LabeledSample> data = {{{3.0, 1.0}, 0}, {{5.0, 1.0}, 0}};
    const auto upload = build_client_upload(7, m, data, DistanceMetric::Euclidean);
    CHECK(upload.client_id == 7);
    REQUIRE(upload.classes.size() == 1);
    const auto& stats = upload.classes.at(0);
    CHECK(stats.mav == ActivationVector{4.0, 1.0});
    REQUIRE(stats.distances.size() == 2);
    CHECK(stats.distances[0] == Approx(1.0));
    CHECK(stats.distances[1] == Approx(1.0));

    // a model with zero correct samples produces an empty upload
    ModelParameters zero = m;
    zero.values.assign(zero.values.size(), 0.0);
    const std::vector<LabeledSample> ones = {{{1.0, 2.0}, 1}};
    CHECK(build_client_upload(0, zero, ones, DistanceMetric::Euclidean).classes.empty());
}

TEST_CASE("aggregate_uploads averages MAVs and concatenates distances") {
    CalibrationConfig cfg;
    cfg.tail_size_eta = 3;
    cfg.alpha_rank = 3;

    CalibrationUpload a;
    a.client_id = 0;
    a.classes[0] = {{1.0, 1.0, 1.0}, {1.0, 2.0}};
    a.classes[1] = {{0.0, 4.0, 0.0}, {2.0, 3.0}};
    a.classes[2] = {{0.0, 0.0, 9.0}, {1.0, 4.0}};
    CalibrationUpload b;
    b.client_id = 1;
    b.classes[0] = {{3.0, 3.0, 3.0}, {3.0}};
    b.classes[1] = {{0.0, 6.0, 0.0}, {5.0}};
    b.classes[2] = {{0.0, 0.0, 7.0}, {6.0}};

    const auto cal = aggregate_uploads({a, b}, 3, cfg);
    REQUIRE(cal.classes.size() == 3);
    CHECK(cal.classes[0].mav == ActivationVector{2.0, 2.0, 2.0});
    CHECK(cal.classes[0].distance_count == 3);
    // the pool for class 0 is {1, 2, 3} in client order
    CHECK(cal.classes[0].weibull == fit_weibull_tail({1.0, 2.0, 3.0}, 3));

    // single-client aggregation is the identity
    const auto solo = aggregate_uploads({a}, 3, cfg);
    CHECK(solo.classes[1].mav == a.classes[1].mav);
    CHECK(solo.classes[1].weibull == fit_weibull_tail(a.classes[1].distances, 3));

    // upload order does not matter
    const auto flipped = aggregate_uploads({b, a}, 3, cfg);
    CHECK(flipped == cal);
}

TEST_CASE("aggregate_uploads names the class missing from every upload") {
    CalibrationConfig cfg;
    cfg.tail_size_eta = 2;
    cfg.alpha_rank = 2;
    CalibrationUpload a;
    a.client_id = 0;
    a.classes[0] = {{1.0, 0.0}, {1.0, 2.0}};
    try {
        aggregate_uploads({a}, 2, cfg);
        FAIL("expected MissingClassError");
    } catch (const MissingClassError& e) {
        CHECK(e.class_id() == 1);
        CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
}

TEST_CASE("recalibrate limits") {
    CalibrationConfig cfg;
    cfg.alpha_rank = 3;
    const ActivationVector v{2.0, 1.0, 0.5};

    // all cdfs zero: nothing changes
    const auto pass = recalibrate(v, all_pass_calibration(3, cfg));
    CHECK(pass.weights_omega == std::vector<double>{1.0, 1.0, 1.0});
    CHECK(pass.revised == v);
    CHECK(pass.unknown_activation == 0.0);

    // alpha = 1 and cdf = 1 for the top class: it is zeroed out entirely
    CalibrationConfig top_cfg;
    top_cfg.alpha_rank = 1;
    std::vector<ActivationVector> mavs(3, ActivationVector{-100.0, -100.0, -100.0});
    std::vector<WeibullModel> weibulls(3, WeibullModel{1.0, 1e-300, 2});
    const auto cal = make_calibration(std::move(mavs), std::move(weibulls), top_cfg);
    const auto out = recalibrate(v, cal);
    CHECK(out.weights_omega[0] == 0.0);
    CHECK(out.revised[0] == 0.0);
    CHECK(out.revised[1] == v[1]);
    CHECK(out.revised[2] == v[2]);
    CHECK(out.unknown_activation == v[0]);
}

TEST_CASE("recalibrate reproduces the worked three-class example") {
    // v = [3, 2, 1], alpha = 2, both evaluated cdfs equal 0.5:
    // omega = [0.5, 0.75, 1], revised = [1.5, 1.5, 1], unknown = 2.0
    const ActivationVector v{3.0, 2.0, 1.0};
    CalibrationConfig cfg;
    cfg.alpha_rank = 2;
    // place each MAV at euclidean distance 1 from v and pick lambda so that
    // cdf(1) = 1 - exp(-ln 2) = 0.5 with shape 1
    const double lambda = 1.0 / std::log(2.0);
    std::vector<ActivationVector> mavs = {{4.0, 2.0, 1.0}, {3.0, 3.0, 1.0}, {3.0, 2.0, 2.0}};
    std::vector<WeibullModel> weibulls(3, WeibullModel{1.0, lambda, 2});
    const auto cal = make_calibration(std::move(mavs), std::move(weibulls), cfg);

    const auto out = recalibrate(v, cal);
    CHECK(out.weights_omega[0] == Approx(0.5).margin(1e-12));
    CHECK(out.weights_omega[1] == Approx(0.75).margin(1e-12));
    CHECK(out.weights_omega[2] == 1.0);
    CHECK(out.revised[0] == Approx(1.5).margin(1e-12));
    CHECK(out.revised[1] == Approx(1.5).margin(1e-12));
    CHECK(out.revised[2] == Approx(1.0).margin(1e-12));
    CHECK(out.unknown_activation == Approx(2.0).margin(1e-12));

    // and the independent oracle agrees exactly
    const auto oracle = oracle_recalibrate(v, cal);
    for (int i = 0; i < 3; ++i) {
        CHECK(out.revised[static_cast<std::size_t>(i)] ==
              Approx(oracle.revised[static_cast<std::size_t>(i)]).margin(1e-12));
    }
    CHECK(out.unknown_activation == Approx(oracle.unknown).margin(1e-12));
}

TEST_CASE("recalibrate matches the oracle on randomized calibrations") {
    Rng rng(321);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 2 + rng.uniform_index(6);
        CalibrationConfig cfg;
        cfg.alpha_rank = 1 + static_cast<int>(rng.uniform_index(k));
        cfg.tail_size_eta = 2;
        ActivationVector v(k);
        for (double& x : v) x = rng.uniform(-3.0, 3.0);
        std::vector<ActivationVector> mavs;
        std::vector<WeibullModel> weibulls;
        for (std::size_t c = 0; c < k; ++c) {
            ActivationVector mav(k);
            for (double& x : mav) x = rng.uniform(-3.0, 3.0);
            mavs.push_back(std::move(mav));
            weibulls.push_back({0.5 + rng.uniform() * 3.0, 0.2 + rng.uniform() * 4.0, 2});
        }
        const auto cal = make_calibration(std::move(mavs), std::move(weibulls), cfg);
        const auto out = recalibrate(v, cal);
        const auto oracle = oracle_recalibrate(v, cal);
        for (std::size_t i = 0; i < k; ++i) {
            CHECK(std::abs(out.revised[i] - oracle.revised[i]) < 1e-12);
            CHECK(std::abs(out.weights_omega[i] - oracle.omega[i]) < 1e-12);
        }
        CHECK(std::abs(out.unknown_activation - oracle.unknown) < 1e-12);

        // algebraic identity for the unknown activation
        double expected_unknown = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            expected_unknown += v[i] * (1.0 - out.weights_omega[i]);
        }
        CHECK(std::abs(out.unknown_activation - expected_unknown) < 1e-12);
    }
}

TEST_CASE("omega never increases when a top class moves farther away") {
    CalibrationConfig cfg;
    cfg.alpha_rank = 1;
    const ActivationVector v{2.0, 0.5};
    double last_omega = 1.0;
    for (double offset = 0.0; offset <= 8.0; offset += 0.25) {
        std::vector<ActivationVector> mavs = {{2.0 + offset, 0.5}, {0.0, 0.0}};
        std::vector<WeibullModel> weibulls(2, WeibullModel{2.0, 2.0, 2});
        const auto cal = make_calibration(std::move(mavs), std::move(weibulls), cfg);
        const double omega = recalibrate(v, cal).weights_omega[0];
        CHECK(omega <= last_omega + 1e-15);
        last_omega = omega;
    }
}

TEST_CASE("recalibrate commutes with class relabeling") {
    Rng rng(77);
    const std::size_t k = 4;
    CalibrationConfig cfg;
    cfg.alpha_rank = 3;
    ActivationVector v(k);
    for (double& x : v) x = rng.uniform(-2.0, 2.0);
    std::vector<ActivationVector> mavs;
    std::vector<WeibullModel> weibulls;
    for (std::size_t c = 0; c < k; ++c) {
        ActivationVector mav(k);
        for (double& x : mav) x = rng.uniform(-2.0, 2.0);
        mavs.push_back(std::move(mav));
        weibulls.push_back({1.0 + rng.uniform(), 0.5 + rng.uniform(), 2});
    }
    const auto cal = make_calibration(mavs, weibulls, cfg);
    const auto base = recalibrate(v, cal);

    // permutation pi: new index = pi[old index]
    const std::vector<std::size_t> pi{2, 0, 3, 1};
    auto permute = [&pi](const std::vector<double>& in) {
        std::vector<double> out(in.size());
        for (std::size_t i = 0; i < in.size(); ++i) out[pi[i]] = in[i];
        return out;
    };
    std::vector<ActivationVector> pmavs(k);
    std::vector<WeibullModel> pweibulls(k);
    for (std::size_t c = 0; c < k; ++c) {
        pmavs[pi[c]] = permute(mavs[c]);
        pweibulls[pi[c]] = weibulls[c];
    }
    const auto pcal = make_calibration(std::move(pmavs), std::move(pweibulls), cfg);
    const auto permuted = recalibrate(permute(v), pcal);

    const auto expected_revised = permute(base.revised);
    const auto expected_omega = permute(base.weights_omega);
    for (std::size_t i = 0; i < k; ++i) {
        CHECK(std::abs(permuted.revised[i] - expected_revised[i]) < 1e-12);
        CHECK(std::abs(permuted.weights_omega[i] - expected_omega[i]) < 1e-12);
    }
    CHECK(std::abs(permuted.unknown_activation - base.unknown_activation) < 1e-12);
}

TEST_CASE("predict_open reduces to plain softmax when every omega is 1") {
    const auto m = identity_model(3);
    CalibrationConfig cfg;
    cfg.alpha_rank = 3;
    cfg.epsilon_threshold = 0.0;
    const auto cal = all_pass_calibration(3, cfg);
    Rng rng(55);
    for (int trial = 0; trial < 50; ++trial) {
        FeatureVector x(3);
        for (double& f : x) f = rng.uniform(0.5, 5.0);
        const auto pred = predict_open(x, m, cal);
        const auto plain = softmax(forward_activations(m, x));
        CHECK(pred.label == static_cast<int>(argmax(plain)));
        REQUIRE(pred.probabilities.size() == 4);
        double sum = 0.0;
        for (double p : pred.probabilities) sum += p;
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("epsilon = 1 labels everything unknown") {
    const auto m = identity_model(2);
    CalibrationConfig cfg;
    cfg.alpha_rank = 2;
    cfg.epsilon_threshold = 1.0;
    const auto cal = all_pass_calibration(2, cfg);
    const auto pred = predict_open({4.0, 1.0}, m, cal);
    CHECK(pred.label == kUnknownLabel);
}

TEST_CASE("a far outlier is labeled unknown") {
    const auto m = identity_model(3);
    CalibrationConfig cfg;
    cfg.alpha_rank = 3;
    // scales so small that every cdf saturates at 1
    std::vector<ActivationVector> mavs(3, ActivationVector{-50.0, -50.0, -50.0});
    std::vector<WeibullModel> weibulls(3, WeibullModel{1.0, 1e-300, 2});
    const auto cal = make_calibration(std::move(mavs), std::move(weibulls), cfg);

    const auto pred = predict_open({10.0, 1.0, 0.5}, m, cal);
    CHECK(pred.label == kUnknownLabel);
    // the unknown entry should have captured the dominant mass
    CHECK(pred.probabilities[0] > 0.99);
}
