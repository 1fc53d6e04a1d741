#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"

#include "covmap/stconv.hpp"
#include "gradcheck.hpp"

using namespace covmap;
using namespace covmap::stconv;
using tensor::Shape;

namespace {

Tensor random_tensor(const Shape& s, std::mt19937_64& rng, bool grad = false, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(tensor::numel(s));
    for (double& x : v) x = u(rng);
    return Tensor::from(s, std::move(v), grad);
}

ModelConfig miniature() {
    ModelConfig c;
    c.layers_per_block = 1;
    c.base_filters = 4;
    c.spatial_kernel = 3;
    c.temporal_kernel = 2;
    c.horizon = 3;
    c.reduce_to_block_input = false;
    c.seed = 11;
    return c;
}

ModelConfig small() {
    ModelConfig c;
    c.layers_per_block = 2;
    c.base_filters = 4;
    c.spatial_kernel = 3;
    c.temporal_kernel = 3;
    c.horizon = 4;
    c.seed = 5;
    return c;
}

void zero_final(StConvModel& m, double bias) {
    auto& last = m.layers().back();
    std::fill(last.weight.values().begin(), last.weight.values().end(), 0.0);
    last.bias.values()[0] = bias;
}

}  // namespace

TEST_CASE("b03d examples") {
    std::mt19937_64 rng(1);
    SUBCASE("zero input gives psi") {
        B03dLayer layer(3, 2, 1e-5, 0.9);
        layer.psi.values() = {0.25, -1.5, 3.0};
        const auto y = b03d(Tensor::zeros({2, 3, 2, 4, 4}), layer, Mode::train);
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 3; ++c)
                for (int t = 0; t < 2; ++t)
                    for (int h = 0; h < 4; ++h)
                        for (int w = 0; w < 4; ++w) CHECK(y.at(b, c, t, h, w) == layer.psi.values()[c]);
    }
    SUBCASE("shape preserved") {
        B03dLayer layer(32, 7, 1e-5, 0.9);
        const auto x = random_tensor({5, 32, 7, 16, 16}, rng);
        CHECK(b03d(x, layer, Mode::train).shape() == x.shape());
    }
    SUBCASE("psi shift adds exactly") {
        const auto x = random_tensor({2, 2, 3, 3, 3}, rng);
        B03dLayer layer(2, 3, 1e-5, 0.9);
        layer.theta.values() = {0.7, -1.3};
        layer.v1.values() = {0.4, 1.2};
        const auto z = b03d(x, layer, Mode::train);
        const double c = 2.375;
        layer.psi.values() = {c, c};
        const auto y = b03d(x, layer, Mode::train);
        for (std::size_t k = 0; k < y.size(); ++k) CHECK(y.values()[k] == z.values()[k] + c);
    }
    SUBCASE("large negative v1 reduces to batch scaling without centering") {
        const auto x = random_tensor({3, 2, 2, 4, 4}, rng, false, 0.1, 2.0);
        B03dLayer layer(2, 2, 1e-5, 0.9);
        layer.v1.values() = {-1e6, -1e6};
        layer.theta.values() = {1.5, 0.5};
        layer.psi.values() = {0.1, -0.2};
        const auto y = b03d(x, layer, Mode::train);
        for (int c = 0; c < 2; ++c)
            for (int t = 0; t < 2; ++t) {
                double s = 0, ss = 0;
                const int n = 3 * 16;
                for (int b = 0; b < 3; ++b)
                    for (int h = 0; h < 4; ++h)
                        for (int w = 0; w < 4; ++w) s += x.at(b, c, t, h, w);
                const double m = s / n;
                for (int b = 0; b < 3; ++b)
                    for (int h = 0; h < 4; ++h)
                        for (int w = 0; w < 4; ++w) ss += (x.at(b, c, t, h, w) - m) * (x.at(b, c, t, h, w) - m);
                const double sd = std::sqrt(ss / n + 1e-5);
                for (int b = 0; b < 3; ++b)
                    for (int h = 0; h < 4; ++h)
                        for (int w = 0; w < 4; ++w) {
                            const double expect = x.at(b, c, t, h, w) / sd * layer.theta.values()[c] + layer.psi.values()[c];
                            CHECK(std::abs(y.at(b, c, t, h, w) - expect) <= 1e-10);
                        }
            }
    }
    SUBCASE("running variance update and inference") {
        const auto x = random_tensor({2, 1, 2, 3, 3}, rng);
        B03dLayer layer(1, 2, 1e-5, 0.9);
        b03d(x, layer, Mode::train);
        for (int t = 0; t < 2; ++t) {
            double s = 0, ss = 0;
            for (int b = 0; b < 2; ++b)
                for (int h = 0; h < 3; ++h)
                    for (int w = 0; w < 3; ++w) s += x.at(b, 0, t, h, w);
            const double m = s / 18;
            for (int b = 0; b < 2; ++b)
                for (int h = 0; h < 3; ++h)
                    for (int w = 0; w < 3; ++w) ss += (x.at(b, 0, t, h, w) - m) * (x.at(b, 0, t, h, w) - m);
            CHECK(layer.running_var.values()[t] == doctest::Approx(0.9 + 0.1 * ss / 18).epsilon(1e-14));
        }
        const auto before = layer.running_var.values();
        b03d(x, layer, Mode::infer);
        CHECK(layer.running_var.values() == before);
    }
    SUBCASE("channel mismatch") {
        B03dLayer layer(2, 2, 1e-5, 0.9);
        CHECK_THROWS_AS(b03d(Tensor::zeros({1, 3, 2, 2, 2}), layer, Mode::train), std::invalid_argument);
    }
}

TEST_CASE("b03d gradients in both modes") {
    std::mt19937_64 rng(2);
    auto x = random_tensor({3, 2, 2, 3, 3}, rng, true);
    const auto target = random_tensor({3, 2, 2, 3, 3}, rng);
    for (double v1 : {0.3, 1.5, -0.8}) {
        for (Mode mode : {Mode::train, Mode::infer}) {
            B03dLayer layer(2, 2, 1e-5, 0.9);
            layer.v1.values() = {v1, -v1};
            layer.theta.values() = {0.8, 1.3};
            layer.psi.values() = {0.1, -0.3};
            layer.running_var.values() = {0.5, 0.2, 0.9, 0.3};
            auto f = [&] { return tensor::mse_loss(b03d(x, layer, mode), target); };
            const auto r = gradcheck::check(f, {x, layer.v1, layer.theta, layer.psi});
            CHECK(r.max_rel <= 1e-4);
        }
    }
}

TEST_CASE("learnable inputs and local weights") {
    std::mt19937_64 rng(3);
    const auto x = random_tensor({2, 1, 3, 4, 5}, rng);
    CHECK(augment_li_lw(x, Tensor(), Tensor(), 0).values() == x.values());

    const auto li = Tensor::zeros({1, 1, 1, 4, 5}), lw = Tensor::filled({1, 1, 3, 4, 5}, 1.0);
    const auto y = augment_li_lw(x, li, lw, 1);
    REQUIRE(y.shape() == Shape{2, 3, 3, 4, 5});
    for (int b = 0; b < 2; ++b)
        for (int t = 0; t < 3; ++t)
            for (int h = 0; h < 4; ++h)
                for (int w = 0; w < 5; ++w) {
                    CHECK(y.at(b, 0, t, h, w) == x.at(b, 0, t, h, w));
                    CHECK(y.at(b, 1, t, h, w) == 0.0);
                    CHECK(y.at(b, 2, t, h, w) == x.at(b, 0, t, h, w));
                }

    auto li2 = random_tensor({1, 2, 1, 4, 5}, rng, true), lw2 = random_tensor({2, 1, 3, 4, 5}, rng, true);
    const auto target = random_tensor({2, 5, 3, 4, 5}, rng);
    auto f = [&] { return tensor::mse_loss(augment_li_lw(x, li2, lw2, 2), target); };
    CHECK(gradcheck::check(f, {li2, lw2}).max_rel <= 1e-4);

    CHECK_THROWS_AS(augment_li_lw(x, Tensor::zeros({1, 1, 1, 4, 4}), lw, 1), std::invalid_argument);
}

TEST_CASE("model forward examples") {
    SUBCASE("shape check with the default configuration") {
        ModelConfig c;
        StConvModel m(c, 12, 12);
        std::mt19937_64 rng(4);
        const auto x = random_tensor({2, 1, 7, 12, 12}, rng, false, 0.0, 1.0);
        CHECK(m.forward(x, Mode::train).shape() == Shape{2, 1, 7, 12, 12});
        CHECK(m.layers().size() == 7);
        CHECK(m.layers()[0].spec.out_channels == 32);
        CHECK(m.layers()[1].spec.out_channels == 64);
        CHECK(m.layers()[2].spec.out_channels == 1);
        CHECK(m.layers()[0].spec.in_channels == 1 + 2 + 2);
        CHECK_THROWS_AS(m.forward(random_tensor({1, 1, 6, 12, 12}, rng), Mode::train), std::invalid_argument);
    }
    SUBCASE("alternative channel reading") {
        ModelConfig c = small();
        c.reduce_to_block_input = false;
        StConvModel m(c, 5, 5);
        CHECK(m.layers()[1].spec.out_channels == c.base_filters);
        CHECK(m.layers()[2].in_channels == c.base_filters);
    }
    SUBCASE("zeroed final layer emits its bias") {
        StConvModel m(small(), 6, 5);
        zero_final(m, 0.37);
        std::mt19937_64 rng(5);
        const auto y = m.forward(random_tensor({2, 1, 4, 6, 5}, rng), Mode::train);
        for (double v : y.values()) CHECK(v == 0.37);
    }
}

TEST_CASE("temporal block causality") {
    StConvModel m(small(), 5, 4);
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<int> pick(0, 2);
    std::normal_distribution<double> noise(0.0, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
        const auto x = random_tensor({2, 1, 4, 5, 4}, rng);
        auto x2 = x.detach();
        const int tau = pick(rng);
        for (int b = 0; b < 2; ++b)
            for (int t = tau + 1; t < 4; ++t)
                for (int h = 0; h < 5; ++h)
                    for (int w = 0; w < 4; ++w) x2.at(b, 0, t, h, w) += noise(rng);
        Tensor t1, t2;
        const auto y1 = m.forward(x, Mode::train, &t1);
        const auto y2 = m.forward(x2, Mode::train, &t2);
        bool same = true;
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < t1.dim(1); ++c)
                for (int t = 0; t <= tau; ++t)
                    for (int h = 0; h < 5; ++h)
                        for (int w = 0; w < 4; ++w) same = same && t1.at(b, c, t, h, w) == t2.at(b, c, t, h, w);
        CHECK(same);
    }
}

TEST_CASE("miniature model gradients") {
    StConvModel m(miniature(), 4, 4);
    std::mt19937_64 rng(7);
    const auto x = random_tensor({2, 1, 3, 4, 4}, rng, false, 0.0, 1.0);
    const auto target = random_tensor({2, 1, 3, 4, 4}, rng, false, 0.0, 1.0);
    for (auto& p : m.parameters()) {
        std::uniform_real_distribution<double> u(-0.3, 0.3);
        for (double& v : p.values()) v += u(rng);
    }
    auto f = [&] { return tensor::mse_loss(m.forward(x, Mode::train), target); };
    const auto r = gradcheck::check(f, m.parameters());
    CHECK(r.checked > 100);
    CHECK(r.max_rel <= 1e-4);
    tensor::backward(f());
    for (const auto& p : m.parameters())
        for (double g : p.grad()) CHECK(std::isfinite(g));
}

namespace {

std::vector<Sample> identity_data(int count, int T, int H, int W, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Sample> out;
    for (int k = 0; k < count; ++k) {
        std::vector<double> v(static_cast<std::size_t>(T) * H * W);
        for (double& x : v) x = u(rng);
        auto x = Tensor::from({1, 1, T, H, W}, v);
        out.push_back({x, x.detach()});
    }
    return out;
}

}  // namespace

TEST_CASE("training") {
    SUBCASE("identity task is learnable") {
        ModelConfig c = miniature();
        c.lr = 0.03;
        StConvModel m(c, 4, 4);
        const auto data = identity_data(10, 3, 4, 4, 1);
        const auto log = train(m, data, 200);
        REQUIRE(log.epoch_loss.size() == 200);
        CHECK_FALSE(log.aborted);
        CHECK(log.epoch_loss.back() < 0.01 * log.epoch_loss.front());
    }
    SUBCASE("zero epochs leave parameters unchanged") {
        StConvModel m(miniature(), 4, 4);
        const auto before = m.parameters()[0].values();
        const auto log = train(m, identity_data(3, 3, 4, 4, 2), 0);
        CHECK(log.epoch_loss.empty());
        CHECK(m.parameters()[0].values() == before);
    }
    SUBCASE("same seed, same loss curve") {
        const auto data = identity_data(7, 3, 4, 4, 3);
        StConvModel a(miniature(), 4, 4), b(miniature(), 4, 4);
        CHECK(train(a, data, 5).epoch_loss == train(b, data, 5).epoch_loss);
    }
    SUBCASE("training log csv") {
        TrainLog log;
        log.epoch_loss = {1.0, 0.5};
        const auto path = (std::filesystem::temp_directory_path() / "covmap_log.csv").string();
        write_training_log(path, log);
        std::ifstream in(path);
        std::string l1, l2, l3;
        std::getline(in, l1);
        std::getline(in, l2);
        std::getline(in, l3);
        CHECK(l1 == "epoch,loss");
        CHECK(l2 == "1,1");
        CHECK(l3 == "2,0.5");
        std::filesystem::remove(path);
    }
}

TEST_CASE("online update") {
    SUBCASE("no epochs, no change") {
        StConvModel m(miniature(), 4, 4);
        const auto before = m.parameters()[0].values();
        online_update(m, identity_data(1, 3, 4, 4, 4)[0], 0);
        CHECK(m.parameters()[0].values() == before);
    }
    SUBCASE("zero-loss sequence leaves the model exactly unchanged") {
        StConvModel m(miniature(), 4, 4);
        zero_final(m, 0.0);
        std::vector<std::vector<double>> before;
        for (const auto& p : m.parameters()) before.push_back(p.values());
        auto s = identity_data(1, 3, 4, 4, 5)[0];
        s.target = Tensor::zeros(s.target.shape());
        const auto log = online_update(m, s, 5);
        CHECK(log.epoch_loss.front() == 0.0);
        const auto after = m.parameters();
        for (std::size_t k = 0; k < after.size(); ++k) CHECK(after[k].values() == before[k]);
    }
    SUBCASE("fine-tuning lowers the loss on the sequence") {
        int improved = 0, monotone = 0;
        const int trials = 20;
        for (int trial = 0; trial < trials; ++trial) {
            ModelConfig c = miniature();
            c.seed = 100 + trial;
            StConvModel m(c, 4, 4);
            train(m, identity_data(5, 3, 4, 4, 200 + trial), 3);
            auto s = identity_data(1, 3, 4, 4, 300 + trial)[0];
            const auto log = online_update(m, s, 5);
            const double after = tensor::mse_loss(m.forward(s.input, Mode::train), s.target).item();
            if (after < log.epoch_loss.front()) ++improved;
            bool mono = true;
            for (std::size_t e = 1; e < log.epoch_loss.size(); ++e) mono = mono && log.epoch_loss[e] <= log.epoch_loss[e - 1];
            if (mono) ++monotone;
        }
        CHECK(improved == trials);
        CHECK(monotone >= 0.9 * trials);
    }
}

TEST_CASE("band split and stitching") {
    auto rows = [](const std::vector<Band>& b) {
        std::vector<int> out;
        for (const auto& x : b) out.push_back(x.rows());
        return out;
    };
    CHECK(rows(split_bands(9)) == std::vector<int>{3, 3, 3});
    CHECK(rows(split_bands(10)) == std::vector<int>{3, 3, 4});
    CHECK(split_bands(10)[2].row_begin == 6);
    CHECK_THROWS(split_bands(2));

    ModelConfig c = small();
    c.value_scale = 100.0;
    std::vector<StConvModel> models;
    for (const auto& b : split_bands(10)) {
        models.emplace_back(c, b.rows(), 6);
        zero_final(models.back(), 0.5);
    }
    const std::vector<Eigen::MatrixXd> seq(4, Eigen::MatrixXd::Constant(10, 6, 80.0));
    const auto out = predict_region_split(models, seq);
    REQUIRE(out.rows() == 10);
    REQUIRE(out.cols() == 6);
    CHECK((out.array() == 50.0).all());

    std::vector<StConvModel> two;
    two.emplace_back(c, 3, 6);
    two.emplace_back(c, 3, 6);
    CHECK_THROWS_AS(predict_region_split(two, seq), std::invalid_argument);

    zero_final(models[1], -2.0);
    const auto clamped = predict_region_split(models, seq);
    CHECK((clamped.middleRows(3, 3).array() == 0.0).all());
}

TEST_CASE("model checkpoint") {
    StConvModel a(miniature(), 4, 4);
    train(a, identity_data(3, 3, 4, 4, 8), 2);
    const auto path = (std::filesystem::temp_directory_path() / "covmap_model.bin").string();
    a.save(path);
    ModelConfig other = miniature();
    other.seed = 999;
    StConvModel b(other, 4, 4);
    b.load(path);
    std::mt19937_64 rng(9);
    const auto x = random_tensor({1, 1, 3, 4, 4}, rng);
    CHECK(a.forward(x, Mode::infer).values() == b.forward(x, Mode::infer).values());
    std::filesystem::remove(path);
}
