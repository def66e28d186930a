#include <doctest.h>

#include <cmath>

#include "dsgtf/ops.hpp"
#include "dsgtf/rng.hpp"
#include "dsgtf/tape.hpp"
#include "properties.hpp"

using namespace dsgtf;

TEST_SUITE("tensor") {
    TEST_CASE("shape and values must agree") {
        CHECK_NOTHROW(Tensor({2, 3}, std::vector<double>(6, 0.0)));
        CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5, 0.0)), ShapeError);
        CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
    }

    TEST_CASE("leaf rejects non-finite values") {
        Tape tape;
        CHECK_THROWS_AS(tape.leaf(Tensor({2}, {1.0, std::nan("")})), NumericError);
        CHECK_THROWS_AS(tape.leaf(Tensor({1}, {INFINITY})), NumericError);
    }
}

TEST_SUITE("ops") {
    TEST_CASE("matmul identity") {
        Tape tape;
        Value eye = tape.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
        Value x = tape.leaf(Tensor({2, 2}, {3, 4, 5, 6}));
        CHECK(tape.value(matmul(eye, x)) == Tensor({2, 2}, {3, 4, 5, 6}));
    }

    TEST_CASE("matmul hand example") {
        Tape tape;
        Value a = tape.leaf(Tensor({1, 2}, {1, 2}));
        Value b = tape.leaf(Tensor({2, 1}, {3, 4}));
        CHECK(tape.value(matmul(a, b)) == Tensor({1, 1}, {11}));  // 1*3 + 2*4
    }

    TEST_CASE("matmul zero annihilates") {
        Tape tape;
        Value z = tape.leaf(Tensor({2, 2}));
        Value x = tape.leaf(Tensor({2, 2}, {7, -1, 2, 9}));
        CHECK(tape.value(matmul(z, x)) == Tensor({2, 2}));
        CHECK(tape.value(matmul(x, z)) == Tensor({2, 2}));
    }

    TEST_CASE("matmul names both shapes on mismatch") {
        Tape tape;
        Value a = tape.leaf(Tensor({2, 3}));
        Value b = tape.leaf(Tensor({2, 2}));
        try {
            matmul(a, b);
            FAIL("expected ShapeError");
        } catch (const ShapeError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("[2x3]") != std::string::npos);
            CHECK(msg.find("[2x2]") != std::string::npos);
        }
    }

    TEST_CASE("masked_softmax examples") {
        Tape tape;
        const Tensor sym = tape.value(masked_softmax(tape.leaf(Tensor({2}, {1, 1})), {1, 1}));
        CHECK(sym[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(sym[1] == doctest::Approx(0.5).epsilon(1e-12));

        const Tensor lone = tape.value(masked_softmax(tape.leaf(Tensor({2}, {0, 100})), {1, 0}));
        CHECK(lone[0] == 1.0);
        CHECK(lone[1] == 0.0);

        const Tensor closed =
            tape.value(masked_softmax(tape.leaf(Tensor({2}, {0.0, std::log(3.0)})), {1, 1}));
        CHECK(closed[0] == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(closed[1] == doctest::Approx(0.75).epsilon(1e-12));
    }

    TEST_CASE("masked_softmax rejects an empty neighborhood") {
        Tape tape;
        CHECK_THROWS_WITH_AS(masked_softmax(tape.leaf(Tensor({2}, {0, 0})), {0, 0}),
                             doctest::Contains("empty neighborhood"), NumericError);
    }

    TEST_CASE("masked_softmax survives extreme scores") {
        Tape tape;
        const Tensor y =
            tape.value(masked_softmax(tape.leaf(Tensor({3}, {1e4, -1e4, 9.9e3})), {1, 1, 1}));
        double s = 0.0;
        for (double v : y.values()) s += v;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }

    TEST_CASE("activation examples") {
        Tape tape;
        const Tensor r = tape.value(relu(tape.leaf(Tensor({2}, {-2, 2}))));
        CHECK(r[0] == 0.0);
        CHECK(r[1] == 2.0);

        const Tensor lr = tape.value(leaky_relu(tape.leaf(Tensor({1}, {-1})), 0.2));
        CHECK(lr[0] == doctest::Approx(-0.2).epsilon(1e-12));
        CHECK_THROWS_AS(leaky_relu(tape.leaf(Tensor({1}, {1})), 1.5), std::invalid_argument);

        const Tensor e = tape.value(elu(tape.leaf(Tensor({2}, {-1, 2}))));
        CHECK(e[0] == doctest::Approx(std::expm1(-1.0)).epsilon(1e-12));
        CHECK(e[1] == 2.0);
    }

    TEST_CASE("layer_norm of a constant vector is all bias") {
        Tape tape;
        Value x = tape.leaf(Tensor({4}, {7, 7, 7, 7}));
        Value gain = tape.leaf(Tensor({4}, {1, 2, 3, 4}));
        Value bias = tape.leaf(Tensor({4}, {-1, 0, 1, 2}));
        const Tensor y = tape.value(layer_norm(x, gain, bias));
        for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(-1.0 + static_cast<double>(i)));
    }

    TEST_CASE("cross_entropy examples") {
        Tape tape;
        Value sure = tape.leaf(Tensor({1, 4}, {0, 0, 1, 0}));
        CHECK(tape.value(cross_entropy(sure, {2}))[0] == doctest::Approx(0.0).epsilon(1e-12));

        Value uniform = tape.leaf(Tensor({1, 4}, {0.25, 0.25, 0.25, 0.25}));
        CHECK(tape.value(cross_entropy(uniform, {0}))[0] ==
              doctest::Approx(std::log(4.0)).epsilon(1e-12));

        // batch mean contract: (L1 + L2) / 2
        Value two = tape.leaf(Tensor({2, 4}, {0.7, 0.1, 0.1, 0.1, 0.25, 0.25, 0.25, 0.25}));
        const double l1 = -std::log(0.7), l2 = -std::log(0.25);
        CHECK(tape.value(cross_entropy(two, {0, 3}))[0] ==
              doctest::Approx((l1 + l2) / 2.0).epsilon(1e-12));

        CHECK_THROWS_AS(cross_entropy(uniform, {4}), std::out_of_range);
        CHECK_THROWS_AS(cross_entropy(uniform, {-1}), std::out_of_range);

        Value not_probs = tape.leaf(Tensor({1, 4}, {0.5, 0.5, 0.5, 0.5}));
        CHECK_THROWS_AS(cross_entropy(not_probs, {0}), NumericError);
    }

    TEST_CASE("cross_entropy clamps the log") {
        Tape tape;
        Value probs = tape.leaf(Tensor({1, 4}, {1.0, 0.0, 0.0, 0.0}));
        const Tensor loss = tape.value(cross_entropy(probs, {1}));  // confident and wrong
        CHECK(std::isfinite(loss[0]));
        CHECK(loss[0] == doctest::Approx(-std::log(1e-12)));
    }

    TEST_CASE("ops surface non-finite results") {
        Tape tape;
        Value big = tape.leaf(Tensor({1, 1}, {1e308}));
        CHECK_THROWS_AS(matmul(scale(big, 10.0), big), NumericError);
        CHECK_THROWS_AS(scale(big, 1e10), NumericError);
    }

    TEST_CASE("property: softmax surfaces normalize") {
        const auto res = props::softmax_normalization(2024, 100);
        INFO(res.detail);
        CHECK(res.pass);
        CHECK(res.cases >= 100);
    }

    TEST_CASE("property: finite in, finite out or error") {
        Rng rng(77);
        for (int c = 0; c < 100; ++c) {
            Tape tape;
            Tensor a({3, 3}), b({3, 3});
            for (double& v : a.values()) v = rng.uniform(-50.0, 50.0);
            for (double& v : b.values()) v = rng.uniform(-50.0, 50.0);
            Value va = tape.leaf(a), vb = tape.leaf(b);
            try {
                Value out = elu(matmul(add(va, vb), transpose(mul(va, vb))));
                out = layer_norm(out, tape.leaf(Tensor::full({3}, 1.0)), tape.leaf(Tensor({3})));
                CHECK(tape.value(out).all_finite());
                CHECK(tape.value(sum(out)).all_finite());
            } catch (const NumericError&) {
                // raising instead of propagating silently is also a pass
            }
        }
    }
}
