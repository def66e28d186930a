#include <doctest.h>

#include <cmath>

#include "dsgtf/adam.hpp"

using namespace dsgtf;

TEST_SUITE("adam") {
    TEST_CASE("first step with unit gradient moves by ~lr") {
        Tensor p = Tensor::full({3}, 1.0);
        Tensor g = Tensor::full({3}, 1.0);
        Tensor* pp = &p;
        AdamState state = AdamState::create(std::span<Tensor* const>(&pp, 1), 1e-4);
        adam_step(state, std::span<Tensor* const>(&pp, 1), std::span<const Tensor>(&g, 1));

        // bias-corrected mhat/(sqrt(vhat)+eps) == 1/(1+1e-8) on step one
        for (double v : p.values()) CHECK(std::abs((1.0 - v) - 1e-4) < 1e-10);
        CHECK(state.step == 1);
    }

    TEST_CASE("zero gradient leaves parameters untouched but advances the step") {
        Tensor p({2, 2}, {1, 2, 3, 4});
        Tensor g({2, 2});
        Tensor* pp = &p;
        AdamState state = AdamState::create(std::span<Tensor* const>(&pp, 1), 0.01);
        adam_step(state, std::span<Tensor* const>(&pp, 1), std::span<const Tensor>(&g, 1));
        adam_step(state, std::span<Tensor* const>(&pp, 1), std::span<const Tensor>(&g, 1));
        CHECK(p == Tensor({2, 2}, {1, 2, 3, 4}));
        CHECK(state.step == 2);
    }

    TEST_CASE("identical inputs give bitwise-identical updates") {
        Tensor p1({4}, {0.5, -1.0, 2.0, 0.0});
        Tensor p2 = p1;
        Tensor g({4}, {0.3, -0.2, 0.9, 1.4});
        Tensor* pp1 = &p1;
        Tensor* pp2 = &p2;
        AdamState s1 = AdamState::create(std::span<Tensor* const>(&pp1, 1), 1e-3);
        AdamState s2 = AdamState::create(std::span<Tensor* const>(&pp2, 1), 1e-3);
        for (int i = 0; i < 25; ++i) {
            adam_step(s1, std::span<Tensor* const>(&pp1, 1), std::span<const Tensor>(&g, 1));
            adam_step(s2, std::span<Tensor* const>(&pp2, 1), std::span<const Tensor>(&g, 1));
        }
        CHECK(p1 == p2);  // exact equality, not approximate
        CHECK(s1.m[0] == s2.m[0]);
        CHECK(s1.v[0] == s2.v[0]);
    }

    TEST_CASE("shape mismatch is rejected") {
        Tensor p({3});
        Tensor g({2});
        Tensor* pp = &p;
        AdamState state = AdamState::create(std::span<Tensor* const>(&pp, 1));
        CHECK_THROWS_AS(
            adam_step(state, std::span<Tensor* const>(&pp, 1), std::span<const Tensor>(&g, 1)),
            ShapeError);
    }

    TEST_CASE("descends a simple quadratic") {
        Tensor p({1}, {5.0});
        Tensor* pp = &p;
        AdamState state = AdamState::create(std::span<Tensor* const>(&pp, 1), 0.05);
        for (int i = 0; i < 2000; ++i) {
            Tensor g({1}, {2.0 * p[0]});  // d/dp p^2
            adam_step(state, std::span<Tensor* const>(&pp, 1), std::span<const Tensor>(&g, 1));
        }
        CHECK(std::abs(p[0]) < 0.05);
    }
}
