#include <doctest.h>

#include <cmath>
#include <functional>

#include "dsgtf/gradcheck.hpp"
#include "dsgtf/ops.hpp"
#include "dsgtf/rng.hpp"
#include "dsgtf/tape.hpp"

using namespace dsgtf;

namespace {

// Finite-difference slope of a scalar function of one tensor, one coordinate.
double fd_slope(const std::function<double(const Tensor&)>& f, Tensor x, std::size_t i,
                double eps = 1e-6) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = f(x);
    x[i] = saved - eps;
    const double down = f(x);
    return (up - down) / (2.0 * eps);
}

}  // namespace

TEST_SUITE("autodiff") {
    TEST_CASE("d(x^2)/dx at 3 is 6") {
        Tape tape;
        Value x = tape.leaf(Tensor({1}, {3.0}), true);
        Value loss = sum(mul(x, x));
        tape.backward(loss);
        CHECK(tape.grad(x)[0] == doctest::Approx(6.0).epsilon(1e-12));
    }

    TEST_CASE("untouched parameters get zero gradient") {
        Tape tape;
        Value x = tape.leaf(Tensor({1}, {3.0}), true);
        Value unused = tape.leaf(Tensor({2, 2}, {1, 2, 3, 4}), true);
        tape.backward(sum(mul(x, x)));
        CHECK(tape.grad(unused) == Tensor({2, 2}));
    }

    TEST_CASE("d sum(a*b) = (b, a)") {
        Tape tape;
        Value a = tape.leaf(Tensor({3}, {1, 2, 3}), true);
        Value b = tape.leaf(Tensor({3}, {4, 5, 6}), true);
        tape.backward(sum(mul(a, b)));
        CHECK(tape.grad(a) == Tensor({3}, {4, 5, 6}));
        CHECK(tape.grad(b) == Tensor({3}, {1, 2, 3}));
    }

    TEST_CASE("loss must be scalar") {
        Tape tape;
        Value x = tape.leaf(Tensor({2}, {1, 2}), true);
        CHECK_THROWS_AS(tape.backward(add(x, x)), ShapeError);
    }

    TEST_CASE("gradient accumulates over reuse") {
        Tape tape;
        Value x = tape.leaf(Tensor({1}, {2.0}), true);
        // loss = x*x + 3x  -> dl/dx = 2x + 3 = 7
        Value loss = add(sum(mul(x, x)), sum(scale(x, 3.0)));
        tape.backward(loss);
        CHECK(tape.grad(x)[0] == doctest::Approx(7.0).epsilon(1e-12));
    }

    TEST_CASE("matmul gradients match finite differences") {
        Rng rng(11);
        Tensor a({2, 3}), b({3, 2});
        for (double& v : a.values()) v = rng.uniform(-1.0, 1.0);
        for (double& v : b.values()) v = rng.uniform(-1.0, 1.0);

        Tape tape;
        Value va = tape.leaf(a, true), vb = tape.leaf(b, true);
        tape.backward(sum(matmul(va, vb)));

        const auto loss_of_a = [&b](const Tensor& ax) {
            Tape t;
            return t.value(sum(matmul(t.leaf(ax), t.leaf(b))))[0];
        };
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(tape.grad(va)[i] == doctest::Approx(fd_slope(loss_of_a, a, i)).epsilon(1e-6));
    }

    TEST_CASE("layer_norm gradients match finite differences") {
        Rng rng(12);
        Tensor x({2, 5}), gain({5}), bias({5});
        for (double& v : x.values()) v = rng.uniform(-2.0, 2.0);
        for (double& v : gain.values()) v = rng.uniform(0.5, 1.5);
        for (double& v : bias.values()) v = rng.uniform(-0.5, 0.5);

        Tape tape;
        Value vx = tape.leaf(x, true), vg = tape.leaf(gain, true), vb = tape.leaf(bias, true);
        // weight the outputs so per-coordinate gradients differ
        Tensor w({2, 5});
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.1 * static_cast<double>(i);
        tape.backward(sum(mul(layer_norm(vx, vg, vb), tape.leaf(w))));

        const auto loss_of = [&](const Tensor& xx, const Tensor& gg, const Tensor& bb) {
            Tape t;
            return t.value(sum(mul(layer_norm(t.leaf(xx), t.leaf(gg), t.leaf(bb)), t.leaf(w))))[0];
        };
        for (std::size_t i = 0; i < x.size(); ++i) {
            const auto f = [&](const Tensor& xx) { return loss_of(xx, gain, bias); };
            CHECK(tape.grad(vx)[i] == doctest::Approx(fd_slope(f, x, i)).epsilon(1e-5));
        }
        for (std::size_t i = 0; i < gain.size(); ++i) {
            const auto f = [&](const Tensor& gg) { return loss_of(x, gg, bias); };
            CHECK(tape.grad(vg)[i] == doctest::Approx(fd_slope(f, gain, i)).epsilon(1e-5));
        }
        for (std::size_t i = 0; i < bias.size(); ++i) {
            const auto f = [&](const Tensor& bb) { return loss_of(x, gain, bb); };
            CHECK(tape.grad(vb)[i] == doctest::Approx(fd_slope(f, bias, i)).epsilon(1e-5));
        }
    }

    TEST_CASE("masked_softmax gradient matches finite differences") {
        Rng rng(13);
        Tensor s({6});
        for (double& v : s.values()) v = rng.uniform(-2.0, 2.0);
        const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0, 1};
        Tensor w({6}, {0.9, 0.0, -0.4, 0.7, 0.0, 0.2});

        Tape tape;
        Value vs = tape.leaf(s, true);
        tape.backward(sum(mul(masked_softmax(vs, mask), tape.leaf(w))));

        const auto f = [&](const Tensor& ss) {
            Tape t;
            return t.value(sum(mul(masked_softmax(t.leaf(ss), mask), t.leaf(w))))[0];
        };
        for (std::size_t i = 0; i < s.size(); ++i)
            CHECK(tape.grad(vs)[i] == doctest::Approx(fd_slope(f, s, i)).epsilon(1e-6));
    }

    TEST_CASE("property: random op compositions match finite differences") {
        // One composite per case covering every primitive; 1e-3 relative
        // tolerance in double precision.
        for (std::uint64_t c = 0; c < 100; ++c) {
            Rng rng(mix_seed(404, c));
            const std::size_t m = 2 + rng.below(3), n = 2 + rng.below(3);
            Tensor a({m, n}), b({n, m}), u({m}), v({m});
            for (double& x : a.values()) x = rng.uniform(-2.0, 2.0);
            for (double& x : b.values()) x = rng.uniform(-2.0, 2.0);
            for (double& x : u.values()) x = rng.uniform(-2.0, 2.0);
            for (double& x : v.values()) x = rng.uniform(-2.0, 2.0);
            std::vector<std::uint8_t> mask(m * m, 1);
            for (auto& q : mask) q = rng.uniform() < 0.7 ? 1 : 0;
            for (std::size_t i = 0; i < m; ++i) mask[i * m + i] = 1;

            const int variant = static_cast<int>(rng.below(3));
            const auto run = [&](const Tensor& at, const Tensor& bt, const Tensor& ut,
                                 const Tensor& vt, Tape& tape, Value& va, Value& vb, Value& vu,
                                 Value& vv) {
                va = tape.leaf(at, true);
                vb = tape.leaf(bt, true);
                vu = tape.leaf(ut, true);
                vv = tape.leaf(vt, true);
                Value prod = matmul(va, vb);                           // m x m
                Value scores = add(prod, outer_sum(vu, vv));           // m x m
                Value soft = masked_softmax_rows(scale(scores, 0.7), mask);
                Value mixed = elu(matmul(soft, transpose(prod)));
                if (variant == 1) mixed = leaky_relu(mixed, 0.2);
                if (variant == 2) mixed = relu(mixed);
                Value flat = reshape(mixed, {m * m});
                Value tail = concat_vec(std::array<Value, 2>{slice_vec(flat, 0, m), vu});
                return add(sum(mul(flat, flat)), sum(tail));
            };

            Tape tape;
            Value va, vb, vu, vv;
            tape.backward(run(a, b, u, v, tape, va, vb, vu, vv));

            const auto loss_at = [&](const Tensor& at, const Tensor& bt, const Tensor& ut,
                                     const Tensor& vt) {
                Tape t(false);
                Value x1, x2, x3, x4;
                return t.value(run(at, bt, ut, vt, t, x1, x2, x3, x4))[0];
            };

            const auto check_tensor = [&](Value val, Tensor& host, auto probe) {
                const Tensor& g = tape.grad(val);
                for (std::size_t i = 0; i < host.size(); ++i) {
                    const double saved = host[i];
                    host[i] = saved + 1e-5;
                    const double up = probe();
                    host[i] = saved - 1e-5;
                    const double down = probe();
                    host[i] = saved;
                    const double fd = (up - down) / 2e-5;
                    const double rel =
                        std::abs(g[i] - fd) / std::max({1.0, std::abs(g[i]), std::abs(fd)});
                    CHECK(rel < 1e-3);
                }
            };
            check_tensor(va, a, [&] { return loss_at(a, b, u, v); });
            check_tensor(vb, b, [&] { return loss_at(a, b, u, v); });
            check_tensor(vu, u, [&] { return loss_at(a, b, u, v); });
            check_tensor(vv, v, [&] { return loss_at(a, b, u, v); });
        }
    }

    TEST_CASE("finite_diff_check on a quadratic is exact to roundoff") {
        Tensor p({4}, {1.0, -2.0, 0.5, 3.0});
        const Tensor coeffs({4}, {2.0, 1.0, -1.5, 0.25});
        const auto loss_fn = [&]() {
            double s = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) s += coeffs[i] * p[i] * p[i];
            return s;
        };
        Tensor grad({4});
        for (std::size_t i = 0; i < p.size(); ++i) grad[i] = 2.0 * coeffs[i] * p[i];

        const NamedParam np{"quadratic", &p};
        const auto report =
            finite_diff_check(loss_fn, std::span<const NamedParam>(&np, 1),
                              std::span<const Tensor>(&grad, 1), 1e-5, 1e-9);
        INFO(format_report(report));
        CHECK(report.pass());
        CHECK(report.max_rel_err < 1e-9);
    }

    TEST_CASE("finite_diff_check with no parameters passes empty") {
        const auto report = finite_diff_check([] { return 1.0; }, {}, {}, 1e-5, 1e-3);
        CHECK(report.pass());
        CHECK(report.tensors.empty());
    }

    TEST_CASE("finite_diff_check flags non-finite probes") {
        Tensor p({1}, {0.0});
        const auto loss_fn = [&]() { return std::log(p[0]); };  // -inf at the probe
        Tensor grad({1}, {0.0});
        const NamedParam np{"bad", &p};
        CHECK_THROWS_WITH_AS(finite_diff_check(loss_fn, std::span<const NamedParam>(&np, 1),
                                               std::span<const Tensor>(&grad, 1), 1e-5, 1e-3),
                             doctest::Contains("bad[0]"), NumericError);
    }
}
