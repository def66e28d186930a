#include "dsgtf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dsgtf {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kLogClamp = 1e-12;
constexpr double kRowSumTol = 1e-5;

Tape& same_tape(const Value& a, const Value& b) {
    if (a.tape != b.tape) throw std::logic_error("op inputs live on different tapes");
    return *a.tape;
}

void require_rank(const Tensor& t, std::size_t r, const char* op) {
    if (t.rank() != r)
        throw ShapeError(std::string(op) + ": expected rank-" + std::to_string(r) + " tensor, got " +
                         t.shape_string());
}

bool any_requires_grad(Tape& tape, std::span<const Value> vs) {
    for (const Value& v : vs)
        if (tape.requires_grad(v)) return true;
    return false;
}

}  // namespace

namespace kernels {

void mm_nn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = pa[i * k + kk];
            if (aik == 0.0) continue;
            const double* brow = pb + kk * n;
            double* orow = po + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
}

void mm_nt_acc(const Tensor& a, const Tensor& b, Tensor& out) {
    // out[m x n] += a[m x k] * b[n x k]^T
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = pb + j * k;
            double acc = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            po[i * n + j] += acc;
        }
    }
}

void mm_tn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
    // out[k x n] += a[m x k]^T * b[m x n]
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        const double* brow = pb + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = arow[kk];
            if (aik == 0.0) continue;
            double* orow = po + kk * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
}

Tensor masked_softmax(const Tensor& scores, std::span<const std::uint8_t> mask) {
    const std::size_t n = scores.size();
    bool any_kept = false;
    double max_kept = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        any_kept = true;
        max_kept = std::max(max_kept, scores[i]);
    }
    if (!any_kept) throw NumericError("masked_softmax: empty neighborhood (all mask entries false)");

    Tensor out(scores.shape());
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        out[i] = std::exp(scores[i] - max_kept);
        z += out[i];
    }
    for (std::size_t i = 0; i < n; ++i)
        if (mask[i]) out[i] /= z;
    return out;
}

}  // namespace kernels

Value add(Value a, Value b) {
    Tape& tape = same_tape(a, b);
    const Tensor& ta = tape.value(a);
    const Tensor& tb = tape.value(b);
    ensure_same_shape(ta, tb, "add");

    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
    ensure_finite(out, "add");

    const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
    return tape.emit(std::move(out), rg, [a, b](Tape& t, std::int32_t self) {
        const Tensor& g = t.grad_at(self);
        if (t.requires_grad(a)) {
            Tensor& da = t.grad_slot(a.id);
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
        }
        if (t.requires_grad(b)) {
            Tensor& db = t.grad_slot(b.id);
            for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
        }
    });
}

Value mul(Value a, Value b) {
    Tape& tape = same_tape(a, b);
    const Tensor& ta = tape.value(a);
    const Tensor& tb = tape.value(b);
    ensure_same_shape(ta, tb, "mul");

    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
    ensure_finite(out, "mul");

    const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
    return tape.emit(std::move(out), rg, [a, b](Tape& t, std::int32_t self) {
        const Tensor& g = t.grad_at(self);
        const Tensor& ta = t.value(a);
        const Tensor& tb = t.value(b);
        if (t.requires_grad(a)) {
            Tensor& da = t.grad_slot(a.id);
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * tb[i];
        }
        if (t.requires_grad(b)) {
            Tensor& db = t.grad_slot(b.id);
            for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * ta[i];
        }
    });
}

Value scale(Value a, double s) {
    Tape& tape = *a.tape;
    Tensor out = tape.value(a);
    for (double& x : out.values()) x *= s;
    ensure_finite(out, "scale");

    return tape.emit(std::move(out), tape.requires_grad(a), [a, s](Tape& t, std::int32_t self) {
        const Tensor& g = t.grad_at(self);
        Tensor& da = t.grad_slot(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += s * g[i];
    });
}

Value sum(Value a) {
    Tape& tape = *a.tape;
    const Tensor& ta = tape.value(a);
    double acc = 0.0;
    for (double v : ta.values()) acc += v;
    Tensor out = Tensor::scalar(acc);
    ensure_finite(out, "sum");

    return tape.emit(std::move(out), tape.requires_grad(a), [a](Tape& t, std::int32_t self) {
        const double g = t.grad_at(self)[0];
        Tensor& da = t.grad_slot(a.id);
        for (double& x : da.values()) x += g;
    });
}

Value matmul(Value a, Value b) {
    Tape& tape = same_tape(a, b);
    const Tensor& ta = tape.value(a);
    const Tensor& tb = tape.value(b);
    require_rank(ta, 2, "matmul");
    require_rank(tb, 2, "matmul");
    if (ta.dim(1) != tb.dim(0))
        throw ShapeError("matmul: inner dimensions disagree, " + ta.shape_string() + " vs " + tb.shape_string());

    Tensor out({ta.dim(0), tb.dim(1)});
    kernels::mm_nn_acc(ta, tb, out);
    ensure_finite(out, "matmul");

    const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
    return tape.emit(std::move(out), rg, [a, b](Tape& t, std::int32_t self) {
        const Tensor& g = t.grad_at(self);
        if (t.requires_grad(a)) kernels::mm_nt_acc(g, t.value(b), t.grad_slot(a.id));  // dA += g * B^T
        if (t.requires_grad(b)) kernels::mm_tn_acc(t.value(a), g, t.grad_slot(b.id));  // dB += A^T * g
    });
}

Value transpose(Value a) {
    Tape& tape = *a.tape;
    const Tensor& ta = tape.value(a);
    require_rank(ta, 2, "transpose");
    const std::size_t m = ta.dim(0), n = ta.dim(1);

    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(j, i) = ta.at(i, j);

    return tape.emit(std::move(out), tape.requires_grad(a), [a, m, n](Tape& t, std::int32_t self) {
        const Tensor& g = t.grad_at(self);
        Tensor& da = t.grad_slot(a.id);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) da.at(i, j) += g.at(j, i);
    });
}

Value reshape(Value a, Shape shape) {
    Tape& tape = *a.tape;
    const Tensor& ta = tape.value(a);
    Tensor out(std::move(shape), std::vector<double>(ta.values().begin(), ta.values().end()));

    return tape.emit(std::move(out), tape.requires_grad(a), [a](Tape& t, std::int32_t self) {
        const Tensor& g = t.grad_at(self);
        Tensor& da = t.grad_slot(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    });
}

Value slice_vec(Value a, std::size_t start, std::size_t len) {
    Tape& tape = *a.tape;
    const Tensor& ta = tape.value(a);
    require_rank(ta, 1, "slice_vec");
    if (start + len > ta.size())
        throw ShapeError("slice_vec: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") exceeds " + ta.shape_string());

    Tensor out({len}, std::vector<double>(ta.data() + start, ta.data() + start + len));

    return tape.emit(std::move(out), tape.requires_grad(a), [a, start, len](Tape& t, std::int32_t self) {
        const Tensor& g = t.grad_at(self);
        Tensor& da = t.grad_slot(a.id);
        for (std::size_t i = 0; i < len; ++i) da[start + i] += g[i];
    });
}

Value concat_cols(std::span<const Value> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    Tape& tape = *parts[0].tape;
    const std::size_t m = tape.value(parts[0]).dim(0);
    std::size_t total = 0;
    for (const Value& p : parts) {
        const Tensor& tp = tape.value(p);
        require_rank(tp, 2, "concat_cols");
        if (tp.dim(0) != m)
            throw ShapeError("concat_cols: row counts differ, " + tp.shape_string() + " vs " +
                             tape.value(parts[0]).shape_string());
        total += tp.dim(1);
    }

    Tensor out({m, total});
    std::size_t col = 0;
    for (const Value& p : parts) {
        const Tensor& tp = tape.value(p);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < tp.dim(1); ++j) out.at(i, col + j) = tp.at(i, j);
        col += tp.dim(1);
    }

    std::vector<Value> owned(parts.begin(), parts.end());
    const bool rg = any_requires_grad(tape, parts);
    return tape.emit(std::move(out), rg, [owned, m](Tape& t, std::int32_t self) {
        const Tensor& g = t.grad_at(self);
        std::size_t col = 0;
        for (const Value& p : owned) {
            const std::size_t w = t.value(p).dim(1);
            if (t.requires_grad(p)) {
                Tensor& dp = t.grad_slot(p.id);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < w; ++j) dp.at(i, j) += g.at(i, col + j);
            }
            col += w;
        }
    });
}

Value concat_vec(std::span<const Value> parts) {
    if (parts.empty()) throw ShapeError("concat_vec: no inputs");
    Tape& tape = *parts[0].tape;
    std::size_t total = 0;
    for (const Value& p : parts) {
        require_rank(tape.value(p), 1, "concat_vec");
        total += tape.value(p).size();
    }

    Tensor out({total});
    std::size_t at = 0;
    for (const Value& p : parts) {
        const Tensor& tp = tape.value(p);
        for (std::size_t i = 0; i < tp.size(); ++i) out[at + i] = tp[i];
        at += tp.size();
    }

    std::vector<Value> owned(parts.begin(), parts.end());
    const bool rg = any_requires_grad(tape, parts);
    return tape.emit(std::move(out), rg, [owned](Tape& t, std::int32_t self) {
        const Tensor& g = t.grad_at(self);
        std::size_t at = 0;
        for (const Value& p : owned) {
            const std::size_t n = t.value(p).size();
            if (t.requires_grad(p)) {
                Tensor& dp = t.grad_slot(p.id);
                for (std::size_t i = 0; i < n; ++i) dp[i] += g[at + i];
            }
            at += n;
        }
    });
}

Value stack_rows(std::span<const Value> rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no inputs");
    Tape& tape = *rows[0].tape;
    const std::size_t k = tape.value(rows[0]).size();
    for (const Value& r : rows) {
        require_rank(tape.value(r), 1, "stack_rows");
        if (tape.value(r).size() != k)
            throw ShapeError("stack_rows: row lengths differ, " + tape.value(r).shape_string() + " vs " +
                             tape.value(rows[0]).shape_string());
    }

    Tensor out({rows.size(), k});
    for (std::size_t b = 0; b < rows.size(); ++b) {
        const Tensor& tr = tape.value(rows[b]);
        for (std::size_t j = 0; j < k; ++j) out.at(b, j) = tr[j];
    }

    std::vector<Value> owned(rows.begin(), rows.end());
    const bool rg = any_requires_grad(tape, rows);
    return tape.emit(std::move(out), rg, [owned, k](Tape& t, std::int32_t self) {
        const Tensor& g = t.grad_at(self);
        for (std::size_t b = 0; b < owned.size(); ++b) {
            if (!t.requires_grad(owned[b])) continue;
            Tensor& dr = t.grad_slot(owned[b].id);
            for (std::size_t j = 0; j < k; ++j) dr[j] += g.at(b, j);
        }
    });
}

Value add_row_bias(Value mat, Value bias) {
    Tape& tape = same_tape(mat, bias);
    const Tensor& tm = tape.value(mat);
    const Tensor& tb = tape.value(bias);
    require_rank(tm, 2, "add_row_bias");
    require_rank(tb, 1, "add_row_bias");
    if (tm.dim(1) != tb.size())
        throw ShapeError("add_row_bias: bias length mismatch, " + tm.shape_string() + " vs " + tb.shape_string());

    Tensor out = tm;
    const std::size_t m = tm.dim(0), n = tm.dim(1);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) += tb[j];
    ensure_finite(out, "add_row_bias");

    const bool rg = tape.requires_grad(mat) || tape.requires_grad(bias);
    return tape.emit(std::move(out), rg, [mat, bias, m, n](Tape& t, std::int32_t self) {
        const Tensor& g = t.grad_at(self);
        if (t.requires_grad(mat)) {
            Tensor& dm = t.grad_slot(mat.id);
            for (std::size_t i = 0; i < g.size(); ++i) dm[i] += g[i];
        }
        if (t.requires_grad(bias)) {
            Tensor& db = t.grad_slot(bias.id);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) db[j] += g.at(i, j);
        }
    });
}

Value relu(Value a) {
    Tape& tape = *a.tape;
    Tensor out = tape.value(a);
    for (double& x : out.values()) x = x > 0.0 ? x : 0.0;

    return tape.emit(std::move(out), tape.requires_grad(a), [a](Tape& t, std::int32_t self) {
        const Tensor& g = t.grad_at(self);
        const Tensor& ta = t.value(a);
        Tensor& da = t.grad_slot(a.id);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (ta[i] > 0.0) da[i] += g[i];
    });
}

Value leaky_relu(Value a, double slope) {
    if (!(slope > 0.0 && slope < 1.0))
        throw std::invalid_argument("leaky_relu: slope must be in (0,1), got " + std::to_string(slope));
    Tape& tape = *a.tape;
    Tensor out = tape.value(a);
    for (double& x : out.values()) x = x > 0.0 ? x : slope * x;

    return tape.emit(std::move(out), tape.requires_grad(a), [a, slope](Tape& t, std::int32_t self) {
        const Tensor& g = t.grad_at(self);
        const Tensor& ta = t.value(a);
        Tensor& da = t.grad_slot(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (ta[i] > 0.0 ? 1.0 : slope);
    });
}

Value elu(Value a) {
    Tape& tape = *a.tape;
    Tensor out = tape.value(a);
    for (double& x : out.values()) x = x > 0.0 ? x : std::expm1(x);
    ensure_finite(out, "elu");

    return tape.emit(std::move(out), tape.requires_grad(a), [a](Tape& t, std::int32_t self) {
        const Tensor& g = t.grad_at(self);
        const Tensor& ta = t.value(a);
        const Tensor& y = t.value(Value{&t, self});
        Tensor& da = t.grad_slot(a.id);
        // d/dx elu = 1 for x > 0, exp(x) = y + 1 otherwise
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (ta[i] > 0.0 ? 1.0 : y[i] + 1.0);
    });
}

Value layer_norm(Value x, Value gain, Value bias) {
    Tape& tape = same_tape(x, gain);
    same_tape(x, bias);
    const Tensor& tx = tape.value(x);
    const Tensor& tg = tape.value(gain);
    const Tensor& tb = tape.value(bias);
    if (tx.rank() != 1 && tx.rank() != 2)
        throw ShapeError("layer_norm: expected rank-1 or rank-2 input, got " + tx.shape_string());
    const std::size_t n = tx.rank() == 2 ? tx.dim(1) : tx.dim(0);
    const std::size_t rows = tx.rank() == 2 ? tx.dim(0) : 1;
    if (tg.size() != n || tb.size() != n)
        throw ShapeError("layer_norm: gain/bias length mismatch, " + tx.shape_string() + " vs " +
                         tg.shape_string());

    Tensor out(tx.shape());
    std::vector<double> inv_std(rows), mean(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* px = tx.data() + r * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += px[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (px[j] - mu) * (px[j] - mu);
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + kLayerNormEps);
        mean[r] = mu;
        inv_std[r] = is;
        double* po = out.data() + r * n;
        for (std::size_t j = 0; j < n; ++j) po[j] = tg[j] * (px[j] - mu) * is + tb[j];
    }
    ensure_finite(out, "layer_norm");

    const bool rg = tape.requires_grad(x) || tape.requires_grad(gain) || tape.requires_grad(bias);
    return tape.emit(std::move(out), rg,
                     [x, gain, bias, rows, n, mean, inv_std](Tape& t, std::int32_t self) {
        const Tensor& g = t.grad_at(self);
        const Tensor& tx = t.value(x);
        const Tensor& tg = t.value(gain);
        const bool need_x = t.requires_grad(x);
        const bool need_g = t.requires_grad(gain);
        const bool need_b = t.requires_grad(bias);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* px = tx.data() + r * n;
            const double* pg = g.data() + r * n;
            const double mu = mean[r], is = inv_std[r];
            if (need_g) {
                Tensor& dg = t.grad_slot(gain.id);
                for (std::size_t j = 0; j < n; ++j) dg[j] += pg[j] * (px[j] - mu) * is;
            }
            if (need_b) {
                Tensor& db = t.grad_slot(bias.id);
                for (std::size_t j = 0; j < n; ++j) db[j] += pg[j];
            }
            if (need_x) {
                Tensor& dx = t.grad_slot(x.id);
                double* pdx = dx.data() + r * n;
                // dxhat = gain * dy; dx = is * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
                double s1 = 0.0, s2 = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double dxh = tg[j] * pg[j];
                    const double xh = (px[j] - mu) * is;
                    s1 += dxh;
                    s2 += dxh * xh;
                }
                s1 /= static_cast<double>(n);
                s2 /= static_cast<double>(n);
                for (std::size_t j = 0; j < n; ++j) {
                    const double dxh = tg[j] * pg[j];
                    const double xh = (px[j] - mu) * is;
                    pdx[j] += is * (dxh - s1 - xh * s2);
                }
            }
        }
    });
}

Value masked_softmax(Value scores, std::vector<std::uint8_t> mask) {
    Tape& tape = *scores.tape;
    const Tensor& ts = tape.value(scores);
    require_rank(ts, 1, "masked_softmax");
    if (mask.size() != ts.size())
        throw ShapeError("masked_softmax: mask length " + std::to_string(mask.size()) +
                         " does not match scores " + ts.shape_string());

    Tensor out = kernels::masked_softmax(ts, mask);

    return tape.emit(std::move(out), tape.requires_grad(scores),
                     [scores, mask = std::move(mask)](Tape& t, std::int32_t self) {
        const Tensor& g = t.grad_at(self);
        const Tensor& y = t.value(Value{&t, self});
        Tensor& ds = t.grad_slot(scores.id);
        double dot = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i)
            if (mask[i]) dot += g[i] * y[i];
        for (std::size_t i = 0; i < y.size(); ++i)
            if (mask[i]) ds[i] += y[i] * (g[i] - dot);
    });
}

Value masked_softmax_rows(Value scores, std::vector<std::uint8_t> mask) {
    Tape& tape = *scores.tape;
    const Tensor& ts = tape.value(scores);
    require_rank(ts, 2, "masked_softmax_rows");
    const std::size_t m = ts.dim(0), n = ts.dim(1);
    if (mask.size() != m * n)
        throw ShapeError("masked_softmax_rows: mask size " + std::to_string(mask.size()) +
                         " does not match scores " + ts.shape_string());

    Tensor out({m, n});
    for (std::size_t r = 0; r < m; ++r) {
        Tensor row({n}, std::vector<double>(ts.data() + r * n, ts.data() + (r + 1) * n));
        Tensor y = kernels::masked_softmax(row, std::span<const std::uint8_t>(mask.data() + r * n, n));
        for (std::size_t j = 0; j < n; ++j) out.at(r, j) = y[j];
    }

    return tape.emit(std::move(out), tape.requires_grad(scores),
                     [scores, mask = std::move(mask), m, n](Tape& t, std::int32_t self) {
        const Tensor& g = t.grad_at(self);
        const Tensor& y = t.value(Value{&t, self});
        Tensor& ds = t.grad_slot(scores.id);
        for (std::size_t r = 0; r < m; ++r) {
            const double* py = y.data() + r * n;
            const double* pgr = g.data() + r * n;
            const std::uint8_t* pm = mask.data() + r * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                if (pm[j]) dot += pgr[j] * py[j];
            double* pds = ds.data() + r * n;
            for (std::size_t j = 0; j < n; ++j)
                if (pm[j]) pds[j] += py[j] * (pgr[j] - dot);
        }
    });
}

Value outer_sum(Value u, Value v) {
    Tape& tape = same_tape(u, v);
    const Tensor& tu = tape.value(u);
    const Tensor& tv = tape.value(v);
    require_rank(tu, 1, "outer_sum");
    require_rank(tv, 1, "outer_sum");
    const std::size_t m = tu.size(), n = tv.size();

    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) = tu[i] + tv[j];
    ensure_finite(out, "outer_sum");

    const bool rg = tape.requires_grad(u) || tape.requires_grad(v);
    return tape.emit(std::move(out), rg, [u, v, m, n](Tape& t, std::int32_t self) {
        const Tensor& g = t.grad_at(self);
        if (t.requires_grad(u)) {
            Tensor& du = t.grad_slot(u.id);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) du[i] += g.at(i, j);
        }
        if (t.requires_grad(v)) {
            Tensor& dv = t.grad_slot(v.id);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) dv[j] += g.at(i, j);
        }
    });
}

Value cross_entropy(Value probs, const std::vector<int>& labels) {
    Tape& tape = *probs.tape;
    const Tensor& tp = tape.value(probs);
    require_rank(tp, 2, "cross_entropy");
    const std::size_t batch = tp.dim(0), k = tp.dim(1);
    if (labels.size() != batch)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(batch));
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= k)
            throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                                    std::to_string(k) + ")");
    for (std::size_t b = 0; b < batch; ++b) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += tp.at(b, j);
        if (std::abs(s - 1.0) > kRowSumTol)
            throw NumericError("cross_entropy: row " + std::to_string(b) + " sums to " + std::to_string(s) +
                               ", not a probability vector");
    }

    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b)
        loss -= std::log(std::max(tp.at(b, static_cast<std::size_t>(labels[b])), kLogClamp));
    loss /= static_cast<double>(batch);
    Tensor out = Tensor::scalar(loss);
    ensure_finite(out, "cross_entropy");

    return tape.emit(std::move(out), tape.requires_grad(probs),
                     [probs, labels, batch](Tape& t, std::int32_t self) {
        const double g = t.grad_at(self)[0];
        const Tensor& tp = t.value(probs);
        Tensor& dp = t.grad_slot(probs.id);
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t y = static_cast<std::size_t>(labels[b]);
            const double p = tp.at(b, y);
            if (p >= kLogClamp) dp.at(b, y) -= g / (static_cast<double>(batch) * p);
            // below the clamp the loss is flat, so no contribution
        }
    });
}

Value affine(Value x, Value w, Value b) {
    Tape& tape = *x.tape;
    const Tensor& tx = tape.value(x);
    require_rank(tx, 1, "affine");
    Value row = reshape(x, {1, tx.size()});
    Value out = add_row_bias(matmul(row, w), b);
    return reshape(out, {tape.value(w).dim(1)});
}

}  // namespace dsgtf
