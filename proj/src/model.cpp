#include "dsgtf/model.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "dsgtf/rng.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace dsgtf {

using nlohmann::json;

namespace {

constexpr char kCheckpointMagic[8] = {'D', 'S', 'G', 'T', 'F', 'C', 'P', '\0'};
constexpr double kGatLeakySlope = 0.2;

std::string win_name(std::size_t g) { return "spatial.win" + std::to_string(g); }

}  // namespace

void ModelConfig::validate() const {
    if (channels < 1) throw std::invalid_argument("model config: channels must be positive");
    if (window_len == 0 || segment_len % window_len != 0)
        throw std::invalid_argument("model config: window length " + std::to_string(window_len) +
                                    " does not divide segment length " + std::to_string(segment_len));
    if (gat_heads < 1 || gat_features < 1 || encoder_heads < 1 || ffn_dim < 1 || token_dim < 1)
        throw std::invalid_argument("model config: widths and head counts must be positive");
    if (head_dim() < 1)
        throw std::invalid_argument("model config: " + std::to_string(encoder_heads) +
                                    " encoder heads leave no head dimension for segment length " +
                                    std::to_string(segment_len));
}

json ModelConfig::to_json() const {
    return json{{"channels", channels},           {"segment_len", segment_len},
                {"window_len", window_len},       {"gat_heads", gat_heads},
                {"gat_features", gat_features},   {"encoder_heads", encoder_heads},
                {"ffn_dim", ffn_dim},             {"token_dim", token_dim}};
}

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig c;
    c.channels = j.at("channels").get<std::size_t>();
    c.segment_len = j.value("segment_len", c.segment_len);
    c.window_len = j.value("window_len", c.window_len);
    c.gat_heads = j.value("gat_heads", c.gat_heads);
    c.gat_features = j.value("gat_features", c.gat_features);
    c.encoder_heads = j.value("encoder_heads", c.encoder_heads);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.token_dim = j.value("token_dim", c.token_dim);
    c.validate();
    return c;
}

DsGtfParams allocate_params(const ModelConfig& config) {
    config.validate();
    const std::size_t c = config.channels, d = config.segment_len, w = config.window_len;
    const std::size_t fp = config.gat_features, dk = config.head_dim(), p = config.token_dim;

    DsGtfParams params;
    params.config = config;
    params.spatial.windows.resize(config.window_count());
    for (WindowBlockParams& win : params.spatial.windows) {
        win.gat.heads.resize(config.gat_heads);
        for (GatHeadParams& h : win.gat.heads) {
            h.weight = Tensor({w, fp});
            h.attn = Tensor({2 * fp});
        }
        win.dense_w = Tensor({c * config.gat_out_dim(), config.embed_dim()});
        win.dense_b = Tensor({config.embed_dim()});
    }

    EncoderParams& enc = params.temporal;
    enc.heads.resize(config.encoder_heads);
    for (EncoderHeadParams& h : enc.heads) {
        h.wq = Tensor({d, dk});
        h.wk = Tensor({d, dk});
        h.wv = Tensor({d, dk});
    }
    enc.out_proj = Tensor({config.encoder_heads * dk, d});
    enc.ln1_gain = Tensor({d});
    enc.ln1_bias = Tensor({d});
    enc.ffn_w1 = Tensor({d, config.ffn_dim});
    enc.ffn_b1 = Tensor({config.ffn_dim});
    enc.ffn_w2 = Tensor({config.ffn_dim, d});
    enc.ffn_b2 = Tensor({d});
    enc.ln2_gain = Tensor({d});
    enc.ln2_bias = Tensor({d});
    enc.down_w = Tensor({d, p});
    enc.down_b = Tensor({p});

    params.fusion_w = Tensor({2 * config.embed_dim(), kTaskCount});
    params.fusion_b = Tensor({kTaskCount});
    return params;
}

std::vector<ParamRef> param_refs(DsGtfParams& params) {
    const ModelConfig& cfg = params.config;
    std::vector<ParamRef> refs;

    const auto push = [&refs](std::string name, ParamKind kind, std::size_t fi, std::size_t fo,
                              Tensor& t) {
        refs.push_back(ParamRef{std::move(name), kind, fi, fo, &t});
    };

    for (std::size_t g = 0; g < params.spatial.windows.size(); ++g) {
        WindowBlockParams& win = params.spatial.windows[g];
        for (std::size_t h = 0; h < win.gat.heads.size(); ++h) {
            GatHeadParams& head = win.gat.heads[h];
            const std::string base = win_name(g) + ".head" + std::to_string(h);
            push(base + ".weight", ParamKind::Weight, cfg.window_len, cfg.gat_features, head.weight);
            push(base + ".attn", ParamKind::AttnVector, 2 * cfg.gat_features, 1, head.attn);
        }
        push(win_name(g) + ".dense_w", ParamKind::Weight, cfg.channels * cfg.gat_out_dim(),
             cfg.embed_dim(), win.dense_w);
        push(win_name(g) + ".dense_b", ParamKind::Bias, 0, 0, win.dense_b);
    }

    EncoderParams& enc = params.temporal;
    for (std::size_t h = 0; h < enc.heads.size(); ++h) {
        const std::string base = "temporal.head" + std::to_string(h);
        push(base + ".wq", ParamKind::Weight, cfg.segment_len, cfg.head_dim(), enc.heads[h].wq);
        push(base + ".wk", ParamKind::Weight, cfg.segment_len, cfg.head_dim(), enc.heads[h].wk);
        push(base + ".wv", ParamKind::Weight, cfg.segment_len, cfg.head_dim(), enc.heads[h].wv);
    }
    push("temporal.out_proj", ParamKind::Weight, cfg.encoder_heads * cfg.head_dim(), cfg.segment_len,
         enc.out_proj);
    push("temporal.ln1_gain", ParamKind::Gain, 0, 0, enc.ln1_gain);
    push("temporal.ln1_bias", ParamKind::Bias, 0, 0, enc.ln1_bias);
    push("temporal.ffn_w1", ParamKind::Weight, cfg.segment_len, cfg.ffn_dim, enc.ffn_w1);
    push("temporal.ffn_b1", ParamKind::Bias, 0, 0, enc.ffn_b1);
    push("temporal.ffn_w2", ParamKind::Weight, cfg.ffn_dim, cfg.segment_len, enc.ffn_w2);
    push("temporal.ffn_b2", ParamKind::Bias, 0, 0, enc.ffn_b2);
    push("temporal.ln2_gain", ParamKind::Gain, 0, 0, enc.ln2_gain);
    push("temporal.ln2_bias", ParamKind::Bias, 0, 0, enc.ln2_bias);
    push("temporal.down_w", ParamKind::Weight, cfg.segment_len, cfg.token_dim, enc.down_w);
    push("temporal.down_b", ParamKind::Bias, 0, 0, enc.down_b);

    push("fusion.weight", ParamKind::Weight, 2 * cfg.embed_dim(), kTaskCount, params.fusion_w);
    push("fusion.bias", ParamKind::Bias, 0, 0, params.fusion_b);
    return refs;
}

std::size_t param_count(const ModelConfig& cfg) {
    const std::size_t c = cfg.channels, d = cfg.segment_len, w = cfg.window_len;
    const std::size_t fp = cfg.gat_features, dk = cfg.head_dim(), p = cfg.token_dim;
    const std::size_t per_window =
        cfg.gat_heads * (w * fp + 2 * fp) + (c * cfg.gat_out_dim()) * (c * p) + c * p;
    const std::size_t temporal = cfg.encoder_heads * 3 * d * dk  // q, k, v projections
                                 + (cfg.encoder_heads * dk) * d  // output projection
                                 + 2 * d                         // layer norm 1
                                 + d * cfg.ffn_dim + cfg.ffn_dim + cfg.ffn_dim * d + d
                                 + 2 * d                         // layer norm 2
                                 + d * p + p;
    const std::size_t fusion = 2 * c * p * kTaskCount + kTaskCount;
    return cfg.window_count() * per_window + temporal + fusion;
}

DsGtfParams init_params(const ModelConfig& config, std::uint64_t seed) {
    DsGtfParams params = allocate_params(config);
    std::vector<ParamRef> refs = param_refs(params);
    for (std::size_t i = 0; i < refs.size(); ++i) {
        ParamRef& r = refs[i];
        switch (r.kind) {
            case ParamKind::Weight:
            case ParamKind::AttnVector: {
                Rng rng(mix_seed(seed, 7000 + i));
                const double bound = std::sqrt(6.0 / static_cast<double>(r.fan_in + r.fan_out));
                for (double& v : r.tensor->values()) v = rng.uniform(-bound, bound);
                break;
            }
            case ParamKind::Bias:
                break;  // already zero
            case ParamKind::Gain:
                for (double& v : r.tensor->values()) v = 1.0;
                break;
        }
    }
    return params;
}

BoundModel BoundModel::bind(Tape& tape, DsGtfParams& params, bool requires_grad) {
    BoundModel m;
    m.config = params.config;

    std::unordered_map<std::string, Value> by_name;
    for (const ParamRef& r : param_refs(params)) {
        Value v = tape.leaf(*r.tensor, requires_grad);
        m.ordered.push_back(v);
        by_name.emplace(r.name, v);
    }
    const auto get = [&by_name](const std::string& name) { return by_name.at(name); };

    for (std::size_t g = 0; g < m.config.window_count(); ++g) {
        WindowV win;
        for (std::size_t h = 0; h < m.config.gat_heads; ++h) {
            const std::string base = win_name(g) + ".head" + std::to_string(h);
            win.heads.push_back({get(base + ".weight"), get(base + ".attn")});
        }
        win.dense_w = get(win_name(g) + ".dense_w");
        win.dense_b = get(win_name(g) + ".dense_b");
        m.windows.push_back(std::move(win));
    }

    for (std::size_t h = 0; h < m.config.encoder_heads; ++h) {
        const std::string base = "temporal.head" + std::to_string(h);
        m.encoder.heads.push_back({get(base + ".wq"), get(base + ".wk"), get(base + ".wv")});
    }
    m.encoder.out_proj = get("temporal.out_proj");
    m.encoder.ln1_gain = get("temporal.ln1_gain");
    m.encoder.ln1_bias = get("temporal.ln1_bias");
    m.encoder.ffn_w1 = get("temporal.ffn_w1");
    m.encoder.ffn_b1 = get("temporal.ffn_b1");
    m.encoder.ffn_w2 = get("temporal.ffn_w2");
    m.encoder.ffn_b2 = get("temporal.ffn_b2");
    m.encoder.ln2_gain = get("temporal.ln2_gain");
    m.encoder.ln2_bias = get("temporal.ln2_bias");
    m.encoder.down_w = get("temporal.down_w");
    m.encoder.down_b = get("temporal.down_b");
    m.fusion_w = get("fusion.weight");
    m.fusion_b = get("fusion.bias");
    return m;
}

Value gat_forward(Tape& tape, Value node_feats, const AdjacencyMatrix& adj,
                  std::span<const BoundModel::GatHeadV> heads, std::size_t gat_features,
                  GatTrace* trace) {
    const Tensor& feats = tape.value(node_feats);
    if (feats.rank() != 2 || feats.dim(0) != adj.n)
        throw ShapeError("gat_forward: features " + feats.shape_string() + " do not match graph of " +
                         std::to_string(adj.n) + " nodes");
    for (std::size_t i = 0; i < adj.n; ++i)
        if (!adj.at(i, i))
            throw std::invalid_argument("gat_forward: adjacency lacks self-loop at node " +
                                        std::to_string(i));

    std::vector<Value> head_outs;
    head_outs.reserve(heads.size());
    for (const BoundModel::GatHeadV& head : heads) {
        Value projected = matmul(node_feats, head.weight);  // c x F'
        // e_ij = leaky_relu(a_src . Wx_i + a_dst . Wx_j)
        Value a_src = reshape(slice_vec(head.attn, 0, gat_features), {gat_features, 1});
        Value a_dst = reshape(slice_vec(head.attn, gat_features, gat_features), {gat_features, 1});
        Value s_src = reshape(matmul(projected, a_src), {adj.n});
        Value s_dst = reshape(matmul(projected, a_dst), {adj.n});
        Value scores = leaky_relu(outer_sum(s_src, s_dst), kGatLeakySlope);
        Value alpha = masked_softmax_rows(scores, adj.entries);
        if (trace) trace->alpha.push_back(tape.value(alpha));
        head_outs.push_back(elu(matmul(alpha, projected)));
    }
    return concat_cols(head_outs);
}

Value spatial_forward(Tape& tape, const std::vector<Tensor>& windows, const AdjacencyMatrix& adj,
                      const BoundModel& model) {
    const ModelConfig& cfg = model.config;
    if (windows.size() != model.windows.size())
        throw ShapeError("spatial_forward: " + std::to_string(windows.size()) + " windows for " +
                         std::to_string(model.windows.size()) + " window blocks");

    Value embedding;
    for (std::size_t g = 0; g < windows.size(); ++g) {
        Value feats = tape.leaf(windows[g]);
        Value gat = gat_forward(tape, feats, adj, model.windows[g].heads, cfg.gat_features);
        Value flat = reshape(gat, {cfg.channels * cfg.gat_out_dim()});
        Value densed = affine(flat, model.windows[g].dense_w, model.windows[g].dense_b);
        embedding = g == 0 ? densed : add(embedding, densed);
    }
    return embedding;
}

Value temporal_forward(Tape& tape, const Tensor& segment, const BoundModel& model,
                       TemporalTrace* trace) {
    const ModelConfig& cfg = model.config;
    if (segment.rank() != 2 || segment.dim(0) != cfg.channels || segment.dim(1) != cfg.segment_len)
        throw ShapeError("temporal_forward: segment " + segment.shape_string() + " does not match config " +
                         shape_str({cfg.channels, cfg.segment_len}));

    const std::size_t c = cfg.channels;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
    const std::vector<std::uint8_t> full_mask(c * c, 1);

    const char* stage = "attention";
    try {
        Value tokens = tape.leaf(segment);

        std::vector<Value> head_outs;
        head_outs.reserve(cfg.encoder_heads);
        for (const BoundModel::EncoderHeadV& head : model.encoder.heads) {
            Value q = matmul(tokens, head.wq);
            Value k = matmul(tokens, head.wk);
            Value v = matmul(tokens, head.wv);
            Value scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
            Value attn = masked_softmax_rows(scores, full_mask);
            if (trace) trace->attention.push_back(tape.value(attn));
            head_outs.push_back(matmul(attn, v));
        }
        Value mha = matmul(concat_cols(head_outs), model.encoder.out_proj);
        if (trace) trace->mha_out = tape.value(mha);

        stage = "attention_norm";
        Value norm1 = layer_norm(add(tokens, mha), model.encoder.ln1_gain, model.encoder.ln1_bias);

        stage = "feed_forward";
        Value hidden = relu(add_row_bias(matmul(norm1, model.encoder.ffn_w1), model.encoder.ffn_b1));
        Value ffn = add_row_bias(matmul(hidden, model.encoder.ffn_w2), model.encoder.ffn_b2);

        stage = "feed_forward_norm";
        Value norm2 = layer_norm(add(norm1, ffn), model.encoder.ln2_gain, model.encoder.ln2_bias);

        stage = "down_sample";
        Value down = add_row_bias(matmul(norm2, model.encoder.down_w), model.encoder.down_b);
        return reshape(down, {cfg.embed_dim()});
    } catch (const NumericError& e) {
        throw NumericError("temporal_forward/" + std::string(stage) + ": " + e.what());
    }
}

Value forward(Tape& tape, const WindowedSegment& ws, const AdjacencyMatrix& adj,
              const BoundModel& model) {
    Value temporal = temporal_forward(tape, ws.segment, model);
    Value spatial = spatial_forward(tape, ws.windows, adj, model);
    const std::array<Value, 2> streams{temporal, spatial};
    Value fused = concat_vec(streams);
    Value logits = affine(fused, model.fusion_w, model.fusion_b);
    return masked_softmax(logits, std::vector<std::uint8_t>(kTaskCount, 1));
}

Tensor forward_probs(DsGtfParams& params, const WindowedSegment& ws, const AdjacencyMatrix& adj) {
    Tape tape(/*recording=*/false);
    BoundModel model = BoundModel::bind(tape, params, /*requires_grad=*/false);
    return tape.value(forward(tape, ws, adj, model));
}

GradCheckReport gradient_check(DsGtfParams& params, const WindowedSegment& ws,
                               const AdjacencyMatrix& adj, int label, double eps, double tolerance,
                               std::size_t max_coords_per_tensor) {
    const std::vector<int> labels{label};

    // Analytic gradients from one taped forward/backward.
    std::vector<ParamRef> refs = param_refs(params);
    std::vector<Tensor> grads;
    {
        Tape tape;
        BoundModel model = BoundModel::bind(tape, params, /*requires_grad=*/true);
        Value probs = forward(tape, ws, adj, model);
        const std::array<Value, 1> row{probs};
        Value loss = cross_entropy(stack_rows(row), labels);
        tape.backward(loss);
        grads.reserve(refs.size());
        for (std::size_t i = 0; i < refs.size(); ++i) grads.push_back(tape.grad(model.ordered[i]));
    }

    const auto loss_fn = [&params, &ws, &adj, &labels]() {
        Tape tape(/*recording=*/false);
        BoundModel model = BoundModel::bind(tape, params, /*requires_grad=*/false);
        Value probs = forward(tape, ws, adj, model);
        const std::array<Value, 1> row{probs};
        return tape.value(cross_entropy(stack_rows(row), labels))[0];
    };

    std::vector<NamedParam> named;
    named.reserve(refs.size());
    for (ParamRef& r : refs) named.push_back({r.name, r.tensor});
    return finite_diff_check(loss_fn, named, grads, eps, tolerance, max_coords_per_tensor);
}

GradCheckSetup make_gradcheck_setup(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    GradCheckSetup setup;

    Rng rng(mix_seed(seed, 42));
    int id_width = 2;
    for (std::size_t v = config.channels; v > 100; v /= 10) ++id_width;
    for (std::size_t i = 0; i < config.channels; ++i) {
        const double z = rng.uniform(-1.0, 1.0);
        const double phi = rng.uniform(0.0, 2.0 * M_PI);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        char name[32];
        std::snprintf(name, sizeof name, "ch%0*zu", id_width, i);
        setup.layout.channels.push_back({name, r * std::cos(phi), r * std::sin(phi), z});
    }
    const std::size_t k = std::min<std::size_t>(2, config.channels - 1);
    setup.adj = build_topk(setup.layout, /*gamma=*/1.0, k);

    Tensor raw({config.channels, config.segment_len});
    for (double& v : raw.values()) v = rng.normal();
    setup.input.subject_id = "gradcheck";
    setup.input.label = static_cast<TaskLabel>(rng.below(kTaskCount));
    setup.input.segment = normalize_segment(raw);
    setup.input.windows = window_segment(setup.input.segment, config.window_len);
    setup.label = static_cast<int>(setup.input.label);

    setup.params = init_params(config, seed);
    return setup;
}

namespace {

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_raw(std::ifstream& in, const std::filesystem::path& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw std::runtime_error("checkpoint " + path.string() + ": truncated");
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const json& config, DsGtfParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());

    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    const std::string cfg = config.dump();
    write_raw(out, static_cast<std::uint32_t>(cfg.size()));
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

    for (const ParamRef& r : param_refs(params)) {
        const Tensor& t = *r.tensor;
        write_raw(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) write_raw(out, static_cast<std::uint32_t>(d));
        for (double v : t.values()) write_raw(out, static_cast<float>(v));
    }
    if (!out) throw std::runtime_error("short write to checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());

    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw std::runtime_error("checkpoint " + path.string() + ": bad magic");

    const auto cfg_len = read_raw<std::uint32_t>(in, path);
    std::string cfg_text(cfg_len, '\0');
    if (!in.read(cfg_text.data(), cfg_len))
        throw std::runtime_error("checkpoint " + path.string() + ": truncated config");

    Checkpoint ckpt;
    ckpt.config = json::parse(cfg_text);
    ckpt.params = allocate_params(ModelConfig::from_json(ckpt.config));

    for (const ParamRef& r : param_refs(ckpt.params)) {
        const auto rank = read_raw<std::uint32_t>(in, path);
        Shape shape(rank);
        for (std::uint32_t i = 0; i < rank; ++i) shape[i] = read_raw<std::uint32_t>(in, path);
        if (shape != r.tensor->shape())
            throw std::runtime_error("checkpoint " + path.string() + ": tensor " + r.name +
                                     " has shape " + shape_str(shape) + ", expected " +
                                     r.tensor->shape_string());
        for (double& v : r.tensor->values()) v = static_cast<double>(read_raw<float>(in, path));
    }
    return ckpt;
}

}  // namespace dsgtf
