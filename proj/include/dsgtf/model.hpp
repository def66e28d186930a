#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsgtf/data.hpp"
#include "dsgtf/gradcheck.hpp"
#include "dsgtf/ops.hpp"
#include "dsgtf/sensor_graph.hpp"
#include "dsgtf/tape.hpp"

namespace dsgtf {

// Dual-stream network: a per-window graph-attention spatial stream and a
// single-block transformer-encoder temporal stream, fused by one dense layer
// into 4-class probabilities.
struct ModelConfig {
    std::size_t channels = 0;      // graph nodes / encoder tokens
    std::size_t segment_len = 100;
    std::size_t window_len = 10;
    std::size_t gat_heads = 3;
    std::size_t gat_features = 8;  // per-head GAT output width
    std::size_t encoder_heads = 8;
    std::size_t ffn_dim = 256;
    std::size_t token_dim = 8;     // per-token width after down-sampling

    std::size_t window_count() const { return segment_len / window_len; }
    std::size_t head_dim() const { return segment_len / encoder_heads; }
    std::size_t embed_dim() const { return channels * token_dim; }
    std::size_t gat_out_dim() const { return gat_heads * gat_features; }

    void validate() const;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

struct GatHeadParams {
    Tensor weight;  // window_len x gat_features
    Tensor attn;    // 2 * gat_features
};

struct GatLayerParams {
    std::vector<GatHeadParams> heads;
};

// One window's GAT layer plus its dense projection to the shared embedding.
struct WindowBlockParams {
    GatLayerParams gat;
    Tensor dense_w;  // (channels * gat_out_dim) x embed_dim
    Tensor dense_b;  // embed_dim
};

struct SpatialStreamParams {
    std::vector<WindowBlockParams> windows;  // one per window
};

struct EncoderHeadParams {
    Tensor wq, wk, wv;  // segment_len x head_dim, no biases
};

struct EncoderParams {
    std::vector<EncoderHeadParams> heads;
    Tensor out_proj;             // (encoder_heads * head_dim) x segment_len
    Tensor ln1_gain, ln1_bias;   // segment_len
    Tensor ffn_w1, ffn_b1;       // segment_len x ffn_dim, ffn_dim
    Tensor ffn_w2, ffn_b2;       // ffn_dim x segment_len, segment_len
    Tensor ln2_gain, ln2_bias;   // segment_len
    Tensor down_w, down_b;       // segment_len x token_dim, token_dim
};

struct DsGtfParams {
    ModelConfig config;
    SpatialStreamParams spatial;
    EncoderParams temporal;
    Tensor fusion_w;  // (2 * embed_dim) x 4
    Tensor fusion_b;  // 4
};

enum class ParamKind { Weight, AttnVector, Bias, Gain };

struct ParamRef {
    std::string name;
    ParamKind kind = ParamKind::Weight;
    std::size_t fan_in = 0, fan_out = 0;
    Tensor* tensor = nullptr;
};

// Every parameter tensor in the declared (checkpoint) order.
std::vector<ParamRef> param_refs(DsGtfParams& params);

// Closed-form total parameter count for a config.
std::size_t param_count(const ModelConfig& config);

DsGtfParams allocate_params(const ModelConfig& config);

// Glorot-uniform weights with bound sqrt(6 / (fan_in + fan_out)), zero
// biases, unit layer-norm gains. Deterministic per seed.
DsGtfParams init_params(const ModelConfig& config, std::uint64_t seed);

// --- forward passes ---

// Parameter leaves bound onto a tape, reusable across the segments of a
// batch. Views are fetched by registry name so the flat order and the
// structure cannot drift apart.
struct BoundModel {
    struct GatHeadV {
        Value weight, attn;
    };
    struct WindowV {
        std::vector<GatHeadV> heads;
        Value dense_w, dense_b;
    };
    struct EncoderHeadV {
        Value wq, wk, wv;
    };
    struct EncoderV {
        std::vector<EncoderHeadV> heads;
        Value out_proj, ln1_gain, ln1_bias, ffn_w1, ffn_b1, ffn_w2, ffn_b2, ln2_gain, ln2_bias,
            down_w, down_b;
    };

    ModelConfig config;
    std::vector<Value> ordered;  // same order as param_refs
    std::vector<WindowV> windows;
    EncoderV encoder;
    Value fusion_w, fusion_b;

    static BoundModel bind(Tape& tape, DsGtfParams& params, bool requires_grad);
};

// Test/diagnostic introspection.
struct GatTrace {
    std::vector<Tensor> alpha;  // per head, channels x channels attention
};
struct TemporalTrace {
    std::vector<Tensor> attention;  // per head
    Tensor mha_out;                 // after output projection, pre-residual
};

// Multi-head graph attention over one window; heads concatenated.
Value gat_forward(Tape& tape, Value node_feats, const AdjacencyMatrix& adj,
                  std::span<const BoundModel::GatHeadV> heads, std::size_t gat_features,
                  GatTrace* trace = nullptr);

// Per-window GAT -> flatten -> dense, summed across windows.
Value spatial_forward(Tape& tape, const std::vector<Tensor>& windows, const AdjacencyMatrix& adj,
                      const BoundModel& model);

// Channel rows as tokens through one encoder block, then per-token
// down-sampling and row-major flatten.
Value temporal_forward(Tape& tape, const Tensor& segment, const BoundModel& model,
                       TemporalTrace* trace = nullptr);

// Full network: concat(temporal, spatial) -> dense -> softmax. Returns the
// 4-entry class-probability vector.
Value forward(Tape& tape, const WindowedSegment& ws, const AdjacencyMatrix& adj,
              const BoundModel& model);

// One-shot convenience without gradient recording.
Tensor forward_probs(DsGtfParams& params, const WindowedSegment& ws, const AdjacencyMatrix& adj);

// Central-difference verification of the full backward pass on one labelled
// segment: cross-entropy gradients for every parameter tensor against
// finite differences at the given eps/tolerance.
GradCheckReport gradient_check(DsGtfParams& params, const WindowedSegment& ws,
                               const AdjacencyMatrix& adj, int label, double eps, double tolerance,
                               std::size_t max_coords_per_tensor = 0);

// Deterministic small-scale setup for gradient checking: random sphere
// layout, top-k graph, one random normalized segment.
struct GradCheckSetup {
    SensorLayout layout;
    AdjacencyMatrix adj;
    WindowedSegment input;
    int label = 0;
    DsGtfParams params;
};

GradCheckSetup make_gradcheck_setup(const ModelConfig& config, std::uint64_t seed);

// --- checkpoint file ---
// "DSGTFCP\0", u32-LE config JSON length, JSON bytes, then per tensor in
// registry order: u32-LE rank, u32-LE dims, f32-LE values.
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config,
                     DsGtfParams& params);

struct Checkpoint {
    nlohmann::json config;  // as stored (training config superset)
    DsGtfParams params;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dsgtf
