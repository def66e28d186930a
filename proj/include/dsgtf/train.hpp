#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsgtf/data.hpp"
#include "dsgtf/model.hpp"
#include "dsgtf/sensor_graph.hpp"

namespace dsgtf {

struct AdjacencySpec {
    std::string method = "topk";
    std::size_t k = 3;     // topk
    double tau = 0.5;      // thresh

    nlohmann::json to_json() const;
    static AdjacencySpec from_json(const nlohmann::json& j);
};

// Full experiment configuration. Every field is overridable; the JSON schema
// mirrors these names.
struct TrainConfig {
    std::size_t segment_len = 100;
    double overlap = 0.5;
    std::size_t window_len = 10;
    double gamma = 100.0;
    AdjacencySpec adjacency;
    double lr = 1e-4;
    std::size_t batch = 32;
    std::size_t epochs = 15;
    std::uint64_t seed = 0;
    std::size_t channels = 0;  // 0: take the layout's channel count
    std::size_t gat_features = 8;
    std::size_t token_dim = 8;
    std::size_t ffn_dim = 256;
    std::size_t gat_heads = 3;
    std::size_t encoder_heads = 8;

    ModelConfig model_config(std::size_t layout_channels) const;

    nlohmann::json to_json() const;
    // Missing fields keep their defaults, unknown fields are rejected.
    static TrainConfig from_json(const nlohmann::json& j);
};

AdjacencyMatrix make_adjacency(const SensorLayout& layout, double gamma, const AdjacencySpec& spec);

struct EpochMetrics {
    double train_loss = 0.0;
    double train_acc = 0.0;
};

struct TrainResult {
    std::vector<EpochMetrics> epochs;
    std::filesystem::path metrics_csv;
    std::filesystem::path checkpoint;
};

// Adam + categorical cross-entropy over seeded shuffled mini-batches of
// windowed segments. Writes metrics.csv and checkpoint.bin under out_dir.
// Aborts on subject leakage into the training batches and on non-finite
// losses, identifying epoch and batch.
TrainResult train(const Manifest& manifest, const DatasetSplit& split, const TrainConfig& config,
                  const std::filesystem::path& out_dir);

struct EvalReport {
    std::vector<std::pair<std::string, double>> per_subject;  // ordered by subject id
    double mean = 0.0;
    double stddev = 0.0;  // population, across subjects
};

// Segment-level argmax predictions (ties to the lower class index),
// accuracy pooled over each subject's segments, mean/std across subjects.
EvalReport evaluate(Checkpoint& checkpoint, const Manifest& manifest,
                    const std::vector<std::string>& subjects);

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report);

// 0-based epoch argmax helper exposed for tests: lowest index wins ties.
std::size_t argmax_row(const Tensor& probs, std::size_t row);

struct SweepVariant {
    AdjMethod method = AdjMethod::TopK;
    double param = 0.0;  // k for topk, tau for thresh, ignored for fc
};

struct SweepRow {
    SweepVariant variant;
    bool ok = false;
    std::size_t edges = 0;
    double mean_acc = 0.0;
    double std_acc = 0.0;
    std::string error;
};

// One train+evaluate per variant, all from base_config.seed. A failing
// variant is recorded with empty numeric fields and the sweep continues.
std::vector<SweepRow> sweep_adjacency(const Manifest& manifest, const DatasetSplit& split,
                                      const TrainConfig& base_config,
                                      const std::vector<SweepVariant>& variants,
                                      const std::filesystem::path& out_dir);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

}  // namespace dsgtf
