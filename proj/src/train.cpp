#include "dsgtf/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "dsgtf/adam.hpp"
#include "dsgtf/ops.hpp"
#include "dsgtf/rng.hpp"

namespace dsgtf {

using nlohmann::json;

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known, const char* what) {
    for (const auto& [key, _] : j.items()) {
        if (std::find_if(known.begin(), known.end(),
                         [&key](const char* k) { return key == k; }) == known.end())
            throw std::invalid_argument(std::string(what) + ": unknown field '" + key + "'");
    }
}

struct TrainingSet {
    std::vector<WindowedSegment> segments;
    std::vector<int> labels;
};

TrainingSet load_segments(const Manifest& manifest, const std::vector<std::string>& subjects,
                          const TrainConfig& cfg) {
    const std::unordered_set<std::string> wanted(subjects.begin(), subjects.end());
    TrainingSet set;
    for (const ManifestSubject& subj : manifest.subjects) {
        if (!wanted.contains(subj.id)) continue;
        for (const ManifestEntry& entry : subj.recordings) {
            Recording rec = read_recording(entry.file);
            rec.subject_id = subj.id;
            rec.label = entry.label;
            for (WindowedSegment& ws :
                 prepare_segments(rec, cfg.segment_len, cfg.overlap, cfg.window_len)) {
                set.labels.push_back(static_cast<int>(ws.label));
                set.segments.push_back(std::move(ws));
            }
        }
    }
    return set;
}

}  // namespace

json AdjacencySpec::to_json() const {
    json j{{"method", method}};
    if (method == "topk") j["k"] = k;
    if (method == "thresh") j["tau"] = tau;
    return j;
}

AdjacencySpec AdjacencySpec::from_json(const json& j) {
    AdjacencySpec spec;
    reject_unknown_keys(j, {"method", "k", "tau"}, "adjacency config");
    spec.method = j.value("method", spec.method);
    adj_method_from_string(spec.method);  // validates
    spec.k = j.value("k", spec.k);
    spec.tau = j.value("tau", spec.tau);
    return spec;
}

ModelConfig TrainConfig::model_config(std::size_t layout_channels) const {
    if (channels != 0 && channels != layout_channels)
        throw std::invalid_argument("config expects " + std::to_string(channels) +
                                    " channels but the layout has " + std::to_string(layout_channels));
    ModelConfig m;
    m.channels = layout_channels;
    m.segment_len = segment_len;
    m.window_len = window_len;
    m.gat_heads = gat_heads;
    m.gat_features = gat_features;
    m.encoder_heads = encoder_heads;
    m.ffn_dim = ffn_dim;
    m.token_dim = token_dim;
    m.validate();
    return m;
}

json TrainConfig::to_json() const {
    return json{{"segment_len", segment_len},
                {"overlap", overlap},
                {"window_len", window_len},
                {"gamma", gamma},
                {"adjacency", adjacency.to_json()},
                {"lr", lr},
                {"batch", batch},
                {"epochs", epochs},
                {"seed", seed},
                {"channels", channels},
                {"gat_features", gat_features},
                {"token_dim", token_dim},
                {"ffn_dim", ffn_dim},
                {"gat_heads", gat_heads},
                {"encoder_heads", encoder_heads}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    reject_unknown_keys(j,
                        {"segment_len", "overlap", "window_len", "gamma", "adjacency", "lr", "batch",
                         "epochs", "seed", "channels", "gat_features", "token_dim", "ffn_dim",
                         "gat_heads", "encoder_heads"},
                        "train config");
    TrainConfig c;
    c.segment_len = j.value("segment_len", c.segment_len);
    c.overlap = j.value("overlap", c.overlap);
    c.window_len = j.value("window_len", c.window_len);
    c.gamma = j.value("gamma", c.gamma);
    if (j.contains("adjacency")) c.adjacency = AdjacencySpec::from_json(j.at("adjacency"));
    c.lr = j.value("lr", c.lr);
    c.batch = j.value("batch", c.batch);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.channels = j.value("channels", c.channels);
    c.gat_features = j.value("gat_features", c.gat_features);
    c.token_dim = j.value("token_dim", c.token_dim);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.gat_heads = j.value("gat_heads", c.gat_heads);
    c.encoder_heads = j.value("encoder_heads", c.encoder_heads);
    return c;
}

AdjacencyMatrix make_adjacency(const SensorLayout& layout, double gamma, const AdjacencySpec& spec) {
    switch (adj_method_from_string(spec.method)) {
        case AdjMethod::FullyConnected: return build_fc(layout);
        case AdjMethod::Threshold: return build_thresh(layout, gamma, spec.tau);
        case AdjMethod::TopK: return build_topk(layout, gamma, spec.k);
    }
    throw std::logic_error("unreachable");
}

std::size_t argmax_row(const Tensor& probs, std::size_t row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < probs.dim(1); ++j)
        if (probs.at(row, j) > probs.at(row, best)) best = j;
    return best;
}

TrainResult train(const Manifest& manifest, const DatasetSplit& split, const TrainConfig& config,
                  const std::filesystem::path& out_dir) {
    const SensorLayout layout = SensorLayout::load_csv(manifest.layout);
    const ModelConfig model_cfg = config.model_config(layout.size());
    const AdjacencyMatrix adj = make_adjacency(layout, config.gamma, config.adjacency);

    const std::unordered_set<std::string> test_set(split.test_subjects.begin(),
                                                   split.test_subjects.end());
    for (const std::string& s : split.train_subjects)
        if (test_set.contains(s))
            throw std::runtime_error("subject leakage: '" + s + "' is in both train and test sets");

    TrainingSet data = load_segments(manifest, split.train_subjects, config);
    if (data.segments.empty()) throw std::runtime_error("no training segments for the given split");

    DsGtfParams params = init_params(model_cfg, config.seed);
    std::vector<ParamRef> refs = param_refs(params);
    std::vector<Tensor*> tensors;
    tensors.reserve(refs.size());
    for (ParamRef& r : refs) tensors.push_back(r.tensor);
    AdamState adam = AdamState::create(tensors, config.lr);

    std::filesystem::create_directories(out_dir);
    TrainResult result;
    result.metrics_csv = out_dir / "metrics.csv";
    result.checkpoint = out_dir / "checkpoint.bin";

    std::ofstream metrics(result.metrics_csv);
    if (!metrics) throw std::runtime_error("cannot write " + result.metrics_csv.string());
    metrics << "epoch,train_loss,train_acc\n";

    std::vector<std::size_t> order(data.segments.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        // Every epoch re-checks that no test subject feeds a parameter update.
        for (const WindowedSegment& ws : data.segments)
            if (test_set.contains(ws.subject_id))
                throw std::runtime_error("subject leakage: test subject '" + ws.subject_id +
                                         "' found in training batches at epoch " + std::to_string(epoch));

        Rng shuffle_rng(mix_seed(config.seed, 100000 + epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        const std::size_t n_batches = (order.size() + config.batch - 1) / config.batch;

        for (std::size_t b = 0; b < n_batches; ++b) {
            const std::size_t begin = b * config.batch;
            const std::size_t end = std::min(begin + config.batch, order.size());
            try {
                Tape tape;
                BoundModel model = BoundModel::bind(tape, params, /*requires_grad=*/true);

                std::vector<Value> rows;
                std::vector<int> labels;
                rows.reserve(end - begin);
                for (std::size_t i = begin; i < end; ++i) {
                    rows.push_back(forward(tape, data.segments[order[i]], adj, model));
                    labels.push_back(data.labels[order[i]]);
                }
                Value probs = stack_rows(rows);
                Value loss = cross_entropy(probs, labels);
                tape.backward(loss);

                const Tensor& probs_t = tape.value(probs);
                for (std::size_t r = 0; r < labels.size(); ++r)
                    if (argmax_row(probs_t, r) == static_cast<std::size_t>(labels[r])) ++correct;
                loss_sum += tape.value(loss)[0] * static_cast<double>(end - begin);

                std::vector<Tensor> grads;
                grads.reserve(refs.size());
                for (std::size_t i = 0; i < refs.size(); ++i) grads.push_back(tape.grad(model.ordered[i]));
                adam_step(adam, tensors, grads);
            } catch (const NumericError& e) {
                throw std::runtime_error("training aborted at epoch " + std::to_string(epoch) + " batch " +
                                         std::to_string(b + 1) + ": " + e.what());
            }
        }

        EpochMetrics em;
        em.train_loss = loss_sum / static_cast<double>(order.size());
        em.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
        result.epochs.push_back(em);
        metrics << epoch << "," << fmt("%.6f", em.train_loss) << "," << fmt("%.6f", em.train_acc) << "\n";
    }
    metrics.close();

    json cfg_json = config.to_json();
    cfg_json["channels"] = model_cfg.channels;  // resolved from the layout
    save_checkpoint(result.checkpoint, cfg_json, params);
    return result;
}

EvalReport evaluate(Checkpoint& checkpoint, const Manifest& manifest,
                    const std::vector<std::string>& subjects) {
    const TrainConfig config = TrainConfig::from_json(checkpoint.config);
    const SensorLayout layout = SensorLayout::load_csv(manifest.layout);
    if (layout.size() != checkpoint.params.config.channels)
        throw std::runtime_error("checkpoint was trained on " +
                                 std::to_string(checkpoint.params.config.channels) +
                                 " channels but the layout has " + std::to_string(layout.size()));
    const AdjacencyMatrix adj = make_adjacency(layout, config.gamma, config.adjacency);

    std::vector<std::string> ordered = subjects;
    std::sort(ordered.begin(), ordered.end());

    EvalReport report;
    for (const std::string& id : ordered) {
        const ManifestSubject& subj = manifest.subject(id);
        std::size_t correct = 0, total = 0;
        for (const ManifestEntry& entry : subj.recordings) {
            Recording rec = read_recording(entry.file);
            rec.subject_id = subj.id;
            rec.label = entry.label;

            Tape tape(/*recording=*/false);
            BoundModel model = BoundModel::bind(tape, checkpoint.params, /*requires_grad=*/false);
            for (const WindowedSegment& ws :
                 prepare_segments(rec, config.segment_len, config.overlap, config.window_len)) {
                Value probs = forward(tape, ws, adj, model);
                const Tensor row({1, kTaskCount}, std::vector<double>(tape.value(probs).values().begin(),
                                                                      tape.value(probs).values().end()));
                if (argmax_row(row, 0) == static_cast<std::size_t>(ws.label)) ++correct;
                ++total;
            }
        }
        if (total == 0) throw std::runtime_error("subject '" + id + "' has no segments to evaluate");
        report.per_subject.emplace_back(id, static_cast<double>(correct) / static_cast<double>(total));
    }

    double mean = 0.0;
    for (const auto& [_, acc] : report.per_subject) mean += acc;
    mean /= static_cast<double>(report.per_subject.size());
    double var = 0.0;
    for (const auto& [_, acc] : report.per_subject) var += (acc - mean) * (acc - mean);
    var /= static_cast<double>(report.per_subject.size());
    report.mean = mean;
    report.stddev = std::sqrt(var);
    return report;
}

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "subject,accuracy\n";
    for (const auto& [id, acc] : report.per_subject) out << id << "," << fmt("%.6f", acc) << "\n";
    out << "mean," << fmt("%.6f", report.mean) << "\n";
    out << "std," << fmt("%.6f", report.stddev) << "\n";
}

std::vector<SweepRow> sweep_adjacency(const Manifest& manifest, const DatasetSplit& split,
                                      const TrainConfig& base_config,
                                      const std::vector<SweepVariant>& variants,
                                      const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const SensorLayout layout = SensorLayout::load_csv(manifest.layout);

    std::vector<SweepRow> rows;
    for (const SweepVariant& variant : variants) {
        SweepRow row;
        row.variant = variant;
        try {
            TrainConfig cfg = base_config;
            cfg.adjacency.method = to_string(variant.method);
            if (variant.method == AdjMethod::TopK)
                cfg.adjacency.k = static_cast<std::size_t>(std::llround(variant.param));
            else if (variant.method == AdjMethod::Threshold)
                cfg.adjacency.tau = variant.param;

            row.edges = connectivity_report(make_adjacency(layout, cfg.gamma, cfg.adjacency)).edges;

            char dirname[64];
            std::snprintf(dirname, sizeof dirname, "%s_%g", to_string(variant.method).c_str(),
                          variant.param);
            const std::filesystem::path run_dir = out_dir / dirname;
            TrainResult tr = train(manifest, split, cfg, run_dir);

            Checkpoint ckpt = load_checkpoint(tr.checkpoint);
            EvalReport report = evaluate(ckpt, manifest, split.test_subjects);
            write_eval_csv(run_dir / "eval.csv", report);
            row.mean_acc = report.mean;
            row.std_acc = report.stddev;
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
            std::fprintf(stderr, "sweep: variant %s %g failed: %s\n", to_string(variant.method).c_str(),
                         variant.param, e.what());
        }
        rows.push_back(std::move(row));
    }
    write_sweep_csv(out_dir / "sweep.csv", rows);
    return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "method,param,edges,mean_acc,std_acc\n";
    for (const SweepRow& row : rows) {
        out << to_string(row.variant.method) << "," << fmt("%g", row.variant.param) << ",";
        if (row.ok)
            out << row.edges << "," << fmt("%.6f", row.mean_acc) << "," << fmt("%.6f", row.std_acc);
        else
            out << ",,";  // failed variant, details on stderr
        out << "\n";
    }
}

}  // namespace dsgtf
