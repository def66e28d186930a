// dsgtf: synthetic data generation, adjacency inspection, training,
// evaluation, adjacency sweeps and gradient checking from one entry point.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dsgtf/data.hpp"
#include "dsgtf/model.hpp"
#include "dsgtf/sensor_graph.hpp"
#include "dsgtf/train.hpp"

using nlohmann::json;

namespace {

// Bad flag combinations detected after parsing; reported like parse errors
// (help on stderr, exit 1).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Config files may be flat or carry the object under a section key, so one
// file can describe a whole experiment (e.g. {"synth": ..., "train": ...}).
json load_config_section(const std::string& path, const char* section) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    json j = json::parse(in);
    if (j.contains(section)) return j.at(section);
    return j;
}

std::vector<double> parse_number_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

std::vector<std::string> parse_string_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct TrainFlags {
    std::string config_path;
    dsgtf::TrainConfig defaults;
    std::size_t segment_len = defaults.segment_len;
    double overlap = defaults.overlap;
    std::size_t window_len = defaults.window_len;
    double gamma = defaults.gamma;
    std::string method = defaults.adjacency.method;
    std::size_t k = defaults.adjacency.k;
    double tau = defaults.adjacency.tau;
    double lr = defaults.lr;
    std::size_t batch = defaults.batch;
    std::size_t epochs = defaults.epochs;
    std::uint64_t seed = defaults.seed;
    std::size_t channels = defaults.channels;
    std::size_t gat_features = defaults.gat_features;
    std::size_t token_dim = defaults.token_dim;
    std::size_t ffn_dim = defaults.ffn_dim;
    std::size_t gat_heads = defaults.gat_heads;
    std::size_t encoder_heads = defaults.encoder_heads;
};

// Registers the shared training flags on a subcommand. Defaults shown in
// --help are the TrainConfig defaults; a --config file is applied first and
// explicitly passed flags win over it.
void add_train_flags(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file (flags override its fields)");
    cmd->add_option("--segment-len", f.segment_len, "segment length in samples")->capture_default_str();
    cmd->add_option("--overlap", f.overlap, "segment overlap fraction")->capture_default_str();
    cmd->add_option("--window-len", f.window_len, "window length in samples")->capture_default_str();
    cmd->add_option("--gamma", f.gamma, "RBF kernel bandwidth")->capture_default_str();
    cmd->add_option("--method", f.method, "adjacency method: fc, thresh or topk")->capture_default_str();
    cmd->add_option("--k", f.k, "top-k neighbors per node (topk)")->capture_default_str();
    cmd->add_option("--tau", f.tau, "RBF weight threshold (thresh)")->capture_default_str();
    cmd->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--batch", f.batch, "mini-batch size")->capture_default_str();
    cmd->add_option("--epochs", f.epochs, "training epochs")->capture_default_str();
    cmd->add_option("--seed", f.seed, "seed for all randomness")->capture_default_str();
    cmd->add_option("--channels", f.channels, "expected channel count (0: from layout)")
        ->capture_default_str();
    cmd->add_option("--gat-features", f.gat_features, "per-head GAT output width")->capture_default_str();
    cmd->add_option("--token-dim", f.token_dim, "per-token width after down-sampling")
        ->capture_default_str();
    cmd->add_option("--ffn-dim", f.ffn_dim, "encoder feed-forward hidden width")->capture_default_str();
    cmd->add_option("--gat-heads", f.gat_heads, "GAT attention heads")->capture_default_str();
    cmd->add_option("--encoder-heads", f.encoder_heads, "encoder attention heads")->capture_default_str();
}

dsgtf::TrainConfig resolve_train_config(const CLI::App* cmd, const TrainFlags& f) {
    dsgtf::TrainConfig cfg;
    if (!f.config_path.empty())
        cfg = dsgtf::TrainConfig::from_json(load_config_section(f.config_path, "train"));

    if (cmd->count("--segment-len")) cfg.segment_len = f.segment_len;
    if (cmd->count("--overlap")) cfg.overlap = f.overlap;
    if (cmd->count("--window-len")) cfg.window_len = f.window_len;
    if (cmd->count("--gamma")) cfg.gamma = f.gamma;
    if (cmd->count("--method")) cfg.adjacency.method = f.method;
    if (cmd->count("--k")) cfg.adjacency.k = f.k;
    if (cmd->count("--tau")) cfg.adjacency.tau = f.tau;
    if (cmd->count("--lr")) cfg.lr = f.lr;
    if (cmd->count("--batch")) cfg.batch = f.batch;
    if (cmd->count("--epochs")) cfg.epochs = f.epochs;
    if (cmd->count("--seed")) cfg.seed = f.seed;
    if (cmd->count("--channels")) cfg.channels = f.channels;
    if (cmd->count("--gat-features")) cfg.gat_features = f.gat_features;
    if (cmd->count("--token-dim")) cfg.token_dim = f.token_dim;
    if (cmd->count("--ffn-dim")) cfg.ffn_dim = f.ffn_dim;
    if (cmd->count("--gat-heads")) cfg.gat_heads = f.gat_heads;
    if (cmd->count("--encoder-heads")) cfg.encoder_heads = f.encoder_heads;
    return cfg;
}

dsgtf::DatasetSplit resolve_split(const dsgtf::Manifest& manifest, const std::string& split_path,
                                  std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
    if (!split_path.empty()) return dsgtf::load_split(split_path);
    return dsgtf::split_subjects(manifest.subject_ids(), n_train, n_test, seed);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-stream graph-transformer fusion for multi-channel recordings"};
    app.require_subcommand(1);

    // gen-synthetic
    auto* gen = app.add_subcommand("gen-synthetic", "generate a labeled synthetic dataset");
    dsgtf::SynthConfig synth;
    std::string gen_out, gen_config;
    gen->add_option("--config", gen_config, "JSON config file (flags override its fields)");
    gen->add_option("--subjects", synth.subjects, "number of subjects")->capture_default_str();
    gen->add_option("--channels", synth.channels, "number of channels")->capture_default_str();
    gen->add_option("--samples", synth.samples_per_task, "samples per task recording")
        ->capture_default_str();
    gen->add_option("--seed", synth.seed, "seed for all randomness")->capture_default_str();
    gen->add_option("--noise", synth.noise, "white-noise sigma")->capture_default_str();
    gen->add_option("--amplitude", synth.amplitude, "class signal amplitude")->capture_default_str();
    gen->add_option("--out", gen_out, "output directory")->required();

    // adjacency
    auto* adj_cmd = app.add_subcommand("adjacency", "build an adjacency matrix and export its edge list");
    std::string adj_layout, adj_method = "topk", adj_out;
    double adj_gamma = 100.0, adj_tau = 0.5;
    std::size_t adj_k = 3;
    adj_cmd->add_option("--layout", adj_layout, "sensor layout CSV")->required();
    adj_cmd->add_option("--method", adj_method, "fc, thresh or topk")->capture_default_str();
    adj_cmd->add_option("--gamma", adj_gamma, "RBF kernel bandwidth")->capture_default_str();
    adj_cmd->add_option("--k", adj_k, "top-k neighbors per node (topk)")->capture_default_str();
    adj_cmd->add_option("--tau", adj_tau, "RBF weight threshold (thresh)")->capture_default_str();
    adj_cmd->add_option("--out", adj_out, "edge-list output file")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model and write metrics + checkpoint");
    TrainFlags tf;
    std::string train_manifest, train_out, train_split;
    std::size_t n_train = 12, n_test = 6;
    train_cmd->add_option("--manifest", train_manifest, "dataset manifest JSON")->required();
    train_cmd->add_option("--out", train_out, "output directory")->required();
    train_cmd->add_option("--split", train_split, "existing split JSON (overrides --train/--test counts)");
    train_cmd->add_option("--train-subjects", n_train, "training subject count")->capture_default_str();
    train_cmd->add_option("--test-subjects", n_test, "held-out subject count")->capture_default_str();
    add_train_flags(train_cmd, tf);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint per subject");
    std::string eval_ckpt, eval_manifest, eval_split, eval_subjects, eval_which = "test", eval_out;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--manifest", eval_manifest, "dataset manifest JSON")->required();
    eval_cmd->add_option("--split", eval_split, "split JSON written by train");
    eval_cmd->add_option("--which", eval_which, "split side to evaluate: test or train")
        ->capture_default_str();
    eval_cmd->add_option("--subjects", eval_subjects, "comma-separated subject ids (overrides --split)");
    eval_cmd->add_option("--out", eval_out, "eval CSV output file")->required();

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "train one model per adjacency variant");
    TrainFlags sf;
    std::string sweep_manifest, sweep_out, sweep_split, sweep_topk, sweep_tau;
    bool sweep_fc = false;
    std::size_t sweep_n_train = 12, sweep_n_test = 6;
    sweep_cmd->add_option("--manifest", sweep_manifest, "dataset manifest JSON")->required();
    sweep_cmd->add_option("--out", sweep_out, "output directory")->required();
    sweep_cmd->add_option("--split", sweep_split, "existing split JSON");
    sweep_cmd->add_option("--train-subjects", sweep_n_train, "training subject count")
        ->capture_default_str();
    sweep_cmd->add_option("--test-subjects", sweep_n_test, "held-out subject count")
        ->capture_default_str();
    sweep_cmd->add_option("--topk", sweep_topk, "comma-separated k values to sweep");
    sweep_cmd->add_option("--thresh", sweep_tau, "comma-separated tau values to sweep");
    sweep_cmd->add_flag("--fc", sweep_fc, "include the fully connected variant");
    add_train_flags(sweep_cmd, sf);

    // gradcheck
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of the full backward pass");
    std::uint64_t gc_seed = 1;
    double gc_tolerance = 1e-3, gc_eps = 1e-5;
    std::size_t gc_max_coords = 0;
    dsgtf::ModelConfig gc_cfg;
    gc_cfg.channels = 6;
    gc_cfg.segment_len = 20;
    gc_cfg.window_len = 4;
    gc_cfg.gat_features = 4;
    gc_cfg.token_dim = 4;
    gc_cfg.ffn_dim = 32;
    gc_cfg.encoder_heads = 4;
    gc_cmd->add_option("--seed", gc_seed, "seed for input and parameters")->capture_default_str();
    gc_cmd->add_option("--tolerance", gc_tolerance, "max relative error to pass")->capture_default_str();
    gc_cmd->add_option("--eps", gc_eps, "central-difference step")->capture_default_str();
    gc_cmd->add_option("--max-coords", gc_max_coords, "coordinates per tensor (0: all)")
        ->capture_default_str();
    gc_cmd->add_option("--channels", gc_cfg.channels, "channels")->capture_default_str();
    gc_cmd->add_option("--segment-len", gc_cfg.segment_len, "segment length")->capture_default_str();
    gc_cmd->add_option("--window-len", gc_cfg.window_len, "window length")->capture_default_str();
    gc_cmd->add_option("--gat-features", gc_cfg.gat_features, "per-head GAT output width")
        ->capture_default_str();
    gc_cmd->add_option("--token-dim", gc_cfg.token_dim, "per-token width after down-sampling")
        ->capture_default_str();
    gc_cmd->add_option("--ffn-dim", gc_cfg.ffn_dim, "feed-forward hidden width")->capture_default_str();
    gc_cmd->add_option("--gat-heads", gc_cfg.gat_heads, "GAT attention heads")->capture_default_str();
    gc_cmd->add_option("--encoder-heads", gc_cfg.encoder_heads, "encoder attention heads")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n";
        std::cerr << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return 1;
    }

    try {
        if (gen->parsed()) {
            if (!gen_config.empty()) {
                json j = load_config_section(gen_config, "synth");
                dsgtf::SynthConfig base;
                base.subjects = j.value("subjects", base.subjects);
                base.channels = j.value("channels", base.channels);
                base.samples_per_task = j.value("samples_per_task", base.samples_per_task);
                base.seed = j.value("seed", base.seed);
                base.noise = j.value("noise", base.noise);
                base.amplitude = j.value("amplitude", base.amplitude);
                if (j.contains("class_freqs")) base.class_freqs = j.at("class_freqs");
                if (gen->count("--subjects")) base.subjects = synth.subjects;
                if (gen->count("--channels")) base.channels = synth.channels;
                if (gen->count("--samples")) base.samples_per_task = synth.samples_per_task;
                if (gen->count("--seed")) base.seed = synth.seed;
                if (gen->count("--noise")) base.noise = synth.noise;
                if (gen->count("--amplitude")) base.amplitude = synth.amplitude;
                synth = base;
            }
            dsgtf::SynthDataset ds = dsgtf::synthesize_dataset(synth);
            dsgtf::write_dataset(gen_out, ds);
            std::cout << "wrote " << ds.recordings.size() << " recordings for " << synth.subjects
                      << " subjects under " << gen_out << "\n";
        } else if (adj_cmd->parsed()) {
            const dsgtf::SensorLayout layout = dsgtf::SensorLayout::load_csv(adj_layout);
            dsgtf::AdjacencySpec spec;
            spec.method = adj_method;
            spec.k = adj_k;
            spec.tau = adj_tau;
            const dsgtf::AdjacencyMatrix adj = dsgtf::make_adjacency(layout, adj_gamma, spec);
            dsgtf::write_edge_list(adj, adj_out);
            const dsgtf::ConnectivityReport rep = dsgtf::connectivity_report(adj);
            std::cout << "method=" << dsgtf::to_string(adj.method) << " nodes=" << adj.n
                      << " edges=" << rep.edges << " isolated=" << rep.isolated << "\n";
        } else if (train_cmd->parsed()) {
            const dsgtf::TrainConfig cfg = resolve_train_config(train_cmd, tf);
            const dsgtf::Manifest manifest = dsgtf::load_manifest(train_manifest);
            const dsgtf::DatasetSplit split =
                resolve_split(manifest, train_split, n_train, n_test, cfg.seed);
            std::filesystem::create_directories(train_out);
            dsgtf::save_split(std::filesystem::path(train_out) / "split.json", split);
            const dsgtf::TrainResult result = dsgtf::train(manifest, split, cfg, train_out);
            std::cout << "trained " << cfg.epochs << " epochs; final loss "
                      << result.epochs.back().train_loss << ", accuracy "
                      << result.epochs.back().train_acc << "\n"
                      << "checkpoint: " << result.checkpoint.string() << "\n";
        } else if (eval_cmd->parsed()) {
            if (eval_subjects.empty() && eval_split.empty())
                throw UsageError("eval needs --subjects or --split");
            if (eval_which != "test" && eval_which != "train")
                throw UsageError("--which must be test or train, got '" + eval_which + "'");
            dsgtf::Checkpoint ckpt = dsgtf::load_checkpoint(eval_ckpt);
            const dsgtf::Manifest manifest = dsgtf::load_manifest(eval_manifest);
            std::vector<std::string> subjects;
            if (!eval_subjects.empty()) {
                subjects = parse_string_list(eval_subjects);
            } else {
                const dsgtf::DatasetSplit split = dsgtf::load_split(eval_split);
                subjects = eval_which == "test" ? split.test_subjects : split.train_subjects;
            }
            const dsgtf::EvalReport report = dsgtf::evaluate(ckpt, manifest, subjects);
            dsgtf::write_eval_csv(eval_out, report);
            std::printf("mean accuracy %.6f, std %.6f over %zu subjects\n", report.mean, report.stddev,
                        report.per_subject.size());
        } else if (sweep_cmd->parsed()) {
            std::vector<dsgtf::SweepVariant> variants;
            for (double k : parse_number_list(sweep_topk))
                variants.push_back({dsgtf::AdjMethod::TopK, k});
            for (double tau : parse_number_list(sweep_tau))
                variants.push_back({dsgtf::AdjMethod::Threshold, tau});
            if (sweep_cmd->count("--fc")) variants.push_back({dsgtf::AdjMethod::FullyConnected, 0.0});
            if (variants.empty()) throw UsageError("sweep needs --topk, --thresh or --fc");

            const dsgtf::TrainConfig cfg = resolve_train_config(sweep_cmd, sf);
            const dsgtf::Manifest manifest = dsgtf::load_manifest(sweep_manifest);
            const dsgtf::DatasetSplit split =
                resolve_split(manifest, sweep_split, sweep_n_train, sweep_n_test, cfg.seed);
            std::filesystem::create_directories(sweep_out);
            dsgtf::save_split(std::filesystem::path(sweep_out) / "split.json", split);

            const auto rows = dsgtf::sweep_adjacency(manifest, split, cfg, variants, sweep_out);
            bool all_ok = true;
            for (const dsgtf::SweepRow& row : rows) {
                if (row.ok)
                    std::printf("%-6s param=%-8g edges=%-6zu mean_acc=%.4f std=%.4f\n",
                                to_string(row.variant.method).c_str(), row.variant.param, row.edges,
                                row.mean_acc, row.std_acc);
                else
                    all_ok = false;
            }
            if (!all_ok) throw std::runtime_error("one or more sweep variants failed (see stderr)");
        } else if (gc_cmd->parsed()) {
            dsgtf::GradCheckSetup setup = dsgtf::make_gradcheck_setup(gc_cfg, gc_seed);
            const dsgtf::GradCheckReport report = dsgtf::gradient_check(
                setup.params, setup.input, setup.adj, setup.label, gc_eps, gc_tolerance, gc_max_coords);
            std::cout << dsgtf::format_report(report);
            if (!report.pass()) return 2;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        for (const CLI::App* sub : app.get_subcommands()) std::cerr << sub->help();
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
