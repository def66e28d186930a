// Acceptance runner: one pass/fail line per criterion, non-zero exit if any
// criterion fails. Heavier than the unit suite; run via ctest or directly.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "dsgtf/model.hpp"
#include "dsgtf/rng.hpp"
#include "dsgtf/train.hpp"
#include "oracles.hpp"
#include "properties.hpp"

using namespace dsgtf;

namespace {

namespace fs = std::filesystem;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("missing file " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path work_dir() {
    const fs::path dir = fs::temp_directory_path() / "dsgtf_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// 1. Full-coordinate gradient check on toy dims, < 1e-3 relative, < 60 s.
Outcome criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();

    ModelConfig cfg;
    cfg.channels = 6;
    cfg.segment_len = 20;
    cfg.window_len = 4;   // 5 windows
    cfg.gat_features = 4;
    cfg.token_dim = 4;
    cfg.ffn_dim = 32;
    cfg.encoder_heads = 4;  // head_dim 5
    GradCheckSetup setup = make_gradcheck_setup(cfg, 1);

    const GradCheckReport report =
        gradient_check(setup.params, setup.input, setup.adj, setup.label, 1e-5, 1e-3, 0);
    const double elapsed = seconds_since(t0);

    std::size_t coords = 0;
    for (const auto& e : report.tensors) coords += e.coords_checked;

    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "max_rel_err=%.3e over %zu tensors / %zu coordinates (worst %s), %.1f s",
                  report.max_rel_err, report.tensors.size(), coords, report.worst_tensor.c_str(),
                  elapsed);
    return {report.pass() && elapsed < 60.0, buf};
}

// 2. Builders vs brute-force oracle on >= 100 layouts, n*k counts, tau ladder.
Outcome criterion_adjacency_oracle() {
    std::size_t layouts = 0;
    for (std::uint64_t c = 0; c < 100; ++c) {
        Rng rng(mix_seed(515, c));
        const std::size_t n = 2 + rng.below(31);
        const SensorLayout layout = oracle::random_layout(n, rng, rng.uniform(0.2, 3.0));
        const double gamma = rng.uniform(0.1, 5.0);
        const std::size_t k = 1 + rng.below(n - 1);
        const double tau = rng.uniform(0.02, 0.98);

        if (!oracle::matches(build_fc(layout), oracle::brute_fc(n)))
            return {false, "fc mismatch at layout " + std::to_string(c)};
        if (!oracle::matches(build_thresh(layout, gamma, tau), oracle::brute_thresh(layout, gamma, tau)))
            return {false, "thresh mismatch at layout " + std::to_string(c)};
        if (!oracle::matches(build_topk(layout, gamma, k), oracle::brute_topk(layout, gamma, k)))
            return {false, "topk mismatch at layout " + std::to_string(c)};
        if (connectivity_report(build_topk(layout, gamma, k)).edges != n * k)
            return {false, "topk edge count != n*k at layout " + std::to_string(c)};

        // 10-value rising tau ladder: higher tau always a subset
        AdjacencyMatrix prev = build_thresh(layout, gamma, 0.02);
        for (int step = 1; step < 10; ++step) {
            const AdjacencyMatrix cur = build_thresh(layout, gamma, 0.02 + 0.096 * step);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    if (cur.at(i, j) && !prev.at(i, j))
                        return {false, "thresh not monotone at layout " + std::to_string(c)};
            prev = cur;
        }
        ++layouts;
    }
    return {true, std::to_string(layouts) + " random layouts (n<=32), all builders + counts + ladder"};
}

// 3. Top-k on a 248-channel layout hits the published edge counts exactly.
Outcome criterion_topk_scale() {
    Rng rng(247);
    const SensorLayout layout = oracle::random_layout(248, rng);
    const std::vector<std::size_t> ks{1, 2, 3, 5, 8, 13};
    const std::vector<std::size_t> expected{248, 496, 744, 1240, 1984, 3224};
    std::string got = "edges:";
    for (std::size_t i = 0; i < ks.size(); ++i) {
        const std::size_t edges = connectivity_report(build_topk(layout, 100.0, ks[i])).edges;
        got += " " + std::to_string(edges);
        if (edges != expected[i])
            return {false, "k=" + std::to_string(ks[i]) + " gave " + std::to_string(edges) +
                               " edges, expected " + std::to_string(expected[i])};
    }
    return {true, got + " for k in {1,2,3,5,8,13}"};
}

// 4. Noise-free 18-subject run reaches 0.90 test accuracy inside 10 minutes;
//    the moderate-noise reference config still descends.
Outcome criterion_learnability(const fs::path& dir) {
    const auto t0 = std::chrono::steady_clock::now();

    SynthConfig synth;
    synth.subjects = 18;
    synth.channels = 16;
    synth.samples_per_task = 1000;
    synth.seed = 101;
    synth.noise = 0.0;
    const Manifest manifest = write_dataset(dir / "clean", synthesize_dataset(synth));
    const DatasetSplit split = split_subjects(manifest.subject_ids(), 12, 6, 101);

    TrainConfig cfg;  // defaults: d=100, 50% overlap, w=10, gamma=100, topk k=3,
    cfg.seed = 101;   // lr=1e-4, batch=32, 15 epochs
    const TrainResult result = train(manifest, split, cfg, dir / "clean_run");

    Checkpoint ckpt = load_checkpoint(result.checkpoint);
    const EvalReport report = evaluate(ckpt, manifest, split.test_subjects);
    write_eval_csv(dir / "clean_run" / "eval.csv", report);
    const double clean_elapsed = seconds_since(t0);

    // moderate-noise reference run from the shipped config
    std::ifstream ref_file(fs::path(DSGTF_REPO_DIR) / "configs" / "moderate_noise.json");
    if (!ref_file) return {false, "missing configs/moderate_noise.json"};
    const nlohmann::json ref = nlohmann::json::parse(ref_file);

    SynthConfig noisy;
    noisy.subjects = ref.at("synth").at("subjects");
    noisy.channels = ref.at("synth").at("channels");
    noisy.samples_per_task = ref.at("synth").at("samples_per_task");
    noisy.seed = ref.at("synth").at("seed");
    noisy.noise = ref.at("synth").at("noise");
    noisy.amplitude = ref.at("synth").at("amplitude");
    const Manifest noisy_manifest = write_dataset(dir / "noisy", synthesize_dataset(noisy));
    const DatasetSplit noisy_split =
        split_subjects(noisy_manifest.subject_ids(), ref.at("split").at("n_train"),
                       ref.at("split").at("n_test"), noisy.seed);
    const TrainConfig noisy_cfg = TrainConfig::from_json(ref.at("train"));
    const TrainResult noisy_run = train(noisy_manifest, noisy_split, noisy_cfg, dir / "noisy_run");

    const double first = noisy_run.epochs.front().train_loss;
    const double last = noisy_run.epochs.back().train_loss;
    const double elapsed = seconds_since(t0);

    char buf[320];
    std::snprintf(buf, sizeof buf,
                  "test mean acc=%.4f (std %.4f) after 15 epochs in %.0f s; "
                  "moderate-noise loss %.4f -> %.4f; total %.0f s",
                  report.mean, report.stddev, clean_elapsed, first, last, elapsed);
    const bool pass = report.mean >= 0.90 && clean_elapsed < 600.0 && last < first;
    return {pass, buf};
}

// 5. Two identical train+eval+sweep runs are bitwise identical.
Outcome criterion_determinism(const fs::path& dir) {
    SynthConfig synth;
    synth.subjects = 6;
    synth.channels = 8;
    synth.samples_per_task = 300;
    synth.seed = 77;
    synth.noise = 0.3;
    const Manifest manifest = write_dataset(dir / "det_data", synthesize_dataset(synth));
    const DatasetSplit split = split_subjects(manifest.subject_ids(), 4, 2, 77);

    TrainConfig cfg;
    cfg.seed = 77;
    cfg.epochs = 2;
    cfg.batch = 16;

    const std::vector<SweepVariant> variants{{AdjMethod::TopK, 2.0}, {AdjMethod::Threshold, 0.2}};

    for (const char* run : {"r1", "r2"}) {
        const fs::path base = dir / run;
        const TrainResult tr = train(manifest, split, cfg, base / "train");
        Checkpoint ckpt = load_checkpoint(tr.checkpoint);
        write_eval_csv(base / "train" / "eval.csv", evaluate(ckpt, manifest, split.test_subjects));
        TrainConfig sweep_cfg = cfg;
        sweep_cfg.epochs = 1;
        sweep_adjacency(manifest, split, sweep_cfg, variants, base / "sweep");
    }

    for (const char* rel :
         {"train/metrics.csv", "train/checkpoint.bin", "train/eval.csv", "sweep/sweep.csv",
          "sweep/topk_2/checkpoint.bin", "sweep/topk_2/metrics.csv", "sweep/thresh_0.2/metrics.csv"}) {
        if (slurp(dir / "r1" / rel) != slurp(dir / "r2" / rel))
            return {false, std::string(rel) + " differs between identical runs"};
    }
    return {true, "metrics, eval and sweep CSVs and checkpoints are byte-identical across reruns"};
}

// 6. Property suites, >= 100 randomized cases each.
Outcome criterion_properties() {
    const struct {
        const char* name;
        props::PropResult result;
    } suites[] = {
        {"softmax-normalization", props::softmax_normalization(61, 100)},
        {"permutation-equivariance", props::permutation_equivariance(62, 100)},
        {"segmentation-count", props::segmentation_count(63, 150)},
        {"window-reassembly", props::window_reassembly(64, 150)},
        {"normalization-idempotence", props::normalization_idempotence(65, 150)},
        {"subject-leakage", props::subject_leakage(66, 150)},
    };
    std::string detail;
    for (const auto& s : suites) {
        if (!s.result.pass)
            return {false, std::string(s.name) + ": " + s.result.detail};
        detail += std::string(detail.empty() ? "" : ", ") + s.name + "(" +
                  std::to_string(s.result.cases) + ")";
    }
    return {true, detail};
}

}  // namespace

int main() {
    const fs::path dir = work_dir();

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1. gradient correctness (toy dims, all coordinates)", [] { return criterion_gradients(); }},
        {"2. adjacency oracle equivalence", [] { return criterion_adjacency_oracle(); }},
        {"3. top-k edge counts at 248 channels", [] { return criterion_topk_scale(); }},
        {"4. learnability at desk scale", [&dir] { return criterion_learnability(dir); }},
        {"5. bitwise determinism of train+eval+sweep", [&dir] { return criterion_determinism(dir); }},
        {"6. contract property suites (>=100 cases each)", [] { return criterion_properties(); }},
    };

    bool all_pass = true;
    for (const auto& [name, fn] : criteria) {
        Outcome outcome;
        try {
            outcome = fn();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] %s: %s\n", outcome.pass ? "PASS" : "FAIL", name.c_str(),
                    outcome.detail.c_str());
        std::fflush(stdout);
        all_pass = all_pass && outcome.pass;
    }

    fs::remove_all(dir);
    return all_pass ? 0 : 1;
}
