#include "dsgtf/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dsgtf/rng.hpp"

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace dsgtf {

using nlohmann::json;

namespace {

constexpr char kRecordingMagic[8] = {'D', 'S', 'G', 'T', 'F', '1', '\0', '\0'};  // magic + pad
constexpr double kNormEps = 1e-8;

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_raw(std::ifstream& in, const char* what, const std::filesystem::path& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw std::runtime_error("recording file " + path.string() + ": truncated reading " + what);
    return v;
}

}  // namespace

std::string to_string(TaskLabel label) {
    switch (label) {
        case TaskLabel::Resting: return "resting";
        case TaskLabel::StoryMath: return "story_math";
        case TaskLabel::WorkingMemory: return "working_memory";
        case TaskLabel::Motor: return "motor";
    }
    return "?";
}

TaskLabel task_label_from_string(const std::string& s) {
    if (s == "resting") return TaskLabel::Resting;
    if (s == "story_math") return TaskLabel::StoryMath;
    if (s == "working_memory") return TaskLabel::WorkingMemory;
    if (s == "motor") return TaskLabel::Motor;
    throw std::invalid_argument("unknown task label '" + s + "'");
}

std::size_t segment_count(std::size_t samples, std::size_t segment_len, double overlap_fraction) {
    if (samples < segment_len)
        throw std::invalid_argument("recording of " + std::to_string(samples) +
                                    " samples is shorter than segment length " +
                                    std::to_string(segment_len));
    if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0))
        throw std::invalid_argument("overlap fraction must be in [0,1), got " +
                                    std::to_string(overlap_fraction));
    const double stride_real = static_cast<double>(segment_len) * (1.0 - overlap_fraction);
    const auto stride = static_cast<std::size_t>(std::llround(stride_real));
    if (stride < 1 || std::abs(stride_real - static_cast<double>(stride)) > 1e-9)
        throw std::invalid_argument("segment stride " + std::to_string(stride_real) +
                                    " is not a positive integer");
    return (samples - segment_len) / stride + 1;
}

std::vector<Tensor> segment_recording(const Recording& rec, std::size_t segment_len,
                                      double overlap_fraction) {
    const std::size_t count = segment_count(rec.samples, segment_len, overlap_fraction);
    const auto stride =
        static_cast<std::size_t>(std::llround(static_cast<double>(segment_len) * (1.0 - overlap_fraction)));

    std::vector<Tensor> segments;
    segments.reserve(count);
    for (std::size_t s = 0; s < count; ++s) {
        const std::size_t start = s * stride;
        Tensor seg({rec.channels, segment_len});
        for (std::size_t ch = 0; ch < rec.channels; ++ch)
            for (std::size_t t = 0; t < segment_len; ++t) seg.at(ch, t) = rec.at(ch, start + t);
        segments.push_back(std::move(seg));
    }
    return segments;
}

Tensor normalize_segment(const Tensor& segment) {
    if (segment.rank() != 2)
        throw ShapeError("normalize_segment: expected rank-2 segment, got " + segment.shape_string());
    ensure_finite(segment, "normalize_segment");
    const std::size_t c = segment.dim(0), d = segment.dim(1);

    Tensor out({c, d});
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* px = segment.data() + ch * d;
        double mu = 0.0;
        for (std::size_t t = 0; t < d; ++t) mu += px[t];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t t = 0; t < d; ++t) var += (px[t] - mu) * (px[t] - mu);
        var /= static_cast<double>(d);
        const double inv = 1.0 / (std::sqrt(var) + kNormEps);
        double* po = out.data() + ch * d;
        for (std::size_t t = 0; t < d; ++t) po[t] = (px[t] - mu) * inv;
    }
    return out;
}

std::vector<Tensor> window_segment(const Tensor& segment, std::size_t window_len) {
    if (segment.rank() != 2)
        throw ShapeError("window_segment: expected rank-2 segment, got " + segment.shape_string());
    const std::size_t c = segment.dim(0), d = segment.dim(1);
    if (window_len == 0 || d % window_len != 0)
        throw std::invalid_argument("window length " + std::to_string(window_len) +
                                    " does not divide segment length " + std::to_string(d));

    const std::size_t m = d / window_len;
    std::vector<Tensor> windows;
    windows.reserve(m);
    for (std::size_t g = 0; g < m; ++g) {
        Tensor win({c, window_len});
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t t = 0; t < window_len; ++t) win.at(ch, t) = segment.at(ch, g * window_len + t);
        windows.push_back(std::move(win));
    }
    return windows;
}

std::vector<WindowedSegment> prepare_segments(const Recording& rec, std::size_t segment_len,
                                              double overlap_fraction, std::size_t window_len) {
    std::vector<WindowedSegment> out;
    for (Tensor& raw : segment_recording(rec, segment_len, overlap_fraction)) {
        WindowedSegment ws;
        ws.subject_id = rec.subject_id;
        ws.label = rec.label;
        ws.segment = normalize_segment(raw);
        ws.windows = window_segment(ws.segment, window_len);
        out.push_back(std::move(ws));
    }
    return out;
}

SynthDataset synthesize_dataset(const SynthConfig& config) {
    if (config.subjects < 2)
        throw std::invalid_argument("synthesize_dataset: need at least 2 subjects");
    if (config.channels < 2)
        throw std::invalid_argument("synthesize_dataset: need at least 2 channels");
    if (config.samples_per_task == 0)
        throw std::invalid_argument("synthesize_dataset: samples_per_task must be positive");
    if (!(config.noise >= 0.0) || !(config.amplitude > 0.0))
        throw std::invalid_argument("synthesize_dataset: bad amplitude/noise");
    for (double f : config.class_freqs)
        if (!(f > 0.0 && f < 0.5))
            throw std::invalid_argument("synthesize_dataset: class frequencies must be in (0, 0.5)");

    SynthDataset ds;

    // Layout: uniformly random points on the unit sphere.
    Rng layout_rng(mix_seed(config.seed, 0));
    int id_width = 2;
    for (std::size_t v = config.channels; v > 100; v /= 10) ++id_width;
    for (std::size_t i = 0; i < config.channels; ++i) {
        const double z = layout_rng.uniform(-1.0, 1.0);
        const double phi = layout_rng.uniform(0.0, 2.0 * M_PI);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        char name[32];
        std::snprintf(name, sizeof name, "ch%0*zu", id_width, i);
        ds.layout.channels.push_back({name, r * std::cos(phi), r * std::sin(phi), z});
    }

    const std::size_t T = config.samples_per_task;
    for (std::size_t s = 0; s < config.subjects; ++s) {
        char sid[32];
        std::snprintf(sid, sizeof sid, "s%02zu", s + 1);
        Rng subj_rng(mix_seed(config.seed, 1 + s));
        const double gain = subj_rng.uniform(0.8, 1.2);

        for (std::size_t task = 0; task < kTaskCount; ++task) {
            Recording rec;
            rec.subject_id = sid;
            rec.label = static_cast<TaskLabel>(task);
            rec.channels = config.channels;
            rec.samples = T;
            rec.data.assign(config.channels * T, 0.0);

            Rng rng(mix_seed(config.seed, 1000 + s * kTaskCount + task));
            const double freq = config.class_freqs[task];
            for (std::size_t ch = 0; ch < config.channels; ++ch) {
                const bool active = ch % kTaskCount == task;
                const double phase = rng.uniform(0.0, 2.0 * M_PI);
                double* row = rec.data.data() + ch * T;
                if (active) {
                    const double amp = config.amplitude * gain;
                    for (std::size_t t = 0; t < T; ++t)
                        row[t] = amp * std::sin(2.0 * M_PI * freq * static_cast<double>(t) + phase);
                }
                if (config.noise > 0.0)
                    for (std::size_t t = 0; t < T; ++t) row[t] += config.noise * rng.normal();
            }
            ds.recordings.push_back(std::move(rec));
        }
    }
    return ds;
}

DatasetSplit split_subjects(const std::vector<std::string>& subject_ids, std::size_t n_train,
                            std::size_t n_test, std::uint64_t seed) {
    if (n_train + n_test > subject_ids.size())
        throw std::invalid_argument("split_subjects: need " + std::to_string(n_train + n_test) +
                                    " subjects, have " + std::to_string(subject_ids.size()));
    std::vector<std::string> order = subject_ids;
    Rng rng(seed);
    rng.shuffle(order);

    DatasetSplit split;
    split.train_subjects.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test_subjects.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_test));
    return split;
}

void save_split(const std::filesystem::path& path, const DatasetSplit& split) {
    json j;
    j["train"] = split.train_subjects;
    j["test"] = split.test_subjects;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write split file " + path.string());
    out << j.dump(2) << "\n";
}

DatasetSplit load_split(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open split file " + path.string());
    json j = json::parse(in);
    DatasetSplit split;
    split.train_subjects = j.at("train").get<std::vector<std::string>>();
    split.test_subjects = j.at("test").get<std::vector<std::string>>();
    return split;
}

void write_recording(const std::filesystem::path& path, const Recording& rec) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write recording file " + path.string());
    out.write(kRecordingMagic, sizeof kRecordingMagic);
    write_raw(out, static_cast<std::uint32_t>(rec.channels));
    write_raw(out, static_cast<std::uint64_t>(rec.samples));
    for (double v : rec.data) write_raw(out, static_cast<float>(v));
    if (!out) throw std::runtime_error("short write to recording file " + path.string());
}

Recording read_recording(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open recording file " + path.string());
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kRecordingMagic, sizeof magic) != 0)
        throw std::runtime_error("recording file " + path.string() + ": bad magic");

    Recording rec;
    rec.channels = read_raw<std::uint32_t>(in, "channel count", path);
    rec.samples = read_raw<std::uint64_t>(in, "sample count", path);
    rec.data.resize(rec.channels * rec.samples);
    for (double& v : rec.data) {
        const float f = read_raw<float>(in, "samples", path);
        if (!std::isfinite(f))
            throw NumericError("recording file " + path.string() + ": non-finite sample");
        v = static_cast<double>(f);
    }
    return rec;
}

std::vector<std::string> Manifest::subject_ids() const {
    std::vector<std::string> ids;
    ids.reserve(subjects.size());
    for (const ManifestSubject& s : subjects) ids.push_back(s.id);
    return ids;
}

const ManifestSubject& Manifest::subject(const std::string& id) const {
    for (const ManifestSubject& s : subjects)
        if (s.id == id) return s;
    throw std::invalid_argument("unknown subject '" + id + "'");
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    json j = json::parse(in);

    const std::filesystem::path base = path.parent_path();
    const auto resolve = [&base](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    Manifest m;
    m.layout = resolve(j.at("layout").get<std::string>());
    for (const json& js : j.at("subjects")) {
        ManifestSubject subj;
        subj.id = js.at("id").get<std::string>();
        for (const json& jr : js.at("recordings")) {
            ManifestEntry e;
            e.label = task_label_from_string(jr.at("label").get<std::string>());
            e.file = resolve(jr.at("file").get<std::string>());
            subj.recordings.push_back(std::move(e));
        }
        m.subjects.push_back(std::move(subj));
    }
    return m;
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    json j;
    j["layout"] = manifest.layout.string();
    j["subjects"] = json::array();
    for (const ManifestSubject& s : manifest.subjects) {
        json js;
        js["id"] = s.id;
        js["recordings"] = json::array();
        for (const ManifestEntry& e : s.recordings)
            js["recordings"].push_back({{"label", to_string(e.label)}, {"file", e.file.string()}});
        j["subjects"].push_back(std::move(js));
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest " + path.string());
    out << j.dump(2) << "\n";
}

Manifest write_dataset(const std::filesystem::path& out_dir, const SynthDataset& dataset) {
    std::filesystem::create_directories(out_dir / "recordings");
    dataset.layout.save_csv(out_dir / "layout.csv");

    Manifest m;
    m.layout = "layout.csv";
    for (const Recording& rec : dataset.recordings) {
        const std::string rel = "recordings/" + rec.subject_id + "_" + to_string(rec.label) + ".bin";
        write_recording(out_dir / rel, rec);
        if (m.subjects.empty() || m.subjects.back().id != rec.subject_id)
            m.subjects.push_back({rec.subject_id, {}});
        m.subjects.back().recordings.push_back({rec.label, rel});
    }
    save_manifest(out_dir / "manifest.json", m);
    return load_manifest(out_dir / "manifest.json");  // with resolved paths
}

}  // namespace dsgtf
