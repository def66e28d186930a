#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsgtf/sensor_graph.hpp"
#include "dsgtf/tensor.hpp"

namespace dsgtf {

enum class TaskLabel : int { Resting = 0, StoryMath = 1, WorkingMemory = 2, Motor = 3 };

inline constexpr std::size_t kTaskCount = 4;

std::string to_string(TaskLabel label);
TaskLabel task_label_from_string(const std::string& s);

// One multi-channel recording, channel-major: data[ch * samples + t].
struct Recording {
    std::string subject_id;
    TaskLabel label = TaskLabel::Resting;
    std::size_t channels = 0;
    std::size_t samples = 0;
    std::vector<double> data;

    double at(std::size_t ch, std::size_t t) const { return data[ch * samples + t]; }
};

// A normalized segment plus its non-overlapping windows.
struct WindowedSegment {
    std::string subject_id;
    TaskLabel label = TaskLabel::Resting;
    Tensor segment;               // channels x segment_len, z-scored per channel
    std::vector<Tensor> windows;  // window_count tensors of channels x window_len
};

// Raw overlapping slices; stride = segment_len * (1 - overlap_fraction) must
// round to a positive integer. Trailing samples that do not fill a segment
// are dropped.
std::vector<Tensor> segment_recording(const Recording& rec, std::size_t segment_len,
                                      double overlap_fraction);

// Closed-form segment count for the same parameters.
std::size_t segment_count(std::size_t samples, std::size_t segment_len, double overlap_fraction);

// Per-channel z-score within the segment (population std, epsilon 1e-8;
// constant channels come out all-zero).
Tensor normalize_segment(const Tensor& segment);

// Contiguous column blocks [g*w, (g+1)*w); window_len must divide the
// segment length.
std::vector<Tensor> window_segment(const Tensor& segment, std::size_t window_len);

// segment -> normalize -> window for every segment of a recording.
std::vector<WindowedSegment> prepare_segments(const Recording& rec, std::size_t segment_len,
                                              double overlap_fraction, std::size_t window_len);

// Synthetic labeled recordings: class k carries a sinusoid at class_freqs[k]
// (cycles per sample) on channels with index % 4 == k, scaled by a
// per-subject gain, plus white noise everywhere. Deterministic per seed.
struct SynthConfig {
    std::size_t subjects = 18;
    std::size_t channels = 16;
    std::size_t samples_per_task = 1000;
    std::uint64_t seed = 0;
    double amplitude = 1.0;
    double noise = 0.0;  // white-noise sigma
    std::array<double, 4> class_freqs = {0.03, 0.07, 0.13, 0.23};
};

struct SynthDataset {
    SensorLayout layout;  // random positions on the unit sphere
    std::vector<Recording> recordings;  // 4 per subject, one per task
};

SynthDataset synthesize_dataset(const SynthConfig& config);

struct DatasetSplit {
    std::vector<std::string> train_subjects;
    std::vector<std::string> test_subjects;
};

// Seeded shuffle of the given order; first n_train ids train, next n_test
// test. The two sets are disjoint by construction.
DatasetSplit split_subjects(const std::vector<std::string>& subject_ids, std::size_t n_train,
                            std::size_t n_test, std::uint64_t seed);

void save_split(const std::filesystem::path& path, const DatasetSplit& split);
DatasetSplit load_split(const std::filesystem::path& path);

// --- file formats ---

// Binary recording: magic "DSGTF1\0" + pad byte, u32-LE channels,
// u64-LE samples, then channels*samples f32-LE values channel-major.
void write_recording(const std::filesystem::path& path, const Recording& rec);
Recording read_recording(const std::filesystem::path& path);

struct ManifestEntry {
    TaskLabel label = TaskLabel::Resting;
    std::filesystem::path file;
};

struct ManifestSubject {
    std::string id;
    std::vector<ManifestEntry> recordings;
};

struct Manifest {
    std::filesystem::path layout;
    std::vector<ManifestSubject> subjects;

    std::vector<std::string> subject_ids() const;
    const ManifestSubject& subject(const std::string& id) const;
};

// Relative paths inside the manifest resolve against the manifest's
// directory at load time.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

// Writes layout + recordings + manifest under out_dir; returns the manifest.
Manifest write_dataset(const std::filesystem::path& out_dir, const SynthDataset& dataset);

}  // namespace dsgtf
