#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dsgtf {

struct Channel {
    std::string id;
    double x = 0, y = 0, z = 0;

    std::array<double, 3> coords() const { return {x, y, z}; }
};

// Ordered channel positions; the row order defines node index order.
struct SensorLayout {
    std::vector<Channel> channels;

    std::size_t size() const { return channels.size(); }
    void validate() const;  // >= 2 channels, unique ids, finite coordinates

    // CSV with header line "channel,x,y,z".
    static SensorLayout load_csv(const std::filesystem::path& path);
    void save_csv(const std::filesystem::path& path) const;
};

enum class AdjMethod { FullyConnected, Threshold, TopK };

std::string to_string(AdjMethod m);
AdjMethod adj_method_from_string(const std::string& s);

// Binary directed connectivity with provenance of how it was built.
// The diagonal is forced to 1 after construction so no attention
// neighborhood is ever empty.
struct AdjacencyMatrix {
    std::size_t n = 0;
    std::vector<std::uint8_t> entries;  // n x n row-major, values in {0,1}
    AdjMethod method = AdjMethod::FullyConnected;
    double gamma = 0.0;
    double tau = 0.0;    // Threshold only
    std::size_t k = 0;   // TopK only
    bool self_loops = true;

    bool at(std::size_t i, std::size_t j) const { return entries[i * n + j] != 0; }
    void set(std::size_t i, std::size_t j, bool v) { entries[i * n + j] = v ? 1 : 0; }
    // Row i as a softmax mask: the out-neighborhood node i attends over.
    std::span<const std::uint8_t> row(std::size_t i) const { return {entries.data() + i * n, n}; }
};

// exp(-gamma * squared distance); 1 exactly when the points coincide.
double rbf_weight(const std::array<double, 3>& ci, const std::array<double, 3>& cj, double gamma);

AdjacencyMatrix build_fc(const SensorLayout& layout);
// Keeps edge (i,j), i != j, iff rbf_weight >= tau (inclusive). Symmetric.
AdjacencyMatrix build_thresh(const SensorLayout& layout, double gamma, double tau);
// Per node i, the k strongest neighbors by RBF weight; ties go to the lower
// channel index. Directed, exactly n*k off-diagonal edges.
AdjacencyMatrix build_topk(const SensorLayout& layout, double gamma, std::size_t k);

struct ConnectivityReport {
    std::size_t edges = 0;     // off-diagonal entries set to 1
    std::size_t isolated = 0;  // nodes with no off-diagonal in- or out-edges
};

ConnectivityReport connectivity_report(const AdjacencyMatrix& adj);

// Edge-list export: comment header, then one "i,j" per line in ascending
// (i, j), self-loops excluded.
void write_edge_list(const AdjacencyMatrix& adj, const std::filesystem::path& path);

}  // namespace dsgtf
