#include "dsgtf/sensor_graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace dsgtf {

namespace {

// %g keeps integers clean (100 not 100.000000) and stays deterministic.
std::string num_str(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

AdjacencyMatrix blank(const SensorLayout& layout, AdjMethod method) {
    layout.validate();
    AdjacencyMatrix adj;
    adj.n = layout.size();
    adj.entries.assign(adj.n * adj.n, 0);
    adj.method = method;
    return adj;
}

void add_self_loops(AdjacencyMatrix& adj) {
    for (std::size_t i = 0; i < adj.n; ++i) adj.set(i, i, true);
    adj.self_loops = true;
}

}  // namespace

void SensorLayout::validate() const {
    if (channels.size() < 2)
        throw std::invalid_argument("sensor layout needs at least 2 channels, got " +
                                    std::to_string(channels.size()));
    std::unordered_set<std::string> seen;
    for (const Channel& ch : channels) {
        if (!seen.insert(ch.id).second) throw std::invalid_argument("duplicate channel id: " + ch.id);
        if (!std::isfinite(ch.x) || !std::isfinite(ch.y) || !std::isfinite(ch.z))
            throw std::invalid_argument("non-finite coordinates for channel " + ch.id);
    }
}

SensorLayout SensorLayout::load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open layout file " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty layout file " + path.string());
    if (line.ends_with('\r')) line.pop_back();
    if (line != "channel,x,y,z")
        throw std::runtime_error("layout file " + path.string() + ": expected header 'channel,x,y,z', got '" +
                                 line + "'");

    SensorLayout layout;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.ends_with('\r')) line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        Channel ch;
        std::string field;
        if (!std::getline(ss, ch.id, ',')) break;
        try {
            if (!std::getline(ss, field, ',')) throw std::invalid_argument("x");
            ch.x = std::stod(field);
            if (!std::getline(ss, field, ',')) throw std::invalid_argument("y");
            ch.y = std::stod(field);
            if (!std::getline(ss, field, ',')) throw std::invalid_argument("z");
            ch.z = std::stod(field);
        } catch (const std::exception&) {
            throw std::runtime_error("layout file " + path.string() + ": bad row at line " +
                                     std::to_string(lineno) + ": '" + line + "'");
        }
        layout.channels.push_back(std::move(ch));
    }
    layout.validate();
    return layout;
}

void SensorLayout::save_csv(const std::filesystem::path& path) const {
    validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write layout file " + path.string());
    out << "channel,x,y,z\n";
    char buf[160];
    for (const Channel& ch : channels) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g\n", ch.id.c_str(), ch.x, ch.y, ch.z);
        out << buf;
    }
}

std::string to_string(AdjMethod m) {
    switch (m) {
        case AdjMethod::FullyConnected: return "fc";
        case AdjMethod::Threshold: return "thresh";
        case AdjMethod::TopK: return "topk";
    }
    return "?";
}

AdjMethod adj_method_from_string(const std::string& s) {
    if (s == "fc") return AdjMethod::FullyConnected;
    if (s == "thresh") return AdjMethod::Threshold;
    if (s == "topk") return AdjMethod::TopK;
    throw std::invalid_argument("unknown adjacency method '" + s + "' (expected fc, thresh or topk)");
}

double rbf_weight(const std::array<double, 3>& ci, const std::array<double, 3>& cj, double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("rbf_weight: gamma must be positive");
    for (double v : ci)
        if (!std::isfinite(v)) throw std::invalid_argument("rbf_weight: non-finite coordinate");
    for (double v : cj)
        if (!std::isfinite(v)) throw std::invalid_argument("rbf_weight: non-finite coordinate");
    const double dx = ci[0] - cj[0], dy = ci[1] - cj[1], dz = ci[2] - cj[2];
    return std::exp(-gamma * (dx * dx + dy * dy + dz * dz));
}

AdjacencyMatrix build_fc(const SensorLayout& layout) {
    AdjacencyMatrix adj = blank(layout, AdjMethod::FullyConnected);
    std::fill(adj.entries.begin(), adj.entries.end(), 1);
    add_self_loops(adj);
    return adj;
}

AdjacencyMatrix build_thresh(const SensorLayout& layout, double gamma, double tau) {
    if (!(tau > 0.0 && tau < 1.0))
        throw std::invalid_argument("build_thresh: tau must be in (0,1), got " + std::to_string(tau));
    AdjacencyMatrix adj = blank(layout, AdjMethod::Threshold);
    adj.gamma = gamma;
    adj.tau = tau;
    const std::size_t n = adj.n;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (rbf_weight(layout.channels[i].coords(), layout.channels[j].coords(), gamma) >= tau) {
                adj.set(i, j, true);
                adj.set(j, i, true);
            }
        }
    }
    add_self_loops(adj);
    return adj;
}

AdjacencyMatrix build_topk(const SensorLayout& layout, double gamma, std::size_t k) {
    AdjacencyMatrix adj = blank(layout, AdjMethod::TopK);
    const std::size_t n = adj.n;
    if (k < 1 || k > n - 1)
        throw std::invalid_argument("build_topk: k must be in [1, " + std::to_string(n - 1) + "], got " +
                                    std::to_string(k));
    adj.gamma = gamma;
    adj.k = k;

    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        cand.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            cand.emplace_back(rbf_weight(layout.channels[i].coords(), layout.channels[j].coords(), gamma), j);
        }
        // strongest first; equal weights resolve to the lower index
        std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t r = 0; r < k; ++r) adj.set(i, cand[r].second, true);
    }
    add_self_loops(adj);
    return adj;
}

ConnectivityReport connectivity_report(const AdjacencyMatrix& adj) {
    ConnectivityReport rep;
    const std::size_t n = adj.n;
    std::vector<std::uint8_t> connected(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j || !adj.at(i, j)) continue;
            rep.edges += 1;
            connected[i] = 1;
            connected[j] = 1;
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (!connected[i]) rep.isolated += 1;
    return rep;
}

void write_edge_list(const AdjacencyMatrix& adj, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write edge list " + path.string());

    const ConnectivityReport rep = connectivity_report(adj);
    const double param = adj.method == AdjMethod::Threshold ? adj.tau
                         : adj.method == AdjMethod::TopK    ? static_cast<double>(adj.k)
                                                            : 0.0;
    out << "# method=" << to_string(adj.method) << " gamma=" << num_str(adj.gamma)
        << " param=" << num_str(param) << " edges=" << rep.edges << "\n";
    for (std::size_t i = 0; i < adj.n; ++i)
        for (std::size_t j = 0; j < adj.n; ++j)
            if (i != j && adj.at(i, j)) out << i << "," << j << "\n";
}

}  // namespace dsgtf
