#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sharpen/metrics.hpp"
#include "sharpen/model_class.hpp"

namespace sharpen {

/// Brute-force facts about an instance, recomputable through the metrics module.
struct GroundTruth {
    double gamma = 0.0;
    std::vector<std::vector<Response>> argmax_sets;
    std::vector<double> argmax_masses;
    double c_cov = 0.0;
    double c_cov_gamma = 0.0;
    double margin_max = kInf;
    /// e.g. the max-cut value.
    std::optional<double> optimal_value;
    std::map<std::string, double> extra;
};

GroundTruth compute_ground_truth(const ConditionalModel& base, const PromptDistribution& mu, double gamma = 0.0);

struct SharpeningInstance {
    std::string kind;
    PromptDistribution mu;
    ModelPtr base;
    ModelClass cls;
    GroundTruth truth;
    nlohmann::json params;

    const SpacesPtr& spaces() const noexcept { return base->spaces(); }
};

/// Sidecar record: kind, params, mu weights and ground truth.
nlohmann::json instance_sidecar(const SharpeningInstance& inst);

/// The coverage lower-bound family. Prompts x0..xd, responses y0..yM; x0 is
/// deterministic, x_i follows P_{I_i}. The class holds pi^I over all index
/// vectors, or `class_cap` seeded samples (always including the base).
SharpeningInstance lower_bound_family(std::size_t d, std::size_t m, double big_delta, double gamma, RngStream& rng,
                                      std::size_t class_cap = 100'000);

/// P_i over y0..yM (P_0 is the point mass on y0).
std::vector<double> lower_bound_row(std::size_t i, std::size_t m, double gamma);

/// Unit vectors with pairwise inner product <= 0.9, phi(x, y) = y, base
/// pi_{y*}. Without `bound`, B = 3 ln(2|Y|/delta) / gamma_margin.
SharpeningInstance softmax_separation(std::size_t d, std::size_t y_size, std::optional<double> bound, RngStream& rng,
                                      double delta = 0.1, std::size_t retry_cap = 100'000);

struct Graph {
    std::size_t vertices = 0;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
};

std::size_t cut_size(const Graph& g, const std::vector<int>& side);
/// Exhaustive maximum cut.
std::size_t brute_force_maxcut(const Graph& g);
/// Random simple graph with an odd edge count.
Graph random_odd_graph(std::size_t vertices, RngStream& rng);

struct MaxCutInstance {
    SharpeningInstance instance;
    Graph graph;

    /// Token signs of the first H-2 positions.
    std::vector<int> decode(Response y) const;
    std::size_t decoded_cut(Response y) const { return cut_size(graph, decode(y)); }
};

/// Multi-layer softmax over V = {-1, +1}, H = |vertices| + 2, whose sequence
/// argmax encodes a maximum cut. Requires an odd number of edges.
MaxCutInstance maxcut_hardness(const Graph& graph);

/// X = {_}, V = [n], H = 2, d = 2 with phi_1(1) = phi_1(2).
SharpeningInstance representational_example(std::size_t n, std::optional<double> bound = std::nullopt);

struct RandomTabularSpec {
    std::size_t prompts = 4;
    std::size_t responses = 4;
    std::pair<double, double> margin = {0.0, kInf};
    std::pair<double, double> c_cov = {1.0, kInf};
    /// Dirichlet concentration drawn log-uniformly from this range.
    std::pair<double, double> concentration = {0.05, 5.0};
    std::size_t distractors = 15;
    std::size_t retry_cap = 10'000;
};

/// Dirichlet rows rejection-sampled into the target margin and C_cov ranges,
/// uniform mu, and a shuffled finite class of the base plus distractors.
SharpeningInstance random_tabular_instance(const RandomTabularSpec& spec, RngStream& rng);

/// One Dirichlet(alpha, ..., alpha) draw.
std::vector<double> dirichlet(std::size_t k, double alpha, RngStream& rng);

} // namespace sharpen
