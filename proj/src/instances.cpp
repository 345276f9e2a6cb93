#include "sharpen/instances.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "sharpen/errors.hpp"
#include "sharpen/serialize.hpp"

namespace sharpen {

GroundTruth compute_ground_truth(const ConditionalModel& base, const PromptDistribution& mu, double gamma) {
    GroundTruth t;
    t.gamma = gamma;
    for (std::size_t x = 0; x < base.prompts().size(); ++x) {
        const auto logs = base.log_distribution(Prompt{x});
        t.argmax_sets.push_back(argmax_of(logs));
        t.argmax_masses.push_back(mass_of(logs, t.argmax_sets.back()));
    }
    const auto prof = coverage_profile(base, mu, gamma);
    t.c_cov = prof.c_cov;
    t.c_cov_gamma = prof.c_cov_gamma;
    t.margin_max = prof.margin_max;
    return t;
}

nlohmann::json instance_sidecar(const SharpeningInstance& inst) {
    nlohmann::json truth = {{"gamma", inst.truth.gamma},
                            {"argmax_masses", inst.truth.argmax_masses},
                            {"c_cov", inst.truth.c_cov},
                            {"c_cov_gamma", inst.truth.c_cov_gamma},
                            {"margin_max", std::isfinite(inst.truth.margin_max) ? nlohmann::json(inst.truth.margin_max)
                                                                                 : nlohmann::json("inf")}};
    nlohmann::json sets = nlohmann::json::array();
    for (const auto& s : inst.truth.argmax_sets) {
        nlohmann::json ids = nlohmann::json::array();
        for (auto y : s) {
            ids.push_back(inst.spaces()->responses.id(y));
        }
        sets.push_back(std::move(ids));
    }
    truth["argmax_sets"] = std::move(sets);
    if (inst.truth.optimal_value) {
        truth["optimal_value"] = *inst.truth.optimal_value;
    }
    for (const auto& [k, v] : inst.truth.extra) {
        truth["extra"][k] = v;
    }
    return {{"format", "sharpen.instance"},
            {"version", 1},
            {"kind", inst.kind},
            {"params", inst.params},
            {"mu", inst.mu.weights()},
            {"class_log_size", std::isfinite(inst.cls.log_size()) ? nlohmann::json(inst.cls.log_size())
                                                                   : nlohmann::json("inf")},
            {"truth", std::move(truth)}};
}

std::vector<double> lower_bound_row(std::size_t i, std::size_t m, double gamma) {
    std::vector<double> row(m + 1, 0.0);
    if (i == 0) {
        row[0] = 1.0;
        return row;
    }
    if (m < 2 || i > m || !(gamma >= 0.0 && gamma < 1.0)) {
        throw DomainError("lower-bound row needs M >= 2, i <= M and gamma in [0,1)");
    }
    const double md = static_cast<double>(m);
    const double top = 1.0 / ((1.0 - gamma) * md);
    const double rest = (1.0 / md) * (1.0 - gamma / ((md - 1.0) * (1.0 - gamma)));
    if (top > 1.0 || rest < 0.0) {
        throw DomainError("lower-bound parameters give a negative probability");
    }
    for (std::size_t j = 1; j <= m; ++j) {
        row[j] = j == i ? top : rest;
    }
    return row;
}

SharpeningInstance lower_bound_family(std::size_t d, std::size_t m, double big_delta, double gamma, RngStream& rng,
                                      std::size_t class_cap) {
    if (d == 0 || m < 2) {
        throw DomainError("lower-bound family needs d >= 1 and M >= 2");
    }
    if (!(big_delta > 0.0 && big_delta < 1.0) || !(gamma >= 0.0 && gamma < 1.0)) {
        throw DomainError("lower-bound family needs Delta in (0,1) and gamma in [0,1)");
    }
    const double md = static_cast<double>(m);
    if (1.0 / ((1.0 - gamma) * md) > 1.0 || gamma / ((md - 1.0) * (1.0 - gamma)) > 1.0) {
        throw DomainError("lower-bound parameters give a negative probability");
    }
    std::vector<std::string> xs;
    for (std::size_t i = 0; i <= d; ++i) {
        xs.push_back("x" + std::to_string(i));
    }
    std::vector<std::string> ys;
    for (std::size_t j = 0; j <= m; ++j) {
        ys.push_back("y" + std::to_string(j));
    }
    auto spaces = make_spaces(PromptSpace(xs), ResponseSpace::atomic(ys));

    std::vector<double> w(d + 1, big_delta / static_cast<double>(d));
    w[0] = 1.0 - big_delta;
    PromptDistribution mu(w);

    auto member = [&](const std::vector<std::size_t>& idx) -> ModelPtr {
        std::vector<std::vector<double>> rows{lower_bound_row(0, m, gamma)};
        for (auto i : idx) {
            rows.push_back(lower_bound_row(i, m, gamma));
        }
        return std::make_shared<TabularModel>(spaces, std::move(rows));
    };

    std::vector<std::size_t> star(d);
    for (auto& s : star) {
        s = 1 + rng.below(m);
    }
    const double log_full = static_cast<double>(d) * std::log(md);
    std::vector<std::vector<std::size_t>> index_sets;
    if (log_full <= std::log(static_cast<double>(class_cap)) + 1e-9) {
        std::vector<std::size_t> idx(d, 1);
        while (true) {
            index_sets.push_back(idx);
            std::size_t k = d;
            while (k > 0 && idx[k - 1] == m) {
                idx[k - 1] = 1;
                --k;
            }
            if (k == 0) {
                break;
            }
            ++idx[k - 1];
        }
    } else {
        std::set<std::vector<std::size_t>> seen{star};
        index_sets.push_back(star);
        while (index_sets.size() < class_cap) {
            std::vector<std::size_t> idx(d);
            for (auto& s : idx) {
                s = 1 + rng.below(m);
            }
            if (seen.insert(idx).second) {
                index_sets.push_back(idx);
            }
        }
        std::shuffle(index_sets.begin(), index_sets.end(), rng);
    }
    std::vector<ModelPtr> members;
    members.reserve(index_sets.size());
    ModelPtr base;
    for (const auto& idx : index_sets) {
        members.push_back(member(idx));
        if (idx == star) {
            base = members.back();
        }
    }

    SharpeningInstance inst{"lower_bound", mu, base, ModelClass::finite(std::move(members)), {}, {}};
    inst.truth = compute_ground_truth(*base, mu, gamma);
    inst.truth.extra["log_class_size"] = log_full;
    inst.truth.extra["enumerated_class_size"] = static_cast<double>(index_sets.size());
    inst.params = {{"d", d}, {"M", m}, {"Delta", big_delta}, {"gamma", gamma}, {"base_index", star}};
    return inst;
}

SharpeningInstance softmax_separation(std::size_t d, std::size_t y_size, std::optional<double> bound, RngStream& rng,
                                      double delta, std::size_t retry_cap) {
    if (d < 2 || y_size < 2) {
        throw DomainError("separation instance needs d >= 2 and |Y| >= 2");
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> pts;
    std::size_t tries = 0;
    while (pts.size() < y_size) {
        if (++tries > retry_cap) {
            throw CapacityError("packing stalled at " + std::to_string(pts.size()) + " of " +
                                std::to_string(y_size) + " points");
        }
        std::vector<double> v(d);
        for (auto& c : v) {
            c = normal(rng);
        }
        const double n = l2_norm(v);
        if (n == 0.0) {
            continue;
        }
        for (auto& c : v) {
            c /= n;
        }
        const bool ok = std::all_of(pts.begin(), pts.end(), [&](const std::vector<double>& p) {
            return std::inner_product(p.begin(), p.end(), v.begin(), 0.0) <= 0.9;
        });
        if (ok) {
            pts.push_back(std::move(v));
        }
    }
    const std::size_t star = rng.below(y_size);

    std::vector<std::string> ids;
    for (std::size_t j = 0; j < y_size; ++j) {
        ids.push_back("v" + std::to_string(j));
    }
    auto spaces = make_spaces(PromptSpace({"x"}), ResponseSpace::atomic(ids));
    std::vector<double> block;
    block.reserve(y_size * d);
    for (const auto& p : pts) {
        block.insert(block.end(), p.begin(), p.end());
    }
    auto features = std::make_shared<TableFeatures>(d, y_size, std::vector<std::vector<std::vector<double>>>{{block}});
    Params theta{pts[star]};
    PromptDistribution mu = PromptDistribution::point_mass(1, Prompt{0});

    // margin is read off the unconstrained base before fixing B
    auto probe = std::make_shared<LinearSoftmaxModel>(spaces, features, theta, 1.0 + 1e-9);
    const double margin = margin_max(*probe, mu);
    const double log_term = std::log(2.0 * static_cast<double>(y_size) / delta);
    const double big_b = bound.value_or(3.0 * log_term / margin);
    auto base = std::make_shared<LinearSoftmaxModel>(spaces, features, theta, big_b);

    SharpeningInstance inst{"separation", mu, base, ModelClass::softmax(spaces, features, big_b, 1), {}, {}};
    inst.truth = compute_ground_truth(*base, mu);
    inst.truth.extra["gamma_margin"] = margin;
    inst.truth.extra["beta"] = margin / (2.0 * log_term);
    inst.truth.extra["star"] = static_cast<double>(star);
    inst.truth.extra["bound"] = big_b;
    inst.params = {{"d", d}, {"y_size", y_size}, {"B", big_b}, {"delta", delta}, {"star", star}};
    return inst;
}

std::size_t cut_size(const Graph& g, const std::vector<int>& side) {
    std::size_t c = 0;
    for (const auto& [a, b] : g.edges) {
        if (side.at(a) != side.at(b)) {
            ++c;
        }
    }
    return c;
}

std::size_t brute_force_maxcut(const Graph& g) {
    if (g.vertices > 24) {
        throw CapacityError("brute-force max-cut is limited to 24 vertices");
    }
    std::size_t best = 0;
    std::vector<int> side(g.vertices);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << g.vertices); ++mask) {
        for (std::size_t v = 0; v < g.vertices; ++v) {
            side[v] = static_cast<int>((mask >> v) & 1U);
        }
        best = std::max(best, cut_size(g, side));
    }
    return best;
}

Graph random_odd_graph(std::size_t vertices, RngStream& rng) {
    if (vertices < 2) {
        throw DomainError("graph needs at least two vertices");
    }
    std::vector<std::pair<std::size_t, std::size_t>> all;
    for (std::size_t a = 0; a < vertices; ++a) {
        for (std::size_t b = a + 1; b < vertices; ++b) {
            all.emplace_back(a, b);
        }
    }
    while (true) {
        Graph g{vertices, {}};
        for (const auto& e : all) {
            if (rng.below(2) == 1) {
                g.edges.push_back(e);
            }
        }
        if (g.edges.size() % 2 == 1) {
            return g;
        }
    }
}

std::vector<int> MaxCutInstance::decode(Response y) const {
    const auto toks = instance.spaces()->responses.tokens(y);
    std::vector<int> side(graph.vertices);
    for (std::size_t v = 0; v < graph.vertices; ++v) {
        side[v] = toks[v] == 0 ? -1 : 1;
    }
    return side;
}

MaxCutInstance maxcut_hardness(const Graph& graph) {
    if (graph.edges.size() % 2 == 0) {
        throw DomainError("max-cut construction needs an odd number of edges");
    }
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (auto [a, b] : graph.edges) {
        if (a == b || a >= graph.vertices || b >= graph.vertices) {
            throw DomainError("graph must be simple with valid endpoints");
        }
        if (!seen.insert({std::min(a, b), std::max(a, b)}).second) {
            throw DomainError("graph has a repeated edge");
        }
    }
    const std::size_t h = graph.vertices + 2;
    auto features = std::make_shared<MonomialFeatures>(h, std::vector<double>{-1.0, 1.0});
    const std::size_t d = features->dim();
    Params theta(h, std::vector<double>(d, 0.0));
    // J = -A(G), summed over ordered pairs
    for (auto [a, b] : graph.edges) {
        theta[h - 2][features->triple(a, b, h - 2)] = -1.0;
        theta[h - 2][features->triple(b, a, h - 2)] = -1.0;
    }
    const double big_b = static_cast<double>(h);
    theta[h - 1][features->pair(h - 2, h - 1)] = big_b / 2.0;
    theta[h - 1][features->single(h - 1)] = big_b / 2.0;
    const double bound = std::max(big_b, std::sqrt(2.0 * static_cast<double>(graph.edges.size())));

    auto spaces = make_spaces(PromptSpace({"_"}), ResponseSpace::sequence({"-1", "+1"}, h));
    auto base = std::make_shared<LinearSoftmaxModel>(spaces, features, theta, bound);
    PromptDistribution mu = PromptDistribution::point_mass(1, Prompt{0});

    MaxCutInstance out{SharpeningInstance{"maxcut", mu, base, ModelClass::softmax(spaces, features, bound, h), {}, {}},
                       graph};
    out.instance.truth = compute_ground_truth(*base, mu);
    out.instance.truth.optimal_value = static_cast<double>(brute_force_maxcut(graph));
    nlohmann::json edges = nlohmann::json::array();
    for (auto [a, b] : graph.edges) {
        edges.push_back({a, b});
    }
    out.instance.params = {{"vertices", graph.vertices}, {"edges", edges}, {"B", big_b}};
    return out;
}

SharpeningInstance representational_example(std::size_t n, std::optional<double> bound) {
    if (n < 8) {
        throw DomainError("representational example needs n >= 8");
    }
    const double big_b = bound.value_or(std::log(static_cast<double>(n)));
    std::vector<std::string> vocab;
    for (std::size_t i = 1; i <= n; ++i) {
        vocab.push_back(std::to_string(i));
    }
    auto spaces = make_spaces(PromptSpace({"_"}), ResponseSpace::sequence(vocab, 2));
    // token k stands for the symbol k + 1
    std::vector<double> first(n * 2, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        first[k * 2 + (k <= 1 ? 0 : 1)] = 1.0;
    }
    std::vector<double> second(n * n * 2, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        second[(1 * n + j) * 2 + (j == 0 ? 0 : 1)] = 1.0;
    }
    auto features =
        std::make_shared<TableFeatures>(2, n, std::vector<std::vector<std::vector<double>>>{{first}, {second}});
    Params theta{{big_b, 0.0}, {big_b, 0.0}};
    auto base = std::make_shared<LinearSoftmaxModel>(spaces, features, theta, big_b);
    PromptDistribution mu = PromptDistribution::point_mass(1, Prompt{0});

    SharpeningInstance inst{"representational", mu, base, ModelClass::softmax(spaces, features, big_b, 2), {}, {}};
    inst.truth = compute_ground_truth(*base, mu);
    inst.params = {{"n", n}, {"B", big_b}};
    return inst;
}

std::vector<double> dirichlet(std::size_t k, double alpha, RngStream& rng) {
    std::gamma_distribution<double> g(alpha, 1.0);
    std::vector<double> v(k);
    double total = 0.0;
    while (total <= 0.0) {
        total = 0.0;
        for (auto& x : v) {
            x = g(rng);
            total += x;
        }
    }
    for (auto& x : v) {
        x /= total;
    }
    return v;
}

SharpeningInstance random_tabular_instance(const RandomTabularSpec& spec, RngStream& rng) {
    if (spec.prompts == 0 || spec.responses < 2) {
        throw DomainError("random tabular instance needs |X| >= 1 and |Y| >= 2");
    }
    if (spec.margin.first > spec.margin.second || spec.c_cov.first > spec.c_cov.second) {
        throw DomainError("empty target range");
    }
    std::vector<std::string> xs;
    for (std::size_t i = 0; i < spec.prompts; ++i) {
        xs.push_back("x" + std::to_string(i));
    }
    std::vector<std::string> ys;
    for (std::size_t j = 0; j < spec.responses; ++j) {
        ys.push_back("y" + std::to_string(j));
    }
    auto spaces = make_spaces(PromptSpace(xs), ResponseSpace::atomic(ys));
    auto mu = PromptDistribution::uniform(spec.prompts);
    const double lo = std::log(spec.concentration.first);
    const double hi = std::log(spec.concentration.second);

    auto draw_model = [&](double alpha) {
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < spec.prompts; ++i) {
            rows.push_back(dirichlet(spec.responses, alpha, rng));
        }
        return std::make_shared<TabularModel>(spaces, std::move(rows));
    };
    auto distance = [](double v, std::pair<double, double> r) {
        return v < r.first ? r.first - v : (v > r.second ? v - r.second : 0.0);
    };

    double nearest = kInf;
    double near_margin = 0.0;
    double near_cov = 0.0;
    for (std::size_t attempt = 0; attempt < spec.retry_cap; ++attempt) {
        const double alpha = std::exp(lo + (hi - lo) * rng.uniform());
        auto base = draw_model(alpha);
        const auto prof = coverage_profile(*base, mu, 0.0);
        const double gap = distance(prof.margin_max, spec.margin) + distance(prof.c_cov, spec.c_cov);
        if (gap > 0.0) {
            if (gap < nearest) {
                nearest = gap;
                near_margin = prof.margin_max;
                near_cov = prof.c_cov;
            }
            continue;
        }
        std::vector<ModelPtr> members{base};
        for (std::size_t k = 0; k < spec.distractors; ++k) {
            members.push_back(draw_model(alpha));
        }
        std::shuffle(members.begin(), members.end(), rng);
        const auto pos = static_cast<std::size_t>(std::find(members.begin(), members.end(), ModelPtr(base)) -
                                                  members.begin());
        SharpeningInstance inst{"random_tabular", mu, base, ModelClass::finite(std::move(members)), {}, {}};
        inst.truth = compute_ground_truth(*base, mu);
        inst.truth.extra["concentration"] = alpha;
        inst.truth.extra["base_index"] = static_cast<double>(pos);
        inst.params = {{"prompts", spec.prompts},
                       {"responses", spec.responses},
                       {"margin", {spec.margin.first, std::isfinite(spec.margin.second) ? spec.margin.second : 1e300}},
                       {"c_cov", {spec.c_cov.first, std::isfinite(spec.c_cov.second) ? spec.c_cov.second : 1e300}},
                       {"distractors", spec.distractors}};
        return inst;
    }
    throw CapacityError("random tabular instance: no draw in range after " + std::to_string(spec.retry_cap) +
                        " tries (nearest margin " + std::to_string(near_margin) + ", C_cov " +
                        std::to_string(near_cov) + ")");
}

} // namespace sharpen
