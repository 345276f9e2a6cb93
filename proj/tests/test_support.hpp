#pragma once

// Test-side oracles. These recompute quantities by routes that do not share
// code with the library (tuple enumeration, direct products, plain loops).

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sharpen/model.hpp"
#include "sharpen/rng.hpp"
#include "sharpen/space.hpp"

namespace sharpen::testing {

inline std::vector<std::string> names(const char* stem, std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(stem + std::to_string(i));
    }
    return out;
}

inline SpacesPtr atomic_spaces(std::size_t nx, std::size_t ny) {
    return make_spaces(PromptSpace(names("x", nx)), ResponseSpace::atomic(names("y", ny)));
}

/// Single-prompt tabular model from explicit probabilities.
inline std::shared_ptr<TabularModel> table(std::vector<double> probs) {
    auto sp = atomic_spaces(1, probs.size());
    return std::make_shared<TabularModel>(sp, std::vector<std::vector<double>>{std::move(probs)});
}

inline std::vector<double> random_simplex(std::size_t k, RngStream& rng) {
    std::vector<double> v(k);
    double s = 0.0;
    for (auto& x : v) {
        x = -std::log(1.0 - rng.uniform());
        s += x;
    }
    for (auto& x : v) {
        x /= s;
    }
    return v;
}

inline std::shared_ptr<TabularModel> random_table(SpacesPtr sp, RngStream& rng) {
    std::vector<std::vector<double>> rows;
    for (std::size_t x = 0; x < sp->prompts.size(); ++x) {
        rows.push_back(random_simplex(sp->responses.size(), rng));
    }
    return std::make_shared<TabularModel>(sp, std::move(rows));
}

/// BoN law by summing over all |Y|^N ordered tuples with first-drawn tie-break.
inline std::vector<double> bon_by_tuples(const std::vector<double>& p, std::size_t n) {
    const std::size_t k = p.size();
    std::vector<double> out(k, 0.0);
    std::vector<std::size_t> t(n, 0);
    while (true) {
        double w = 1.0;
        std::size_t best = t[0];
        for (std::size_t i = 0; i < n; ++i) {
            w *= p[t[i]];
            if (p[t[i]] > p[best]) {
                best = t[i];
            }
        }
        out[best] += w;
        std::size_t i = n;
        while (i > 0 && t[i - 1] == k - 1) {
            t[i - 1] = 0;
            --i;
        }
        if (i == 0) {
            break;
        }
        ++t[i - 1];
    }
    return out;
}

inline double tv(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += std::abs(a[i] - b[i]);
    }
    return s / 2.0;
}

inline std::vector<double> frequencies(const std::vector<std::size_t>& draws, std::size_t k) {
    std::vector<double> f(k, 0.0);
    for (auto d : draws) {
        f[d] += 1.0;
    }
    for (auto& v : f) {
        v /= static_cast<double>(draws.size());
    }
    return f;
}

/// Binomial three-sigma half-width.
inline double three_sigma(double p, double trials) { return 3.0 * std::sqrt(p * (1.0 - p) / trials); }

} // namespace sharpen::testing
