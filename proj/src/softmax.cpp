#include "sharpen/softmax.hpp"

#include <cmath>
#include <numeric>

#include "sharpen/errors.hpp"
#include "sharpen/rng.hpp"

namespace sharpen {

double l2_norm(std::span<const double> v) noexcept {
    double s = 0.0;
    for (double a : v) {
        s += a * a;
    }
    return std::sqrt(s);
}

double FeatureMap::dot(Prompt x, std::span<const Token> tokens, std::span<const double> theta) const {
    std::vector<double> phi(dim());
    features(x, tokens, phi);
    return std::inner_product(phi.begin(), phi.end(), theta.begin(), 0.0);
}

TableFeatures::TableFeatures(std::size_t dim, std::size_t vocab,
                             std::vector<std::vector<std::vector<double>>> layers)
    : dim_(dim), vocab_(vocab), layers_(std::move(layers)) {
    if (dim_ == 0 || vocab_ == 0 || layers_.empty()) {
        throw ValidationError("feature table needs positive dimension, vocabulary and layers");
    }
    std::size_t prefixes = vocab_;
    for (const auto& layer : layers_) {
        for (const auto& block : layer) {
            if (block.size() != prefixes * dim_) {
                throw ValidationError("feature table block has the wrong size");
            }
        }
        prefixes *= vocab_;
    }
}

std::span<const double> TableFeatures::row(Prompt x, std::span<const Token> tokens) const {
    if (tokens.empty() || tokens.size() > layers_.size()) {
        throw DomainError("feature query outside the table horizon");
    }
    const auto& layer = layers_[tokens.size() - 1];
    if (x.index >= layer.size()) {
        throw DomainError("feature query for unknown prompt");
    }
    std::size_t idx = 0;
    for (Token t : tokens) {
        idx = idx * vocab_ + t;
    }
    return std::span<const double>(layer[x.index]).subspan(idx * dim_, dim_);
}

void TableFeatures::features(Prompt x, std::span<const Token> tokens, std::span<double> out) const {
    auto r = row(x, tokens);
    std::copy(r.begin(), r.end(), out.begin());
}

double TableFeatures::dot(Prompt x, std::span<const Token> tokens, std::span<const double> theta) const {
    auto r = row(x, tokens);
    return std::inner_product(r.begin(), r.end(), theta.begin(), 0.0);
}

double TableFeatures::max_norm() const {
    double best = 0.0;
    for (const auto& layer : layers_) {
        for (const auto& block : layer) {
            for (std::size_t off = 0; off < block.size(); off += dim_) {
                best = std::max(best, l2_norm(std::span<const double>(block).subspan(off, dim_)));
            }
        }
    }
    return best;
}

MonomialFeatures::MonomialFeatures(std::size_t horizon, std::vector<double> token_values)
    : h_(horizon), values_(std::move(token_values)) {
    if (h_ == 0 || values_.empty()) {
        throw ValidationError("monomial features need a positive horizon and token values");
    }
}

void MonomialFeatures::features(Prompt, std::span<const Token> tokens, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    const std::size_t n = tokens.size();
    if (n > h_) {
        throw DomainError("monomial feature query beyond horizon");
    }
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = values_.at(tokens[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        out[single(i)] = v[i];
        for (std::size_t j = 0; j < n; ++j) {
            out[pair(i, j)] = v[i] * v[j];
            for (std::size_t k = 0; k < n; ++k) {
                out[triple(i, j, k)] = v[i] * v[j] * v[k];
            }
        }
    }
}

void check_params(const Params& theta, std::size_t layers, std::size_t dim, double bound) {
    if (theta.size() != layers) {
        throw ValidationError("expected " + std::to_string(layers) + " parameter layers");
    }
    for (const auto& layer : theta) {
        if (layer.size() != dim) {
            throw ValidationError("parameter layer has the wrong dimension");
        }
        const double norm = l2_norm(layer);
        if (!std::isfinite(norm) || norm > bound * (1.0 + 1e-12) + 1e-9) {
            throw ValidationError("parameter norm " + std::to_string(norm) + " exceeds bound " +
                                  std::to_string(bound));
        }
    }
}

void project_to_ball(Params& theta, double bound) {
    for (auto& layer : theta) {
        const double norm = l2_norm(layer);
        if (norm > bound) {
            const double s = bound / norm;
            for (double& a : layer) {
                a *= s;
            }
        }
    }
}

LinearSoftmaxModel::LinearSoftmaxModel(SpacesPtr spaces, FeatureMapPtr features, Params theta, double bound)
    : SequenceModel(std::move(spaces)), features_(std::move(features)), theta_(std::move(theta)), bound_(bound) {
    if (!features_) {
        throw ValidationError("linear softmax model requires a feature map");
    }
    check_params(theta_, responses().horizon(), features_->dim(), bound_);
}

std::size_t LinearSoftmaxModel::KeyHash::operator()(const Key& k) const noexcept {
    return static_cast<std::size_t>(mix64(k.x * 0x9e3779b97f4a7c15ULL ^ mix64(k.h + (k.prefix << 8))));
}

std::vector<double> LinearSoftmaxModel::step_logprobs(Prompt x, std::span<const Token> prefix) const {
    prompts().check(x);
    const std::size_t h = prefix.size();
    if (h >= responses().horizon()) {
        throw DomainError("prefix longer than horizon");
    }
    const Key key{x.index, h, responses().prefix_index(prefix)};
    {
        std::lock_guard lock(cache_mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) {
            return it->second;
        }
    }
    const std::size_t v = responses().vocab_size();
    std::vector<Token> toks(prefix.begin(), prefix.end());
    toks.push_back(0);
    std::vector<double> logits(v);
    for (Token t = 0; t < v; ++t) {
        toks.back() = t;
        logits[t] = features_->dot(x, toks, theta_[h]);
    }
    const double z = log_sum_exp(logits);
    for (double& l : logits) {
        l -= z;
    }
    std::lock_guard lock(cache_mutex_);
    return cache_.emplace(key, std::move(logits)).first->second;
}

double softmax_logprob(const FeatureMap& phi, const Params& theta, const ResponseSpace& responses,
                       Prompt x, Response y, Params* grad, double weight) {
    const auto toks = responses.tokens(y);
    const std::size_t v = responses.vocab_size();
    const std::size_t d = phi.dim();
    std::vector<Token> buf;
    std::vector<double> logits(v);
    std::vector<double> feat(d);
    std::vector<double> expected(d);
    double total = 0.0;
    for (std::size_t h = 0; h < toks.size(); ++h) {
        buf.assign(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(h));
        buf.push_back(0);
        for (Token t = 0; t < v; ++t) {
            buf.back() = t;
            logits[t] = phi.dot(x, buf, theta[h]);
        }
        const double z = log_sum_exp(logits);
        total += logits[toks[h]] - z;
        if (grad != nullptr) {
            std::fill(expected.begin(), expected.end(), 0.0);
            for (Token t = 0; t < v; ++t) {
                const double p = std::exp(logits[t] - z);
                if (p == 0.0) {
                    continue;
                }
                buf.back() = t;
                phi.features(x, buf, feat);
                for (std::size_t k = 0; k < d; ++k) {
                    expected[k] += p * feat[k];
                }
            }
            buf.back() = toks[h];
            phi.features(x, buf, feat);
            auto& g = (*grad)[h];
            for (std::size_t k = 0; k < d; ++k) {
                g[k] += weight * (feat[k] - expected[k]);
            }
        }
    }
    return total;
}

} // namespace sharpen
