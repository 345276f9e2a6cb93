#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <unordered_map>
#include <vector>

#include "sharpen/model.hpp"

namespace sharpen {

/// Per-layer parameter vectors theta_1..theta_H, each of dimension d.
using Params = std::vector<std::vector<double>>;

double l2_norm(std::span<const double> v) noexcept;

/// phi(x, y_{1:h}) in R^d. `tokens` holds y_1..y_h, the last one being the
/// token whose logit is computed at layer h.
class FeatureMap {
  public:
    virtual ~FeatureMap() = default;
    virtual std::size_t dim() const = 0;
    virtual void features(Prompt x, std::span<const Token> tokens, std::span<double> out) const = 0;
    virtual double dot(Prompt x, std::span<const Token> tokens, std::span<const double> theta) const;
};

using FeatureMapPtr = std::shared_ptr<const FeatureMap>;

/// Dense feature table: layer h stores one d-vector per (prompt, y_{1:h+1}).
class TableFeatures final : public FeatureMap {
  public:
    /// layers[h][x] is a row-major (|V|^(h+1) x d) block.
    TableFeatures(std::size_t dim, std::size_t vocab, std::vector<std::vector<std::vector<double>>> layers);

    std::size_t dim() const override { return dim_; }
    void features(Prompt x, std::span<const Token> tokens, std::span<double> out) const override;
    double dot(Prompt x, std::span<const Token> tokens, std::span<const double> theta) const override;

    std::size_t vocab() const noexcept { return vocab_; }
    const std::vector<std::vector<std::vector<double>>>& layers() const noexcept { return layers_; }
    /// Largest feature norm over the table.
    double max_norm() const;

  private:
    std::span<const double> row(Prompt x, std::span<const Token> tokens) const;

    std::size_t dim_;
    std::size_t vocab_;
    std::vector<std::vector<std::vector<double>>> layers_;
};

/// Degree-1/2/3 monomials of token values over positions [H], with
/// coordinates ordered singles (i), pairs (i,j), triples (i,j,k), each
/// lexicographic in 0-based positions. Positions not yet generated read as 0.
class MonomialFeatures final : public FeatureMap {
  public:
    MonomialFeatures(std::size_t horizon, std::vector<double> token_values);

    std::size_t dim() const override { return h_ + h_ * h_ + h_ * h_ * h_; }
    void features(Prompt x, std::span<const Token> tokens, std::span<double> out) const override;

    std::size_t horizon() const noexcept { return h_; }
    const std::vector<double>& token_values() const noexcept { return values_; }

    std::size_t single(std::size_t i) const noexcept { return i; }
    std::size_t pair(std::size_t i, std::size_t j) const noexcept { return h_ + i * h_ + j; }
    std::size_t triple(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return h_ + h_ * h_ + (i * h_ + j) * h_ + k;
    }

  private:
    std::size_t h_;
    std::vector<double> values_;
};

/// pi_theta(y_h | x, y_{1:h-1}) proportional to exp(<phi(x, y_{1:h}), theta_h>).
/// Per-prefix log-normalized conditionals are memoized on first use.
class LinearSoftmaxModel final : public SequenceModel {
  public:
    LinearSoftmaxModel(SpacesPtr spaces, FeatureMapPtr features, Params theta, double bound);

    std::vector<double> step_logprobs(Prompt x, std::span<const Token> prefix) const override;

    const FeatureMapPtr& features() const noexcept { return features_; }
    const Params& theta() const noexcept { return theta_; }
    double bound() const noexcept { return bound_; }

  private:
    struct Key {
        std::size_t x;
        std::size_t h;
        std::size_t prefix;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept;
    };

    FeatureMapPtr features_;
    Params theta_;
    double bound_;
    mutable std::mutex cache_mutex_;
    mutable std::unordered_map<Key, std::vector<double>, KeyHash> cache_;
};

/// Validates layer count, dimensions and ||theta_h|| <= bound (1e-9 slack).
void check_params(const Params& theta, std::size_t layers, std::size_t dim, double bound);

/// Projects every layer onto the ball of radius `bound`.
void project_to_ball(Params& theta, double bound);

/// Uncached ln pi_theta(y|x). When `grad` is non-null, adds
/// weight * d/dtheta ln pi_theta(y|x) into it.
double softmax_logprob(const FeatureMap& phi, const Params& theta, const ResponseSpace& responses,
                       Prompt x, Response y, Params* grad = nullptr, double weight = 1.0);

} // namespace sharpen
