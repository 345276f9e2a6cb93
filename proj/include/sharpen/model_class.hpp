#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "sharpen/model.hpp"
#include "sharpen/softmax.hpp"

namespace sharpen {

/// Explicit list of candidates over one pair of spaces.
struct FiniteClass {
    std::vector<ModelPtr> members;
};

/// {pi_theta : ||theta_h|| <= bound} with `layers` parameter vectors.
struct SoftmaxFamily {
    SpacesPtr spaces;
    FeatureMapPtr features;
    double bound = 1.0;
    std::size_t layers = 1;
};

/// Every conditional table over the spaces.
struct TabularFamily {
    SpacesPtr spaces;
};

class ModelClass {
  public:
    using Repr = std::variant<FiniteClass, SoftmaxFamily, TabularFamily>;

    static ModelClass finite(std::vector<ModelPtr> members);
    static ModelClass softmax(SpacesPtr spaces, FeatureMapPtr features, double bound, std::size_t layers = 1);
    static ModelClass tabular(SpacesPtr spaces);

    const Repr& repr() const noexcept { return repr_; }
    const SpacesPtr& spaces() const noexcept { return spaces_; }

    bool is_finite() const noexcept { return std::holds_alternative<FiniteClass>(repr_); }
    const FiniteClass* as_finite() const noexcept { return std::get_if<FiniteClass>(&repr_); }
    const SoftmaxFamily* as_softmax() const noexcept { return std::get_if<SoftmaxFamily>(&repr_); }

    /// ln |Pi| for finite classes, otherwise infinite.
    double log_size() const noexcept;

    /// Builds the member pi_theta of a softmax family.
    std::shared_ptr<LinearSoftmaxModel> make(Params theta) const;

  private:
    ModelClass(Repr repr, SpacesPtr spaces) : repr_(std::move(repr)), spaces_(std::move(spaces)) {}

    Repr repr_;
    SpacesPtr spaces_;
};

/// Outcome of fitting over a class.
struct FitResult {
    ModelPtr model;
    /// Member position for finite classes.
    std::optional<std::size_t> index;
    /// Parameters for softmax families.
    std::optional<Params> theta;
    double objective = 0.0;
    std::size_t iterations = 0;
};

} // namespace sharpen
