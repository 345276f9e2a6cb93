#include "sharpen/model_class.hpp"

#include <cmath>
#include <limits>

#include "sharpen/errors.hpp"

namespace sharpen {

ModelClass ModelClass::finite(std::vector<ModelPtr> members) {
    if (members.empty()) {
        throw ValidationError("finite class must be non-empty");
    }
    for (const auto& m : members) {
        if (!m) {
            throw ValidationError("finite class holds a null member");
        }
        if (m->spaces() != members.front()->spaces() && !(*m->spaces() == *members.front()->spaces())) {
            throw ValidationError("finite class members disagree on spaces");
        }
    }
    auto spaces = members.front()->spaces();
    return ModelClass(FiniteClass{std::move(members)}, std::move(spaces));
}

ModelClass ModelClass::softmax(SpacesPtr spaces, FeatureMapPtr features, double bound, std::size_t layers) {
    if (!spaces || !features) {
        throw ValidationError("softmax family needs spaces and features");
    }
    if (!(bound > 0.0)) {
        throw ValidationError("softmax family needs a positive norm bound");
    }
    if (layers != spaces->responses.horizon()) {
        throw ValidationError("softmax family layer count must equal the horizon");
    }
    return ModelClass(SoftmaxFamily{spaces, std::move(features), bound, layers}, spaces);
}

ModelClass ModelClass::tabular(SpacesPtr spaces) {
    if (!spaces) {
        throw ValidationError("tabular family needs spaces");
    }
    return ModelClass(TabularFamily{spaces}, spaces);
}

double ModelClass::log_size() const noexcept {
    if (const auto* f = as_finite()) {
        return std::log(static_cast<double>(f->members.size()));
    }
    return std::numeric_limits<double>::infinity();
}

std::shared_ptr<LinearSoftmaxModel> ModelClass::make(Params theta) const {
    const auto* fam = as_softmax();
    if (!fam) {
        throw DomainError("class is not a softmax family");
    }
    return std::make_shared<LinearSoftmaxModel>(fam->spaces, fam->features, std::move(theta), fam->bound);
}

} // namespace sharpen
