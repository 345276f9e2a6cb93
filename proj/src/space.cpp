#include "sharpen/space.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sharpen/errors.hpp"

namespace sharpen {

namespace {

std::unordered_map<std::string, std::size_t> index_ids(const std::vector<std::string>& ids,
                                                       const char* what) {
    if (ids.empty()) {
        throw DomainError(std::string(what) + " must be non-empty");
    }
    std::unordered_map<std::string, std::size_t> lookup;
    lookup.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!lookup.emplace(ids[i], i).second) {
            throw DomainError(std::string("duplicate ") + what + " identifier '" + ids[i] + "'");
        }
    }
    return lookup;
}

} // namespace

PromptSpace::PromptSpace(std::vector<std::string> ids)
    : ids_(std::move(ids)), lookup_(index_ids(ids_, "prompt")) {}

const std::string& PromptSpace::id(Prompt x) const {
    check(x);
    return ids_[x.index];
}

Prompt PromptSpace::find(std::string_view id) const {
    auto it = lookup_.find(std::string(id));
    if (it == lookup_.end()) {
        throw DomainError("unknown prompt '" + std::string(id) + "'");
    }
    return Prompt{it->second};
}

void PromptSpace::check(Prompt x) const {
    if (!contains(x)) {
        throw DomainError("prompt index " + std::to_string(x.index) + " out of range");
    }
}

ResponseSpace ResponseSpace::atomic(std::vector<std::string> ids) {
    ResponseSpace s;
    s.lookup_ = index_ids(ids, "response");
    s.symbols_ = std::move(ids);
    s.size_ = s.symbols_.size();
    return s;
}

ResponseSpace ResponseSpace::sequence(std::vector<std::string> vocab, std::size_t horizon) {
    if (horizon == 0) {
        throw DomainError("sequence horizon must be positive");
    }
    for (const auto& v : vocab) {
        if (v.find(' ') != std::string::npos) {
            throw DomainError("vocabulary symbols may not contain spaces");
        }
    }
    ResponseSpace s;
    s.lookup_ = index_ids(vocab, "token");
    s.symbols_ = std::move(vocab);
    s.sequence_ = true;
    s.horizon_ = horizon;
    std::size_t size = 1;
    const std::size_t v = s.symbols_.size();
    for (std::size_t h = 0; h < horizon; ++h) {
        if (size > (std::size_t{1} << 62) / v) {
            throw DomainError("sequence space too large to index");
        }
        size *= v;
    }
    s.size_ = size;
    return s;
}

void ResponseSpace::check(Response y) const {
    if (!contains(y)) {
        throw DomainError("response index " + std::to_string(y.index) + " out of range");
    }
}

std::string ResponseSpace::id(Response y) const {
    check(y);
    if (!sequence_) {
        return symbols_[y.index];
    }
    std::string out;
    for (Token t : tokens(y)) {
        if (!out.empty()) {
            out += ' ';
        }
        out += symbols_[t];
    }
    return out;
}

Response ResponseSpace::find(std::string_view id) const {
    if (!sequence_) {
        auto it = lookup_.find(std::string(id));
        if (it == lookup_.end()) {
            throw DomainError("unknown response '" + std::string(id) + "'");
        }
        return Response{it->second};
    }
    std::vector<Token> toks;
    std::size_t pos = 0;
    while (pos <= id.size()) {
        std::size_t end = id.find(' ', pos);
        if (end == std::string_view::npos) {
            end = id.size();
        }
        auto it = lookup_.find(std::string(id.substr(pos, end - pos)));
        if (it == lookup_.end()) {
            throw DomainError("unknown token in response '" + std::string(id) + "'");
        }
        toks.push_back(it->second);
        pos = end + 1;
    }
    if (toks.size() != horizon_) {
        throw DomainError("response '" + std::string(id) + "' has wrong length");
    }
    return encode(toks);
}

std::vector<Token> ResponseSpace::tokens(Response y) const {
    check(y);
    if (!sequence_) {
        return {y.index};
    }
    std::vector<Token> out(horizon_);
    std::size_t rest = y.index;
    const std::size_t v = symbols_.size();
    for (std::size_t h = horizon_; h-- > 0;) {
        out[h] = rest % v;
        rest /= v;
    }
    return out;
}

Response ResponseSpace::encode(std::span<const Token> toks) const {
    if (!sequence_) {
        if (toks.size() != 1 || toks[0] >= size_) {
            throw DomainError("atomic response expects a single valid index");
        }
        return Response{toks[0]};
    }
    if (toks.size() != horizon_) {
        throw DomainError("token sequence has wrong length");
    }
    return Response{prefix_index(toks)};
}

std::size_t ResponseSpace::prefix_index(std::span<const Token> prefix) const {
    const std::size_t v = vocab_size();
    std::size_t idx = 0;
    for (Token t : prefix) {
        if (t >= v) {
            throw DomainError("token index out of range");
        }
        idx = idx * v + t;
    }
    return idx;
}

void ResponseSpace::require_enumerable() const {
    if (size_ > kMaxEnumerable) {
        throw CapacityError("response space of size " + std::to_string(size_) +
                            " exceeds the enumeration limit");
    }
}

SpacesPtr make_spaces(PromptSpace prompts, ResponseSpace responses) {
    return std::make_shared<const Spaces>(Spaces{std::move(prompts), std::move(responses)});
}

PromptDistribution::PromptDistribution(std::vector<double> weights) : weights_(std::move(weights)) {
    if (weights_.empty()) {
        throw DomainError("prompt distribution must be non-empty");
    }
    double total = 0.0;
    cumulative_.reserve(weights_.size());
    for (double w : weights_) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw DomainError("prompt weights must be finite and nonnegative");
        }
        total += w;
        cumulative_.push_back(total);
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw DomainError("prompt weights must sum to 1 (got " + std::to_string(total) + ")");
    }
}

PromptDistribution PromptDistribution::uniform(std::size_t n) {
    return PromptDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

PromptDistribution PromptDistribution::point_mass(std::size_t n, Prompt x) {
    std::vector<double> w(n, 0.0);
    w.at(x.index) = 1.0;
    return PromptDistribution(std::move(w));
}

std::vector<Prompt> PromptDistribution::support() const {
    std::vector<Prompt> out;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        if (weights_[i] > 0.0) {
            out.push_back(Prompt{i});
        }
    }
    return out;
}

Prompt PromptDistribution::sample(RngStream& rng) const {
    return Prompt{sample_cumulative(cumulative_, rng)};
}

std::size_t sample_cumulative(std::span<const double> cumulative, RngStream& rng) {
    const double u = rng.uniform() * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    std::size_t i = static_cast<std::size_t>(it - cumulative.begin());
    if (i >= cumulative.size()) {
        i = cumulative.size() - 1;
    }
    // Skip zero-width cells that upper_bound can land on only through rounding.
    while (i > 0 && cumulative[i] == cumulative[i - 1]) {
        --i;
    }
    return i;
}

} // namespace sharpen
