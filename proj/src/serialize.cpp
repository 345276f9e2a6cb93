#include "sharpen/serialize.hpp"

#include <fstream>

#include "sharpen/errors.hpp"

namespace sharpen {

namespace {

constexpr const char* kModelFormat = "sharpen.model";

} // namespace

json spaces_to_json(const Spaces& spaces) {
    json r;
    if (spaces.responses.is_sequence()) {
        r = {{"kind", "sequence"}, {"vocab", spaces.responses.symbols()}, {"horizon", spaces.responses.horizon()}};
    } else {
        r = {{"kind", "atomic"}, {"ids", spaces.responses.symbols()}};
    }
    return {{"prompts", spaces.prompts.ids()}, {"responses", r}};
}

SpacesPtr spaces_from_json(const json& j) {
    try {
        PromptSpace prompts(j.at("prompts").get<std::vector<std::string>>());
        const auto& r = j.at("responses");
        const auto kind = r.at("kind").get<std::string>();
        if (kind == "atomic") {
            return make_spaces(std::move(prompts), ResponseSpace::atomic(r.at("ids").get<std::vector<std::string>>()));
        }
        if (kind == "sequence") {
            return make_spaces(std::move(prompts),
                               ResponseSpace::sequence(r.at("vocab").get<std::vector<std::string>>(),
                                                       r.at("horizon").get<std::size_t>()));
        }
        throw InputError("unknown response space kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed space record: ") + e.what());
    }
}

json features_to_json(const FeatureMap& phi) {
    if (const auto* table = dynamic_cast<const TableFeatures*>(&phi)) {
        return {{"kind", "table"}, {"dim", table->dim()}, {"vocab", table->vocab()}, {"layers", table->layers()}};
    }
    if (const auto* mono = dynamic_cast<const MonomialFeatures*>(&phi)) {
        return {{"kind", "monomial"}, {"horizon", mono->horizon()}, {"token_values", mono->token_values()}};
    }
    throw InputError("feature map type has no serialized form");
}

FeatureMapPtr features_from_json(const json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "table") {
        return std::make_shared<TableFeatures>(
            j.at("dim").get<std::size_t>(), j.at("vocab").get<std::size_t>(),
            j.at("layers").get<std::vector<std::vector<std::vector<double>>>>());
    }
    if (kind == "monomial") {
        return std::make_shared<MonomialFeatures>(j.at("horizon").get<std::size_t>(),
                                                  j.at("token_values").get<std::vector<double>>());
    }
    throw InputError("unknown feature map kind '" + kind + "'");
}

json model_to_json(const ConditionalModel& model, bool include_spaces) {
    json body;
    if (const auto* ar = dynamic_cast<const AutoregressiveTabularModel*>(&model)) {
        body = {{"kind", "autoregressive"}, {"steps", ar->steps()}};
    } else if (const auto* sm = dynamic_cast<const LinearSoftmaxModel*>(&model)) {
        body = {{"kind", "linear_softmax"},
                {"features", features_to_json(*sm->features())},
                {"theta", sm->theta()},
                {"bound", sm->bound()}};
    } else if (const auto* tab = dynamic_cast<const TabularModel*>(&model)) {
        body = {{"kind", "tabular"}, {"rows", tab->rows()}};
    } else {
        body = {{"kind", "tabular"}, {"rows", TabularModel::snapshot(model)->rows()}};
    }
    json out = {{"format", kModelFormat}, {"version", 1}, {"model", body}};
    if (include_spaces) {
        out["spaces"] = spaces_to_json(*model.spaces());
    }
    return out;
}

ModelPtr model_from_json(const json& j, SpacesPtr spaces) {
    try {
        if (j.value("format", "") != kModelFormat) {
            throw InputError("not a model record");
        }
        if (j.contains("spaces")) {
            auto own = spaces_from_json(j.at("spaces"));
            if (spaces && !(*spaces == *own)) {
                throw InputError("model spaces differ from the expected spaces");
            }
            if (!spaces) {
                spaces = std::move(own);
            }
        }
        if (!spaces) {
            throw InputError("model record has no spaces");
        }
        const auto& body = j.at("model");
        const auto kind = body.at("kind").get<std::string>();
        if (kind == "tabular") {
            return std::make_shared<TabularModel>(spaces, body.at("rows").get<std::vector<std::vector<double>>>());
        }
        if (kind == "autoregressive") {
            return std::make_shared<AutoregressiveTabularModel>(
                spaces, body.at("steps").get<std::vector<AutoregressiveTabularModel::StepTable>>());
        }
        if (kind == "linear_softmax") {
            return std::make_shared<LinearSoftmaxModel>(spaces, features_from_json(body.at("features")),
                                                        body.at("theta").get<Params>(),
                                                        body.at("bound").get<double>());
        }
        throw InputError("unknown model kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed model record: ") + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) {
        throw InputError("cannot write " + path.string());
    }
    out << j.dump(1) << '\n';
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot read " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void save_model(const ConditionalModel& model, const std::filesystem::path& path) {
    write_json_file(path, model_to_json(model));
}

ModelPtr load_model(const std::filesystem::path& path) {
    return model_from_json(read_json_file(path));
}

} // namespace sharpen
