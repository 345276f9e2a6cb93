#include "sharpen/harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "sharpen/errors.hpp"

namespace sharpen {

namespace {

using nlohmann::json;

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

struct PromptPool {
    std::vector<std::size_t> rows;
};

// Percentile interval of the mean over prompts, resampling prompts.
std::pair<double, double> bootstrap(const std::vector<double>& values, std::size_t reps, double level, RngStream& rng) {
    if (values.empty() || reps == 0) {
        return {std::nan(""), std::nan("")};
    }
    std::vector<double> means(reps);
    const std::size_t k = values.size();
    for (auto& m : means) {
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            s += values[rng.below(k)];
        }
        m = s / static_cast<double>(k);
    }
    std::sort(means.begin(), means.end());
    const double tail = (1.0 - level) / 2.0;
    auto at = [&](double q) {
        const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(reps - 1) + 0.5));
        return means[std::min(idx, reps - 1)];
    };
    return {at(tail), at(1.0 - tail)};
}

double mean(const std::vector<double>& v) {
    return v.empty() ? std::nan("") : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace

std::vector<CompletionRecord> read_completions(std::istream& in) {
    std::vector<CompletionRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const auto j = json::parse(line);
            CompletionRecord r;
            r.prompt_id = j.at("prompt_id").get<std::string>();
            r.response_id = j.at("response_id").get<std::string>();
            r.logprob = j.at("logprob").get<double>();
            if (j.contains("length")) {
                const auto len = j.at("length").get<long long>();
                if (len < 1) {
                    throw InputError("length must be >= 1");
                }
                r.length = static_cast<std::size_t>(len);
            }
            if (j.contains("answer") && !j.at("answer").is_null()) {
                r.answer = j.at("answer").get<std::string>();
            }
            if (j.contains("correct") && !j.at("correct").is_null()) {
                r.correct = j.at("correct").get<bool>();
            }
            out.push_back(std::move(r));
        } catch (const InputError& e) {
            throw InputError("line " + std::to_string(lineno) + ": " + e.what());
        } catch (const json::exception& e) {
            throw InputError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (out.empty()) {
        throw InputError("completion file has no records");
    }
    return out;
}

void write_completions(std::ostream& out, const std::vector<CompletionRecord>& records) {
    for (const auto& r : records) {
        json j{{"prompt_id", r.prompt_id}, {"response_id", r.response_id}, {"logprob", r.logprob}, {"length", r.length}};
        if (r.answer) {
            j["answer"] = *r.answer;
        }
        if (r.correct) {
            j["correct"] = *r.correct;
        }
        out << j.dump() << '\n';
    }
}

std::vector<AnalyzeRow> bon_analyze(const std::vector<CompletionRecord>& records, const AnalyzeConfig& cfg,
                                    RngStream& rng) {
    if (records.empty()) {
        throw InputError("completion file has no records");
    }
    if (cfg.ns.empty() || cfg.rewards.empty()) {
        throw DomainError("analysis needs at least one N and one reward");
    }
    for (auto n : cfg.ns) {
        if (n == 0) {
            throw DomainError("N must be >= 1");
        }
    }
    // prompts in first-appearance order
    std::vector<PromptPool> pools;
    std::map<std::string, std::size_t> where;
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto [it, fresh] = where.emplace(records[i].prompt_id, pools.size());
        if (fresh) {
            pools.emplace_back();
        }
        pools[it->second].rows.push_back(i);
    }
    const bool labelled =
        std::all_of(records.begin(), records.end(), [](const CompletionRecord& r) { return r.correct.has_value(); });

    // plain sample accuracy per prompt: the lift baseline
    std::vector<double> base_acc;
    if (labelled) {
        for (const auto& p : pools) {
            double c = 0.0;
            for (auto r : p.rows) {
                c += *records[r].correct ? 1.0 : 0.0;
            }
            base_acc.push_back(c / static_cast<double>(p.rows.size()));
        }
    }
    const double baseline = labelled ? mean(base_acc) : std::nan("");

    std::vector<AnalyzeRow> out;
    for (std::size_t ni = 0; ni < cfg.ns.size(); ++ni) {
        const std::size_t n = cfg.ns[ni];
        // subsamples are shared by every reward so the skyline dominates exactly
        std::vector<std::vector<std::vector<std::size_t>>> draws(pools.size());
        RngStream sub = rng.split(1000 + ni);
        for (std::size_t p = 0; p < pools.size(); ++p) {
            const auto& rows = pools[p].rows;
            if (n == 1) {
                for (auto r : rows) {
                    draws[p].push_back({r});
                }
                continue;
            }
            for (std::size_t rep = 0; rep < std::max<std::size_t>(1, cfg.repetitions); ++rep) {
                std::vector<std::size_t> pick;
                if (n <= rows.size()) {
                    std::vector<std::size_t> pool = rows;
                    // partial Fisher-Yates keeps draw order random
                    for (std::size_t k = 0; k < n; ++k) {
                        std::swap(pool[k], pool[k + sub.below(pool.size() - k)]);
                    }
                    pick.assign(pool.begin(), pool.begin() + static_cast<long>(n));
                } else {
                    for (std::size_t k = 0; k < n; ++k) {
                        pick.push_back(rows[sub.below(rows.size())]);
                    }
                }
                draws[p].push_back(std::move(pick));
            }
        }

        std::vector<double> cover;
        if (labelled) {
            for (const auto& reps : draws) {
                double c = 0.0;
                for (const auto& pick : reps) {
                    c += std::any_of(pick.begin(), pick.end(), [&](std::size_t r) { return *records[r].correct; })
                             ? 1.0
                             : 0.0;
                }
                cover.push_back(c / static_cast<double>(reps.size()));
            }
        }

        for (std::size_t ri = 0; ri < cfg.rewards.size(); ++ri) {
            const auto& reward = cfg.rewards[ri];
            AnalyzeRow row;
            row.n = n;
            row.reward = reward.name();
            row.prompts = pools.size();
            std::vector<double> acc;
            std::vector<double> acc_cover;
            double lp_sum = 0.0;
            std::size_t lp_count = 0;
            for (std::size_t p = 0; p < pools.size(); ++p) {
                double hits = 0.0;
                std::size_t ok = 0;
                for (const auto& pick : draws[p]) {
                    std::vector<Candidate> cands;
                    for (auto r : pick) {
                        const auto& rec = records[r];
                        std::optional<std::string> answer = rec.answer;
                        if (!answer && reward.kind == RewardKind::majority && !reward.delimiter.empty()) {
                            answer = extract_answer(rec.response_id, reward.delimiter);
                        }
                        cands.push_back(Candidate{Response{r}, rec.logprob, rec.length, answer, rec.correct});
                    }
                    std::size_t pos = 0;
                    try {
                        pos = bon_select(cands, reward);
                    } catch (const SelectionError&) {
                        continue;
                    }
                    ++ok;
                    const auto& chosen = records[cands[pos].response.index];
                    lp_sum += chosen.logprob;
                    ++lp_count;
                    if (labelled) {
                        hits += *chosen.correct ? 1.0 : 0.0;
                    }
                }
                if (ok == 0) {
                    ++row.selection_errors;
                    continue;
                }
                if (labelled) {
                    acc.push_back(hits / static_cast<double>(ok));
                    acc_cover.push_back(cover[p]);
                }
            }
            row.evaluated = pools.size() - row.selection_errors;
            row.mean_logprob = lp_count ? lp_sum / static_cast<double>(lp_count) : std::nan("");
            if (labelled && !acc.empty()) {
                RngStream boot = rng.split(500000 + ni * 1000 + ri);
                row.accuracy = mean(acc);
                const auto [lo, hi] = bootstrap(acc, cfg.bootstrap, cfg.level, boot);
                row.accuracy_lo = lo;
                row.accuracy_hi = hi;
                row.coverage = mean(acc_cover);
                const auto [clo, chi] = bootstrap(acc_cover, cfg.bootstrap, cfg.level, boot);
                row.coverage_lo = clo;
                row.coverage_hi = chi;
                row.lift_abs = *row.accuracy - baseline;
                if (baseline > 0.0) {
                    row.lift_rel = *row.lift_abs / baseline;
                }
            }
            out.push_back(std::move(row));
        }
    }
    return out;
}

void write_analyze_csv(std::ostream& out, const std::vector<AnalyzeRow>& rows) {
    out << kAnalyzeCsvHeader << '\n';
    for (const auto& r : rows) {
        out << r.n << ',' << r.reward << ',' << r.prompts << ',' << r.evaluated << ',' << r.selection_errors << ','
            << fmt(r.accuracy) << ',' << fmt(r.accuracy_lo) << ',' << fmt(r.accuracy_hi) << ',' << fmt(r.coverage)
            << ',' << fmt(r.coverage_lo) << ',' << fmt(r.coverage_hi) << ',' << fmt(r.mean_logprob) << ','
            << fmt(r.lift_abs) << ',' << fmt(r.lift_rel) << '\n';
    }
}

} // namespace sharpen
