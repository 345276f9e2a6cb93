#include "sharpen/rlhf.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <Eigen/QR>

#include "sharpen/errors.hpp"

namespace sharpen {

PreferenceDataset collect_preferences(OracleSession& session, std::size_t n, RngStream& rng) {
    PreferenceDataset data;
    data.triples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Prompt x = session.draw_prompt(rng);
        const auto a = session.draw_and_evaluate(x, rng);
        const auto b = session.draw_and_evaluate(x, rng);
        data.triples.push_back(PreferenceTriple{x, a.response, b.response, a.logprob, b.logprob});
    }
    return data;
}

namespace {

void require_beta(double beta) {
    if (!(beta > 0.0)) {
        throw DomainError("beta must be positive");
    }
}

double reward_gap(const PreferenceTriple& tr, const RewardFn& reward) {
    if (reward) {
        return reward(tr.prompt, tr.y) - reward(tr.prompt, tr.y_prime);
    }
    return floor_log(tr.logprob_y) - floor_log(tr.logprob_y_prime);
}

} // namespace

DpoLoss dpo_loss(const ConditionalModel& pi, const PreferenceDataset& data, double beta, const RewardFn& reward) {
    require_beta(beta);
    DpoLoss out;
    auto clamp = [&](double lp) {
        if (lp < kLogFloor) {
            ++out.floored;
            return kLogFloor;
        }
        return lp;
    };
    for (const auto& tr : data.triples) {
        const double a = clamp(pi.logprob(tr.prompt, tr.y)) - floor_log(tr.logprob_y);
        const double b = clamp(pi.logprob(tr.prompt, tr.y_prime)) - floor_log(tr.logprob_y_prime);
        const double res = beta * a - beta * b - reward_gap(tr, reward);
        out.value += res * res;
    }
    return out;
}

double dpo_loss_softmax(const SoftmaxFamily& fam, const Params& theta, const PreferenceDataset& data, double beta,
                        Params* grad, const RewardFn& reward) {
    require_beta(beta);
    const auto& ys = fam.spaces->responses;
    if (grad) {
        grad->assign(theta.size(), {});
        for (std::size_t h = 0; h < theta.size(); ++h) {
            (*grad)[h].assign(theta[h].size(), 0.0);
        }
    }
    double loss = 0.0;
    for (const auto& tr : data.triples) {
        const double a = softmax_logprob(*fam.features, theta, ys, tr.prompt, tr.y) - floor_log(tr.logprob_y);
        const double b =
            softmax_logprob(*fam.features, theta, ys, tr.prompt, tr.y_prime) - floor_log(tr.logprob_y_prime);
        const double res = beta * (a - b) - reward_gap(tr, reward);
        loss += res * res;
        if (grad) {
            softmax_logprob(*fam.features, theta, ys, tr.prompt, tr.y, grad, 2.0 * beta * res);
            softmax_logprob(*fam.features, theta, ys, tr.prompt, tr.y_prime, grad, -2.0 * beta * res);
        }
    }
    return loss;
}

double dpo_gradient_check(const SoftmaxFamily& fam, const Params& theta, const PreferenceDataset& data, double beta,
                          double step, const RewardFn& reward) {
    const std::size_t d = fam.features->dim();
    Params g(theta.size(), std::vector<double>(d, 0.0));
    dpo_loss_softmax(fam, theta, data, beta, &g, reward);
    Eigen::VectorXd analytic = flatten(g);
    Eigen::VectorXd numeric(analytic.size());
    Eigen::VectorXd v = flatten(theta);
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        Eigen::VectorXd hi = v;
        Eigen::VectorXd lo = v;
        hi[k] += step;
        lo[k] -= step;
        const double fh = dpo_loss_softmax(fam, unflatten(hi, theta.size()), data, beta, nullptr, reward);
        const double fl = dpo_loss_softmax(fam, unflatten(lo, theta.size()), data, beta, nullptr, reward);
        numeric[k] = (fh - fl) / (2.0 * step);
    }
    const double scale = std::max({analytic.norm(), numeric.norm(), 1e-12});
    return (analytic - numeric).norm() / scale;
}

FitResult dpo_fit(const ModelClass& cls, const PreferenceDataset& data, double beta, const DpoOptions& opts,
                  const RewardFn& reward) {
    require_beta(beta);
    if (data.triples.empty()) {
        throw DomainError("dpo_fit needs at least one triple");
    }
    if (const auto* f = cls.as_finite()) {
        FitResult best;
        double best_loss = kInf;
        for (std::size_t k = 0; k < f->members.size(); ++k) {
            const double l = dpo_loss(*f->members[k], data, beta, reward).value;
            if (!best.index || l < best_loss - kTieTolerance) {
                best.index = k;
                best_loss = l;
            }
        }
        best.model = f->members[*best.index];
        best.objective = best_loss;
        return best;
    }
    const auto* fam = cls.as_softmax();
    if (!fam) {
        throw DomainError("dpo_fit supports finite classes and softmax families");
    }
    const std::size_t d = fam->features->dim();
    const double n = static_cast<double>(data.triples.size());
    Params start(fam->layers, std::vector<double>(d, 0.0));
    if (opts.check_gradient) {
        const double err = dpo_gradient_check(*fam, start, data, beta, 1e-5, reward);
        if (err > opts.gradient_tolerance) {
            throw ValidationError("analytic gradient disagrees with finite differences (relative error " +
                                  std::to_string(err) + ")");
        }
    }
    auto objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd* grad) {
        Params g(fam->layers, std::vector<double>(d, 0.0));
        const double l = dpo_loss_softmax(*fam, unflatten(v, fam->layers), data, beta, grad ? &g : nullptr, reward);
        if (grad) {
            *grad = flatten(g) / n;
        }
        return l / n;
    };
    Hessian hess;
    if (fam->layers == 1) {
        // per-prompt normalizers cancel, so the loss is quadratic in theta
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        std::vector<double> fa(d);
        std::vector<double> fb(d);
        const auto& ys = fam->spaces->responses;
        for (const auto& tr : data.triples) {
            const auto ta = ys.tokens(tr.y);
            const auto tb = ys.tokens(tr.y_prime);
            fam->features->features(tr.prompt, ta, fa);
            fam->features->features(tr.prompt, tb, fb);
            Eigen::VectorXd diff(static_cast<Eigen::Index>(d));
            for (std::size_t k = 0; k < d; ++k) {
                diff[static_cast<Eigen::Index>(k)] = fa[k] - fb[k];
            }
            h += diff * diff.transpose();
        }
        h *= 2.0 * beta * beta / n;
        hess = [h](const Eigen::VectorXd&) { return h; };
    }
    BallOptions bo;
    bo.max_iters = opts.max_iters;
    bo.tolerance = opts.tolerance;
    bo.throw_on_stall = opts.throw_on_stall;
    bo.blocks = fam->layers;
    const auto r = minimize_in_ball(objective, flatten(start), fam->bound, bo, hess);
    FitResult res;
    res.theta = unflatten(r.x, fam->layers);
    res.model = cls.make(*res.theta);
    res.objective = r.value * n;
    res.iterations = r.iterations;
    return res;
}

double default_xpo_alpha(double beta, double bound, std::size_t responses, std::size_t dim, std::size_t T,
                         double epsilon, double delta, double rho) {
    const double t = static_cast<double>(T);
    const double dd = static_cast<double>(dim);
    const double num = dd * std::log(bound * dd * t / (epsilon * delta)) + std::log(t / rho);
    const double den = dd * t * std::max(1.0, std::log(t));
    return beta / (bound + std::log(static_cast<double>(responses))) * std::sqrt(std::max(0.0, num) / den);
}

namespace {

std::vector<double> softmax_logs(const std::vector<Eigen::VectorXd>& phi, const Eigen::VectorXd& theta) {
    std::vector<double> logits(phi.size());
    for (std::size_t y = 0; y < phi.size(); ++y) {
        logits[y] = phi[y].dot(theta);
    }
    const double z = log_sum_exp(logits);
    for (auto& l : logits) {
        l -= z;
    }
    return logits;
}

Response draw(std::span<const double> logs, RngStream& rng) {
    std::vector<double> cum(logs.size());
    double acc = 0.0;
    for (std::size_t y = 0; y < logs.size(); ++y) {
        acc += std::exp(logs[y]);
        cum[y] = acc;
    }
    for (auto& c : cum) {
        c /= acc;
    }
    return Response{sample_cumulative(cum, rng)};
}

struct Policy {
    long index = -1;  // finite member, -1 = base
    Eigen::VectorXd theta;
    bool parametric = false;
};

} // namespace

XpoResult xpo_run(const ModelClass& cls, const XpoConfig& cfg, OracleSession& session, RngStream& rng) {
    if (!session.config().allow_evaluate) {
        throw StateError("xpo_run needs a relaxed session");
    }
    if (cfg.T == 0) {
        throw DomainError("XPO needs T >= 1");
    }
    require_beta(cfg.beta);
    if (cfg.alpha && !(*cfg.alpha >= 0.0)) {
        throw DomainError("alpha must be nonnegative");
    }
    const auto& spaces = cls.spaces();
    if (!(*spaces == *session.spaces())) {
        throw DomainError("class and session disagree on spaces");
    }
    const auto& ys = spaces->responses;
    ys.require_enumerable();
    const std::size_t nx = spaces->prompts.size();
    const std::size_t ny = ys.size();
    const auto& mu = session.prompt_distribution();
    const auto support = mu.support();
    const double beta = cfg.beta;

    // base log-likelihoods, read once through evaluate-only queries
    std::vector<std::vector<double>> blog(nx, std::vector<double>(ny));
    for (std::size_t x = 0; x < nx; ++x) {
        for (std::size_t y = 0; y < ny; ++y) {
            blog[x][y] = session.evaluate(Prompt{x}, Response{y});
        }
    }
    auto base_view = TabularModel::from_logits(spaces, blog);
    std::vector<std::vector<double>> rew(nx, std::vector<double>(ny));
    for (std::size_t x = 0; x < nx; ++x) {
        for (std::size_t y = 0; y < ny; ++y) {
            rew[x][y] = cfg.reward ? cfg.reward(Prompt{x}, Response{y}) : floor_log(blog[x][y]);
        }
    }

    const auto* finite = cls.as_finite();
    const auto* fam = cls.as_softmax();
    if (!finite && !fam) {
        throw DomainError("xpo_run supports finite classes and softmax families");
    }
    if (fam && fam->layers != 1) {
        throw DomainError("xpo_run supports single-layer softmax families only");
    }

    // member tables (finite) or feature tables (softmax)
    std::vector<std::vector<std::vector<double>>> member_logs;
    std::vector<std::vector<Eigen::VectorXd>> phi;
    std::size_t dim = 0;
    if (finite) {
        const std::size_t k = finite->members.size();
        if (k * support.size() * ny > cfg.max_class_cells) {
            throw CapacityError("finite class too large to tabulate for XPO");
        }
        member_logs.assign(k, std::vector<std::vector<double>>(nx));
        for (std::size_t m = 0; m < k; ++m) {
            for (auto x : support) {
                member_logs[m][x.index] = finite->members[m]->log_distribution(x);
            }
        }
    } else {
        dim = fam->features->dim();
        phi.assign(nx, {});
        std::vector<double> f(dim);
        for (auto x : support) {
            phi[x.index].resize(ny);
            for (std::size_t y = 0; y < ny; ++y) {
                const auto toks = ys.tokens(Response{y});
                fam->features->features(x, toks, f);
                phi[x.index][y] = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(dim));
            }
        }
    }

    auto logs_of = [&](const Policy& p, Prompt x) -> std::vector<double> {
        if (p.parametric) {
            return softmax_logs(phi[x.index], p.theta);
        }
        if (p.index < 0) {
            return base_view->log_distribution(x);
        }
        return member_logs[static_cast<std::size_t>(p.index)][x.index];
    };
    auto exact_j = [&](const Policy& p) {
        double total = 0.0;
        for (auto x : support) {
            const auto l = logs_of(p, x);
            double inner = 0.0;
            for (std::size_t y = 0; y < ny; ++y) {
                if (l[y] == kNegInf) {
                    continue;
                }
                if (blog[x.index][y] == kNegInf) {
                    return kNegInf;
                }
                inner += std::exp(l[y]) * (rew[x.index][y] - beta * (l[y] - blog[x.index][y]));
            }
            total += mu.weight(x) * inner;
        }
        return total;
    };
    RngStream validation_rng = rng.split(0x7a11da7e);
    auto estimate_j = [&](const Policy& p) {
        double total = 0.0;
        for (std::size_t s = 0; s < cfg.validation_samples; ++s) {
            const Prompt x = mu.sample(validation_rng);
            const auto l = logs_of(p, x);
            const Response y = draw(l, validation_rng);
            total += rew[x.index][y.index] - beta * (l[y.index] - floor_log(blog[x.index][y.index]));
        }
        return total / static_cast<double>(std::max<std::size_t>(1, cfg.validation_samples));
    };
    auto score = [&](const Policy& p) { return cfg.selection == JSelection::exact ? exact_j(p) : estimate_j(p); };

    double alpha = 0.0;
    if (cfg.alpha) {
        alpha = *cfg.alpha;
    } else if (fam) {
        alpha = default_xpo_alpha(beta, fam->bound, ny, dim, cfg.T, cfg.epsilon, cfg.delta, cfg.rho);
    } else {
        alpha = default_xpo_alpha(beta, 1.0, ny, 1, cfg.T, cfg.epsilon, cfg.delta, cfg.rho) *
                std::sqrt(std::max(1.0, cls.log_size()));
    }

    XpoResult out;
    std::vector<Policy> policies;
    policies.push_back(Policy{});
    out.iterates.push_back(XpoIterate{1, score(policies.back()), 0.0, -1});

    // running statistics
    std::vector<double> opt_sum;  // finite: sum ln pi_k(y')
    std::vector<double> sq_sum;   // finite: sum residual_k^2
    if (finite) {
        opt_sum.assign(finite->members.size(), 0.0);
        sq_sum.assign(finite->members.size(), 0.0);
    }
    const auto di = static_cast<Eigen::Index>(dim);
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(di, di);
    Eigen::VectorXd bvec = Eigen::VectorXd::Zero(di);
    double csum = 0.0;
    std::vector<double> counts(nx, 0.0);
    std::vector<Eigen::VectorXd> sprime(nx, Eigen::VectorXd::Zero(di));
    Eigen::VectorXd warm = Eigen::VectorXd::Zero(di);

    for (std::size_t t = 1; t <= cfg.T; ++t) {
        const Prompt x = session.draw_prompt(rng);
        const auto current = logs_of(policies.back(), x);
        const Response y = draw(current, rng);
        const auto base_draw = session.draw_and_evaluate(x, rng);
        const Response yp = base_draw.response;
        const double c = beta * (floor_log(blog[x.index][y.index]) - floor_log(base_draw.logprob)) +
                         rew[x.index][y.index] - rew[x.index][yp.index];
        out.data.triples.push_back(PreferenceTriple{x, y, yp, blog[x.index][y.index], base_draw.logprob});

        Policy next;
        double loss = 0.0;
        if (finite) {
            long best = -1;
            double best_obj = kInf;
            for (std::size_t m = 0; m < finite->members.size(); ++m) {
                const auto& l = member_logs[m][x.index];
                const double ly = floor_log(l[y.index]);
                const double lyp = floor_log(l[yp.index]);
                opt_sum[m] += lyp;
                const double res = beta * (ly - lyp) - c;
                sq_sum[m] += res * res;
                const double obj = alpha * opt_sum[m] + sq_sum[m];
                if (best < 0 || obj < best_obj - kTieTolerance * std::max(1.0, std::abs(best_obj))) {
                    best = static_cast<long>(m);
                    best_obj = obj;
                }
            }
            next.index = best;
            loss = best_obj;
        } else {
            const Eigen::VectorXd dphi = phi[x.index][y.index] - phi[x.index][yp.index];
            S += dphi * dphi.transpose();
            bvec += c * dphi;
            csum += c * c;
            counts[x.index] += 1.0;
            sprime[x.index] += phi[x.index][yp.index];

            auto objective = [&](const Eigen::VectorXd& th, Eigen::VectorXd* grad) {
                double v = beta * beta * th.dot(S * th) - 2.0 * beta * bvec.dot(th) + csum;
                if (grad) {
                    *grad = 2.0 * beta * beta * (S * th) - 2.0 * beta * bvec;
                }
                if (alpha > 0.0) {
                    for (auto px : support) {
                        const double n = counts[px.index];
                        if (n == 0.0) {
                            continue;
                        }
                        const auto l = softmax_logs(phi[px.index], th);
                        // ln Z = <phi, th> - ln pi for any response
                        const double z = phi[px.index][0].dot(th) - l[0];
                        v += alpha * (sprime[px.index].dot(th) - n * z);
                        if (grad) {
                            Eigen::VectorXd e = Eigen::VectorXd::Zero(di);
                            for (std::size_t yy = 0; yy < ny; ++yy) {
                                e += std::exp(l[yy]) * phi[px.index][yy];
                            }
                            *grad += alpha * (sprime[px.index] - n * e);
                        }
                    }
                }
                return v;
            };
            Hessian hess = [&](const Eigen::VectorXd& th) {
                Eigen::MatrixXd h = 2.0 * beta * beta * S;
                if (alpha > 0.0) {
                    for (auto px : support) {
                        const double n = counts[px.index];
                        if (n == 0.0) {
                            continue;
                        }
                        const auto l = softmax_logs(phi[px.index], th);
                        Eigen::VectorXd e = Eigen::VectorXd::Zero(di);
                        Eigen::MatrixXd second = Eigen::MatrixXd::Zero(di, di);
                        for (std::size_t yy = 0; yy < ny; ++yy) {
                            const double p = std::exp(l[yy]);
                            e += p * phi[px.index][yy];
                            second += p * phi[px.index][yy] * phi[px.index][yy].transpose();
                        }
                        h -= alpha * n * (second - e * e.transpose());
                    }
                }
                return h;
            };
            auto first = minimize_in_ball(objective, warm, fam->bound, cfg.inner, hess);
            const Eigen::VectorXd ls = S.completeOrthogonalDecomposition().solve(bvec / beta);
            auto second = minimize_in_ball(objective, ls, fam->bound, cfg.inner, hess);
            const auto& pick = second.value < first.value ? second : first;
            next.parametric = true;
            next.theta = pick.x;
            warm = pick.x;
            loss = pick.value;
        }
        policies.push_back(next);
        out.iterates.push_back(XpoIterate{t + 1, score(next), loss, next.index});
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < out.iterates.size(); ++i) {
        if (out.iterates[i].j_beta > out.iterates[best].j_beta) {
            best = i;
        }
    }
    out.selected_t = best + 1;
    const auto& chosen = policies[best];
    if (chosen.parametric) {
        Params theta{std::vector<double>(chosen.theta.data(), chosen.theta.data() + chosen.theta.size())};
        out.fit.model = cls.make(theta);
        out.fit.theta = std::move(theta);
    } else if (chosen.index >= 0) {
        out.fit.index = static_cast<std::size_t>(chosen.index);
        out.fit.model = finite->members[out.fit.index.value()];
    } else {
        out.fit.model = base_view;
    }
    out.fit.objective = out.iterates[best].j_beta;
    out.fit.iterations = cfg.T;
    return out;
}

void write_iterates_csv(std::ostream& out, const std::vector<XpoIterate>& iterates) {
    out << "t,j_beta,loss,chosen_index\n";
    const auto old = out.precision(17);
    for (const auto& it : iterates) {
        out << it.t << ',' << it.j_beta << ',' << it.loss << ',' << it.chosen_index << '\n';
    }
    out.precision(old);
}

double sec_along_sequence(std::span<const ModelPtr> policies, const ConditionalModel& base, const RewardFn& reward,
                          double beta, double lambda, const PromptDistribution& mu) {
    require_beta(beta);
    if (!(lambda > 0.0)) {
        throw DomainError("lambda must be positive");
    }
    const auto support = mu.support();
    const std::size_t ny = base.responses().size();
    const std::size_t T = policies.size();
    // probabilities and logs per policy per supported prompt
    std::vector<std::vector<std::vector<double>>> logs(T);
    for (std::size_t t = 0; t < T; ++t) {
        for (auto x : support) {
            logs[t].push_back(policies[t]->log_distribution(x));
        }
    }
    std::vector<std::vector<double>> blog;
    std::vector<std::vector<double>> rew;
    for (auto x : support) {
        blog.push_back(base.log_distribution(x));
        std::vector<double> r(ny);
        for (std::size_t y = 0; y < ny; ++y) {
            r[y] = reward ? reward(x, Response{y}) : floor_log(blog.back()[y]);
        }
        rew.push_back(std::move(r));
    }

    double total = 0.0;
    std::vector<double> g(ny);
    for (std::size_t t = 0; t < T; ++t) {
        double numer = 0.0;
        double denom = 0.0;
        for (std::size_t xi = 0; xi < support.size(); ++xi) {
            const double w = mu.weight(support[xi]);
            for (std::size_t y = 0; y < ny; ++y) {
                g[y] = beta * (floor_log(logs[t][xi][y]) - floor_log(blog[xi][y])) - rew[xi][y];
            }
            double base_mean = 0.0;
            double base_sq = 0.0;
            for (std::size_t y = 0; y < ny; ++y) {
                const double p = std::exp(blog[xi][y]);
                base_mean += p * g[y];
                base_sq += p * g[y] * g[y];
            }
            double own_mean = 0.0;
            for (std::size_t y = 0; y < ny; ++y) {
                own_mean += std::exp(logs[t][xi][y]) * g[y];
            }
            numer += w * (own_mean - base_mean);
            for (std::size_t i = 0; i < t; ++i) {
                double m1 = 0.0;
                double m2 = 0.0;
                for (std::size_t y = 0; y < ny; ++y) {
                    const double p = std::exp(logs[i][xi][y]);
                    m1 += p * g[y];
                    m2 += p * g[y] * g[y];
                }
                denom += w * (m2 - 2.0 * m1 * base_mean + base_sq);
            }
        }
        total += numer * numer / std::max(lambda, denom);
    }
    return total;
}

} // namespace sharpen
