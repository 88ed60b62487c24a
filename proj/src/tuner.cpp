#include "hscls/tuner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "hscls/csv.hpp"
#include "hscls/rng.hpp"
#include "hscls/stats.hpp"

namespace hscls {

Dimension Dimension::continuous(std::string name, double low, double high) {
    return {std::move(name), DimKind::continuous, low, high, {}};
}

Dimension Dimension::integer(std::string name, double low, double high) {
    return {std::move(name), DimKind::integer, low, high, {}};
}

Dimension Dimension::categorical(std::string name, std::vector<double> choices) {
    return {std::move(name), DimKind::categorical, 0.0, 0.0, std::move(choices)};
}

void HyperParamSpace::validate() const {
    if (dims.empty()) throw std::invalid_argument("hyperparameter space has no dimensions");
    for (std::size_t i = 0; i < dims.size(); ++i) {
        const auto& d = dims[i];
        for (std::size_t j = 0; j < i; ++j) {
            if (dims[j].name == d.name) throw std::invalid_argument("duplicate dimension " + d.name);
        }
        if (d.kind == DimKind::categorical) {
            if (d.choices.empty()) throw std::invalid_argument("categorical dimension " + d.name + " has no choices");
        } else if (!(d.low < d.high)) {
            throw std::invalid_argument("dimension " + d.name + " needs low < high");
        }
    }
}

std::size_t HyperParamSpace::encoded_size() const {
    std::size_t n = 0;
    for (const auto& d : dims) n += d.kind == DimKind::categorical ? d.choices.size() : 1;
    return n;
}

const Dimension& HyperParamSpace::at(const std::string& name) const {
    for (const auto& d : dims) {
        if (d.name == name) return d;
    }
    throw std::out_of_range("no dimension named " + name);
}

HyperParamSpace dnn_space() {
    return {{Dimension::integer("initial_neurons", 11, 174), Dimension::continuous("neuron_pct", 0.35, 1.0),
             Dimension::continuous("neuron_shrink", 0.25, 0.95), Dimension::continuous("dropout", 0.10, 0.75),
             Dimension::integer("embedding_dim", 11, 87), Dimension::integer("n_layer_cap", 1, 15)}};
}

HyperParamSpace text_cnn_space() {
    return {{Dimension::categorical("filters_per_kernel", {64, 128, 256}), Dimension::integer("kernel_size", 1, 10),
             Dimension::integer("embedding_dim", 50, 150), Dimension::integer("n_conv_blocks", 1, 5)}};
}

HyperParamSpace space_for(Architecture arch) { return arch == Architecture::dnn ? dnn_space() : text_cnn_space(); }

ModelConfig config_from_point(Architecture arch, const Point& p) {
    auto count = [&](const char* k) { return static_cast<std::size_t>(std::llround(p.at(k))); };
    if (arch == Architecture::dnn) {
        DnnConfig c;
        c.initial_neurons = count("initial_neurons");
        c.neuron_pct = p.at("neuron_pct");
        c.neuron_shrink = p.at("neuron_shrink");
        c.dropout = p.at("dropout");
        c.embedding_dim = count("embedding_dim");
        c.n_layer_cap = count("n_layer_cap");
        c.validate();
        return c;
    }
    TextCnnConfig c;
    c.filters_per_kernel = count("filters_per_kernel");
    c.kernel_sizes = {count("kernel_size")};
    c.embedding_dim = count("embedding_dim");
    c.n_conv_blocks = count("n_conv_blocks");
    c.validate();
    return c;
}

namespace {

std::ptrdiff_t choice_index(const Dimension& d, double v) {
    for (std::size_t i = 0; i < d.choices.size(); ++i) {
        if (d.choices[i] == v) return static_cast<std::ptrdiff_t>(i);
    }
    return -1;
}

}  // namespace

bool contains(const HyperParamSpace& space, const Point& p) {
    for (const auto& d : space.dims) {
        auto it = p.find(d.name);
        if (it == p.end() || !std::isfinite(it->second)) return false;
        const double v = it->second;
        switch (d.kind) {
            case DimKind::categorical:
                if (choice_index(d, v) < 0) return false;
                break;
            case DimKind::integer:
                if (v != std::round(v)) return false;
                [[fallthrough]];
            case DimKind::continuous:
                if (v < d.low || v > d.high) return false;
                break;
        }
    }
    return true;
}

std::vector<double> encode_point(const HyperParamSpace& space, const Point& p) {
    std::vector<double> u;
    u.reserve(space.encoded_size());
    for (const auto& d : space.dims) {
        auto it = p.find(d.name);
        if (it == p.end()) throw OutOfSpaceError("point lacks dimension " + d.name);
        const double v = it->second;
        if (d.kind == DimKind::categorical) {
            const auto k = choice_index(d, v);
            if (k < 0) throw OutOfSpaceError(d.name + " = " + std::to_string(v) + " is not one of its choices");
            for (std::size_t i = 0; i < d.choices.size(); ++i) u.push_back(static_cast<std::ptrdiff_t>(i) == k ? 1.0 : 0.0);
        } else {
            if (!(v >= d.low && v <= d.high)) {
                throw OutOfSpaceError(d.name + " = " + std::to_string(v) + " outside [" + std::to_string(d.low) +
                                      ", " + std::to_string(d.high) + "]");
            }
            u.push_back((v - d.low) / (d.high - d.low));
        }
    }
    return u;
}

Point decode_point(const HyperParamSpace& space, std::span<const double> u) {
    if (u.size() != space.encoded_size()) throw std::invalid_argument("decode_point: encoding has the wrong length");
    Point p;
    std::size_t at = 0;
    for (const auto& d : space.dims) {
        if (d.kind == DimKind::categorical) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < d.choices.size(); ++i) {
                if (u[at + i] > u[at + best]) best = i;
            }
            p[d.name] = d.choices[best];
            at += d.choices.size();
            continue;
        }
        double v = d.low + std::clamp(u[at++], 0.0, 1.0) * (d.high - d.low);
        if (d.kind == DimKind::integer) v = std::clamp(std::round(v), d.low, d.high);
        p[d.name] = v;
    }
    return p;
}

Point point_from_latent(const HyperParamSpace& space, std::span<const double> latent) {
    if (latent.size() != space.dims.size()) throw std::invalid_argument("point_from_latent: wrong dimension count");
    Point p;
    for (std::size_t i = 0; i < space.dims.size(); ++i) {
        const auto& d = space.dims[i];
        const double t = std::clamp(latent[i], 0.0, 1.0);
        if (d.kind == DimKind::categorical) {
            const auto k = std::min(d.choices.size() - 1, static_cast<std::size_t>(t * static_cast<double>(d.choices.size())));
            p[d.name] = d.choices[k];
        } else if (d.kind == DimKind::integer) {
            // Equal-width bins per integer value so the end points are not under-sampled.
            const double span = d.high - d.low + 1.0;
            p[d.name] = std::min(d.high, d.low + std::floor(t * span));
        } else {
            p[d.name] = d.low + t * (d.high - d.low);
        }
    }
    return p;
}

// ---- Gaussian process -------------------------------------------------------

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

std::vector<double> log_grid(double lo, double hi, int n) {
    std::vector<double> g;
    for (int i = 0; i < n; ++i) g.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
    return g;
}

}  // namespace

GpSurrogate GpSurrogate::fit(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
    if (x.empty()) throw std::invalid_argument("surrogate fit needs at least one completed trial");
    if (x.size() != y.size()) throw std::invalid_argument("surrogate fit: inputs and targets differ in length");
    const std::size_t n = x.size();

    GpSurrogate gp;
    gp.x_ = x;
    double m = 0.0;
    for (double v : y) m += v;
    m /= static_cast<double>(n);
    double var = 0.0;
    for (double v : y) var += (v - m) * (v - m);
    var /= static_cast<double>(n);
    gp.y_mean_ = m;
    gp.y_scale_ = var > 0.0 ? std::sqrt(var) : 1.0;

    Eigen::VectorXd ys(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) ys[static_cast<Eigen::Index>(i)] = (y[i] - gp.y_mean_) / gp.y_scale_;

    Eigen::MatrixXd d2(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) d2(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = sq_dist(x[i], x[j]);
    }

    double best_lml = -std::numeric_limits<double>::infinity();
    Eigen::MatrixXd best_l;
    Eigen::VectorXd best_alpha;
    for (double ell : log_grid(0.05, 2.0, 8)) {
        for (double sf2 : log_grid(0.1, 10.0, 8)) {
            Eigen::MatrixXd k = (sf2 * (-d2.array() / (2.0 * ell * ell)).exp()).matrix();
            k.diagonal().array() += kJitter;
            Eigen::LLT<Eigen::MatrixXd> llt(k);
            if (llt.info() != Eigen::Success) continue;
            Eigen::VectorXd alpha = llt.solve(ys);
            const Eigen::MatrixXd l = llt.matrixL();
            const double lml = -0.5 * ys.dot(alpha) - l.diagonal().array().log().sum() -
                               0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
            if (lml > best_lml) {
                best_lml = lml;
                best_l = l;
                best_alpha = alpha;
                gp.length_scale_ = ell;
                gp.signal_variance_ = sf2;
            }
        }
    }
    if (!std::isfinite(best_lml)) throw std::runtime_error("surrogate fit: kernel matrix not positive definite on the grid");
    gp.lml_ = best_lml;
    gp.alpha_.assign(best_alpha.data(), best_alpha.data() + n);
    gp.chol_.resize(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) gp.chol_[i * n + j] = best_l(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    return gp;
}

GpSurrogate::Prediction GpSurrogate::predict(std::span<const double> x) const {
    const std::size_t n = x_.size();
    Eigen::VectorXd k(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        k[static_cast<Eigen::Index>(i)] =
            signal_variance_ * std::exp(-sq_dist(x_[i], x) / (2.0 * length_scale_ * length_scale_));
    }
    const Eigen::Map<const Eigen::VectorXd> alpha(alpha_.data(), static_cast<Eigen::Index>(n));
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> l(
        chol_.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    const Eigen::VectorXd v = l.triangularView<Eigen::Lower>().solve(k);
    const double mean_std = k.dot(alpha);
    double var_std = signal_variance_ - v.squaredNorm();
    // Within a couple of jitter units the variance is numerical residue at an
    // observed point.
    if (var_std <= 2.0 * kJitter) var_std = 0.0;
    return {y_mean_ + y_scale_ * mean_std, y_scale_ * std::sqrt(var_std)};
}

double expected_improvement(double mean, double sigma, double best) {
    const double gap = mean - best;
    if (!(sigma > 0.0)) return std::max(0.0, gap);
    const double z = gap / sigma;
    return std::max(0.0, gap * normal_cdf(z) + sigma * normal_pdf(z));
}

double expected_improvement(const GpSurrogate& gp, std::span<const double> x, double best) {
    const auto p = gp.predict(x);
    return expected_improvement(p.mean, p.stddev, best);
}

// ---- tuning loop ------------------------------------------------------------

namespace {

std::vector<std::vector<double>> latin_hypercube(std::size_t n, std::size_t dims, Rng& rng) {
    std::vector<std::vector<double>> pts(n, std::vector<double>(dims));
    std::vector<std::size_t> perm(n);
    for (std::size_t d = 0; d < dims; ++d) {
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        rng.shuffle(perm);
        for (std::size_t i = 0; i < n; ++i) {
            pts[i][d] = (static_cast<double>(perm[i]) + rng.uniform()) / static_cast<double>(n);
        }
    }
    return pts;
}

}  // namespace

TuneResult tune(const HyperParamSpace& space, const Objective& objective, const TuneOptions& options) {
    space.validate();
    if (options.n_init < 2 || options.budget < options.n_init) {
        throw std::invalid_argument("tune: need budget >= n_init >= 2");
    }
    if (options.candidates == 0) throw std::invalid_argument("tune: candidates must be positive");

    TuneResult result;
    auto evaluate = [&](Point p, bool initial) {
        Trial t;
        t.index = result.history.size();
        t.point = std::move(p);
        t.initial = initial;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            t.objective = objective(t.point);
            if (!std::isfinite(t.objective)) {
                t.status = TrialStatus::failed;
                t.error = "objective returned a non-finite value";
            }
        } catch (const std::exception& e) {
            t.status = TrialStatus::failed;
            t.error = e.what();
        }
        t.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (t.status == TrialStatus::failed) t.objective = std::numeric_limits<double>::quiet_NaN();
        if (options.on_trial) options.on_trial(t);
        result.history.push_back(std::move(t));
    };

    Rng design_rng(derive_seed(options.seed, "tune_initial_design"));
    for (const auto& latent : latin_hypercube(options.n_init, space.dims.size(), design_rng)) {
        evaluate(point_from_latent(space, latent), true);
    }

    Rng cand_rng(derive_seed(options.seed, "tune_candidates"));
    std::vector<double> latent(space.dims.size());
    while (result.history.size() < options.budget) {
        std::vector<std::vector<double>> xs;
        std::vector<double> ys;
        for (const auto& t : result.history) {
            if (t.status != TrialStatus::done) continue;
            xs.push_back(encode_point(space, t.point));
            ys.push_back(t.objective);
        }
        std::vector<Point> cands;
        cands.reserve(options.candidates);
        for (std::size_t c = 0; c < options.candidates; ++c) {
            for (auto& v : latent) v = cand_rng.uniform();
            cands.push_back(point_from_latent(space, latent));
        }
        TuneRound round;
        round.trial_index = result.history.size();
        if (xs.empty()) {
            // Nothing to model yet: fall back to the first random candidate.
            round.proposal = cands.front();
        } else {
            const auto gp = GpSurrogate::fit(xs, ys);
            round.incumbent = *std::max_element(ys.begin(), ys.end());
            round.ei.reserve(cands.size());
            std::size_t best = 0;
            for (std::size_t c = 0; c < cands.size(); ++c) {
                round.ei.push_back(expected_improvement(gp, encode_point(space, cands[c]), round.incumbent));
                if (round.ei[c] > round.ei[best]) best = c;
            }
            round.proposal = cands[best];
        }
        if (options.on_round) options.on_round(round);
        evaluate(round.proposal, false);
    }

    for (const auto& t : result.history) {
        if (t.status != TrialStatus::done) continue;
        if (!result.best || t.objective > result.history[*result.best].objective) result.best = t.index;
    }
    return result;
}

std::string history_csv(const HyperParamSpace& space, std::span<const Trial> history) {
    std::vector<std::string> header{"trial"};
    for (const auto& d : space.dims) header.push_back(d.name);
    for (const char* h : {"objective", "status", "wall_seconds", "initial", "error"}) header.emplace_back(h);
    std::string out = csv_line(header);
    char buf[64];
    for (const auto& t : history) {
        std::vector<std::string> row{std::to_string(t.index)};
        for (const auto& d : space.dims) {
            std::snprintf(buf, sizeof buf, "%.10g", t.point.at(d.name));
            row.emplace_back(buf);
        }
        if (t.status == TrialStatus::done) {
            std::snprintf(buf, sizeof buf, "%.10g", t.objective);
            row.emplace_back(buf);
        } else {
            row.emplace_back("");
        }
        row.emplace_back(t.status == TrialStatus::done ? "done" : "failed");
        std::snprintf(buf, sizeof buf, "%.3f", t.wall_seconds);
        row.emplace_back(buf);
        row.emplace_back(t.initial ? "1" : "0");
        row.push_back(t.error);
        out += csv_line(row);
    }
    return out;
}

}  // namespace hscls
