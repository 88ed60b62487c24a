#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hscls/models.hpp"

namespace hscls {

enum class DimKind { continuous, integer, categorical };

struct Dimension {
    std::string name;
    DimKind kind = DimKind::continuous;
    double low = 0.0;
    double high = 1.0;
    std::vector<double> choices;  // categorical only

    static Dimension continuous(std::string name, double low, double high);
    static Dimension integer(std::string name, double low, double high);
    static Dimension categorical(std::string name, std::vector<double> choices);
};

struct HyperParamSpace {
    std::vector<Dimension> dims;

    void validate() const;
    /// Length of the unit-cube encoding (categoricals take one slot per choice).
    std::size_t encoded_size() const;
    const Dimension& at(const std::string& name) const;
};

/// Hyperparameter values by name; categorical values hold the chosen value.
using Point = std::map<std::string, double>;

/// Ranges for initial_neurons, neuron_pct, neuron_shrink, dropout,
/// embedding_dim and n_layer_cap.
HyperParamSpace dnn_space();
/// filters_per_kernel in {64,128,256}, one kernel size 1-10, embedding_dim
/// 50-150, n_conv_blocks 1-5.
HyperParamSpace text_cnn_space();
HyperParamSpace space_for(Architecture arch);
ModelConfig config_from_point(Architecture arch, const Point& p);

class OutOfSpaceError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Continuous/integer dims min-max scaled to [0,1]; categoricals one-hot.
std::vector<double> encode_point(const HyperParamSpace& space, const Point& p);
/// Inverse of encode_point: clamps, rounds integers, takes the argmax slot of
/// each one-hot block.
Point decode_point(const HyperParamSpace& space, std::span<const double> u);
/// Maps one uniform coordinate per dimension to a valid point.
Point point_from_latent(const HyperParamSpace& space, std::span<const double> latent);
bool contains(const HyperParamSpace& space, const Point& p);

/// Gaussian-process regression with an RBF kernel on standardized targets.
class GpSurrogate {
public:
    static constexpr double kJitter = 1e-6;

    /// Picks length scale and signal variance by maximizing the log marginal
    /// likelihood over a fixed 8 x 8 log-spaced grid.
    static GpSurrogate fit(const std::vector<std::vector<double>>& x, const std::vector<double>& y);

    struct Prediction {
        double mean;
        double stddev;  // 0 when the variance is within the jitter level
    };
    Prediction predict(std::span<const double> x) const;

    double length_scale() const { return length_scale_; }
    /// In the units of the targets.
    double signal_variance() const { return signal_variance_ * y_scale_ * y_scale_; }
    double log_marginal_likelihood() const { return lml_; }

private:
    std::vector<std::vector<double>> x_;
    std::vector<double> alpha_;
    std::vector<double> chol_;  // lower-triangular factor, row-major n x n
    double y_mean_ = 0.0;
    double y_scale_ = 1.0;
    double length_scale_ = 1.0;
    double signal_variance_ = 1.0;  // standardized units
    double lml_ = 0.0;
};

/// Maximization convention; max(0, mean - best) when sigma is 0.
double expected_improvement(double mean, double sigma, double best);
double expected_improvement(const GpSurrogate& gp, std::span<const double> x, double best);

enum class TrialStatus { done, failed };

struct Trial {
    std::size_t index = 0;
    Point point;
    double objective = 0.0;
    TrialStatus status = TrialStatus::done;
    std::string error;
    double wall_seconds = 0.0;
    bool initial = false;  // from the Latin-hypercube design
};

struct TuneRound {
    std::size_t trial_index = 0;
    std::vector<double> ei;  // one per candidate
    double incumbent = 0.0;
    Point proposal;
};

struct TuneOptions {
    std::size_t budget = 20;
    std::size_t n_init = 8;
    std::size_t candidates = 1024;
    std::uint64_t seed = 0;
    std::function<void(const TuneRound&)> on_round;
    std::function<void(const Trial&)> on_trial;
};

struct TuneResult {
    std::vector<Trial> history;
    std::optional<std::size_t> best;  // empty when every trial failed
};

class TuningFailedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Objective = std::function<double(const Point&)>;

/// n_init Latin-hypercube trials, then GP fit + EI argmax over seeded
/// candidates for the remaining budget. Objective exceptions and non-finite
/// values become failed trials.
TuneResult tune(const HyperParamSpace& space, const Objective& objective, const TuneOptions& options);

/// One row per trial: index, each dimension, objective, status, wall_seconds, error.
std::string history_csv(const HyperParamSpace& space, std::span<const Trial> history);

}  // namespace hscls
