#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cathnav::nn {

class NnError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fully connected network: ReLU on hidden layers, linear output. Parameters
// live in one flat vector, layer by layer: W (fan_out x fan_in, row-major)
// followed by b (fan_out).
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<int> sizes);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  std::size_t param_count() const { return params.size(); }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
  void init(std::mt19937_64& rng);

  // Per-layer inputs and pre-activations recorded for backward().
  struct Tape {
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> pre;
  };

  std::vector<double> forward(std::span<const double> x) const;
  std::vector<double> forward(std::span<const double> x, Tape& tape) const;

  // Accumulates dL/dparams into grad (param_count long) and returns dL/dx.
  std::vector<double> backward(const Tape& tape, std::span<const double> dy, std::vector<double>& grad) const;

  std::vector<double> params;

 private:
  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;  // start of each layer's weights
};

struct GradientReport {
  std::vector<double> grad;
  double loss = 0.0;
};

// loss_fn returns the loss and writes dL/dy.
using LossFn = std::function<double(std::span<const double> y, std::vector<double>& dy)>;
GradientReport gradient(const Mlp& net, std::span<const double> x, const LossFn& loss_fn);

// Central finite differences against backward() on random inputs, with the
// loss sum(c y) + 0.5 |y|^2 for random c. Each probe perturbs one random
// parameter; the result is the largest |g - fd| / max(|g| + |fd|, 1e-8).
double gradient_check(const Mlp& net, int probes, std::uint64_t seed, double h = 1e-6);

struct AdamParams {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, AdamParams hp) : hp_(hp), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grads);
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }
  long steps() const { return t_; }

 private:
  AdamParams hp_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

constexpr double kLogStdMin = -20.0;
constexpr double kLogStdMax = 2.0;

struct GaussianPolicyOutput {
  std::vector<double> mean;
  std::vector<double> log_std;      // clamped
  std::vector<bool> log_std_clamped;
  std::vector<double> noise;        // xi
  std::vector<double> pre_squash;   // u = mean + exp(log_std) xi
  std::vector<double> action;       // tanh(u), strictly inside (-1, 1)
  double log_prob = 0.0;            // includes the tanh Jacobian
};

// Splits a 2d head output into mean and raw log-std and squashes mean + sigma*xi.
GaussianPolicyOutput squashed_gaussian(std::span<const double> head, std::span<const double> xi);

// log(1 - tanh(u)^2), stable for large |u|.
double log1m_tanh_sq(double u);

GaussianPolicyOutput sample_squashed_gaussian(const Mlp& policy, std::span<const double> state,
                                              std::uint64_t noise_seed);

// Deterministic policy action tanh(mean).
std::vector<double> mean_action(const Mlp& policy, std::span<const double> state);

// Checkpoint: "CATHNET1", u32 version, u32 network count, then per network
// u32 name length, name bytes, u32 layer count, u32 sizes, u64 param count,
// f64 parameters; all little-endian.
struct NamedNet {
  std::string name;
  const Mlp* net;
};
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedNet>& nets);
std::vector<std::pair<std::string, Mlp>> load_checkpoint(const std::filesystem::path& path);

double sigmoid(double x);

}  // namespace cathnav::nn
