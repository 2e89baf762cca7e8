#include "cathnav/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "cathnav/kernels.hpp"

namespace cathnav::nn {

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw NnError("network needs at least input and output sizes");
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw NnError("layer sizes must be positive");
    offsets_.push_back(n);
    n += static_cast<std::size_t>(sizes_[l] + 1) * sizes_[l + 1];
  }
  params.assign(n, 0.0);
}

void Mlp::init(std::mt19937_64& rng) {
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int in = sizes_[l], out = sizes_[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    const std::size_t count = static_cast<std::size_t>(in + 1) * out;
    for (std::size_t i = 0; i < count; ++i) params[offsets_[l] + i] = u(rng);
  }
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  Tape t;
  return forward(x, t);
}

std::vector<double> Mlp::forward(std::span<const double> x, Tape& tape) const {
  if (static_cast<int>(x.size()) != input_dim())
    throw NnError("input size " + std::to_string(x.size()) + " != " + std::to_string(input_dim()));
  const std::size_t layers = sizes_.size() - 1;
  tape.inputs.resize(layers);
  tape.pre.resize(layers);
  std::vector<double> a(x.begin(), x.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = sizes_[l], out = sizes_[l + 1];
    const double* w = params.data() + offsets_[l];
    const double* b = w + static_cast<std::size_t>(in) * out;
    tape.inputs[l] = a;
    auto& z = tape.pre[l];
    z.resize(out);
    for (int j = 0; j < out; ++j) z[j] = kernels::dot(w + static_cast<std::size_t>(j) * in, a.data(), in) + b[j];
    a = z;
    if (l + 1 < layers)
      for (auto& v : a) v = v > 0.0 ? v : 0.0;
  }
  return a;
}

std::vector<double> Mlp::backward(const Tape& tape, std::span<const double> dy, std::vector<double>& grad) const {
  if (grad.size() != params.size()) grad.assign(params.size(), 0.0);
  const std::size_t layers = sizes_.size() - 1;
  std::vector<double> delta(dy.begin(), dy.end());
  for (std::size_t l = layers; l-- > 0;) {
    const int in = sizes_[l], out = sizes_[l + 1];
    if (l + 1 < layers)
      for (int j = 0; j < out; ++j)
        if (tape.pre[l][j] <= 0.0) delta[j] = 0.0;
    const double* w = params.data() + offsets_[l];
    double* gw = grad.data() + offsets_[l];
    double* gb = gw + static_cast<std::size_t>(in) * out;
    const auto& a = tape.inputs[l];
    std::vector<double> dx(in, 0.0);
    for (int j = 0; j < out; ++j) {
      const double d = delta[j];
      if (d == 0.0) continue;
      kernels::axpy(d, a.data(), gw + static_cast<std::size_t>(j) * in, in);
      gb[j] += d;
      kernels::axpy(d, w + static_cast<std::size_t>(j) * in, dx.data(), in);
    }
    delta = std::move(dx);
  }
  return delta;
}

GradientReport gradient(const Mlp& net, std::span<const double> x, const LossFn& loss_fn) {
  Mlp::Tape tape;
  const auto y = net.forward(x, tape);
  std::vector<double> dy(y.size(), 0.0);
  GradientReport r;
  r.loss = loss_fn(y, dy);
  r.grad.assign(net.param_count(), 0.0);
  net.backward(tape, dy, r.grad);
  if (!std::isfinite(r.loss)) throw NnError("non-finite loss");
  for (double g : r.grad)
    if (!std::isfinite(g)) throw NnError("non-finite gradient");
  return r;
}

double gradient_check(const Mlp& net, int probes, std::uint64_t seed, double h) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, net.param_count() - 1);
  double worst = 0.0;
  for (int p = 0; p < probes; ++p) {
    std::vector<double> x(net.input_dim()), c(net.output_dim());
    for (auto& v : x) v = n(rng);
    for (auto& v : c) v = n(rng);
    auto loss = [&](std::span<const double> y, std::vector<double>& dy) {
      double l = 0.0;
      dy.assign(y.size(), 0.0);
      for (std::size_t i = 0; i < y.size(); ++i) {
        l += c[i] * y[i] + 0.5 * y[i] * y[i];
        dy[i] = c[i] + y[i];
      }
      return l;
    };
    const auto rep = gradient(net, x, loss);
    const std::size_t k = pick(rng);
    Mlp probe = net;
    std::vector<double> scratch;
    probe.params[k] = net.params[k] + h;
    const double up = loss(probe.forward(x), scratch);
    probe.params[k] = net.params[k] - h;
    const double down = loss(probe.forward(x), scratch);
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(rep.grad[k] - fd) / std::max(std::abs(rep.grad[k]) + std::abs(fd), 1e-8));
  }
  return worst;
}

void Adam::step(std::vector<double>& params, const std::vector<double>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) throw NnError("Adam: length mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(hp_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(hp_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = hp_.beta1 * m_[i] + (1.0 - hp_.beta1) * grads[i];
    v_[i] = hp_.beta2 * v_[i] + (1.0 - hp_.beta2) * grads[i] * grads[i];
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    params[i] -= hp_.lr * mhat / (std::sqrt(vhat) + hp_.eps);
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log1m_tanh_sq(double u) {
  // 1 - tanh^2 u = 4 / (e^u + e^-u)^2  =>  2 (log 2 - |u| - log1p(e^{-2|u|}))
  const double a = std::abs(u);
  return 2.0 * (std::log(2.0) - a - std::log1p(std::exp(-2.0 * a)));
}

GaussianPolicyOutput squashed_gaussian(std::span<const double> head, std::span<const double> xi) {
  const std::size_t d = xi.size();
  if (head.size() != 2 * d) throw NnError("policy head must hold mean and log-std");
  GaussianPolicyOutput o;
  o.mean.assign(head.begin(), head.begin() + d);
  o.log_std.resize(d);
  o.log_std_clamped.resize(d);
  o.noise.assign(xi.begin(), xi.end());
  o.pre_squash.resize(d);
  o.action.resize(d);
  constexpr double half_log_2pi = 0.91893853320467274178;
  const double below_one = std::nextafter(1.0, 0.0);
  double lp = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double raw = head[d + i];
    o.log_std[i] = std::clamp(raw, kLogStdMin, kLogStdMax);
    o.log_std_clamped[i] = raw < kLogStdMin || raw > kLogStdMax;
    const double u = o.mean[i] + std::exp(o.log_std[i]) * xi[i];
    o.pre_squash[i] = u;
    o.action[i] = std::clamp(std::tanh(u), -below_one, below_one);
    lp += -0.5 * xi[i] * xi[i] - o.log_std[i] - half_log_2pi - log1m_tanh_sq(u);
  }
  o.log_prob = lp;
  return o;
}

GaussianPolicyOutput sample_squashed_gaussian(const Mlp& policy, std::span<const double> state,
                                              std::uint64_t noise_seed) {
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto head = policy.forward(state);
  std::vector<double> xi(head.size() / 2);
  for (auto& v : xi) v = n(rng);
  return squashed_gaussian(head, xi);
}

std::vector<double> mean_action(const Mlp& policy, std::span<const double> state) {
  const auto head = policy.forward(state);
  std::vector<double> a(head.size() / 2);
  const double below_one = std::nextafter(1.0, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::clamp(std::tanh(head[i]), -below_one, below_one);
  return a;
}

namespace {

constexpr char kMagic[8] = {'C', 'A', 'T', 'H', 'N', 'E', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw NnError("truncated checkpoint " + path.string());
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedNet>& nets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NnError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(nets.size()));
  for (const auto& nn : nets) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(nn.name.size()));
    out.write(nn.name.data(), static_cast<std::streamsize>(nn.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(nn.net->sizes().size()));
    for (int s : nn.net->sizes()) put<std::uint32_t>(out, static_cast<std::uint32_t>(s));
    put<std::uint64_t>(out, nn.net->param_count());
    out.write(reinterpret_cast<const char*>(nn.net->params.data()),
              static_cast<std::streamsize>(nn.net->params.size() * sizeof(double)));
  }
  if (!out) throw NnError("failed writing checkpoint " + path.string());
}

std::vector<std::pair<std::string, Mlp>> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NnError("cannot read checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw NnError("bad checkpoint magic in " + path.string());
  if (get<std::uint32_t>(in, path) != kVersion) throw NnError("unsupported checkpoint version");
  const auto count = get<std::uint32_t>(in, path);
  std::vector<std::pair<std::string, Mlp>> nets;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = get<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto layers = get<std::uint32_t>(in, path);
    std::vector<int> sizes(layers);
    for (auto& s : sizes) s = static_cast<int>(get<std::uint32_t>(in, path));
    Mlp net(sizes);
    if (get<std::uint64_t>(in, path) != net.param_count()) throw NnError("checkpoint shape table mismatch for " + name);
    in.read(reinterpret_cast<char*>(net.params.data()), static_cast<std::streamsize>(net.params.size() * sizeof(double)));
    if (!in) throw NnError("truncated checkpoint " + path.string());
    nets.emplace_back(std::move(name), std::move(net));
  }
  return nets;
}

}  // namespace cathnav::nn
