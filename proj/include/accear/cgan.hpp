#pragma once

// Conditional GAN mapping accelerometer spectrogram images to mel images:
// a U-Net generator fed (condition, noise) and a patch discriminator that
// scores (condition, candidate) pairs.

#include <accear/autodiff/graph.hpp>
#include <accear/autodiff/ops.hpp>
#include <accear/autodiff/optim.hpp>
#include <accear/error.hpp>
#include <accear/image_io.hpp>
#include <accear/matrix.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace accear::cgan {

using ad::Activation;
using ad::ConvGeometry;
using ad::Graph;
using ad::NormMode;
using ad::Parameter;
using ad::Shape;
using ad::Tensor;
using ad::Var;

struct NetConfig {
  std::size_t image_size = 128;
  std::size_t ngf = 64;
  std::size_t ndf = 64;

  void validate() const {
    if (image_size < 32 || (image_size & (image_size - 1)) != 0) {
      throw ParameterError("image size must be a power of two >= 32");
    }
    if (ngf == 0 || ndf == 0) throw ParameterError("channel base must be positive");
  }

  /// Encoder levels from image_size down to a 2x2 bottleneck.
  std::size_t levels() const {
    std::size_t l = 0;
    for (std::size_t s = image_size; s > 2; s /= 2) ++l;
    return l;
  }

  std::size_t generator_channels(std::size_t level) const {
    return ngf * std::min<std::size_t>(std::size_t{1} << level, 8);
  }

  std::string canonical() const {
    return "accear-cgan;size=" + std::to_string(image_size) + ";ngf=" + std::to_string(ngf) +
           ";ndf=" + std::to_string(ndf);
  }
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t config_digest(const NetConfig& cfg) { return fnv1a(cfg.canonical()); }

/// Convolution (or transposed convolution) with optional bias and batch norm.
template <class T>
struct ConvBlock {
  bool transpose = false;
  ConvGeometry geom{2, 1};
  Parameter<T> weight;
  bool has_bias = false;
  Parameter<T> bias;
  bool has_norm = false;
  Parameter<T> gamma;
  Parameter<T> beta;
  ad::RunningStats running;

  ConvBlock() = default;
  ConvBlock(const std::string& name, bool transposed, std::size_t in, std::size_t out, ConvGeometry g, bool norm)
      : transpose(transposed),
        geom(g),
        weight(name + ".weight", transposed ? Shape{in, out, 4, 4} : Shape{out, in, 4, 4}),
        has_bias(!norm),
        has_norm(norm) {
    if (has_bias) bias = Parameter<T>(name + ".bias", Shape{1, out, 1, 1});
    if (has_norm) {
      gamma = Parameter<T>(name + ".gamma", Shape{1, out, 1, 1});
      beta = Parameter<T>(name + ".beta", Shape{1, out, 1, 1});
      running = ad::RunningStats(out);
    }
  }

  void init(std::mt19937_64& rng) {
    std::normal_distribution<double> w(0.0, 0.02), gm(1.0, 0.02);
    for (auto& v : weight.value.data) v = static_cast<T>(w(rng));
    if (has_bias) std::fill(bias.value.data.begin(), bias.value.data.end(), T(0));
    if (has_norm) {
      for (auto& v : gamma.value.data) v = static_cast<T>(gm(rng));
      std::fill(beta.value.data.begin(), beta.value.data.end(), T(0));
    }
  }

  /// `track` folds batch statistics into the running estimate (training only).
  Var<T> apply(Graph<T>& g, Var<T> x, bool trainable, NormMode mode, bool track) {
    const Var<T> w = g.parameter(weight, trainable);
    const Var<T> b = has_bias ? g.parameter(bias, trainable) : Var<T>{};
    Var<T> y = transpose ? ad::conv_transpose2d(x, w, b, geom) : ad::conv2d(x, w, b, geom);
    if (has_norm) {
      ad::RunningStats* rs = (mode == NormMode::inference || track) ? &running : nullptr;
      y = ad::batch_norm(y, g.parameter(gamma, trainable), g.parameter(beta, trainable), mode, rs);
    }
    return y;
  }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&weight);
    if (has_bias) out.push_back(&bias);
    if (has_norm) {
      out.push_back(&gamma);
      out.push_back(&beta);
    }
  }
};

/// U-Net: encoder level i is wired to the decoder level producing the same
/// spatial size. Input (N, 2, S, S) = condition and noise; output (N, 1, S, S)
/// after tanh.
template <class T>
class GeneratorNet {
 public:
  GeneratorNet() = default;
  explicit GeneratorNet(const NetConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const std::size_t L = cfg.levels();
    for (std::size_t i = 0; i < L; ++i) {
      const std::size_t in = i == 0 ? 2 : cfg.generator_channels(i - 1);
      const bool norm = i != 0 && i != L - 1;
      enc_.emplace_back("g.enc" + std::to_string(i), false, in, cfg.generator_channels(i), ConvGeometry{2, 1}, norm);
    }
    // dec_[i] produces the resolution of encoder input level i
    dec_.resize(L);
    for (std::size_t i = L; i-- > 0;) {
      const std::size_t in = i == L - 1 ? cfg.generator_channels(i) : 2 * cfg.generator_channels(i);
      const std::size_t out = i == 0 ? 1 : cfg.generator_channels(i - 1);
      dec_[i] = ConvBlock<T>("g.dec" + std::to_string(i), true, in, out, ConvGeometry{2, 1}, i != 0);
    }
  }

  const NetConfig& config() const { return cfg_; }

  void init(std::mt19937_64& rng) {
    for (auto& b : enc_) b.init(rng);
    for (std::size_t i = dec_.size(); i-- > 0;) dec_[i].init(rng);
  }

  Var<T> forward(Graph<T>& g, Var<T> input, bool trainable, NormMode mode = NormMode::training, bool track = false) {
    const Shape s = input.shape();
    if (s.c != 2 || s.h != cfg_.image_size || s.w != cfg_.image_size) {
      throw ShapeError("generator expects (N, 2, " + std::to_string(cfg_.image_size) + ", " +
                       std::to_string(cfg_.image_size) + "), got " + s.str());
    }
    const std::size_t L = enc_.size();
    std::vector<Var<T>> skips(L);
    Var<T> h = input;
    for (std::size_t i = 0; i < L; ++i) {
      if (i > 0) h = ad::activation(Activation::leaky_relu, h);
      h = enc_[i].apply(g, h, trainable, mode, track);
      skips[i] = h;
    }
    for (std::size_t i = L; i-- > 0;) {
      if (i != L - 1) h = ad::concat_channels(h, skips[i]);
      h = dec_[i].apply(g, ad::activation(Activation::relu, h), trainable, mode, track);
    }
    return ad::activation(Activation::tanh, h);
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& b : enc_) b.collect(out);
    for (std::size_t i = dec_.size(); i-- > 0;) dec_[i].collect(out);
    return out;
  }

  std::vector<ad::RunningStats*> running_stats() {
    std::vector<ad::RunningStats*> out;
    for (auto& b : enc_) {
      if (b.has_norm) out.push_back(&b.running);
    }
    for (std::size_t i = dec_.size(); i-- > 0;) {
      if (dec_[i].has_norm) out.push_back(&dec_[i].running);
    }
    return out;
  }

 private:
  NetConfig cfg_;
  std::vector<ConvBlock<T>> enc_;
  std::vector<ConvBlock<T>> dec_;
};

/// Three stride-2 convolutions, then two stride-1 convolutions down to a
/// one-channel grid of patch logits.
template <class T>
class DiscriminatorNet {
 public:
  DiscriminatorNet() = default;
  explicit DiscriminatorNet(const NetConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const std::size_t f = cfg.ndf;
    layers_.emplace_back("d.conv0", false, 2, f, ConvGeometry{2, 1}, false);
    layers_.emplace_back("d.conv1", false, f, 2 * f, ConvGeometry{2, 1}, true);
    layers_.emplace_back("d.conv2", false, 2 * f, 4 * f, ConvGeometry{2, 1}, true);
    layers_.emplace_back("d.conv3", false, 4 * f, 8 * f, ConvGeometry{1, 1}, true);
    layers_.emplace_back("d.conv4", false, 8 * f, 1, ConvGeometry{1, 1}, false);
  }

  void init(std::mt19937_64& rng) {
    for (auto& l : layers_) l.init(rng);
  }

  /// Side of the square logit grid for a given input side.
  static std::size_t grid_size(std::size_t image_size) {
    std::size_t s = image_size;
    for (int i = 0; i < 3; ++i) s = (s + 2 - 4) / 2 + 1;
    for (int i = 0; i < 2; ++i) s = s + 2 - 4 + 1;
    return s;
  }

  Var<T> forward(Graph<T>& g, Var<T> condition, Var<T> candidate, bool trainable, bool track = false) {
    Var<T> h = ad::concat_channels(condition, candidate);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i].apply(g, h, trainable, NormMode::training, track);
      if (i + 1 < layers_.size()) h = ad::activation(Activation::leaky_relu, h);
    }
    return h;
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& l : layers_) l.collect(out);
    return out;
  }

  std::vector<ad::RunningStats*> running_stats() {
    std::vector<ad::RunningStats*> out;
    for (auto& l : layers_) {
      if (l.has_norm) out.push_back(&l.running);
    }
    return out;
  }

 private:
  NetConfig cfg_;
  std::vector<ConvBlock<T>> layers_;
};

/// Mean of sigmoid over the patch grid of one sample.
template <class T>
double decision(const Tensor<T>& logits) {
  double s = 0;
  for (const T& z : logits.data) s += 1.0 / (1.0 + std::exp(-static_cast<double>(z)));
  return s / static_cast<double>(logits.data.size());
}

// ---------------------------------------------------------------------------
// Image <-> tensor

/// [0, 1] image rows (row 0 = lowest frequency) to a [-1, 1] tensor channel.
template <class T>
void write_image(Tensor<T>& t, std::size_t n, std::size_t c, const Matrix& img) {
  if (img.rows != t.shape.h || img.cols != t.shape.w) throw ShapeError("image does not match tensor geometry");
  T* dst = t.sample(n) + c * t.shape.plane();
  for (std::size_t i = 0; i < img.data.size(); ++i) dst[i] = static_cast<T>(2.0 * img.data[i] - 1.0);
}

template <class T>
void write_noise(Tensor<T>& t, std::size_t n, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  T* dst = t.sample(n) + c * t.shape.plane();
  for (std::size_t i = 0; i < t.shape.plane(); ++i) dst[i] = static_cast<T>(d(rng));
}

/// [-1, 1] tensor channel back to a [0, 1] image.
template <class T>
Matrix read_image(const Tensor<T>& t, std::size_t n, std::size_t c) {
  Matrix m(t.shape.h, t.shape.w);
  const T* src = t.sample(n) + c * t.shape.plane();
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = std::clamp(0.5 * (static_cast<double>(src[i]) + 1.0), 0.0, 1.0);
  return m;
}

inline double mean_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("mean_abs_diff shape mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.data.size());
}

// ---------------------------------------------------------------------------
// Objective and training

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t phase1_epochs = 100;
  double lr = 2e-4;
  std::size_t batch_size = 1;
  std::uint64_t seed = 1;
  double lambda = 100.0;
  std::size_t checkpoint_every = 10;

  void validate() const {
    if (epochs < phase1_epochs) throw ParameterError("epochs must be >= phase-1 epochs");
    if (batch_size == 0) throw ParameterError("batch size must be >= 1");
    if (!(lr > 0) || !std::isfinite(lr)) throw ParameterError("learning rate must be positive");
    if (!(lambda >= 0) || !std::isfinite(lambda)) throw ParameterError("lambda must be non-negative");
  }
};

struct TrainingPair {
  Matrix condition;  // [0, 1]
  Matrix target;     // [0, 1]
};

struct StepLosses {
  double d_loss = 0;
  double g_loss = 0;
  double g_adv = 0;
  double l1 = 0;  // mean |G - target| in [0, 1] image units
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double g_loss = 0;
  double d_loss = 0;
  double l1 = 0;
};

inline void require_finite(double v, const std::string& what, std::size_t epoch, std::size_t iteration) {
  if (!std::isfinite(v)) {
    throw NumericError("non-finite " + what + " at epoch " + std::to_string(epoch) + ", iteration " +
                       std::to_string(iteration));
  }
}

/// Generator, discriminator and optimizer state trained in 32-bit floats.
class GanModel {
 public:
  using T = float;

  GanModel() = default;
  explicit GanModel(const NetConfig& cfg, std::uint64_t init_seed = 1) : cfg_(cfg), g_(cfg), d_(cfg) {
    std::mt19937_64 rng(init_seed);
    g_.init(rng);
    d_.init(rng);
  }

  const NetConfig& config() const { return cfg_; }
  GeneratorNet<T>& generator() { return g_; }
  DiscriminatorNet<T>& discriminator() { return d_; }
  ad::AdamState<T>& adam_g() { return adam_g_; }
  ad::AdamState<T>& adam_d() { return adam_d_; }
  std::size_t epochs_done() const { return epochs_done_; }
  void set_epochs_done(std::size_t e) { epochs_done_ = e; }

  Tensor<T> generator_input(std::span<const TrainingPair* const> batch, std::span<const std::uint64_t> noise_seeds) const {
    const std::size_t s = cfg_.image_size;
    Tensor<T> in(Shape{batch.size(), 2, s, s});
    for (std::size_t n = 0; n < batch.size(); ++n) {
      write_image(in, n, 0, batch[n]->condition);
      write_noise(in, n, 1, noise_seeds[n]);
    }
    return in;
  }

  Tensor<T> stack(std::span<const TrainingPair* const> batch, bool targets) const {
    const std::size_t s = cfg_.image_size;
    Tensor<T> t(Shape{batch.size(), 1, s, s});
    for (std::size_t n = 0; n < batch.size(); ++n) write_image(t, n, 0, targets ? batch[n]->target : batch[n]->condition);
    return t;
  }

  /// One discriminator update with the generator frozen. Returns d_loss.
  double discriminator_step(std::span<const TrainingPair* const> batch, std::span<const std::uint64_t> noise_seeds,
                            bool use_adam, double lr) {
    Tensor<T> fake;
    {
      Graph<T> gg;
      fake = g_.forward(gg, gg.constant(generator_input(batch, noise_seeds)), false).value();
    }
    Graph<T> g;
    const auto cond = g.constant(stack(batch, false));
    const auto real_logits = d_.forward(g, cond, g.constant(stack(batch, true)), true, true);
    const auto fake_logits = d_.forward(g, cond, g.constant(std::move(fake)), true, true);
    const auto loss = ad::add(ad::bce_with_logits(real_logits, T(1)), ad::bce_with_logits(fake_logits, T(0)));
    const double value = loss.value().data[0];
    auto params = d_.parameters();
    ad::zero_grads(params);
    g.backward(loss);
    update(params, adam_d_, use_adam, lr);
    return value;
  }

  /// One generator update with the discriminator frozen.
  StepLosses generator_step(std::span<const TrainingPair* const> batch, std::span<const std::uint64_t> noise_seeds,
                            double lambda, bool use_adam, double lr) {
    Graph<T> g;
    const auto fake = g_.forward(g, g.constant(generator_input(batch, noise_seeds)), true, NormMode::training, true);
    const auto cond = g.constant(stack(batch, false));
    const auto logits = d_.forward(g, cond, fake, false, false);
    const auto adv = ad::bce_with_logits(logits, T(1));
    const auto l1 = ad::l1_loss(fake, g.constant(stack(batch, true)));
    const auto loss = ad::add(adv, ad::scale(l1, static_cast<T>(lambda)));
    StepLosses out;
    out.g_adv = adv.value().data[0];
    out.l1 = 0.5 * l1.value().data[0];
    out.g_loss = loss.value().data[0];
    auto params = g_.parameters();
    ad::zero_grads(params);
    g.backward(loss);
    update(params, adam_g_, use_adam, lr);
    return out;
  }

  /// Deterministic given (condition, seed). Batch statistics normalize the
  /// activations, as during training.
  Matrix generate(const Matrix& condition, std::uint64_t noise_seed) {
    const TrainingPair p{condition, {}};
    const TrainingPair* batch[1] = {&p};
    const std::uint64_t seeds[1] = {noise_seed};
    Graph<T> g;
    const auto out = g_.forward(g, g.constant(generator_input(batch, seeds)), false);
    return read_image(out.value(), 0, 0);
  }

 private:
  static void update(std::vector<Parameter<T>*>& params, ad::AdamState<T>& state, bool use_adam, double lr) {
    if (use_adam) {
      ad::AdamHyper h;
      h.lr = lr;
      ad::adam_step(params, state, h);
    } else {
      ad::sgd_step(params, lr);
    }
  }

  NetConfig cfg_;
  GeneratorNet<T> g_;
  DiscriminatorNet<T> d_;
  ad::AdamState<T> adam_g_;
  ad::AdamState<T> adam_d_;
  std::size_t epochs_done_ = 0;
};

/// Per-epoch iteration order and noise seeds derive from (seed, epoch) only,
/// so a resumed run replays the same stream as an uninterrupted one.
inline std::mt19937_64 epoch_rng(std::uint64_t seed, std::size_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x6a09e667U};
  return std::mt19937_64(seq);
}

/// Fisher-Yates with an explicit modulus draw, independent of the standard
/// library's distribution implementations.
inline void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

/// Runs the next epoch (1-based numbering continues from model.epochs_done()).
inline EpochStats train_epoch(GanModel& model, const std::vector<TrainingPair>& pairs, const TrainConfig& cfg) {
  if (pairs.empty()) throw InputError("no training pairs");
  const std::size_t epoch = model.epochs_done() + 1;
  const bool use_adam = epoch > cfg.phase1_epochs;
  auto rng = epoch_rng(cfg.seed, epoch);
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle_indices(order, rng);

  EpochStats stats;
  stats.epoch = epoch;
  std::size_t iterations = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t m = std::min(cfg.batch_size, order.size() - start);
    std::vector<const TrainingPair*> batch(m);
    std::vector<std::uint64_t> d_seeds(m), g_seeds(m);
    for (std::size_t k = 0; k < m; ++k) batch[k] = &pairs[order[start + k]];
    for (auto& s : d_seeds) s = rng();
    for (auto& s : g_seeds) s = rng();

    const double d_loss = model.discriminator_step(batch, d_seeds, use_adam, cfg.lr);
    require_finite(d_loss, "discriminator loss", epoch, iterations);
    const auto g = model.generator_step(batch, g_seeds, cfg.lambda, use_adam, cfg.lr);
    require_finite(g.g_loss, "generator loss", epoch, iterations);
    stats.d_loss += d_loss;
    stats.g_loss += g.g_loss;
    stats.l1 += g.l1;
    ++iterations;
  }
  stats.d_loss /= static_cast<double>(iterations);
  stats.g_loss /= static_cast<double>(iterations);
  stats.l1 /= static_cast<double>(iterations);
  model.set_epochs_done(epoch);
  return stats;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// "ACCG" | u32 version | u64 config digest | u32 entry count |
//   per entry: u32 name length, name, u32 n, c, h, w, float32 LE values |
// u32 metadata length | metadata ("key=value\n" lines)

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

struct Checkpoint {
  std::uint64_t digest = 0;
  std::vector<NamedTensor> entries;
  std::map<std::string, std::string> metadata;
};

namespace detail {

inline void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::string source) : b_(bytes), src_(std::move(source)) {}

  std::uint32_t u32() {
    need(4);
    const auto v = accear::detail::get_u32_le(b_.data() + pos_);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | (hi << 32);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void floats(std::vector<float>& out) {
    need(out.size() * 4);
    std::memcpy(out.data(), b_.data() + pos_, out.size() * 4);
    pos_ += out.size() * 4;
  }
  bool done() const { return pos_ == b_.size(); }
  [[noreturn]] void fail(const std::string& what) const { throw InputError(src_ + ": " + what); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) fail("truncated checkpoint");
  }
  const std::vector<std::uint8_t>& b_;
  std::string src_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  std::vector<std::uint8_t> out{'A', 'C', 'C', 'G'};
  accear::detail::put_u32_le(out, kCheckpointVersion);
  detail::put_u64_le(out, ck.digest);
  accear::detail::put_u32_le(out, static_cast<std::uint32_t>(ck.entries.size()));
  for (const auto& e : ck.entries) {
    accear::detail::put_u32_le(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    for (std::size_t d : {e.value.shape.n, e.value.shape.c, e.value.shape.h, e.value.shape.w}) {
      accear::detail::put_u32_le(out, static_cast<std::uint32_t>(d));
    }
    const auto* p = reinterpret_cast<const std::uint8_t*>(e.value.data.data());
    out.insert(out.end(), p, p + e.value.data.size() * 4);
  }
  std::string meta;
  for (const auto& [k, v] : ck.metadata) meta += k + "=" + v + "\n";
  accear::detail::put_u32_le(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  return out;
}

inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& source = "checkpoint") {
  detail::Reader r(bytes, source);
  if (r.str(4) != "ACCG") r.fail("not a checkpoint (bad magic)");
  if (const auto v = r.u32(); v != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(v));
  Checkpoint ck;
  ck.digest = r.u64();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor e;
    e.name = r.str(r.u32());
    Shape s;
    s.n = r.u32();
    s.c = r.u32();
    s.h = r.u32();
    s.w = r.u32();
    if (s.numel() > (std::size_t{1} << 30)) r.fail("implausible tensor shape for " + e.name);
    e.value = Tensor<float>(s);
    r.floats(e.value.data);
    ck.entries.push_back(std::move(e));
  }
  const std::string meta = r.str(r.u32());
  std::size_t pos = 0;
  while (pos < meta.size()) {
    const auto nl = meta.find('\n', pos);
    const std::string line = meta.substr(pos, nl - pos);
    pos = nl == std::string::npos ? meta.size() : nl + 1;
    const auto eq = line.find('=');
    if (eq == std::string::npos) r.fail("malformed metadata line");
    ck.metadata[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (!r.done()) r.fail("trailing bytes after checkpoint");
  return ck;
}

namespace detail {

inline Tensor<float> stats_tensor(const std::vector<double>& v) {
  Tensor<float> t(Shape{1, v.size(), 1, 1});
  for (std::size_t i = 0; i < v.size(); ++i) t.data[i] = static_cast<float>(v[i]);
  return t;
}

template <class Fn>
void for_each_state(GanModel& m, Fn&& fn) {
  auto visit_params = [&](const std::string& prefix, std::vector<Parameter<float>*> params, ad::AdamState<float>& adam) {
    for (auto* p : params) fn(p->name, p->value);
    adam.ensure(params);
    for (std::size_t i = 0; i < params.size(); ++i) {
      fn(prefix + ".m." + params[i]->name, adam.m[i]);
      fn(prefix + ".v." + params[i]->name, adam.v[i]);
    }
  };
  visit_params("adam_g", m.generator().parameters(), m.adam_g());
  visit_params("adam_d", m.discriminator().parameters(), m.adam_d());
}

}  // namespace detail

/// Weights, optimizer moments and running statistics plus caller metadata.
inline Checkpoint make_checkpoint(GanModel& model, std::map<std::string, std::string> metadata = {}) {
  Checkpoint ck;
  ck.digest = config_digest(model.config());
  detail::for_each_state(model, [&](const std::string& name, const Tensor<float>& t) { ck.entries.push_back({name, t}); });
  std::size_t k = 0;
  for (auto* rs : model.generator().running_stats()) {
    ck.entries.push_back({"g.running." + std::to_string(k) + ".mean", detail::stats_tensor(rs->mean)});
    ck.entries.push_back({"g.running." + std::to_string(k++) + ".var", detail::stats_tensor(rs->var)});
  }
  metadata["epoch"] = std::to_string(model.epochs_done());
  metadata["adam_g.step"] = std::to_string(model.adam_g().step);
  metadata["adam_d.step"] = std::to_string(model.adam_d().step);
  metadata["net.image-size"] = std::to_string(model.config().image_size);
  metadata["net.ngf"] = std::to_string(model.config().ngf);
  metadata["net.ndf"] = std::to_string(model.config().ndf);
  ck.metadata = std::move(metadata);
  return ck;
}

inline NetConfig net_config_from(const Checkpoint& ck) {
  auto get = [&](const std::string& k) -> std::size_t {
    const auto it = ck.metadata.find(k);
    if (it == ck.metadata.end()) throw InputError("checkpoint metadata lacks " + k);
    return std::stoul(it->second);
  };
  return NetConfig{get("net.image-size"), get("net.ngf"), get("net.ndf")};
}

/// Rebuilds a model from a checkpoint; rejects a digest that does not match
/// the network configuration recorded alongside it (or `expected`, if given).
inline GanModel restore_model(const Checkpoint& ck, const NetConfig* expected = nullptr) {
  const NetConfig cfg = expected ? *expected : net_config_from(ck);
  if (ck.digest != config_digest(cfg)) {
    throw InputError("checkpoint config digest mismatch (checkpoint was written for a different network)");
  }
  GanModel model(cfg);
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& e : ck.entries) by_name[e.name] = &e.value;
  auto take = [&](const std::string& name, Tensor<float>& dst) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw InputError("checkpoint lacks tensor " + name);
    if (!(it->second->shape == dst.shape)) throw InputError("checkpoint tensor " + name + " has the wrong shape");
    dst.data = it->second->data;
  };
  detail::for_each_state(model, [&](const std::string& name, Tensor<float>& t) { take(name, t); });
  std::size_t k = 0;
  for (auto* rs : model.generator().running_stats()) {
    Tensor<float> mean = detail::stats_tensor(rs->mean), var = detail::stats_tensor(rs->var);
    take("g.running." + std::to_string(k) + ".mean", mean);
    take("g.running." + std::to_string(k++) + ".var", var);
    for (std::size_t c = 0; c < rs->mean.size(); ++c) {
      rs->mean[c] = mean.data[c];
      rs->var[c] = var.data[c];
    }
  }
  model.set_epochs_done(std::stoul(ck.metadata.at("epoch")));
  model.adam_g().step = std::stoull(ck.metadata.at("adam_g.step"));
  model.adam_d().step = std::stoull(ck.metadata.at("adam_d.step"));
  return model;
}

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  accear::detail::write_file(path.string(), encode_checkpoint(ck));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(accear::detail::read_file(path.string()), path.string());
}

}  // namespace accear::cgan
