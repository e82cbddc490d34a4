#include "lungpipe/neural/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lungpipe/error.hpp"

namespace lungpipe::nn {

namespace {

struct Dims5 {
  std::size_t n, c, d, h, w;
  std::size_t volume() const { return d * h * w; }
};

Dims5 dims5(const Tensor& x, const char* who) {
  if (x.rank() != 5) {
    throw ArchError(std::string(who) + " expects a rank-5 (N,C,D,H,W) tensor, got " + shape_string(x.shape));
  }
  return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), x.dim(4)};
}

Parameter make_param(std::string role, std::vector<std::size_t> shape, double fill, bool trainable = true) {
  Parameter p;
  p.role = std::move(role);
  p.name = p.role;
  p.value = Tensor(shape, fill);
  p.grad = Tensor(std::move(shape), 0.0);
  p.trainable = trainable;
  return p;
}

void glorot_uniform(Parameter& p, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (double& v : p.value.data) v = u(rng);
}

// Clipped range [lo, hi) of output positions whose shifted input position is valid.
inline void valid_range(std::ptrdiff_t shift, std::size_t n, std::size_t& lo, std::size_t& hi) {
  const auto sn = static_cast<std::ptrdiff_t>(n);
  lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -shift));
  hi = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, std::min(sn, sn - shift)));
}

Tensor conv_forward(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t out_c, std::size_t k,
                    std::size_t in_c) {
  const Dims5 d = dims5(x, "conv3d");
  if (d.c != in_c) throw ArchError("conv3d expects " + std::to_string(in_c) + " input channels");
  Tensor y({d.n, out_c, d.d, d.h, d.w});
  const auto p = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t vol = d.volume();
  const std::size_t kk = k * k * k;
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t oc = 0; oc < out_c; ++oc) {
      double* out = y.ptr() + (n * out_c + oc) * vol;
      std::fill(out, out + vol, b.data[oc]);
      for (std::size_t z = 0; z < d.d; ++z) {
        for (std::size_t yy = 0; yy < d.h; ++yy) {
          double* o = out + (z * d.h + yy) * d.w;
          for (std::size_t ic = 0; ic < in_c; ++ic) {
            const double* in = x.ptr() + (n * in_c + ic) * vol;
            const double* wk = w.ptr() + (oc * in_c + ic) * kk;
            for (std::size_t kz = 0; kz < k; ++kz) {
              const auto zz = static_cast<std::ptrdiff_t>(z) + static_cast<std::ptrdiff_t>(kz) - p;
              if (zz < 0 || zz >= static_cast<std::ptrdiff_t>(d.d)) continue;
              for (std::size_t ky = 0; ky < k; ++ky) {
                const auto ys = static_cast<std::ptrdiff_t>(yy) + static_cast<std::ptrdiff_t>(ky) - p;
                if (ys < 0 || ys >= static_cast<std::ptrdiff_t>(d.h)) continue;
                const double* s = in + (static_cast<std::size_t>(zz) * d.h + static_cast<std::size_t>(ys)) * d.w;
                for (std::size_t kx = 0; kx < k; ++kx) {
                  const double wv = wk[(kz * k + ky) * k + kx];
                  const auto dx = static_cast<std::ptrdiff_t>(kx) - p;
                  std::size_t x0, x1;
                  valid_range(dx, d.w, x0, x1);
                  const double* sx = s + dx;
                  for (std::size_t xi = x0; xi < x1; ++xi) o[xi] += wv * sx[xi];
                }
              }
            }
          }
        }
      }
    }
  }
  return y;
}

}  // namespace

std::vector<const Parameter*> Layer::parameters() const {
  auto ps = const_cast<Layer*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

// ---- Conv3d ----

Conv3d::Conv3d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel)
    : in_c_(in_channels), out_c_(out_channels), k_(kernel) {
  if (kernel == 0 || kernel % 2 == 0) throw ArchError("conv3d kernel must be odd, got " + std::to_string(kernel));
  if (in_channels == 0 || out_channels == 0) throw ArchError("conv3d channel counts must be positive");
  weight_ = make_param("weight", {out_c_, in_c_, k_, k_, k_}, 0.0);
  bias_ = make_param("bias", {out_c_}, 0.0);
}

std::vector<std::size_t> Conv3d::output_shape(const std::vector<std::size_t>& in) const {
  if (in.size() != 4 || in[0] != in_c_) throw ArchError("conv3d input shape mismatch: " + shape_string(in));
  return {out_c_, in[1], in[2], in[3]};
}

void Conv3d::initialize(Rng& rng) {
  const std::size_t kk = k_ * k_ * k_;
  glorot_uniform(weight_, in_c_ * kk, out_c_ * kk, rng);
  bias_.value.fill(0.0);
}

Tensor Conv3d::forward(const Tensor& x, bool, Rng&) {
  input_ = x;
  return conv_forward(x, weight_.value, bias_.value, out_c_, k_, in_c_);
}

Tensor Conv3d::infer(const Tensor& x) const { return conv_forward(x, weight_.value, bias_.value, out_c_, k_, in_c_); }

Tensor Conv3d::backward(const Tensor& g) {
  const Dims5 d = dims5(input_, "conv3d");
  Tensor gin(input_.shape, 0.0);
  const auto p = static_cast<std::ptrdiff_t>(k_ / 2);
  const std::size_t vol = d.volume();
  const std::size_t kk = k_ * k_ * k_;
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t oc = 0; oc < out_c_; ++oc) {
      const double* gout = g.ptr() + (n * out_c_ + oc) * vol;
      double bsum = 0.0;
      for (std::size_t i = 0; i < vol; ++i) bsum += gout[i];
      bias_.grad.data[oc] += bsum;
      for (std::size_t z = 0; z < d.d; ++z) {
        for (std::size_t yy = 0; yy < d.h; ++yy) {
          const double* go = gout + (z * d.h + yy) * d.w;
          for (std::size_t ic = 0; ic < in_c_; ++ic) {
            const double* in = input_.ptr() + (n * in_c_ + ic) * vol;
            double* gi = gin.ptr() + (n * in_c_ + ic) * vol;
            const double* wk = weight_.value.ptr() + (oc * in_c_ + ic) * kk;
            double* gw = weight_.grad.ptr() + (oc * in_c_ + ic) * kk;
            for (std::size_t kz = 0; kz < k_; ++kz) {
              const auto zz = static_cast<std::ptrdiff_t>(z) + static_cast<std::ptrdiff_t>(kz) - p;
              if (zz < 0 || zz >= static_cast<std::ptrdiff_t>(d.d)) continue;
              for (std::size_t ky = 0; ky < k_; ++ky) {
                const auto ys = static_cast<std::ptrdiff_t>(yy) + static_cast<std::ptrdiff_t>(ky) - p;
                if (ys < 0 || ys >= static_cast<std::ptrdiff_t>(d.h)) continue;
                const std::size_t row = (static_cast<std::size_t>(zz) * d.h + static_cast<std::size_t>(ys)) * d.w;
                for (std::size_t kx = 0; kx < k_; ++kx) {
                  const std::size_t widx = (kz * k_ + ky) * k_ + kx;
                  const double wv = wk[widx];
                  const auto dx = static_cast<std::ptrdiff_t>(kx) - p;
                  std::size_t x0, x1;
                  valid_range(dx, d.w, x0, x1);
                  const double* sx = in + row + dx;
                  double* gx = gi + row + dx;
                  double acc = 0.0;
                  for (std::size_t xi = x0; xi < x1; ++xi) {
                    acc += go[xi] * sx[xi];
                    gx[xi] += wv * go[xi];
                  }
                  gw[widx] += acc;
                }
              }
            }
          }
        }
      }
    }
  }
  return gin;
}

// ---- ReLU ----

Tensor ReLU::infer(const Tensor& x) const {
  Tensor y = x;
  for (double& v : y.data) v = v < 0.0 ? 0.0 : v;
  return y;
}

Tensor ReLU::forward(const Tensor& x, bool, Rng&) {
  output_ = infer(x);
  return output_;
}

Tensor ReLU::backward(const Tensor& g) {
  Tensor gin = g;
  for (std::size_t i = 0; i < gin.size(); ++i) {
    if (!(output_.data[i] > 0.0)) gin.data[i] = 0.0;
  }
  return gin;
}

// ---- MaxPool3d ----

std::vector<std::size_t> MaxPool3d::output_shape(const std::vector<std::size_t>& in) const {
  if (in.size() != 4) throw ArchError("maxpool3d expects (C,D,H,W) input, got " + shape_string(in));
  for (std::size_t i = 1; i < 4; ++i) {
    if (in[i] < p_ || in[i] % p_ != 0) {
      throw ArchError("maxpool3d window " + std::to_string(p_) + " does not divide input " + shape_string(in));
    }
  }
  return {in[0], in[1] / p_, in[2] / p_, in[3] / p_};
}

namespace {

Tensor pool_forward(const Tensor& x, std::size_t p, std::vector<std::size_t>* argmax) {
  const Dims5 d = dims5(x, "maxpool3d");
  if (d.d % p || d.h % p || d.w % p) throw ArchError("maxpool3d window does not divide input " + shape_string(x.shape));
  const std::size_t od = d.d / p, oh = d.h / p, ow = d.w / p;
  Tensor y({d.n, d.c, od, oh, ow});
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < d.n * d.c; ++nc) {
    const std::size_t base = nc * d.volume();
    for (std::size_t z = 0; z < od; ++z) {
      for (std::size_t yy = 0; yy < oh; ++yy) {
        for (std::size_t xx = 0; xx < ow; ++xx, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_i = base + ((z * p) * d.h + yy * p) * d.w + xx * p;
          for (std::size_t a = 0; a < p; ++a) {
            for (std::size_t b = 0; b < p; ++b) {
              const std::size_t row = base + ((z * p + a) * d.h + (yy * p + b)) * d.w + xx * p;
              for (std::size_t c = 0; c < p; ++c) {
                if (x.data[row + c] > best) {
                  best = x.data[row + c];
                  best_i = row + c;
                }
              }
            }
          }
          y.data[o] = best;
          if (argmax) (*argmax)[o] = best_i;
        }
      }
    }
  }
  return y;
}

}  // namespace

Tensor MaxPool3d::forward(const Tensor& x, bool, Rng&) {
  in_shape_ = x.shape;
  return pool_forward(x, p_, &argmax_);
}

Tensor MaxPool3d::infer(const Tensor& x) const { return pool_forward(x, p_, nullptr); }

Tensor MaxPool3d::backward(const Tensor& g) {
  Tensor gin(in_shape_, 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) gin.data[argmax_[i]] += g.data[i];
  return gin;
}

// ---- BatchNorm ----

BatchNorm::BatchNorm(std::size_t channels, double momentum, double eps) : c_(channels), momentum_(momentum), eps_(eps) {
  gamma_ = make_param("gamma", {c_}, 1.0);
  beta_ = make_param("beta", {c_}, 0.0);
  mean_ = make_param("moving_mean", {c_}, 0.0, false);
  var_ = make_param("moving_variance", {c_}, 1.0, false);
}

namespace {

// (batch, channels, spatial) view of an NF or NCDHW tensor.
void bn_layout(const Tensor& x, std::size_t c, std::size_t& n, std::size_t& s) {
  if (x.rank() < 2 || x.dim(1) != c) throw ArchError("batchnorm channel mismatch: " + shape_string(x.shape));
  n = x.dim(0);
  s = x.item_size() / c;
}

}  // namespace

Tensor BatchNorm::infer(const Tensor& x) const {
  std::size_t n, s;
  bn_layout(x, c_, n, s);
  Tensor y = x;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c_; ++ch) {
      const double inv = 1.0 / std::sqrt(var_.value.data[ch] + eps_);
      const double scale = gamma_.value.data[ch] * inv;
      const double shift = beta_.value.data[ch] - mean_.value.data[ch] * scale;
      double* v = y.ptr() + (b * c_ + ch) * s;
      for (std::size_t i = 0; i < s; ++i) v[i] = v[i] * scale + shift;
    }
  }
  return y;
}

Tensor BatchNorm::forward(const Tensor& x, bool training, Rng&) {
  std::size_t n, s;
  bn_layout(x, c_, n, s);
  used_batch_stats_ = training;
  inv_std_.assign(c_, 0.0);
  if (!training) {
    for (std::size_t ch = 0; ch < c_; ++ch) inv_std_[ch] = 1.0 / std::sqrt(var_.value.data[ch] + eps_);
    return infer(x);
  }
  const double m = static_cast<double>(n * s);
  xhat_ = Tensor(x.shape);
  Tensor y(x.shape);
  for (std::size_t ch = 0; ch < c_; ++ch) {
    double mean = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const double* v = x.ptr() + (b * c_ + ch) * s;
      for (std::size_t i = 0; i < s; ++i) mean += v[i];
    }
    mean /= m;
    double var = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const double* v = x.ptr() + (b * c_ + ch) * s;
      for (std::size_t i = 0; i < s; ++i) var += (v[i] - mean) * (v[i] - mean);
    }
    const double unbiased = m > 1.0 ? var / (m - 1.0) : 0.0;
    var /= m;
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[ch] = inv;
    const double g = gamma_.value.data[ch], be = beta_.value.data[ch];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c_ + ch) * s;
      for (std::size_t i = 0; i < s; ++i) {
        const double h = (x.data[off + i] - mean) * inv;
        xhat_.data[off + i] = h;
        y.data[off + i] = g * h + be;
      }
    }
    mean_.value.data[ch] = momentum_ * mean_.value.data[ch] + (1.0 - momentum_) * mean;
    var_.value.data[ch] = momentum_ * var_.value.data[ch] + (1.0 - momentum_) * unbiased;
  }
  return y;
}

Tensor BatchNorm::backward(const Tensor& g) {
  std::size_t n, s;
  bn_layout(g, c_, n, s);
  Tensor gin(g.shape);
  const double m = static_cast<double>(n * s);
  for (std::size_t ch = 0; ch < c_; ++ch) {
    const double gamma = gamma_.value.data[ch];
    const double inv = inv_std_[ch];
    if (!used_batch_stats_) {
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t off = (b * c_ + ch) * s;
        for (std::size_t i = 0; i < s; ++i) gin.data[off + i] = g.data[off + i] * gamma * inv;
      }
      continue;
    }
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c_ + ch) * s;
      for (std::size_t i = 0; i < s; ++i) {
        sum_g += g.data[off + i];
        sum_gx += g.data[off + i] * xhat_.data[off + i];
      }
    }
    gamma_.grad.data[ch] += sum_gx;
    beta_.grad.data[ch] += sum_g;
    const double k = gamma * inv / m;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c_ + ch) * s;
      for (std::size_t i = 0; i < s; ++i) {
        gin.data[off + i] = k * (m * g.data[off + i] - sum_g - xhat_.data[off + i] * sum_gx);
      }
    }
  }
  return gin;
}

// ---- Dropout ----

Tensor Dropout::forward(const Tensor& x, bool training, Rng& rng) {
  if (!training || rate_ <= 0.0) {
    scale_.assign(x.size(), 1.0);
    return x;
  }
  std::bernoulli_distribution keep(1.0 - rate_);
  const double s = 1.0 / (1.0 - rate_);
  scale_.resize(x.size());
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    scale_[i] = keep(rng) ? s : 0.0;
    y.data[i] *= scale_[i];
  }
  return y;
}

Tensor Dropout::backward(const Tensor& g) {
  Tensor gin = g;
  for (std::size_t i = 0; i < gin.size(); ++i) gin.data[i] *= scale_[i];
  return gin;
}

// ---- Flatten / GlobalAvgPool ----

std::vector<std::size_t> Flatten::output_shape(const std::vector<std::size_t>& in) const { return {shape_count(in)}; }

Tensor Flatten::infer(const Tensor& x) const {
  Tensor y = x;
  y.shape = {x.dim(0), x.item_size()};
  return y;
}

Tensor Flatten::forward(const Tensor& x, bool, Rng&) {
  in_shape_ = x.shape;
  return infer(x);
}

Tensor Flatten::backward(const Tensor& g) {
  Tensor gin = g;
  gin.shape = in_shape_;
  return gin;
}

std::vector<std::size_t> GlobalAvgPool::output_shape(const std::vector<std::size_t>& in) const {
  if (in.size() != 4) throw ArchError("global_avg_pool expects (C,D,H,W) input");
  return {in[0]};
}

Tensor GlobalAvgPool::infer(const Tensor& x) const {
  const Dims5 d = dims5(x, "global_avg_pool");
  Tensor y({d.n, d.c});
  const std::size_t vol = d.volume();
  for (std::size_t i = 0; i < d.n * d.c; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < vol; ++j) s += x.data[i * vol + j];
    y.data[i] = s / static_cast<double>(vol);
  }
  return y;
}

Tensor GlobalAvgPool::forward(const Tensor& x, bool, Rng&) {
  in_shape_ = x.shape;
  return infer(x);
}

Tensor GlobalAvgPool::backward(const Tensor& g) {
  Tensor gin(in_shape_);
  const std::size_t vol = gin.size() / g.size();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double v = g.data[i] / static_cast<double>(vol);
    std::fill(gin.ptr() + i * vol, gin.ptr() + (i + 1) * vol, v);
  }
  return gin;
}

// ---- Dense ----

Dense::Dense(std::size_t in_features, std::size_t out_features) : in_(in_features), out_(out_features) {
  if (in_ == 0 || out_ == 0) throw ArchError("dense layer sizes must be positive");
  weight_ = make_param("weight", {out_, in_}, 0.0);
  bias_ = make_param("bias", {out_}, 0.0);
}

std::vector<std::size_t> Dense::output_shape(const std::vector<std::size_t>& in) const {
  if (in.size() != 1 || in[0] != in_) throw ArchError("dense expects " + std::to_string(in_) + " features, got " + shape_string(in));
  return {out_};
}

void Dense::initialize(Rng& rng) {
  glorot_uniform(weight_, in_, out_, rng);
  bias_.value.fill(0.0);
}

Tensor Dense::infer(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_) throw ArchError("dense expects (N, " + std::to_string(in_) + ") input, got " + shape_string(x.shape));
  const std::size_t n = x.dim(0);
  Tensor y({n, out_});
  for (std::size_t b = 0; b < n; ++b) {
    const double* xi = x.ptr() + b * in_;
    for (std::size_t o = 0; o < out_; ++o) {
      const double* w = weight_.value.ptr() + o * in_;
      double acc = bias_.value.data[o];
      for (std::size_t i = 0; i < in_; ++i) acc += w[i] * xi[i];
      y.data[b * out_ + o] = acc;
    }
  }
  return y;
}

Tensor Dense::forward(const Tensor& x, bool, Rng&) {
  input_ = x;
  return infer(x);
}

Tensor Dense::backward(const Tensor& g) {
  const std::size_t n = input_.dim(0);
  Tensor gin({n, in_});
  for (std::size_t b = 0; b < n; ++b) {
    const double* xi = input_.ptr() + b * in_;
    double* gi = gin.ptr() + b * in_;
    for (std::size_t o = 0; o < out_; ++o) {
      const double go = g.data[b * out_ + o];
      if (go == 0.0) continue;
      bias_.grad.data[o] += go;
      double* gw = weight_.grad.ptr() + o * in_;
      const double* w = weight_.value.ptr() + o * in_;
      for (std::size_t i = 0; i < in_; ++i) {
        gw[i] += go * xi[i];
        gi[i] += go * w[i];
      }
    }
  }
  return gin;
}

// ---- ResidualBlock ----

ResidualBlock::ResidualBlock(std::size_t channels, std::size_t kernel, bool batchnorm) {
  branch_.push_back(std::make_unique<Conv3d>(channels, channels, kernel));
  if (batchnorm) branch_.push_back(std::make_unique<BatchNorm>(channels));
  branch_.push_back(std::make_unique<ReLU>());
  branch_.push_back(std::make_unique<Conv3d>(channels, channels, kernel));
  if (batchnorm) branch_.push_back(std::make_unique<BatchNorm>(channels));
  for (std::size_t i = 0; i < branch_.size(); ++i) {
    for (Parameter* p : branch_[i]->parameters()) p->role = std::to_string(i) + "_" + branch_[i]->type() + "." + p->role;
  }
}

ResidualBlock::ResidualBlock(const ResidualBlock& other) : Layer(other), output_(other.output_) {
  for (const auto& l : other.branch_) branch_.push_back(l->clone());
}

std::vector<Parameter*> ResidualBlock::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : branch_) {
    for (Parameter* p : l->parameters()) out.push_back(p);
  }
  return out;
}

void ResidualBlock::initialize(Rng& rng) {
  for (auto& l : branch_) l->initialize(rng);
}

Tensor ResidualBlock::forward(const Tensor& x, bool training, Rng& rng) {
  Tensor h = x;
  for (auto& l : branch_) h = l->forward(h, training, rng);
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double v = h.data[i] + x.data[i];
    h.data[i] = v > 0.0 ? v : 0.0;
  }
  output_ = h;
  return h;
}

Tensor ResidualBlock::infer(const Tensor& x) const {
  Tensor h = x;
  for (const auto& l : branch_) h = l->infer(h);
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double v = h.data[i] + x.data[i];
    h.data[i] = v > 0.0 ? v : 0.0;
  }
  return h;
}

Tensor ResidualBlock::backward(const Tensor& g) {
  Tensor gs = g;
  for (std::size_t i = 0; i < gs.size(); ++i) {
    if (!(output_.data[i] > 0.0)) gs.data[i] = 0.0;
  }
  Tensor gb = gs;
  for (auto it = branch_.rbegin(); it != branch_.rend(); ++it) gb = (*it)->backward(gb);
  for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] += gs.data[i];
  return gb;
}

// ---- Network ----

Network::Network(const Network& other) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    layers_.clear();
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  return *this;
}

Tensor Network::forward(const Tensor& x, bool training, Rng& rng) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, training, rng);
  return h;
}

Tensor Network::infer(const Tensor& x, std::size_t n_layers) const {
  Tensor h = x;
  const std::size_t n = std::min(n_layers, layers_.size());
  for (std::size_t i = 0; i < n; ++i) h = layers_[i]->infer(h);
  return h;
}

void Network::backward(const Tensor& grad_logits) {
  Tensor g = grad_logits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
}

void Network::zero_grad() {
  for (Parameter* p : parameters()) p->grad.fill(0.0);
}

void Network::initialize(Rng& rng) {
  for (auto& l : layers_) l->initialize(rng);
}

void Network::name_parameters() {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (Parameter* p : layers_[i]->parameters()) {
      p->name = std::to_string(i) + "_" + layers_[i]->type() + "." + p->role;
    }
  }
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    for (Parameter* p : l->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<const Parameter*> Network::parameters() const {
  auto ps = const_cast<Network*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

}  // namespace lungpipe::nn
