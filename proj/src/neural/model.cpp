#include "lungpipe/neural/model.hpp"

#include <algorithm>
#include <cmath>

#include "lungpipe/error.hpp"
#include "lungpipe/hash.hpp"

namespace lungpipe::nn {

std::string to_string(ArchKind k) {
  switch (k) {
    case ArchKind::Shallow: return "shallow";
    case ArchKind::Deeper: return "deeper";
    case ArchKind::Residual: return "residual";
  }
  return "?";
}

ArchKind parse_arch_kind(const std::string& s) {
  if (s == "shallow") return ArchKind::Shallow;
  if (s == "deeper") return ArchKind::Deeper;
  if (s == "residual") return ArchKind::Residual;
  throw ArchError("unknown architecture kind '" + s + "'");
}

void ArchitectureSpec::validate() const {
  if (kernel < 1 || kernel % 2 == 0) throw ArchError("kernel must be a positive odd number");
  if (pool < 1) throw ArchError("pool must be positive");
  if (conv_filters.empty()) throw ArchError("conv_filters must not be empty");
  for (int f : conv_filters) {
    if (f < 1) throw ArchError("conv filter counts must be positive");
  }
  if (!(dropout_inner >= 0.0 && dropout_inner < 1.0) || !(dropout_final >= 0.0 && dropout_final < 1.0)) {
    throw ArchError("dropout rates must lie in [0, 1)");
  }
  if (n_outputs < 1) throw ArchError("n_outputs must be positive");
  if (output_kind == OutputKind::Softmax && n_outputs < 2) throw ArchError("softmax head needs at least 2 outputs");
  if (output_kind == OutputKind::Sigmoid && n_outputs != 1) throw ArchError("sigmoid head has exactly 1 output");
  if (dense_units < 1) throw ArchError("dense_units must be positive");
  if (kind != ArchKind::Residual && conv_filters.size() != 3) {
    throw ArchError(to_string(kind) + " networks have exactly 3 conv blocks");
  }
  if (kind == ArchKind::Deeper && !use_batchnorm) throw ArchError("deeper networks require batch normalization");
  if (kind == ArchKind::Residual) {
    const int stages = static_cast<int>(conv_filters.size());
    const int rest = residual_depth - stages - 1;
    if (rest < 0 || rest % 2 != 0) {
      throw ArchError("residual_depth " + std::to_string(residual_depth) + " with " + std::to_string(stages) +
                      " stages leaves no whole number of two-conv blocks");
    }
  }
}

ArchitectureSpec ArchitectureSpec::shallow() { return {}; }

ArchitectureSpec ArchitectureSpec::deeper() {
  ArchitectureSpec s;
  s.kind = ArchKind::Deeper;
  s.use_batchnorm = true;
  return s;
}

ArchitectureSpec ArchitectureSpec::residual(int depth) {
  ArchitectureSpec s;
  s.kind = ArchKind::Residual;
  s.conv_filters = {16, 32, 64};
  s.use_batchnorm = true;
  s.residual_depth = depth;
  s.n_outputs = 1;
  s.output_kind = OutputKind::Sigmoid;
  s.dropout_final = 0.0;
  return s;
}

void to_json(nlohmann::json& j, const ArchitectureSpec& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)},
                     {"conv_filters", s.conv_filters},
                     {"kernel", s.kernel},
                     {"pool", s.pool},
                     {"dropout_inner", s.dropout_inner},
                     {"dropout_final", s.dropout_final},
                     {"use_batchnorm", s.use_batchnorm},
                     {"residual_depth", s.residual_depth},
                     {"n_outputs", s.n_outputs},
                     {"output_kind", s.output_kind == OutputKind::Softmax ? "softmax" : "sigmoid"},
                     {"dense_units", s.dense_units}};
}

void from_json(const nlohmann::json& j, ArchitectureSpec& s) {
  try {
    const ArchKind kind = parse_arch_kind(j.value("kind", std::string("shallow")));
    s = kind == ArchKind::Residual ? ArchitectureSpec::residual()
        : kind == ArchKind::Deeper ? ArchitectureSpec::deeper()
                                   : ArchitectureSpec::shallow();
    s.conv_filters = j.value("conv_filters", s.conv_filters);
    s.kernel = j.value("kernel", s.kernel);
    s.pool = j.value("pool", s.pool);
    s.dropout_inner = j.value("dropout_inner", s.dropout_inner);
    s.dropout_final = j.value("dropout_final", s.dropout_final);
    s.use_batchnorm = j.value("use_batchnorm", s.use_batchnorm);
    s.residual_depth = j.value("residual_depth", s.residual_depth);
    s.n_outputs = j.value("n_outputs", s.n_outputs);
    const std::string out = j.value("output_kind", std::string(s.output_kind == OutputKind::Softmax ? "softmax" : "sigmoid"));
    if (out != "softmax" && out != "sigmoid") throw ArchError("output_kind must be softmax or sigmoid");
    s.output_kind = out == "softmax" ? OutputKind::Softmax : OutputKind::Sigmoid;
    s.dense_units = j.value("dense_units", s.dense_units);
  } catch (const nlohmann::json::exception& e) {
    throw ArchError(std::string("invalid architecture: ") + e.what());
  }
}

std::size_t TrainedModel::parameter_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const Parameter* p : net.parameters()) {
    if (!trainable_only || p->trainable) n += p->value.size();
  }
  return n;
}

std::size_t TrainedModel::penultimate_width() const {
  std::vector<std::size_t> shape{1, static_cast<std::size_t>(input_side), static_cast<std::size_t>(input_side),
                                 static_cast<std::size_t>(input_side)};
  for (std::size_t i = 0; i < penultimate_depth(); ++i) shape = net.layer(i).output_shape(shape);
  return shape_count(shape);
}

TrainedModel build_model(const ArchitectureSpec& spec, int input_side, std::uint64_t seed,
                         std::vector<std::string> class_order) {
  spec.validate();
  if (input_side < 1) throw ArchError("input_side must be positive");
  TrainedModel m;
  m.spec = spec;
  m.input_side = input_side;
  m.seed = seed;
  const auto k = static_cast<std::size_t>(spec.kernel);
  const auto pool = static_cast<std::size_t>(spec.pool);
  Network& net = m.net;
  std::size_t channels = 1;
  if (spec.kind == ArchKind::Residual) {
    const auto stages = spec.conv_filters.size();
    const int blocks = (spec.residual_depth - static_cast<int>(stages) - 1) / 2;
    for (std::size_t s = 0; s < stages; ++s) {
      const auto f = static_cast<std::size_t>(spec.conv_filters[s]);
      net.add(std::make_unique<Conv3d>(channels, f, k));
      if (spec.use_batchnorm) net.add(std::make_unique<BatchNorm>(f));
      net.add(std::make_unique<ReLU>());
      const int here = blocks / static_cast<int>(stages) + (static_cast<int>(s) < blocks % static_cast<int>(stages) ? 1 : 0);
      for (int b = 0; b < here; ++b) net.add(std::make_unique<ResidualBlock>(f, k, spec.use_batchnorm));
      if (s + 1 < stages) net.add(std::make_unique<MaxPool3d>(pool));
      channels = f;
    }
    net.add(std::make_unique<GlobalAvgPool>());
    if (spec.dropout_final > 0.0) net.add(std::make_unique<Dropout>(spec.dropout_final));
    net.add(std::make_unique<Dense>(channels, static_cast<std::size_t>(spec.n_outputs)));
  } else {
    const bool deeper = spec.kind == ArchKind::Deeper;
    for (int f_int : spec.conv_filters) {
      const auto f = static_cast<std::size_t>(f_int);
      net.add(std::make_unique<Conv3d>(channels, f, k));
      if (spec.use_batchnorm) net.add(std::make_unique<BatchNorm>(f));
      net.add(std::make_unique<ReLU>());
      net.add(std::make_unique<MaxPool3d>(pool));
      if (deeper && spec.dropout_inner > 0.0) net.add(std::make_unique<Dropout>(spec.dropout_inner));
      channels = f;
    }
    if (spec.dropout_final > 0.0) net.add(std::make_unique<Dropout>(spec.dropout_final));
    net.add(std::make_unique<Flatten>());
    std::vector<std::size_t> shape{1, static_cast<std::size_t>(input_side), static_cast<std::size_t>(input_side),
                                   static_cast<std::size_t>(input_side)};
    for (std::size_t i = 0; i < net.size(); ++i) shape = net.layer(i).output_shape(shape);
    net.add(std::make_unique<Dense>(shape_count(shape), static_cast<std::size_t>(spec.dense_units)));
    net.add(std::make_unique<ReLU>());
    net.add(std::make_unique<Dense>(static_cast<std::size_t>(spec.dense_units), static_cast<std::size_t>(spec.n_outputs)));
  }
  // Shape check through the whole stack.
  std::vector<std::size_t> shape{1, static_cast<std::size_t>(input_side), static_cast<std::size_t>(input_side),
                                 static_cast<std::size_t>(input_side)};
  for (std::size_t i = 0; i < net.size(); ++i) shape = net.layer(i).output_shape(shape);
  net.name_parameters();
  Rng rng(seed);
  net.initialize(rng);

  if (class_order.empty()) {
    if (spec.output_kind == OutputKind::Sigmoid) {
      class_order = {"positive"};
    } else {
      for (int i = 0; i < spec.n_outputs; ++i) class_order.push_back(std::to_string(i));
    }
  }
  const std::size_t expected = spec.output_kind == OutputKind::Sigmoid ? 1 : static_cast<std::size_t>(spec.n_outputs);
  if (class_order.size() != expected) throw ArchError("class_order length does not match the output head");
  m.class_order = std::move(class_order);
  return m;
}

Tensor cubes_to_tensor(const std::vector<const Grid3<float>*>& cubes, int side) {
  const auto s = static_cast<std::size_t>(side);
  Tensor t({cubes.size(), 1, s, s, s});
  const std::size_t vol = s * s * s;
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    const Shape3 sh = cubes[i]->shape();
    if (sh.z != side || sh.y != side || sh.x != side) {
      throw ArchError("cube shape (" + std::to_string(sh.z) + "," + std::to_string(sh.y) + "," + std::to_string(sh.x) +
                      ") does not match model input side " + std::to_string(side));
    }
    const auto& v = cubes[i]->storage();
    std::copy(v.begin(), v.end(), t.ptr() + i * vol);
  }
  return t;
}

std::vector<std::vector<double>> activate(const Tensor& logits, OutputKind kind) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<std::vector<double>> out(n, std::vector<double>(k));
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.ptr() + i * k;
    if (kind == OutputKind::Sigmoid) {
      for (std::size_t j = 0; j < k; ++j) out[i][j] = 1.0 / (1.0 + std::exp(-z[j]));
    } else {
      const double mx = *std::max_element(z, z + k);
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += (out[i][j] = std::exp(z[j] - mx));
      for (std::size_t j = 0; j < k; ++j) out[i][j] /= s;
    }
  }
  return out;
}

namespace {

constexpr std::size_t kInferBatch = 32;

template <typename F>
std::vector<std::vector<double>> batched(const TrainedModel& m, const std::vector<const Grid3<float>*>& cubes, F&& run) {
  std::vector<std::vector<double>> out;
  out.reserve(cubes.size());
  for (std::size_t b = 0; b < cubes.size(); b += kInferBatch) {
    const std::vector<const Grid3<float>*> chunk(cubes.begin() + static_cast<std::ptrdiff_t>(b),
                                                 cubes.begin() + static_cast<std::ptrdiff_t>(std::min(cubes.size(), b + kInferBatch)));
    auto rows = run(cubes_to_tensor(chunk, m.input_side));
    for (auto& r : rows) out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::vector<double>> rows_of(const Tensor& t) {
  const std::size_t n = t.dim(0), k = t.item_size();
  std::vector<std::vector<double>> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i].assign(t.ptr() + i * k, t.ptr() + (i + 1) * k);
  return out;
}

}  // namespace

std::vector<std::vector<double>> predict_proba(const TrainedModel& m, const std::vector<const Grid3<float>*>& cubes) {
  return batched(m, cubes, [&](const Tensor& x) { return activate(m.net.infer(x), m.spec.output_kind); });
}

std::vector<double> predict_proba(const TrainedModel& m, const VoxelCube& cube) {
  return predict_proba(m, std::vector<const Grid3<float>*>{&cube.values}).front();
}

std::vector<std::vector<double>> penultimate(const TrainedModel& m, const std::vector<const Grid3<float>*>& cubes) {
  return batched(m, cubes, [&](const Tensor& x) { return rows_of(m.net.infer(x, m.penultimate_depth())); });
}

std::vector<double> penultimate(const TrainedModel& m, const VoxelCube& cube) {
  return penultimate(m, std::vector<const Grid3<float>*>{&cube.values}).front();
}

std::uint64_t weights_hash(const TrainedModel& m) {
  Fnv1a h;
  for (const Parameter* p : m.net.parameters()) {
    h.update(p->name);
    h.update(p->value.data.data(), p->value.data.size() * sizeof(double));
  }
  return h.value();
}

}  // namespace lungpipe::nn
