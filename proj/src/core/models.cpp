#include "core/models.hpp"

#include <cmath>
#include <cstring>

#include "core/error.hpp"
#include "core/ops.hpp"

namespace augdiff {

namespace {

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::string encoder_name(std::size_t block, std::size_t conv, const char* what) {
  return "f.block" + std::to_string(block) + ".conv" + std::to_string(conv) + "." + what;
}

std::string m_name(std::size_t block, const char* what) { return "m.block" + std::to_string(block) + ".conv." + what; }

void check_images(const Tensor& images, std::size_t divisor, const char* who) {
  require(images.rank() == 4 && images.dim(1) == 1, ErrorCode::ShapeMismatch,
          std::string(who) + ": expected images [B,1,s,s], got " + to_string(images.shape()));
  require(images.dim(2) == images.dim(3) && images.dim(2) % divisor == 0, ErrorCode::ShapeMismatch,
          std::string(who) + ": image size must be square and divisible by " + std::to_string(divisor) + ", got " +
              to_string(images.shape()));
}

}  // namespace

void ArchSpec::validate() const {
  require(!encoder_widths.empty() && encoder_widths.size() <= 8, ErrorCode::InvalidArgument,
          "encoder needs between 1 and 8 blocks");
  require(!m_widths.empty() && m_widths.size() <= 8, ErrorCode::InvalidArgument, "transform network needs 1 to 8 blocks");
  require(convs_per_block >= 1, ErrorCode::InvalidArgument, "encoder blocks need at least one convolution");
  require(proj_hidden > 0 && proj_dim > 0, ErrorCode::InvalidArgument, "projection head widths must be positive");
  for (auto w : encoder_widths) require(w > 0, ErrorCode::InvalidArgument, "encoder widths must be positive");
  for (auto w : m_widths) require(w > 0, ErrorCode::InvalidArgument, "transform network widths must be positive");
}

// ---- ParameterStore ----

void ParameterStore::add(std::string name, Shape shape) {
  Slot slot;
  slot.name = std::move(name);
  slot.value = Tensor(shape);
  slot.grad = Tensor(shape);
  slot.adam_m = Tensor(shape);
  slot.adam_v = Tensor(shape);
  add_slot(std::move(slot));
}

void ParameterStore::add_slot(Slot slot) {
  require(!contains(slot.name), ErrorCode::InvalidArgument, "duplicate parameter '" + slot.name + "'");
  const auto& shape = slot.value.shape();
  if (slot.grad.empty()) slot.grad = Tensor(shape);
  if (slot.adam_m.empty()) slot.adam_m = Tensor(shape);
  if (slot.adam_v.empty()) slot.adam_v = Tensor(shape);
  require(slot.grad.shape() == shape && slot.adam_m.shape() == shape && slot.adam_v.shape() == shape,
          ErrorCode::ShapeMismatch, "state of '" + slot.name + "' does not match its shape " + to_string(shape));
  index_.emplace(slot.name, slots_.size());
  slots_.push_back(std::move(slot));
}

ParameterStore::Slot& ParameterStore::at(std::string_view name) {
  auto it = index_.find(name);
  require(it != index_.end(), ErrorCode::InvalidArgument, "no parameter named '" + std::string(name) + "'");
  return slots_[it->second];
}

const ParameterStore::Slot& ParameterStore::at(std::string_view name) const {
  return const_cast<ParameterStore*>(this)->at(name);
}

void ParameterStore::zero_grads() {
  for (auto& s : slots_) std::fill(s.grad.data().begin(), s.grad.data().end(), 0.0);
}

void ParameterStore::assign_from(const ParameterStore& other) {
  for (const auto& s : slots_) {
    require(other.contains(s.name), ErrorCode::ShapeMismatch, "checkpoint is missing tensor '" + s.name + "'");
    const auto& o = other.at(s.name);
    require(o.value.shape() == s.value.shape(), ErrorCode::ShapeMismatch,
            "tensor '" + s.name + "' has shape " + to_string(o.value.shape()) + " in checkpoint, expected " +
                to_string(s.value.shape()));
  }
  for (auto& s : slots_) {
    const auto& o = other.at(s.name);
    s.value = o.value;
    s.adam_m = o.adam_m;
    s.adam_v = o.adam_v;
    s.step = o.step;
    s.grad = Tensor(s.value.shape());
  }
}

bool bitwise_equal(const ParameterStore& a, const ParameterStore& b, std::string_view prefix) {
  std::vector<const ParameterStore::Slot*> sa, sb;
  for (const auto& s : a.slots()) {
    if (starts_with(s.name, prefix)) sa.push_back(&s);
  }
  for (const auto& s : b.slots()) {
    if (starts_with(s.name, prefix)) sb.push_back(&s);
  }
  if (sa.size() != sb.size()) return false;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i]->name != sb[i]->name || sa[i]->step != sb[i]->step) return false;
    if (!bitwise_equal(sa[i]->value, sb[i]->value) || !bitwise_equal(sa[i]->adam_m, sb[i]->adam_m) ||
        !bitwise_equal(sa[i]->adam_v, sb[i]->adam_v)) {
      return false;
    }
  }
  return true;
}

void init_weights(ParameterStore& store, Rng& rng) {
  for (auto& s : store.slots()) {
    auto& v = s.value;
    if (ends_with(s.name, ".weight")) {
      const auto fan_in = v.numel() / v.dim(0);
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (auto& x : v.data()) x = rng.uniform(-bound, bound);
    } else {
      std::fill(v.data().begin(), v.data().end(), 0.0);
    }
  }
}

// ---- Binding ----

Binding::Binding(Graph& graph, const ParameterStore& store, std::string_view prefix, bool trainable)
    : trainable_(trainable) {
  for (const auto& s : store.slots()) {
    if (!starts_with(s.name, prefix)) continue;
    vars_.emplace_back(s.name, trainable ? graph.parameter(s.value) : graph.constant(s.value));
  }
}

Var Binding::operator()(std::string_view name) const {
  for (const auto& [n, v] : vars_) {
    if (n == name) return v;
  }
  throw Error(ErrorCode::InvalidArgument, "parameter '" + std::string(name) + "' is not bound");
}

void Binding::collect(const Gradients& grads, ParameterStore& store) const {
  if (!trainable_) return;
  for (const auto& [n, v] : vars_) {
    if (grads.has(v)) store.at(n).grad.accumulate(grads.of(v));
  }
}

// ---- networks ----

void EncoderF::declare(ParameterStore& store) const {
  std::size_t in = 1;
  for (std::size_t b = 0; b < arch_.encoder_widths.size(); ++b) {
    const auto out = arch_.encoder_widths[b];
    for (std::size_t c = 0; c < arch_.convs_per_block; ++c) {
      store.add(encoder_name(b, c, "weight"), {out, c == 0 ? in : out, 3, 3});
      store.add(encoder_name(b, c, "bias"), {out});
    }
    in = out;
  }
}

Var EncoderF::forward(const Binding& params, Var images) const {
  check_images(images.value(), arch_.spatial_divisor(), "encoder");
  Var h = images;
  for (std::size_t b = 0; b < arch_.encoder_widths.size(); ++b) {
    for (std::size_t c = 0; c < arch_.convs_per_block; ++c) {
      h = relu(conv2d(h, params(encoder_name(b, c, "weight")), params(encoder_name(b, c, "bias")), 1, 1));
    }
    h = max_pool2(h);
  }
  return global_avg_pool(h);
}

void ProjectionHeadG::declare(ParameterStore& store) const {
  store.add("g.fc1.weight", {arch_.proj_hidden, arch_.latent_dim()});
  store.add("g.fc1.bias", {arch_.proj_hidden});
  store.add("g.fc2.weight", {arch_.proj_dim, arch_.proj_hidden});
  store.add("g.fc2.bias", {arch_.proj_dim});
}

Var ProjectionHeadG::forward(const Binding& params, Var latent) const {
  Var h = relu(dense(latent, params("g.fc1.weight"), params("g.fc1.bias")));
  return dense(h, params("g.fc2.weight"), params("g.fc2.bias"));
}

void ClassifierP::declare(ParameterStore& store) const {
  store.add("p.fc.weight", {1, arch_.latent_dim()});
  store.add("p.fc.bias", {1});
}

Var ClassifierP::forward(const Binding& params, Var latent) const {
  return sigmoid(dense(latent, params("p.fc.weight"), params("p.fc.bias")));
}

void TransformNetM::declare(ParameterStore& store) const {
  std::size_t in = 1;
  for (std::size_t b = 0; b < arch_.m_widths.size(); ++b) {
    store.add(m_name(b, "weight"), {arch_.m_widths[b], in, 3, 3});
    store.add(m_name(b, "bias"), {arch_.m_widths[b]});
    in = arch_.m_widths[b];
  }
  store.add("m.fc.weight", {7, in});
  store.add("m.fc.bias", {7});
}

Var TransformNetM::forward(const Binding& params, Var images) const {
  check_images(images.value(), std::size_t{1} << arch_.m_widths.size(), "transform network");
  Var h = images;
  for (std::size_t b = 0; b < arch_.m_widths.size(); ++b) {
    h = max_pool2(relu(conv2d(h, params(m_name(b, "weight")), params(m_name(b, "bias")), 1, 1)));
  }
  return sigmoid(dense(global_avg_pool(h), params("m.fc.weight"), params("m.fc.bias")));
}

ParameterStore Networks::make_store(bool with_m) const {
  ParameterStore store;
  f.declare(store);
  g.declare(store);
  p.declare(store);
  if (with_m) m.declare(store);
  return store;
}

ArchSpec infer_arch(const ParameterStore& store) {
  ArchSpec arch;
  arch.encoder_widths.clear();
  arch.m_widths.clear();
  while (store.contains(encoder_name(arch.encoder_widths.size(), 0, "weight"))) {
    arch.encoder_widths.push_back(store.at(encoder_name(arch.encoder_widths.size(), 0, "weight")).value.dim(0));
  }
  require(!arch.encoder_widths.empty(), ErrorCode::ShapeMismatch, "store holds no encoder tensors");
  arch.convs_per_block = 0;
  while (store.contains(encoder_name(0, arch.convs_per_block, "weight"))) ++arch.convs_per_block;
  require(store.contains("g.fc1.weight") && store.contains("g.fc2.weight"), ErrorCode::ShapeMismatch,
          "store holds no projection head tensors");
  arch.proj_hidden = store.at("g.fc1.weight").value.dim(0);
  arch.proj_dim = store.at("g.fc2.weight").value.dim(0);
  while (store.contains(m_name(arch.m_widths.size(), "weight"))) {
    arch.m_widths.push_back(store.at(m_name(arch.m_widths.size(), "weight")).value.dim(0));
  }
  if (arch.m_widths.empty()) arch.m_widths = ArchSpec{}.m_widths;
  arch.validate();

  // Every expected tensor must be present with the expected shape.
  Networks nets(arch);
  auto expected = nets.make_store(has_transform_net(store));
  expected.assign_from(store);
  return arch;
}

bool has_transform_net(const ParameterStore& store) { return store.contains("m.fc.weight"); }

Tensor encode(const ParameterStore& store, const ArchSpec& arch, const Tensor& images) {
  Graph graph;
  Binding f(graph, store, "f.", false);
  return EncoderF(arch).forward(f, graph.constant(images)).value();
}

Tensor transform_params(const ParameterStore& store, const ArchSpec& arch, const Tensor& images) {
  Graph graph;
  Binding m(graph, store, "m.", false);
  return TransformNetM(arch).forward(m, graph.constant(images)).value();
}

}  // namespace augdiff
