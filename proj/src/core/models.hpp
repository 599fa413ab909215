#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "core/autodiff.hpp"
#include "core/rng.hpp"

namespace augdiff {

/// Layer widths of the four networks. Defaults are the full-size models; the
/// block structure (two 3x3 convs per encoder block, one per M block) is fixed.
struct ArchSpec {
  std::vector<std::size_t> encoder_widths{16, 32, 64, 128};
  std::size_t convs_per_block = 2;
  std::size_t proj_hidden = 128;
  std::size_t proj_dim = 64;
  std::vector<std::size_t> m_widths{8, 16};

  std::size_t latent_dim() const { return encoder_widths.back(); }
  /// Image sizes must be multiples of this (one 2x2 pool per encoder block).
  std::size_t spatial_divisor() const { return std::size_t{1} << encoder_widths.size(); }
  void validate() const;
  bool operator==(const ArchSpec&) const = default;
};

/// Ordered named weight tensors with gradient slots and Adam state.
class ParameterStore {
 public:
  struct Slot {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
    std::uint64_t step = 0;
  };

  void add(std::string name, Shape shape);
  /// Appends a slot with explicit contents (used by checkpoint loading).
  void add_slot(Slot slot);

  bool contains(std::string_view name) const { return index_.find(name) != index_.end(); }
  Slot& at(std::string_view name);
  const Slot& at(std::string_view name) const;

  std::vector<Slot>& slots() noexcept { return slots_; }
  const std::vector<Slot>& slots() const noexcept { return slots_; }
  std::size_t size() const noexcept { return slots_.size(); }

  void zero_grads();

  /// Copies values and optimizer state slot by slot from `other`, which must
  /// hold every slot of this store with the same shape.
  void assign_from(const ParameterStore& other);

 private:
  std::vector<Slot> slots_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Values, Adam moments and step counters of all slots whose name starts with
/// `prefix` compare bitwise equal (and the slot sets match).
bool bitwise_equal(const ParameterStore& a, const ParameterStore& b, std::string_view prefix = "");

/// He-uniform fan-in initialization of every ".weight" slot, zeros for ".bias".
void init_weights(ParameterStore& store, Rng& rng);

/// Graph leaves for the slots of a store under `prefix` ("f.", "g.", "p.", "m.").
class Binding {
 public:
  Binding(Graph& graph, const ParameterStore& store, std::string_view prefix, bool trainable);

  Var operator()(std::string_view name) const;
  bool trainable() const noexcept { return trainable_; }

  /// Adds this binding's gradients into the store's gradient slots.
  void collect(const Gradients& grads, ParameterStore& store) const;

 private:
  std::vector<std::pair<std::string, Var>> vars_;
  bool trainable_;
};

/// Encoder f: conv blocks (3x3 conv + ReLU, repeated, then 2x2 max-pool),
/// global average pooling to a latent vector.
class EncoderF {
 public:
  explicit EncoderF(ArchSpec arch) : arch_(std::move(arch)) {}
  void declare(ParameterStore& store) const;
  Var forward(const Binding& params, Var images) const;

 private:
  ArchSpec arch_;
};

/// Projection head g: dense, ReLU, dense.
class ProjectionHeadG {
 public:
  explicit ProjectionHeadG(ArchSpec arch) : arch_(std::move(arch)) {}
  void declare(ParameterStore& store) const;
  Var forward(const Binding& params, Var latent) const;

 private:
  ArchSpec arch_;
};

/// Linear classifier p: dense to one logit, sigmoid. Output [B,1].
class ClassifierP {
 public:
  explicit ClassifierP(ArchSpec arch) : arch_(std::move(arch)) {}
  void declare(ParameterStore& store) const;
  Var forward(const Binding& params, Var latent) const;

 private:
  ArchSpec arch_;
};

/// Transformation network M: conv blocks (3x3 conv + ReLU + 2x2 max-pool),
/// global average pooling, dense to 7, sigmoid. Output [B,7] in (0,1).
class TransformNetM {
 public:
  explicit TransformNetM(ArchSpec arch) : arch_(std::move(arch)) {}
  void declare(ParameterStore& store) const;
  Var forward(const Binding& params, Var images) const;

 private:
  ArchSpec arch_;
};

struct Networks {
  explicit Networks(ArchSpec a) : arch(std::move(a)), f(arch), g(arch), p(arch), m(arch) { arch.validate(); }

  /// Store with f, g, p and (optionally) M slots in a fixed order.
  ParameterStore make_store(bool with_m) const;

  ArchSpec arch;
  EncoderF f;
  ProjectionHeadG g;
  ClassifierP p;
  TransformNetM m;
};

/// Recovers the architecture from slot names and shapes.
ArchSpec infer_arch(const ParameterStore& store);
bool has_transform_net(const ParameterStore& store);

/// Encoder latents for a batch without building a gradient graph.
Tensor encode(const ParameterStore& store, const ArchSpec& arch, const Tensor& images);
/// Transform parameters M(images), [B,7].
Tensor transform_params(const ParameterStore& store, const ArchSpec& arch, const Tensor& images);

}  // namespace augdiff
