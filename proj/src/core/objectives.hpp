#pragma once

#include <array>
#include <optional>
#include <vector>

#include "core/autodiff.hpp"

namespace augdiff {

/// Loss weights alpha0..alpha4 of the coupled objective, temperature and the
/// similarity choice. alpha0/alpha1 weight M's objective, alpha2..alpha4 the
/// encoder's.
struct ObjectiveConfig {
  std::array<double, 5> alpha{1.0, 10.0, 1.0, 1.0, 1.0};
  double tau = 1.0;
  bool use_cosine = false;

  void validate() const;
};

/// Labels of a batch; only entries with mask[i] set carry a label.
struct Supervision {
  std::vector<double> labels;
  std::vector<char> mask;

  static Supervision all(std::vector<double> labels);
  std::size_t labeled() const;
};

/// Contrastive loss between transformed embeddings zm [B,d] and untransformed
/// embeddings z [B,d]:
///   L = -sum_i log( exp(sim(zm_i, z_i)) / sum_{j != i} exp(sim(zm_i, z_j)) )
/// with sim(a, b) = a.b / tau (cosine similarity when use_cosine is set).
/// Negatives are the untransformed embeddings of the other images. Each row
/// is evaluated with a max-shifted log-sum-exp. Requires B >= 2.
Var contrastive_loss(Var zm, Var z, const ObjectiveConfig& cfg);
double contrastive_loss_value(const Tensor& zm, const Tensor& z, double tau);

/// Rows scaled to unit Euclidean norm.
Var row_normalize(Var z);

/// Mean binary cross-entropy over the labeled entries of `pred` (B values in
/// (0,1), any shape), predictions clamped to [1e-7, 1 - 1e-7]. Labels must be
/// 0 or 1. Zero when nothing is labeled.
Var bce(Var pred, const Supervision& sup);
double bce_value(const Tensor& pred, const Supervision& sup);

/// Network outputs of one batch. `pred` (classifier on untransformed images)
/// is only needed by the encoder objective when alpha4 > 0.
struct BranchOutputs {
  Var zm;
  Var z;
  std::optional<Var> pred_m;
  std::optional<Var> pred;
};

struct Objective {
  Var total;
  double contrastive = 0.0;  // unweighted contrastive loss
  double supervised = 0.0;   // unweighted sum of the active BCE terms
};

/// J_M = -alpha0 * L_con(zm, z) + alpha1 * BCE(pred_m, y). Minimizing it drives
/// M to push positive pairs apart while keeping transformed images classifiable.
Objective m_objective(const BranchOutputs& out, const Supervision* sup, const ObjectiveConfig& cfg);

/// J_E = alpha2 * L_con(zm, z) + alpha3 * BCE(pred_m, y) + alpha4 * BCE(pred, y).
Objective encoder_objective(const BranchOutputs& out, const Supervision* sup, const ObjectiveConfig& cfg);

}  // namespace augdiff
