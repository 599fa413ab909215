#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace augdiff {

struct GradCheckOptions {
  double h = 1e-4;                 // transform finite-difference step
  double transform_tolerance = 1e-4;
  std::size_t draws = 10;          // random (image, lambda) draws per transform
  std::size_t image_size = 16;
  /// Step and tolerance of the end-to-end dJ_M/d(M weights) check.
  double e2e_h = 1e-6;
  double e2e_tolerance = 1e-3;
  std::uint64_t seed = 0;
  /// Subset to run: blur, noise, crop, flip0, flip1, rotate, compose, end-to-end.
  /// Empty runs everything.
  std::vector<std::string> only;
};

struct GradCheckRow {
  std::string check;   // transform name or "end-to-end"
  std::string target;  // parameter or weight tensor
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t draws = 0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  bool all_pass() const;
};

/// Names accepted by GradCheckOptions::only.
const std::vector<std::string>& grad_check_names();

/// Analytic derivatives of every transform parameter against central
/// differences, then dJ_M/d(M weights) of a tiny network on 8x8 images.
/// Draws whose finite-difference stencil would straddle a kink (rotation
/// samples crossing a pixel cell, crop window changing its dominant axis or
/// side) are redrawn.
GradCheckReport run_grad_check(const GradCheckOptions& opts);

}  // namespace augdiff
