#pragma once

#include <stdexcept>

namespace sgdvar {

// Step-size schedule alpha(t) for t = 0,1,2,...
//   constant:          alpha(t) = scale
//   inverse_iteration: alpha(t) = scale / (t + 1)
// The inverse schedule is indexed from zero so the first step uses alpha(0) =
// scale; there is no division by zero anywhere on the trajectory.
struct LearningRateSchedule {
  enum class Kind { Constant, InverseIteration };

  Kind kind = Kind::Constant;
  double scale = 1.0;

  static LearningRateSchedule constant(double scale) {
    check_scale(scale);
    return {Kind::Constant, scale};
  }

  static LearningRateSchedule inverse_iteration(double scale) {
    check_scale(scale);
    return {Kind::InverseIteration, scale};
  }

  double alpha(int t) const {
    if (t < 0) throw std::invalid_argument("LearningRateSchedule: t must be >= 0");
    return kind == Kind::Constant ? scale : scale / static_cast<double>(t + 1);
  }

 private:
  static void check_scale(double scale) {
    if (!(scale > 0.0))
      throw std::invalid_argument("LearningRateSchedule: scale must be positive");
  }
};

}  // namespace sgdvar
