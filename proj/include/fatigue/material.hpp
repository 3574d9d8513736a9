#pragma once

namespace fatigue {

/// Basquin/Goodman material constants.
struct MaterialParams {
  double A = 0.0;          ///< fatigue strength coefficient, MPa
  double b = 0.0;          ///< fatigue strength exponent (negative)
  double sigma_uts = 0.0;  ///< ultimate tensile strength, MPa

  /// Throws Error(InvalidArgument) unless A > 0, b < 0, sigma_uts > 0.
  void validate() const;
};

}  // namespace fatigue
