#pragma once

#include <array>
#include <string>

namespace stainkit {

enum class StainMethod { macenko, vahadane, reference };

std::string to_string(StainMethod m);
StainMethod stain_method_from_string(const std::string& s);

// 3x2 matrix of unit-norm stain color vectors in OD space. Column order is
// canonical: hematoxylin first, identified as the column with the larger
// red-channel OD component (ties broken by green).
struct StainMatrix {
  std::array<double, 3> hematoxylin{};
  std::array<double, 3> eosin{};
  StainMethod method = StainMethod::reference;

  const std::array<double, 3>& column(int i) const {
    return i == 0 ? hematoxylin : eosin;
  }
};

// Normalizes both columns and applies the canonical H/E ordering.
// Throws ZeroColumnError if a column has zero (or non-finite) norm.
StainMatrix canonical_stain_order(const std::array<double, 3>& col_a,
                                  const std::array<double, 3>& col_b,
                                  StainMethod method);

// Angle between two direction vectors, in degrees.
double angle_between_deg(const std::array<double, 3>& a,
                         const std::array<double, 3>& b);

// Worst per-column angular distance between two stain matrices, degrees.
double max_column_angle_deg(const StainMatrix& a, const StainMatrix& b);

// Ruifrok & Johnston H&E optical-density directions, unit-normalized.
StainMatrix reference_he();

// The on-disk stain description: matrix plus the 99th-percentile H/E
// concentrations of the image it was estimated from.
struct StainProfile {
  StainMatrix matrix;
  std::array<double, 2> max_concentrations{1.0, 1.0};
};

// JSON with fixed field order and >= 12 significant digits:
// {"method": ..., "stains": [[rH,gH,bH],[rE,gE,bE]],
//  "max_concentrations": [cH99, cE99]}
std::string stain_profile_to_json(const StainProfile& profile);
void save_stain_profile(const std::string& path, const StainProfile& profile);
StainProfile parse_stain_profile(const std::string& json_text);
StainProfile load_stain_profile(const std::string& path);

}  // namespace stainkit
