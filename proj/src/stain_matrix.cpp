#include "stainkit/stain_matrix.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stainkit/errors.hpp"

namespace stainkit {
namespace {

double norm3(const std::array<double, 3>& v) {
  return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

std::array<double, 3> normalized(const std::array<double, 3>& v) {
  const double n = norm3(v);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw ZeroColumnError("stain column has zero or non-finite norm");
  }
  return {v[0] / n, v[1] / n, v[2] / n};
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string to_string(StainMethod m) {
  switch (m) {
    case StainMethod::macenko: return "macenko";
    case StainMethod::vahadane: return "vahadane";
    case StainMethod::reference: return "reference";
  }
  return "reference";
}

StainMethod stain_method_from_string(const std::string& s) {
  if (s == "macenko") return StainMethod::macenko;
  if (s == "vahadane") return StainMethod::vahadane;
  if (s == "reference") return StainMethod::reference;
  throw ParseError("unknown stain method: \"" + s + "\"");
}

StainMatrix canonical_stain_order(const std::array<double, 3>& col_a,
                                  const std::array<double, 3>& col_b,
                                  StainMethod method) {
  const auto a = normalized(col_a);
  const auto b = normalized(col_b);

  // Hematoxylin absorbs more red light; ties fall back to green.
  bool a_first = a[0] > b[0];
  if (a[0] == b[0]) a_first = a[1] > b[1];

  StainMatrix m;
  m.hematoxylin = a_first ? a : b;
  m.eosin = a_first ? b : a;
  m.method = method;
  return m;
}

double angle_between_deg(const std::array<double, 3>& a,
                         const std::array<double, 3>& b) {
  const double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  const double denom = norm3(a) * norm3(b);
  if (!(denom > 0.0)) {
    throw ZeroColumnError("angle of zero-length vector");
  }
  double c = dot / denom;
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return std::acos(c) * 180.0 / 3.14159265358979323846;
}

double max_column_angle_deg(const StainMatrix& a, const StainMatrix& b) {
  const double ah = angle_between_deg(a.hematoxylin, b.hematoxylin);
  const double ae = angle_between_deg(a.eosin, b.eosin);
  return ah > ae ? ah : ae;
}

StainMatrix reference_he() {
  // Ruifrok & Johnston H&E OD directions.
  return canonical_stain_order({0.65, 0.70, 0.29}, {0.07, 0.99, 0.11},
                               StainMethod::reference);
}

std::string stain_profile_to_json(const StainProfile& p) {
  // Hand-emitted so the field order is fixed and every number carries full
  // precision (17 significant digits).
  std::ostringstream out;
  const auto& h = p.matrix.hematoxylin;
  const auto& e = p.matrix.eosin;
  out << "{\"method\": \"" << to_string(p.matrix.method) << "\", "
      << "\"stains\": [[" << fmt_double(h[0]) << ", " << fmt_double(h[1])
      << ", " << fmt_double(h[2]) << "], [" << fmt_double(e[0]) << ", "
      << fmt_double(e[1]) << ", " << fmt_double(e[2]) << "]], "
      << "\"max_concentrations\": [" << fmt_double(p.max_concentrations[0])
      << ", " << fmt_double(p.max_concentrations[1]) << "]}\n";
  return out.str();
}

void save_stain_profile(const std::string& path, const StainProfile& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << stain_profile_to_json(p);
  if (!out) throw IoError("failed writing: " + path);
}

StainProfile parse_stain_profile(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("stain profile JSON: ") + e.what());
  }
  try {
    StainProfile p;
    p.matrix.method = stain_method_from_string(j.at("method").get<std::string>());
    const auto& stains = j.at("stains");
    if (!stains.is_array() || stains.size() != 2 || stains[0].size() != 3 ||
        stains[1].size() != 3) {
      throw ParseError("stain profile: \"stains\" must be a 2x3 array");
    }
    for (int c = 0; c < 3; ++c) {
      p.matrix.hematoxylin[c] = stains[0][c].get<double>();
      p.matrix.eosin[c] = stains[1][c].get<double>();
    }
    const auto& maxc = j.at("max_concentrations");
    if (!maxc.is_array() || maxc.size() != 2) {
      throw ParseError(
          "stain profile: \"max_concentrations\" must have 2 entries");
    }
    p.max_concentrations = {maxc[0].get<double>(), maxc[1].get<double>()};
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("stain profile JSON: ") + e.what());
  }
}

StainProfile load_stain_profile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_stain_profile(buf.str());
}

}  // namespace stainkit
