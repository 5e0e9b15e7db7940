#pragma once

// JSON specs for kernels, densities and bandwidths; CSV point tables; a JSON
// writer with 17 significant digits; atomic file replacement.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "kdebias/bandwidth.hpp"
#include "kdebias/densities.hpp"
#include "kdebias/error.hpp"
#include "kdebias/kernels.hpp"
#include "kdebias/sample_set.hpp"

namespace kdebias::io {

using json = nlohmann::ordered_json;

inline std::string format_double(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline void write_string(std::string& out, const std::string& s) {
  out += json(s).dump();
}

inline void dump(std::string& out, const json& j, int indent, int level) {
  const std::string pad(static_cast<std::size_t>(indent * (level + 1)), ' ');
  const std::string close(static_cast<std::size_t>(indent * level), ' ');
  const char* nl = indent > 0 ? "\n" : "";
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{";
      out += nl;
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) {
          out += ",";
          out += nl;
        }
        first = false;
        out += pad;
        write_string(out, it.key());
        out += indent > 0 ? ": " : ":";
        dump(out, it.value(), indent, level + 1);
      }
      out += nl;
      out += close;
      out += "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // numeric arrays stay on one line
      bool flat = true;
      for (const auto& e : j) flat = flat && e.is_primitive();
      out += "[";
      if (!flat) out += nl;
      bool first = true;
      for (const auto& e : j) {
        if (!first) {
          out += ",";
          out += flat ? (indent > 0 ? " " : "") : nl;
        }
        first = false;
        if (!flat) out += pad;
        dump(out, e, indent, level + 1);
      }
      if (!flat) {
        out += nl;
        out += close;
      }
      out += "]";
      return;
    }
    case json::value_t::number_float: out += format_double(j.get<double>()); return;
    default: out += j.dump(); return;
  }
}

}  // namespace detail

/// Serializes with every float printed as %.17g.
inline std::string dump(const json& j, int indent = 2) {
  std::string out;
  detail::dump(out, j, indent, 0);
  out += "\n";
  return out;
}

/// Writes via a temporary file in the same directory and renames it over `path`.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::InvalidArgument, "cannot open output file " + tmp.string());
    f << content;
    f.flush();
    if (!f) throw Error(ErrorCode::InvalidArgument, "failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::InvalidArgument, "cannot move output into place at " + path.string());
  }
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::InvalidArgument, "cannot read " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, what + ": " + e.what());
  }
}

// ---- CSV ----

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_number(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, where + ": not a number: '" + s + "'");
  }
  while (used < s.size() && (s[used] == ' ' || s[used] == '\t')) ++used;
  if (used != s.size()) throw Error(ErrorCode::InvalidArgument, where + ": trailing characters in '" + s + "'");
  return v;
}

/// Points from a CSV with header x1..xd, one point per row.
inline std::vector<Vector> read_points_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::InvalidArgument, "cannot read " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw Error(ErrorCode::InvalidArgument, path.string() + ": empty file");
  const auto header = split(line, ',');
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] != "x" + std::to_string(i + 1))
      throw Error(ErrorCode::InvalidArgument, path.string() + ": header must be x1..xd");
  const std::size_t d = header.size();
  std::vector<Vector> pts;
  std::size_t row = 1;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line, ',');
    const std::string where = path.string() + ":" + std::to_string(row);
    if (cells.size() != d) throw Error(ErrorCode::DimensionMismatch, where + ": expected " + std::to_string(d) + " columns");
    Vector p(d);
    for (std::size_t i = 0; i < d; ++i) p[i] = parse_number(cells[i], where);
    pts.push_back(std::move(p));
  }
  return pts;
}

inline SampleSet read_samples_csv(const std::filesystem::path& path) {
  const auto pts = read_points_csv(path);
  if (pts.empty()) throw Error(ErrorCode::EmptySamples, path.string() + ": no samples");
  const std::size_t d = pts.front().size();
  std::vector<double> data;
  data.reserve(pts.size() * d);
  for (const auto& p : pts) data.insert(data.end(), p.begin(), p.end());
  return SampleSet(d, std::move(data));
}

inline std::string points_header(std::size_t d) {
  std::string h;
  for (std::size_t i = 0; i < d; ++i) h += (i ? ",x" : "x") + std::to_string(i + 1);
  return h;
}

inline std::string samples_to_csv(const SampleSet& s) {
  std::string out = points_header(s.dim()) + "\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto p = s.point(i);
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (k) out += ",";
      out += format_double(p[k]);
    }
    out += "\n";
  }
  return out;
}

/// Simple CSV table builder; numbers use %.17g.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  CsvTable& row() {
    rows_.emplace_back();
    return *this;
  }
  CsvTable& add(double v) {
    rows_.back().push_back(format_double(v));
    return *this;
  }
  CsvTable& add(const std::string& s) {
    rows_.back().push_back(s);
    return *this;
  }

  std::string str() const {
    std::string out;
    for (std::size_t i = 0; i < columns_.size(); ++i) out += (i ? "," : "") + columns_[i];
    out += "\n";
    for (const auto& r : rows_) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
      out += "\n";
    }
    return out;
  }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

// ---- specs ----

inline Vector vector_from_json(const json& j, const std::string& what) {
  if (j.is_number()) return {j.get<double>()};
  if (!j.is_array()) throw Error(ErrorCode::InvalidArgument, what + " must be a number array");
  Vector v;
  for (const auto& e : j) {
    if (!e.is_number()) throw Error(ErrorCode::InvalidArgument, what + " must be a number array");
    v.push_back(e.get<double>());
  }
  return v;
}

/// Square matrix from a nested array, a flat row-major array of d*d numbers,
/// or a scalar (times the identity when d is given).
inline Matrix matrix_from_json(const json& j, std::size_t d_hint, const std::string& what) {
  if (j.is_number()) {
    const std::size_t d = d_hint == 0 ? 1 : d_hint;
    return Matrix::diagonal(std::vector<double>(d, j.get<double>()));
  }
  if (!j.is_array() || j.empty()) throw Error(ErrorCode::InvalidArgument, what + " must be a matrix");
  if (j.front().is_array()) {
    const std::size_t d = j.size();
    std::vector<double> flat;
    for (const auto& r : j) {
      const Vector row = vector_from_json(r, what);
      if (row.size() != d) throw Error(ErrorCode::DimensionMismatch, what + " must be square");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return Matrix(d, std::move(flat));
  }
  const Vector flat = vector_from_json(j, what);
  const auto d = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(flat.size()))));
  if (d * d != flat.size()) throw Error(ErrorCode::DimensionMismatch, what + " flat array length is not a square");
  return Matrix(d, flat);
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.size(); ++i) {
    json r = json::array();
    for (std::size_t k = 0; k < m.size(); ++k) r.push_back(m(i, k));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline BandwidthMatrix bandwidth_from_json(const json& j, std::size_t d_hint = 0) {
  return BandwidthMatrix::make(matrix_from_json(j, d_hint, "bandwidth"));
}

inline json bandwidth_to_json(const BandwidthMatrix& h) { return matrix_to_json(h.entries()); }

inline Base1D base_from_string(const std::string& s) {
  if (s == "gaussian") return Base1D::Gaussian;
  if (s == "epanechnikov") return Base1D::Epanechnikov;
  if (s == "higher_order4") return Base1D::HigherOrder4;
  throw Error(ErrorCode::InvalidArgument, "unknown base kernel '" + s + "'");
}

inline std::string kind_name(KernelKind k) {
  switch (k) {
    case KernelKind::Gaussian: return "gaussian";
    case KernelKind::Epanechnikov: return "epanechnikov";
    case KernelKind::ProductOf1D: return "product";
    case KernelKind::HigherOrder4: return "higher_order4";
    case KernelKind::AdversarialRadial: return "adversarial";
  }
  return "unknown";
}

inline std::string base_name(Base1D b) {
  switch (b) {
    case Base1D::Gaussian: return "gaussian";
    case Base1D::Epanechnikov: return "epanechnikov";
    case Base1D::HigherOrder4: return "higher_order4";
  }
  return "unknown";
}

inline AdversarialParams adversarial_from_json(const json& p, std::size_t dim) {
  AdversarialParams a;
  a.dim = dim;
  a.p = p.value("p", a.p);
  a.ell = p.value("ell", a.ell);
  a.n_max = p.value("n_max", a.n_max);
  a.c = p.value("c", 0.0);
  a.validate();
  return a;
}

/// {kind, dim, params}. A bare string is taken as the kind with dim 1.
inline Kernel kernel_from_json(const json& j) {
  json spec = j.is_string() ? json{{"kind", j.get<std::string>()}} : j;
  if (!spec.is_object() || !spec.contains("kind"))
    throw Error(ErrorCode::InvalidArgument, "kernel spec needs a 'kind'");
  const std::string kind = spec["kind"].get<std::string>();
  const long dim_l = spec.value("dim", 1L);
  if (dim_l < 1) throw Error(ErrorCode::InvalidArgument, "kernel dim must be >= 1");
  const auto dim = static_cast<std::size_t>(dim_l);
  const json params = spec.value("params", json::object());
  if (kind == "gaussian") return Kernel::gaussian(dim);
  if (kind == "epanechnikov") return Kernel::epanechnikov(dim);
  if (kind == "higher_order4") return Kernel::higher_order4(dim);
  if (kind == "product") return Kernel::product(base_from_string(params.value("base", std::string("gaussian"))), dim);
  if (kind == "adversarial") return Kernel::adversarial(adversarial_from_json(params, dim));
  throw Error(ErrorCode::InvalidArgument, "unknown kernel kind '" + kind + "'");
}

inline json kernel_to_json(const Kernel& k) {
  json j{{"kind", kind_name(k.kind())}, {"dim", k.dim()}};
  json params = json::object();
  if (k.kind() == KernelKind::ProductOf1D) params["base"] = base_name(k.base());
  if (k.kind() == KernelKind::AdversarialRadial) {
    const auto& a = k.adversarial_params();
    params = {{"p", a.p}, {"ell", a.ell}, {"n_max", a.n_max}, {"c", a.c}};
  }
  j["params"] = params;
  return j;
}

/// {kind: gaussian_mixture, components: [{weight, mean, cov}]},
/// {kind: standard_gaussian, dim}, {kind: far_mass, direction, far_radius,
/// shell_width, inner_mass, inner_scale} or {kind: far_mass_at, center, radius, ...}.
inline DensityModel density_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw Error(ErrorCode::InvalidArgument, "density spec needs a 'kind'");
  const std::string kind = j["kind"].get<std::string>();
  if (kind == "standard_gaussian") return DensityModel::standard_gaussian(j.value("dim", 1UL));
  if (kind == "gaussian_mixture") {
    if (!j.contains("components") || !j["components"].is_array())
      throw Error(ErrorCode::InvalidArgument, "mixture needs a components array");
    std::vector<DensityModel::ComponentSpec> comps;
    for (const auto& c : j["components"]) {
      Vector mean = vector_from_json(c.at("mean"), "component mean");
      Matrix cov = matrix_from_json(c.at("cov"), mean.size(), "component cov");
      comps.push_back({c.value("weight", 1.0), std::move(mean), std::move(cov)});
    }
    return DensityModel::gaussian_mixture(comps);
  }
  const double inner_mass = j.value("inner_mass", 0.5);
  const double inner_scale = j.value("inner_scale", 1.0);
  if (kind == "far_mass")
    return DensityModel::far_mass(vector_from_json(j.at("direction"), "far direction"), j.value("far_radius", 1.05),
                                  j.value("shell_width", 0.05), inner_mass, inner_scale);
  if (kind == "far_mass_at")
    return DensityModel::far_mass_at(vector_from_json(j.at("center"), "far center"), j.at("radius").get<double>(),
                                     inner_mass, inner_scale);
  throw Error(ErrorCode::InvalidArgument, "unknown density kind '" + kind + "'");
}

inline json density_to_json(const DensityModel& m) {
  if (m.kind() == DensityKind::GaussianMixture) {
    json comps = json::array();
    for (const auto& c : m.components())
      comps.push_back({{"weight", c.weight()}, {"mean", c.mean()}, {"cov", matrix_to_json(c.cov())}});
    return {{"kind", "gaussian_mixture"}, {"components", comps}};
  }
  const auto& f = m.far();
  return {{"kind", "far_mass_at"},
          {"center", f.far_center},
          {"radius", f.far_ball_radius},
          {"inner_mass", f.inner_mass},
          {"inner_scale", f.inner_scale}};
}

}  // namespace kdebias::io
