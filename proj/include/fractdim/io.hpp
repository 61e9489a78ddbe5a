#pragma once

// Serialization: CSV for numeric tables and point clouds (17 significant
// digits, lossless for doubles), JSON for symbolic objects and configs, and
// a small content hash for manifests.

#include <json.hpp>

#include <cctype>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "fractdim/cloud.hpp"
#include "fractdim/common.hpp"
#include "fractdim/kernels.hpp"
#include "fractdim/scenarios.hpp"
#include "fractdim/symbolic.hpp"

namespace fractdim {

// ---------------------------------------------------------------------------
// CSV.

inline void write_csv(const std::string& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  for (std::size_t i = 0; i < header.size(); ++i)
    out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw ValidationError("CSV row width does not match the header");
    for (std::size_t i = 0; i < row.size(); ++i)
      out << (i ? "," : "") << row[i];
    out << "\n";
  }
  if (!out) throw ConfigError("failed while writing: " + path);
}

// All rows including the header; fields split on commas (no quoting — the
// writers only emit numbers and bare identifiers).
inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open for reading: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(
          start, comma == std::string::npos ? std::string::npos
                                            : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

inline void write_point_cloud_csv(const std::string& path,
                                  const PointCloud& cloud) {
  cloud.validate();
  std::vector<std::string> header;
  for (int j = 0; j < cloud.dim(); ++j)
    header.push_back("x" + std::to_string(j + 1));
  std::vector<std::vector<std::string>> rows;
  for (long i = 0; i < cloud.size(); ++i) {
    std::vector<std::string> row;
    for (int j = 0; j < cloud.dim(); ++j)
      row.push_back(format_float17(cloud.pts(i, j)));
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

inline double parse_double_field(const std::string& field) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + field + "'");
  }
  while (used < field.size() && std::isspace((unsigned char)field[used]))
    ++used;
  if (used != field.size())
    throw ConfigError("trailing characters in number: '" + field + "'");
  return v;
}

inline PointCloud read_point_cloud_csv(const std::string& path,
                                       double resolution = 0.0) {
  const auto rows = read_csv(path);
  if (rows.size() < 2)
    throw ConfigError("point cloud CSV needs a header and at least one row");
  const std::size_t d = rows[0].size();
  PointCloud cloud;
  cloud.pts = Eigen::MatrixXd(static_cast<long>(rows.size() - 1),
                              static_cast<long>(d));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != d)
      throw ConfigError("ragged point cloud CSV at line " +
                        std::to_string(i + 1));
    for (std::size_t j = 0; j < d; ++j)
      cloud.pts(static_cast<long>(i - 1), static_cast<long>(j)) =
          parse_double_field(rows[i][j]);
  }
  cloud.resolution = resolution;
  cloud.validate();
  return cloud;
}

inline void write_fbm_sample_csv(const std::string& path,
                                 const FbmSample& sample) {
  std::vector<std::string> header;
  for (long j = 0; j < sample.base.cols(); ++j)
    header.push_back("x" + std::to_string(j + 1));
  for (long j = 0; j < sample.image.cols(); ++j)
    header.push_back("image" + std::to_string(j + 1));
  std::vector<std::vector<std::string>> rows;
  for (long i = 0; i < sample.base.rows(); ++i) {
    std::vector<std::string> row;
    for (long j = 0; j < sample.base.cols(); ++j)
      row.push_back(format_float17(sample.base(i, j)));
    for (long j = 0; j < sample.image.cols(); ++j)
      row.push_back(format_float17(sample.image(i, j)));
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

// The base/image split is recovered from the header names (x1..xd then
// image1..imagem). The field index alpha is not stored in the CSV and must
// be supplied by the caller.
inline FbmSample read_fbm_sample_csv(const std::string& path, double alpha) {
  const auto rows = read_csv(path);
  if (rows.size() < 2)
    throw ConfigError("field sample CSV needs a header and at least one row");
  long d = 0, m = 0;
  for (const auto& name : rows[0]) {
    if (name.rfind("x", 0) == 0 && m == 0)
      ++d;
    else if (name.rfind("image", 0) == 0)
      ++m;
    else
      throw ConfigError("unexpected field sample column: " + name);
  }
  if (d < 1 || m < 1)
    throw ConfigError("field sample CSV needs x... and image... columns");
  FbmSample sample;
  sample.alpha = alpha;
  const long n = static_cast<long>(rows.size()) - 1;
  sample.base = Eigen::MatrixXd(n, d);
  sample.image = Eigen::MatrixXd(n, m);
  for (long i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i) + 1];
    if (static_cast<long>(row.size()) != d + m)
      throw ConfigError("ragged field sample CSV at line " +
                        std::to_string(i + 2));
    for (long j = 0; j < d; ++j)
      sample.base(i, j) = parse_double_field(row[static_cast<std::size_t>(j)]);
    for (long j = 0; j < m; ++j)
      sample.image(i, j) =
          parse_double_field(row[static_cast<std::size_t>(d + j)]);
  }
  return sample;
}

// ---------------------------------------------------------------------------
// JSON forms.

inline nlohmann::json ifs_to_json(const AffineIfs& ifs) {
  nlohmann::json matrices = nlohmann::json::array();
  for (const auto& t : ifs.maps) {
    nlohmann::json flat = nlohmann::json::array();
    for (int i = 0; i < ifs.d; ++i)
      for (int j = 0; j < ifs.d; ++j) flat.push_back(t(i, j));
    matrices.push_back(std::move(flat));
  }
  return {{"d", ifs.d}, {"matrices", matrices}};
}

inline AffineIfs ifs_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("d") || !j.contains("matrices"))
    throw ConfigError("IFS JSON needs fields 'd' and 'matrices'");
  const int d = j.at("d").get<int>();
  if (d < 1) throw ConfigError("IFS dimension must be >= 1");
  std::vector<Eigen::MatrixXd> maps;
  for (const auto& flat : j.at("matrices")) {
    if (!flat.is_array() || flat.size() != static_cast<std::size_t>(d) * d)
      throw ConfigError("each matrix must be a row-major array of d*d floats");
    Eigen::MatrixXd t(d, d);
    std::size_t k = 0;
    for (int i = 0; i < d; ++i)
      for (int jj = 0; jj < d; ++jj) t(i, jj) = flat[k++].get<double>();
    maps.push_back(std::move(t));
  }
  try {
    return validate_ifs(d, maps);
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("invalid IFS: ") + e.what());
  }
}

inline nlohmann::json set_to_json(const SymbolicSet& set) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& w : set.words) arr.push_back(format_word(w));
  return arr;
}

inline SymbolicSet set_from_json(const nlohmann::json& j, int alphabet) {
  if (!j.is_array()) throw ConfigError("symbolic set must be a JSON array");
  SymbolicSet set;
  set.m = alphabet;
  for (const auto& item : j) {
    if (!item.is_string())
      throw ConfigError("symbolic set entries must be digit strings");
    try {
      set.words.push_back(parse_word(item.get<std::string>()));
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("bad word: ") + e.what());
    }
  }
  try {
    set.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("invalid symbolic set: ") + e.what());
  }
  return set;
}

inline AdmissibleFn phi_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("variant"))
    throw ConfigError("phi spec needs a 'variant' field");
  const std::string variant = j.at("variant").get<std::string>();
  AdmissibleFn phi = AdmissibleFn::power(1.0);
  try {
    if (variant == "power") {
      if (!j.contains("theta"))
        throw ConfigError("power phi needs a 'theta' field");
      phi = AdmissibleFn::power(j.at("theta").get<double>());
    } else if (variant == "boxlike") {
      phi = AdmissibleFn::boxlike();
    } else if (variant == "loglike") {
      phi = AdmissibleFn::loglike();
    } else if (variant == "custom") {
      if (!j.contains("table"))
        throw ConfigError("custom phi needs a 'table' field");
      std::vector<std::pair<double, double>> table;
      for (const auto& node : j.at("table")) {
        if (!node.is_array() || node.size() != 2)
          throw ConfigError("custom phi table entries must be [r, phi] pairs");
        table.emplace_back(node[0].get<double>(), node[1].get<double>());
      }
      phi = AdmissibleFn::custom(table);
    } else {
      throw ConfigError("unknown phi variant: " + variant);
    }
    if (j.contains("alpha")) {
      const double alpha = j.at("alpha").get<double>();
      if (alpha != 1.0) phi = phi_alpha(phi, alpha);
    }
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("invalid phi spec: ") + e.what());
  }
  return phi;
}

// ---------------------------------------------------------------------------
// Hashing.

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Hash of the canonical (key-sorted) JSON dump, as 16 hex digits.
inline std::string config_hash_hex(const nlohmann::json& j) {
  const std::uint64_t h = fnv1a64(j.dump());
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

}  // namespace fractdim
