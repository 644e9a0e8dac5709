#pragma once

// CSV datasets, stratified train/test splits and train-statistics
// standardization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "distinction/hypothesis.hpp"
#include "distinction/manifold.hpp"

namespace distinction {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  std::string name;
  std::vector<std::string> feature_names;
  std::vector<Vector> X;
  std::vector<ClassLabel> y;
  std::vector<std::string> class_names;  // label k is class_names[k]

  std::size_t size() const { return X.size(); }
  std::size_t dim() const { return feature_names.size(); }
  std::size_t n_classes() const { return class_names.size(); }

  std::string label_name(ClassLabel k) const {
    return k >= 0 && static_cast<std::size_t>(k) < class_names.size() ? class_names[k]
                                                                      : std::to_string(k);
  }

  /// Rows selected by index, sharing feature and class names.
  Dataset subset(const std::vector<std::size_t>& rows) const {
    Dataset out{name, feature_names, {}, {}, class_names};
    out.X.reserve(rows.size());
    out.y.reserve(rows.size());
    for (auto r : rows) {
      out.X.push_back(X.at(r));
      out.y.push_back(y.at(r));
    }
    return out;
  }
};

struct Split {
  Dataset train;
  Dataset test;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train_rows;  // row indices in the source dataset
  std::vector<std::size_t> test_rows;
};

/// Column selector: index (negative counts from the end) or header name.
using LabelColumn = std::variant<long, std::string>;

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Reads a header-prefixed CSV. Labels (string or integer) are mapped to
/// dense ids in order of first appearance.
inline Dataset load_csv(std::istream& in, const LabelColumn& label = -1L, std::string name = {}) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV: missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_csv_line(line);
  const long ncol = static_cast<long>(header.size());

  long label_idx = -1;
  if (const auto* idx = std::get_if<long>(&label)) {
    label_idx = *idx < 0 ? ncol + *idx : *idx;
  } else {
    const auto& want = std::get<std::string>(label);
    for (long i = 0; i < ncol; ++i)
      if (detail::trim(header[i]) == want) label_idx = i;
    if (label_idx < 0) throw DataError("label column '" + want + "' not found in header");
  }
  if (label_idx < 0 || label_idx >= ncol) throw DataError("label column index out of range");

  Dataset ds;
  ds.name = std::move(name);
  for (long i = 0; i < ncol; ++i)
    if (i != label_idx) ds.feature_names.push_back(detail::trim(header[i]));

  std::map<std::string, ClassLabel> label_ids;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (static_cast<long>(cells.size()) != ncol)
      throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(ncol) +
                      " columns, found " + std::to_string(cells.size()));
    Vector x;
    x.reserve(ds.feature_names.size());
    for (long c = 0; c < ncol; ++c) {
      const std::string cell = detail::trim(cells[c]);
      if (c == label_idx) {
        auto [it, inserted] = label_ids.try_emplace(cell, static_cast<ClassLabel>(label_ids.size()));
        if (inserted) ds.class_names.push_back(cell);
        ds.y.push_back(it->second);
        continue;
      }
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cell.size() || !std::isfinite(v))
        throw DataError("row " + std::to_string(row) + ", column " + std::to_string(c + 1) +
                        ": cannot parse '" + cell + "' as a number");
      x.push_back(v);
    }
    ds.X.push_back(std::move(x));
  }
  return ds;
}

inline Dataset load_csv(const std::string& path, const LabelColumn& label = -1L,
                        std::string name = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return load_csv(in, label, name.empty() ? path : std::move(name));
}

/// Per-class shuffle, then the first round(fraction * n_c) rows of each class
/// go to train. Both partitions list rows in source order.
inline Split stratified_split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("train fraction must lie in (0,1)");
  std::map<ClassLabel, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.y[i]].push_back(i);
  std::mt19937_64 rng(seed);
  Split s;
  s.seed = seed;
  for (auto& [k, rows] : by_class) {
    if (rows.size() < 2)
      throw DataError("class '" + ds.label_name(k) + "' has fewer than 2 samples");
    std::shuffle(rows.begin(), rows.end(), rng);
    auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(rows.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, rows.size() - 1);
    s.train_rows.insert(s.train_rows.end(), rows.begin(), rows.begin() + static_cast<long>(n_train));
    s.test_rows.insert(s.test_rows.end(), rows.begin() + static_cast<long>(n_train), rows.end());
  }
  std::sort(s.train_rows.begin(), s.train_rows.end());
  std::sort(s.test_rows.begin(), s.test_rows.end());
  s.train = ds.subset(s.train_rows);
  s.test = ds.subset(s.test_rows);
  return s;
}

struct Standardizer {
  Vector mean;
  Vector scale;

  static constexpr double kStdFloor = 1e-12;

  static Standardizer fit(const Dataset& ds) {
    if (ds.size() == 0) throw DataError("cannot standardize an empty dataset");
    const std::size_t d = ds.dim();
    Standardizer s{Vector(d, 0.0), Vector(d, 0.0)};
    for (const auto& x : ds.X)
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += x[j];
    for (auto& m : s.mean) m /= static_cast<double>(ds.size());
    // exact mean for constant columns so they map to exactly zero
    for (std::size_t j = 0; j < d; ++j) {
      const double first = ds.X.front()[j];
      if (std::all_of(ds.X.begin(), ds.X.end(), [&](const Vector& x) { return x[j] == first; }))
        s.mean[j] = first;
    }
    for (const auto& x : ds.X)
      for (std::size_t j = 0; j < d; ++j) s.scale[j] += (x[j] - s.mean[j]) * (x[j] - s.mean[j]);
    for (auto& v : s.scale) v = std::max(std::sqrt(v / static_cast<double>(ds.size())), kStdFloor);
    return s;
  }

  void apply(Dataset& ds) const {
    for (auto& x : ds.X)
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = (x[j] - mean[j]) / scale[j];
  }
};

/// Zero mean / unit (population) variance using train statistics only.
inline Split standardize(Split s) {
  const auto st = Standardizer::fit(s.train);
  st.apply(s.train);
  st.apply(s.test);
  return s;
}

}  // namespace distinction
