#pragma once

// Binary-feature dataset: row-major 0/1 cells, 0/1 labels, optional origin
// tags, and stable row ids. Includes CSV I/O, catalog alignment (the
// zero-fill protocol used for cross-domain evaluation), stratified splitting,
// stratified k-fold assignment, and the common-feature merge used for hybrid
// training.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "permshift/catalog.hpp"
#include "permshift/common.hpp"

namespace permshift {

class BinaryDataset {
 public:
  BinaryDataset() = default;

  BinaryDataset(FeatureCatalog catalog, std::vector<uint8_t> cells, std::vector<uint8_t> labels,
                std::vector<std::string> tags = {}, std::vector<uint64_t> row_ids = {})
      : catalog_(std::move(catalog)),
        cells_(std::move(cells)),
        labels_(std::move(labels)),
        tags_(std::move(tags)),
        row_ids_(std::move(row_ids)) {
    if (labels_.empty()) fail(Errc::empty_dataset, "dataset has no rows");
    if (cells_.size() != labels_.size() * catalog_.size()) {
      fail(Errc::width_mismatch, "cell count does not match rows x features");
    }
    for (uint8_t c : cells_) {
      if (c > 1) fail(Errc::non_binary_value, "cell value outside {0,1}");
    }
    for (uint8_t l : labels_) {
      if (l > 1) fail(Errc::non_binary_value, "label outside {0,1}");
    }
    if (!tags_.empty() && tags_.size() != labels_.size()) {
      fail(Errc::length_mismatch, "tag count does not match row count");
    }
    if (row_ids_.empty()) {
      row_ids_.resize(labels_.size());
      std::iota(row_ids_.begin(), row_ids_.end(), uint64_t{0});
    } else if (row_ids_.size() != labels_.size()) {
      fail(Errc::length_mismatch, "row id count does not match row count");
    }
  }

  const FeatureCatalog& catalog() const { return catalog_; }
  size_t rows() const { return labels_.size(); }
  size_t features() const { return catalog_.size(); }
  const std::vector<uint8_t>& cells() const { return cells_; }
  const std::vector<uint8_t>& labels() const { return labels_; }
  const std::vector<uint64_t>& row_ids() const { return row_ids_; }
  const std::vector<std::string>& tags() const { return tags_; }
  bool has_tags() const { return !tags_.empty(); }

  std::span<const uint8_t> row(size_t i) const {
    return {cells_.data() + i * catalog_.size(), catalog_.size()};
  }
  uint8_t cell(size_t row, size_t col) const { return cells_[row * catalog_.size() + col]; }
  uint8_t label(size_t i) const { return labels_[i]; }

  size_t count_label(uint8_t value) const {
    return static_cast<size_t>(std::count(labels_.begin(), labels_.end(), value));
  }

  // New dataset holding the given rows (in the given order).
  BinaryDataset take(const std::vector<size_t>& indices) const {
    std::vector<uint8_t> cells;
    cells.reserve(indices.size() * features());
    std::vector<uint8_t> labels;
    labels.reserve(indices.size());
    std::vector<std::string> tags;
    std::vector<uint64_t> ids;
    ids.reserve(indices.size());
    if (has_tags()) tags.reserve(indices.size());
    for (size_t i : indices) {
      internal_check(i < rows(), "take: row index out of range");
      auto r = row(i);
      cells.insert(cells.end(), r.begin(), r.end());
      labels.push_back(labels_[i]);
      ids.push_back(row_ids_[i]);
      if (has_tags()) tags.push_back(tags_[i]);
    }
    return BinaryDataset(catalog_, std::move(cells), std::move(labels), std::move(tags),
                         std::move(ids));
  }

  // Copy with every row tagged `tag` (used when a whole file is one domain).
  BinaryDataset with_tag(const std::string& tag) const {
    return BinaryDataset(catalog_, cells_, labels_, std::vector<std::string>(rows(), tag),
                         row_ids_);
  }

  // Copy with all row ids shifted; lets callers make ids globally unique
  // before datasets from different origins meet.
  BinaryDataset with_id_offset(uint64_t offset) const {
    std::vector<uint64_t> ids = row_ids_;
    for (uint64_t& id : ids) id += offset;
    return BinaryDataset(catalog_, cells_, labels_, tags_, std::move(ids));
  }

 private:
  FeatureCatalog catalog_;
  std::vector<uint8_t> cells_;
  std::vector<uint8_t> labels_;
  std::vector<std::string> tags_;
  std::vector<uint64_t> row_ids_;
};

struct SplitPair {
  BinaryDataset train;
  BinaryDataset test;
};

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace detail {
inline std::string trim_cell(std::string s) {
  const char* ws = " \t\r";
  size_t b = s.find_first_not_of(ws);
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}
}  // namespace detail

// Loads a binary-feature CSV: header row names the columns, one column is the
// label, every cell is the literal "0" or "1". Feature order follows the
// header (label column excluded).
inline BinaryDataset load_csv(const std::filesystem::path& path,
                              const std::string& label_column = "label") {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open: " + path.string());

  std::string line;
  if (!std::getline(in, line)) fail(Errc::malformed_csv, "empty file: " + path.string());
  auto header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim_cell(h);

  size_t label_idx = static_cast<size_t>(-1);
  std::vector<std::string> feature_names;
  feature_names.reserve(header.size());
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) {
      if (label_idx != static_cast<size_t>(-1)) {
        fail(Errc::duplicate_feature_name, "label column appears twice: " + label_column);
      }
      label_idx = i;
    } else {
      feature_names.push_back(header[i]);
    }
  }
  if (label_idx == static_cast<size_t>(-1)) {
    fail(Errc::missing_label_column, "no column named '" + label_column + "' in " + path.string());
  }
  if (feature_names.empty()) fail(Errc::empty_dataset, "no feature columns in " + path.string());
  FeatureCatalog catalog(std::move(feature_names));

  std::vector<uint8_t> cells;
  std::vector<uint8_t> labels;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      fail(Errc::malformed_csv, "row " + std::to_string(line_no) + " has " +
                                    std::to_string(fields.size()) + " fields, expected " +
                                    std::to_string(header.size()));
    }
    for (size_t i = 0; i < fields.size(); ++i) {
      std::string v = detail::trim_cell(fields[i]);
      uint8_t bit;
      if (v == "0") {
        bit = 0;
      } else if (v == "1") {
        bit = 1;
      } else {
        fail(Errc::non_binary_value, "row " + std::to_string(line_no) + ", column '" + header[i] +
                                         "': got '" + v + "', expected 0 or 1");
      }
      if (i == label_idx) {
        labels.push_back(bit);
      } else {
        cells.push_back(bit);
      }
    }
  }
  if (labels.empty()) fail(Errc::empty_dataset, "no data rows in " + path.string());
  return BinaryDataset(std::move(catalog), std::move(cells), std::move(labels));
}

// Writes features in catalog order with the label column last.
inline void save_csv(const BinaryDataset& data, const std::filesystem::path& path,
                     const std::string& label_column = "label") {
  std::string out;
  for (const auto& name : data.catalog().names()) {
    out += name;
    out += ',';
  }
  out += label_column;
  out += '\n';
  for (size_t i = 0; i < data.rows(); ++i) {
    auto r = data.row(i);
    for (uint8_t c : r) {
      out += static_cast<char>('0' + c);
      out += ',';
    }
    out += static_cast<char>('0' + data.label(i));
    out += '\n';
  }
  write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// Alignment
// ---------------------------------------------------------------------------

// Projects `data` onto `target`: features missing from `data` become all-zero
// columns, features absent from `target` are dropped, and column order follows
// `target` exactly. Labels, tags, and row ids pass through. Total by design —
// this is the cross-domain evaluation protocol, not a validation step.
inline BinaryDataset align_to_catalog(const BinaryDataset& data, const FeatureCatalog& target) {
  std::vector<size_t> source_col(target.size());
  for (size_t j = 0; j < target.size(); ++j) {
    source_col[j] = data.catalog().index_of(target.name(j));
  }
  std::vector<uint8_t> cells(data.rows() * target.size(), 0);
  for (size_t i = 0; i < data.rows(); ++i) {
    auto r = data.row(i);
    uint8_t* dst = cells.data() + i * target.size();
    for (size_t j = 0; j < target.size(); ++j) {
      if (source_col[j] != FeatureCatalog::npos) dst[j] = r[source_col[j]];
    }
  }
  return BinaryDataset(target, std::move(cells),
                       std::vector<uint8_t>(data.labels()),
                       std::vector<std::string>(data.tags()),
                       std::vector<uint64_t>(data.row_ids()));
}

// Keeps only the named features (in `keep`'s order). Requires all present.
inline BinaryDataset project_to_catalog(const BinaryDataset& data, const FeatureCatalog& keep) {
  for (const auto& name : keep.names()) {
    if (!data.catalog().contains(name)) {
      fail(Errc::internal, "project_to_catalog: missing feature '" + name + "'");
    }
  }
  return align_to_catalog(data, keep);
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

// Stratified train/test split. Per class, round(count * test_fraction) rows go
// to the test side (round half up). Selection order is randomized per class
// with a seed derived from (seed, "stratified_split", class); output keeps the
// original row order within each side.
inline SplitPair stratified_split(const BinaryDataset& data, double test_fraction, uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    fail(Errc::config_error, "test_fraction must be in (0, 1)");
  }
  std::vector<size_t> train_idx, test_idx;
  for (uint8_t cls = 0; cls <= 1; ++cls) {
    std::vector<size_t> members;
    for (size_t i = 0; i < data.rows(); ++i) {
      if (data.label(i) == cls) members.push_back(i);
    }
    if (members.size() < 2) {
      fail(Errc::insufficient_class_rows,
           "class " + std::to_string(cls) + " has " + std::to_string(members.size()) +
               " rows; need at least 2 to split");
    }
    size_t n_test = static_cast<size_t>(
        std::floor(static_cast<double>(members.size()) * test_fraction + 0.5));
    n_test = std::min(std::max<size_t>(n_test, 1), members.size() - 1);
    Rng rng(derive_seed(seed, "stratified_split", cls));
    rng.shuffle(members);
    test_idx.insert(test_idx.end(), members.begin(), members.begin() + n_test);
    train_idx.insert(train_idx.end(), members.begin() + n_test, members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {data.take(train_idx), data.take(test_idx)};
}

// Stratified k-fold assignment: per class, shuffle members and deal them
// round-robin. Returns fold index per row.
inline std::vector<size_t> stratified_fold_assignment(const BinaryDataset& data, size_t k,
                                                      uint64_t seed) {
  if (k < 2) fail(Errc::config_error, "k-fold requires k >= 2");
  std::vector<size_t> fold(data.rows());
  for (uint8_t cls = 0; cls <= 1; ++cls) {
    std::vector<size_t> members;
    for (size_t i = 0; i < data.rows(); ++i) {
      if (data.label(i) == cls) members.push_back(i);
    }
    if (members.size() < k) {
      fail(Errc::insufficient_class_rows, "class " + std::to_string(cls) + " has " +
                                              std::to_string(members.size()) +
                                              " rows; need at least k=" + std::to_string(k));
    }
    Rng rng(derive_seed(seed, "stratified_kfold", cls));
    rng.shuffle(members);
    for (size_t j = 0; j < members.size(); ++j) fold[members[j]] = j % k;
  }
  return fold;
}

// ---------------------------------------------------------------------------
// Hybrid merge
// ---------------------------------------------------------------------------

// Projects both datasets onto their common features (in `a`'s catalog order),
// concatenates, tags rows by origin, and shuffles once. Row ids pass through
// unchanged — callers keep them globally unique across domains.
inline BinaryDataset merge_common(const BinaryDataset& a, const BinaryDataset& b, uint64_t seed,
                                  const std::string& tag_a = "a", const std::string& tag_b = "b") {
  FeatureCatalog common = catalog_intersection(a.catalog(), b.catalog());
  BinaryDataset pa = project_to_catalog(a, common);
  BinaryDataset pb = project_to_catalog(b, common);

  const size_t n = pa.rows() + pb.rows();
  std::vector<uint8_t> cells;
  cells.reserve(n * common.size());
  std::vector<uint8_t> labels;
  labels.reserve(n);
  std::vector<std::string> tags;
  tags.reserve(n);
  std::vector<uint64_t> ids;
  ids.reserve(n);

  auto append = [&](const BinaryDataset& d, const std::string& default_tag) {
    for (size_t i = 0; i < d.rows(); ++i) {
      auto r = d.row(i);
      cells.insert(cells.end(), r.begin(), r.end());
      labels.push_back(d.label(i));
      tags.push_back(d.has_tags() ? d.tags()[i] : default_tag);
      ids.push_back(d.row_ids()[i]);
    }
  };
  append(pa, tag_a);
  append(pb, tag_b);

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(derive_seed(seed, "merge_common"));
  rng.shuffle(order);

  BinaryDataset merged(common, std::move(cells), std::move(labels), std::move(tags),
                       std::move(ids));
  return merged.take(order);
}

}  // namespace permshift
