#pragma once

// Ordered feature catalogs. The order is load-bearing everywhere: models bind
// to a catalog, alignment reorders columns to match it, and serialized
// artifacts list features in catalog order.

#include <algorithm>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "permshift/common.hpp"

namespace permshift {

class FeatureCatalog {
 public:
  FeatureCatalog() = default;

  explicit FeatureCatalog(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.empty()) fail(Errc::empty_dataset, "feature catalog must be non-empty");
    index_.reserve(names_.size());
    for (size_t i = 0; i < names_.size(); ++i) {
      const std::string& name = names_[i];
      if (name.empty() || name.find_first_of(",\n\r") != std::string::npos) {
        fail(Errc::invalid_feature_name, "bad feature name: '" + name + "'");
      }
      if (!index_.emplace(name, i).second) {
        fail(Errc::duplicate_feature_name, "duplicate feature name: '" + name + "'");
      }
    }
  }

  const std::vector<std::string>& names() const { return names_; }
  size_t size() const { return names_.size(); }
  const std::string& name(size_t i) const { return names_.at(i); }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  // Index of `name`, or npos when absent.
  static constexpr size_t npos = static_cast<size_t>(-1);
  size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? npos : it->second;
  }

  bool operator==(const FeatureCatalog& other) const { return names_ == other.names_; }
  bool operator!=(const FeatureCatalog& other) const { return !(*this == other); }

  // Newline-delimited text form, one feature per line, trailing newline.
  std::string to_text() const {
    std::string out;
    for (const auto& n : names_) {
      out += n;
      out += '\n';
    }
    return out;
  }

  static FeatureCatalog from_text(const std::string& text) {
    std::vector<std::string> names;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      names.push_back(line);
    }
    return FeatureCatalog(std::move(names));
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, size_t> index_;
};

// Features present in both catalogs, in `a`'s order.
inline FeatureCatalog catalog_intersection(const FeatureCatalog& a, const FeatureCatalog& b) {
  std::vector<std::string> common;
  for (const auto& name : a.names()) {
    if (b.contains(name)) common.push_back(name);
  }
  if (common.empty()) fail(Errc::empty_intersection, "catalogs share no features");
  return FeatureCatalog(std::move(common));
}

}  // namespace permshift
