#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace btsnet {

/// Inconsistent layer wiring, shape mismatch between branches, bad config values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation called outside its documented domain.
class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A list of independent failures gathered while processing a collection
/// (dataset ingestion, evaluation). `what()` joins them one per line.
class ItemizedError : public std::runtime_error {
 public:
  explicit ItemizedError(std::vector<std::string> items);
  const std::vector<std::string>& items() const { return items_; }

 private:
  std::vector<std::string> items_;
};

}  // namespace btsnet
