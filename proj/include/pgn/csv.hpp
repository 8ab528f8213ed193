// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pgn::csv {

/// Splits one CSV line. Double-quoted fields may contain commas and "" escapes;
/// embedded newlines are not supported. A trailing '\r' is dropped.
std::vector<std::string> split_line(std::string_view line);

/// Quotes a field only when it contains a comma, quote or newline.
std::string escape(std::string_view field);

/// Column positions resolved from a header row.
class Header {
 public:
  explicit Header(const std::vector<std::string>& names);
  std::optional<std::size_t> find(std::string_view name) const;
  /// Throws InvalidInput naming the missing column.
  std::size_t require(std::string_view name) const;
  std::size_t width() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
};

}  // namespace pgn::csv
