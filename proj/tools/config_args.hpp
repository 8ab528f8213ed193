// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace pgn::cli {

struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Parses `key = value` lines. Blank lines and '#' comments are skipped;
/// surrounding quotes on the value are removed. Throws InvalidInput with
/// the line number on anything else.
std::vector<ConfigEntry> parse_config(std::string_view text);

/// Finds `--config PATH` or `--config=PATH` in args (the subcommand's
/// tokens) and splices the file's entries in front of them as `--key=value`,
/// so that flags given on the command line are parsed later and win.
/// `known` is asked about every key; unknown keys raise InvalidInput.
std::vector<std::string> expand_config(const std::vector<std::string>& args,
                                       const std::function<bool(const std::string&)>& known);

}  // namespace pgn::cli
