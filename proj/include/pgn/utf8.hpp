// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pgn::utf8 {

/// Splits a UTF-8 string into one std::string per code point.
/// Throws InvalidInput on malformed sequences.
std::vector<std::string> split_code_points(std::string_view text);

std::string encode(char32_t cp);

}  // namespace pgn::utf8
