// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>

#include "pgn/neural.hpp"

namespace pgn {

inline constexpr char kCheckpointMagic[4] = {'P', 'G', 'K', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian layout: magic, version, scalars (d, max_len, tokenizer),
/// pinyin and hanzi vocabularies (count, then length-prefixed UTF-8
/// tokens), then every parameter tensor as rows, cols and row-major f64.
void save_checkpoint(std::ostream& out, const ModelBundle& bundle);
void save_checkpoint(const std::string& path, const ModelBundle& bundle);

/// Throws CheckpointError on bad magic, unsupported version, truncation,
/// trailing bytes, shape inconsistencies, or when `expected_dim` is given
/// and differs from the stored width.
ModelBundle load_checkpoint(std::istream& in, std::optional<int> expected_dim = std::nullopt);
ModelBundle load_checkpoint(const std::string& path, std::optional<int> expected_dim = std::nullopt);

}  // namespace pgn
