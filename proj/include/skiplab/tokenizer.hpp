// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

// Byte-level vocabulary: ids 0-255 are raw bytes, followed by two reserved
// ids. One byte is one token.

#pragma once

#include <string_view>
#include <vector>

#include "skiplab/model.hpp"

namespace skiplab {

inline constexpr TokenId kSeparatorToken = 256;
inline constexpr TokenId kPadToken = 257;
inline constexpr std::uint32_t kByteVocabSize = 258;

inline std::vector<TokenId> encode_bytes(std::string_view text) {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(static_cast<unsigned char>(c));
  return ids;
}

}  // namespace skiplab
