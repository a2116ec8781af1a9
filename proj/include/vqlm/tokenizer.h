// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#pragma once

#include <string>
#include <vector>

namespace vqlm {

// Byte-level vocabulary: ids 0..255 are raw bytes, then BOS/EOS/PAD.
// Keeps the artifact free of external tokenizer assets.
class ByteTokenizer {
 public:
  static constexpr int kBos = 256;
  static constexpr int kEos = 257;
  static constexpr int kPad = 258;
  static constexpr int kVocab = 259;

  static std::vector<int> encode(const std::string& text);
  // Drops special ids; inverse of encode on the byte range.
  static std::string decode(const std::vector<int>& ids);
  static bool is_special(int id) { return id >= 256; }
  static void check_ids(const std::vector<int>& ids);
};

}  // namespace vqlm
