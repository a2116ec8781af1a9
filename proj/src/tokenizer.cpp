// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/tokenizer.h"

#include "vqlm/errors.h"

namespace vqlm {

std::vector<int> ByteTokenizer::encode(const std::string& text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(static_cast<int>(c));
  return ids;
}

std::string ByteTokenizer::decode(const std::vector<int>& ids) {
  check_ids(ids);
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (!is_special(id)) out.push_back(static_cast<char>(id));
  }
  return out;
}

void ByteTokenizer::check_ids(const std::vector<int>& ids) {
  for (int id : ids) {
    if (id < 0 || id >= kVocab) {
      throw InputError("token id " + std::to_string(id) + " outside [0, " +
                       std::to_string(kVocab) + ")");
    }
  }
}

}  // namespace vqlm
