// SPDX-License-Identifier: Apache-2.0
/**
 * @file   text.hpp
 * @brief  Transcript normalisation and one-hot encoding.
 */
#pragma once

#include <cctype>
#include <string>
#include <string_view>

#include <dyslat/error.hpp>
#include <dyslat/neural/tensor.hpp>

namespace dyslat::data {

/// Ordered symbol set; the index of a symbol is its one-hot row.
struct Alphabet {
  std::string symbols = "abcdefghijklmnopqrstuvwxyz ";

  std::size_t size() const noexcept { return symbols.size(); }
  bool contains(char c) const { return symbols.find(c) != std::string::npos; }
  std::size_t index(char c) const { return symbols.find(c); }
};

/// [n_c x n_t] with exactly one 1 per column.
struct TextOneHot {
  nn::Tensor matrix;

  std::size_t n_symbols() const { return matrix.dim(0); }
  std::size_t length() const { return matrix.dim(1); }
};

/// Lowercases, maps symbols outside the alphabet to space, collapses runs of
/// spaces and trims both ends.
inline std::string normalize_transcript(std::string_view text,
                                        const Alphabet &alphabet = {}) {
  std::string out;
  for (unsigned char raw : text) {
    char c = static_cast<char>(std::tolower(raw));
    if (!alphabet.contains(c))
      c = ' ';
    if (c == ' ' && (out.empty() || out.back() == ' '))
      continue;
    out.push_back(c);
  }
  while (!out.empty() && out.back() == ' ')
    out.pop_back();
  return out;
}

inline TextOneHot encode_transcript(std::string_view text,
                                    const Alphabet &alphabet = {}) {
  const std::string norm = normalize_transcript(text, alphabet);
  require(!norm.empty(), ErrorCode::EmptySequence,
          "transcript '" + std::string(text) + "' is empty after normalisation");
  TextOneHot t{nn::Tensor(nn::Shape{alphabet.size(), norm.size()})};
  for (std::size_t j = 0; j < norm.size(); ++j)
    t.matrix.at(alphabet.index(norm[j]), j) = 1.0;
  return t;
}

/// Argmax per column.
inline std::string decode_text(const TextOneHot &t, const Alphabet &alphabet = {}) {
  std::string out;
  for (std::size_t j = 0; j < t.length(); ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < t.n_symbols(); ++i)
      if (t.matrix.at(i, j) > t.matrix.at(best, j))
        best = i;
    out.push_back(alphabet.symbols.at(best));
  }
  return out;
}

} // namespace dyslat::data
