// SPDX-License-Identifier: Apache-2.0
/**
 * @file   base64.hpp
 * @brief  RFC 4648 base64 for binary blobs in JSON responses.
 */
#pragma once

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include <dyslat/error.hpp>

namespace dyslat::service {

inline std::string base64_encode(const std::vector<std::uint8_t> &bytes) {
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<std::vector<std::uint8_t>::const_iterator, 6, 8>>;
  std::string out(It(bytes.begin()), It(bytes.end()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  using namespace boost::archive::iterators;
  require(text.size() % 4 == 0, ErrorCode::ParseError, "base64 length must be a multiple of 4");
  std::size_t pad = 0;
  while (pad < 2 && pad < text.size() && text[text.size() - 1 - pad] == '=')
    ++pad;
  const std::string body(text.substr(0, text.size() - pad));
  for (char c : body)
    require(std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '/',
            ErrorCode::ParseError, "invalid base64 character");
  using It = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
  std::vector<std::uint8_t> out;
  // the iterator may yield a trailing partial byte
  for (It it(body.begin()), end(body.end()); it != end; ++it)
    out.push_back(static_cast<std::uint8_t>(*it));
  out.resize(body.size() * 3 / 4);
  return out;
}

} // namespace dyslat::service
