#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <istream>
#include <ostream>

namespace hashparse::detail {

template <typename T>
void put_le(std::ostream& out, T value) {
  auto raw = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  if constexpr (std::endian::native != std::endian::little) std::reverse(raw.begin(), raw.end());
  out.write(reinterpret_cast<const char*>(raw.data()), sizeof(T));
}

template <typename T>
bool get_le(std::istream& in, T& value) {
  std::array<unsigned char, sizeof(T)> raw;
  if (!in.read(reinterpret_cast<char*>(raw.data()), sizeof(T))) return false;
  if constexpr (std::endian::native != std::endian::little) std::reverse(raw.begin(), raw.end());
  value = std::bit_cast<T>(raw);
  return true;
}

}  // namespace hashparse::detail
