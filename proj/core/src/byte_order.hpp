#ifndef ADACBM_SRC_BYTE_ORDER_HPP_
#define ADACBM_SRC_BYTE_ORDER_HPP_

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <iterator>
#include <type_traits>
#include <vector>

namespace adacbm::internal {

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(std::begin(bytes), std::end(bytes));
  }
  out.insert(out.end(), std::begin(bytes), std::end(bytes));
}

template <typename T>
T load_le(const std::uint8_t* src) {
  std::uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, src, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(std::begin(bytes), std::end(bytes));
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace adacbm::internal

#endif  // ADACBM_SRC_BYTE_ORDER_HPP_
