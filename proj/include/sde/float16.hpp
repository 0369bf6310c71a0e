// SPDX-License-Identifier: Apache-2.0
//
// IEEE-754 binary16 <-> binary32 conversion (round to nearest even).
// Implemented by hand so serialized payloads are identical on every
// platform regardless of compiler intrinsics.
#pragma once

#include <bit>
#include <cstdint>

namespace sde {

inline std::uint16_t f32_to_f16(float value) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
  const std::uint32_t sign = (bits >> 16) & 0x8000u;
  const std::int32_t exp = static_cast<std::int32_t>((bits >> 23) & 0xFFu) - 127 + 15;
  std::uint32_t mant = bits & 0x7FFFFFu;

  if (exp >= 0x1F) {
    if (((bits >> 23) & 0xFFu) == 0xFFu) {
      // Infinity or NaN; keep a quiet-NaN payload bit when present.
      return static_cast<std::uint16_t>(sign | 0x7C00u | (mant != 0 ? 0x200u : 0u));
    }
    return static_cast<std::uint16_t>(sign | 0x7C00u);  // overflow -> inf
  }
  if (exp <= 0) {
    if (exp < -10) {
      return static_cast<std::uint16_t>(sign);  // underflow -> signed zero
    }
    // Subnormal: shift the implicit leading one into the mantissa.
    mant |= 0x800000u;
    const int shift = 14 - exp;
    const std::uint32_t rounded = mant + (1u << (shift - 1)) - 1u + ((mant >> shift) & 1u);
    return static_cast<std::uint16_t>(sign | (rounded >> shift));
  }
  // Normal: round mantissa from 23 to 10 bits, to nearest even.
  const std::uint32_t rounded = mant + 0xFFFu + ((mant >> 13) & 1u);
  if (rounded & 0x800000u) {
    // Mantissa overflowed into the exponent.
    return static_cast<std::uint16_t>(sign | ((static_cast<std::uint32_t>(exp) + 1) << 10));
  }
  return static_cast<std::uint16_t>(sign | (static_cast<std::uint32_t>(exp) << 10) |
                                    (rounded >> 13));
}

inline float f16_to_f32(std::uint16_t value) {
  const std::uint32_t sign = static_cast<std::uint32_t>(value & 0x8000u) << 16;
  const std::uint32_t exp = (value >> 10) & 0x1Fu;
  std::uint32_t mant = value & 0x3FFu;

  std::uint32_t bits = 0;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;  // signed zero
    } else {
      // Subnormal: normalize.
      int e = -1;
      std::uint32_t m = mant;
      do {
        ++e;
        m <<= 1;
      } while ((m & 0x400u) == 0);
      bits = sign | static_cast<std::uint32_t>(127 - 15 - e) << 23 | ((m & 0x3FFu) << 13);
    }
  } else if (exp == 0x1F) {
    bits = sign | 0x7F800000u | (mant << 13);  // inf / NaN
  } else {
    bits = sign | ((exp - 15 + 127) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(bits);
}

}  // namespace sde
