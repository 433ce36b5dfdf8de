#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "tunes/types.hpp"

namespace tunes::io {

/// Little-endian stream reader that tracks the byte offset so every
/// ParseError names the first offending byte.
struct Reader {
  std::istream& in;
  std::size_t offset = 0;

  void bytes(void* dst, std::size_t n, const char* what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
      throw ParseError(std::string("unexpected end of file reading ") + what,
                       offset + static_cast<std::size_t>(std::max<std::streamsize>(in.gcount(), 0)));
    }
    offset += n;
  }

  void magic(const char* expect, const char* what) {
    const std::size_t at = offset;
    const std::size_t n = std::strlen(expect);
    std::string got(n, '\0');
    bytes(got.data(), n, what);
    if (got != expect) {
      throw ParseError(std::string("bad magic for ") + what + ": expected \"" +
                           expect + "\", got \"" + got + "\"",
                       at);
    }
  }

  std::uint8_t u8(const char* what) {
    std::uint8_t b = 0;
    bytes(&b, 1, what);
    return b;
  }

  std::uint32_t u32(const char* what) {
    std::uint8_t b[4];
    bytes(b, 4, what);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
           std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  std::string str(std::size_t n, const char* what) {
    std::string s(n, '\0');
    bytes(s.data(), n, what);
    return s;
  }
};

struct Writer {
  std::ostream& out;

  void bytes(const void* src, std::size_t n) {
    out.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
  }

  void magic(const char* m) { bytes(m, std::strlen(m)); }
  void u8(std::uint8_t b) { bytes(&b, 1); }

  void u32(std::uint32_t v) {
    const std::uint8_t b[4] = {
        std::uint8_t(v & 0xff), std::uint8_t((v >> 8) & 0xff),
        std::uint8_t((v >> 16) & 0xff), std::uint8_t((v >> 24) & 0xff)};
    bytes(b, 4);
  }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) { bytes(s.data(), s.size()); }
};

}  // namespace tunes::io
