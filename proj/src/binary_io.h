// Copyright 2026 The dpadapt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Little-endian primitives shared by the dataset and checkpoint formats.

#ifndef DPADAPT_SRC_BINARY_IO_H_
#define DPADAPT_SRC_BINARY_IO_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string_view>

#include "dpadapt/common.h"

namespace dpadapt::binary_io {

template <typename T>
T ToLittle(T value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (size_t i = 0; i < sizeof(T) / 2; ++i) {
      std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    }
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
}

template <typename T>
void Write(std::ostream& out, T value) {
  value = ToLittle(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T Read(std::istream& in) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw InputError("unexpected end of binary stream");
  return ToLittle(value);
}

inline void WriteMagic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void ExpectMagic(std::istream& in, std::string_view magic) {
  char buf[8] = {};
  in.read(buf, static_cast<std::streamsize>(magic.size()));
  if (!in || std::string_view(buf, magic.size()) != magic) {
    throw InputError("bad magic, expected " + std::string(magic));
  }
}

}  // namespace dpadapt::binary_io

#endif  // DPADAPT_SRC_BINARY_IO_H_
