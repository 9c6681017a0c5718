#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ldawa/params.hpp"

namespace ldawa::checkpoint {

// Binary layout (all integers and floats little-endian):
//
//   magic        8 bytes  "LDAWACK1"
//   layer_count  u32
//   per layer:
//     name_len   u32, then name_len bytes of UTF-8
//     rank       u32, then rank x u64 dimensions
//     offset     u64 byte offset of the layer's payload, relative to payload start
//   payload_len  u64
//   payload      f64 values, layers back to back in header order
inline constexpr std::string_view kMagic = "LDAWACK1";

std::vector<std::uint8_t> encode_binary(const ParamSet& params);
ParamSet decode_binary(std::span<const std::uint8_t> bytes);

// JSON variant: {"format":"ldawa-params","version":1,"layers":[{"name","shape","values"}...]}.
// Doubles are written in shortest round-trip form, so decoding is bit-exact.
std::string encode_json(const ParamSet& params);
ParamSet decode_json(std::string_view text);

enum class Format { kBinary, kJson };

/// Writes the binary format unless the path ends in ".json".
void save(const std::filesystem::path& path, const ParamSet& params);
void save(const std::filesystem::path& path, const ParamSet& params, Format format);

/// Detects the format from the leading magic bytes.
ParamSet load(const std::filesystem::path& path);

}  // namespace ldawa::checkpoint
