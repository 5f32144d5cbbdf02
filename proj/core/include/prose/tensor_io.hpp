#pragma once

// Little-endian binary container shared by checkpoints and dataset files:
//
//   magic (8 bytes) | version u32 | text blob (u32 length + UTF-8) |
//   tensor count u32 | per tensor: name (u32 length + UTF-8), rank u32,
//   dims u32 × rank, payload f64 × ∏dims | CRC32 of every preceding byte.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace prose {

struct NamedTensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<double> values;

    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct TensorFile {
    std::string text;
    std::vector<NamedTensor> tensors;

    const NamedTensor& find(std::string_view name) const;
};

std::vector<std::uint8_t> encode_tensor_file(std::string_view magic, std::uint32_t version,
                                             const TensorFile& file);

// Validation order: truncation of the fixed header, magic, version, the tensor
// table, then the CRC. Each failure raises its own FormatError subtype.
TensorFile decode_tensor_file(std::string_view magic, std::uint32_t version,
                              const std::vector<std::uint8_t>& bytes);

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace prose
