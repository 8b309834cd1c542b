#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "moelm/numerics.hpp"
#include "moelm/tensor.hpp"

namespace moelm {

// Versioned binary checkpoint:
//   "MOELM\0" | u32 version | metadata | string lists | tensors
// All integers little-endian, doubles as little-endian IEEE-754 bit patterns,
// strings as u32 length + bytes. Maps are written in key order so identical
// models give identical bytes on every platform.
class Container {
 public:
  static constexpr char kMagic[6] = {'M', 'O', 'E', 'L', 'M', '\0'};
  static constexpr std::uint32_t kVersion = 1;

  struct Tensor {
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<double> data;
  };

  std::map<std::string, std::string> meta;
  std::map<std::string, std::vector<std::string>> lists;
  std::map<std::string, Tensor> tensors;

  void put(const TensorView& v);
  void put_all(const std::vector<TensorView>& views);
  // Copies a stored tensor into v; shape must match.
  void get(const TensorView& v) const;
  void get_all(const std::vector<TensorView>& views) const;

  const std::string& meta_at(const std::string& key) const;
  const std::vector<std::string>& list_at(const std::string& key) const;

  std::string to_bytes() const;
  static Container from_bytes(const std::string& bytes);

  void save(const std::filesystem::path& path) const;
  static Container load(const std::filesystem::path& path);
};

// Hex SHA-256 of arbitrary bytes.
std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace moelm
