// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dpose/tensor.hpp"

namespace dpose {

/// Element types of the "DPT1" named-tensor container.
enum class DType : std::uint8_t { f64 = 0, f32 = 1, i64 = 2, i32 = 3, u8 = 4 };

std::size_t dtype_size(DType dtype);

/// One named array, held as its little-endian byte image so that a
/// save/load cycle is bit-exact regardless of element type.
struct Record {
  std::string name;
  DType dtype = DType::f64;
  Shape shape;
  std::vector<std::uint8_t> bytes;

  static Record f64(std::string name, Shape shape, std::span<const double> values);
  static Record i32(std::string name, Shape shape, std::span<const std::int32_t> values);
  static Record u8(std::string name, Shape shape, std::span<const std::uint8_t> values);

  std::vector<double> as_f64() const;
  std::vector<std::int32_t> as_i32() const;
  std::vector<std::uint8_t> as_u8() const;
  std::int64_t numel() const { return shape_numel(shape); }
};

/// Binary layout:
///   "DPT1"
///   repeated until end of buffer:
///     u32 name_length, name bytes (UTF-8)
///     u8  dtype code
///     u32 ndim
///     i64 dims[ndim]
///     raw little-endian elements
///   u64 FNV-1a hash of every preceding byte
class Container {
 public:
  void add(Record record);
  void add_tensor(const std::string& name, const Tensor& t);

  const std::vector<Record>& records() const { return records_; }
  bool contains(const std::string& name) const;
  // Throws FormatError when the record is missing.
  const Record& get(const std::string& name) const;
  Tensor tensor(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;
  static Container parse(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static Container load(const std::filesystem::path& path);

 private:
  std::vector<Record> records_;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dpose
