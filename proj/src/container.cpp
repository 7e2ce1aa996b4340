// SPDX-License-Identifier: Apache-2.0
#include "dpose/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dpose/error.hpp"

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace dpose {

namespace {

constexpr char kMagic[4] = {'D', 'P', 'T', '1'};

std::uint64_t checksum(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
std::vector<std::uint8_t> to_bytes(std::span<const T> values) {
  std::vector<std::uint8_t> out(values.size_bytes());
  if (!out.empty()) std::memcpy(out.data(), values.data(), out.size());
  return out;
}

template <typename T>
std::vector<T> from_bytes(const Record& r, DType expected) {
  if (r.dtype != expected) {
    throw FormatError("record '" + r.name + "' has dtype code " + std::to_string(static_cast<int>(r.dtype)) +
                      ", expected " + std::to_string(static_cast<int>(expected)));
  }
  std::vector<T> out(r.bytes.size() / sizeof(T));
  if (!out.empty()) std::memcpy(out.data(), r.bytes.data(), r.bytes.size());
  return out;
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  bool done() const { return pos_ == bytes_.size(); }
  template <typename T>
  T get(const char* what) {
    T value;
    std::memcpy(&value, take(sizeof(T), what), sizeof(T));
    return value;
  }
  const std::uint8_t* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("truncated container while reading ") + what + " at byte " + std::to_string(pos_));
    }
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::f64: return 8;
    case DType::f32: return 4;
    case DType::i64: return 8;
    case DType::i32: return 4;
    case DType::u8: return 1;
  }
  throw FormatError("unknown dtype code " + std::to_string(static_cast<int>(dtype)));
}

Record Record::f64(std::string name, Shape shape, std::span<const double> values) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) throw ShapeError("record '" + name + "' size mismatch");
  return {std::move(name), DType::f64, std::move(shape), to_bytes(values)};
}

Record Record::i32(std::string name, Shape shape, std::span<const std::int32_t> values) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) throw ShapeError("record '" + name + "' size mismatch");
  return {std::move(name), DType::i32, std::move(shape), to_bytes(values)};
}

Record Record::u8(std::string name, Shape shape, std::span<const std::uint8_t> values) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) throw ShapeError("record '" + name + "' size mismatch");
  return {std::move(name), DType::u8, std::move(shape), to_bytes(values)};
}

std::vector<double> Record::as_f64() const { return from_bytes<double>(*this, DType::f64); }
std::vector<std::int32_t> Record::as_i32() const { return from_bytes<std::int32_t>(*this, DType::i32); }
std::vector<std::uint8_t> Record::as_u8() const { return from_bytes<std::uint8_t>(*this, DType::u8); }

void Container::add(Record record) {
  if (contains(record.name)) throw FormatError("duplicate record name '" + record.name + "'");
  records_.push_back(std::move(record));
}

void Container::add_tensor(const std::string& name, const Tensor& t) { add(Record::f64(name, t.shape(), t.data())); }

bool Container::contains(const std::string& name) const {
  for (const auto& r : records_)
    if (r.name == name) return true;
  return false;
}

const Record& Container::get(const std::string& name) const {
  for (const auto& r : records_)
    if (r.name == name) return r;
  throw FormatError("missing record '" + name + "'");
}

Tensor Container::tensor(const std::string& name) const {
  const auto& r = get(name);
  return Tensor::from_vector(r.shape, r.as_f64());
}

std::vector<std::uint8_t> Container::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  for (const auto& r : records_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(r.dtype));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) put<std::int64_t>(out, d);
    out.insert(out.end(), r.bytes.begin(), r.bytes.end());
  }
  put<std::uint64_t>(out, checksum(out));
  return out;
}

Container Container::parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("bad magic: not a DPT1 container");
  }
  if (bytes.size() < 12) throw FormatError("DPT1 container truncated before its checksum");
  const auto body = bytes.first(bytes.size() - 8);
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  if (stored != checksum(body)) throw FormatError("DPT1 checksum mismatch: file is corrupted or truncated");
  Reader in(body.subspan(4));
  Container c;
  while (!in.done()) {
    Record r;
    const auto name_len = in.get<std::uint32_t>("name length");
    const auto* name = in.take(name_len, "name");
    r.name.assign(reinterpret_cast<const char*>(name), name_len);
    const auto code = in.get<std::uint8_t>("dtype");
    if (code > static_cast<std::uint8_t>(DType::u8)) {
      throw FormatError("record '" + r.name + "' has unknown dtype code " + std::to_string(code));
    }
    r.dtype = static_cast<DType>(code);
    const auto ndim = in.get<std::uint32_t>("ndim");
    if (ndim > 16) throw FormatError("record '" + r.name + "' has implausible rank " + std::to_string(ndim));
    for (std::uint32_t i = 0; i < ndim; ++i) {
      const auto d = in.get<std::int64_t>("dims");
      if (d < 0) throw FormatError("record '" + r.name + "' has negative extent");
      r.shape.push_back(d);
    }
    const auto n = static_cast<std::size_t>(shape_numel(r.shape)) * dtype_size(r.dtype);
    const auto* raw = in.take(n, "payload");
    r.bytes.assign(raw, raw + n);
    c.add(std::move(r));
  }
  return c;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("write failed for " + path.string());
}

void Container::save(const std::filesystem::path& path) const { write_file_bytes(path, serialize()); }

Container Container::load(const std::filesystem::path& path) { return parse(read_file_bytes(path)); }

}  // namespace dpose
