#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "hgrl/common.hpp"

namespace hgrl {

// Self-describing container of named arrays: magic, format version, payload
// hash, then (name, dtype, rows, cols, data) records. One format serves
// synthetic datasets, graph caches, encoder archives and checkpoints.
class Archive {
 public:
  static constexpr char kMagic[8] = {'H', 'G', 'R', 'L', 'A', 'R', 'C', '1'};
  static constexpr std::uint32_t kFormatVersion = 1;

  struct Entry {
    enum class Dtype : std::uint8_t { F64 = 0, I64 = 1, Bytes = 2 };
    Dtype dtype = Dtype::F64;
    std::uint64_t rows = 0, cols = 0;
    std::vector<unsigned char> data;  // row-major
  };

  void put(const std::string& name, const Mat& m) {
    Entry e;
    e.dtype = Entry::Dtype::F64;
    e.rows = static_cast<std::uint64_t>(m.rows());
    e.cols = static_cast<std::uint64_t>(m.cols());
    e.data.resize(sizeof(double) * m.size());
    // store row-major regardless of Eigen's default layout
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    std::memcpy(e.data.data(), rm.data(), e.data.size());
    entries_[name] = std::move(e);
  }

  void put(const std::string& name, const std::vector<std::int64_t>& v) {
    Entry e;
    e.dtype = Entry::Dtype::I64;
    e.rows = v.size();
    e.cols = 1;
    e.data.resize(sizeof(std::int64_t) * v.size());
    std::memcpy(e.data.data(), v.data(), e.data.size());
    entries_[name] = std::move(e);
  }

  void put(const std::string& name, const std::string& s) {
    Entry e;
    e.dtype = Entry::Dtype::Bytes;
    e.rows = s.size();
    e.cols = 1;
    e.data.assign(s.begin(), s.end());
    entries_[name] = std::move(e);
  }

  void put_scalar(const std::string& name, double x) {
    Mat m(1, 1);
    m(0, 0) = x;
    put(name, m);
  }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
  }

  Mat mat(const std::string& name) const {
    const Entry& e = need(name, Entry::Dtype::F64);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(
        static_cast<Eigen::Index>(e.rows), static_cast<Eigen::Index>(e.cols));
    std::memcpy(rm.data(), e.data.data(), e.data.size());
    return Mat(rm);
  }

  std::vector<std::int64_t> ints(const std::string& name) const {
    const Entry& e = need(name, Entry::Dtype::I64);
    std::vector<std::int64_t> v(e.rows);
    std::memcpy(v.data(), e.data.data(), e.data.size());
    return v;
  }

  std::string str(const std::string& name) const {
    const Entry& e = need(name, Entry::Dtype::Bytes);
    return std::string(e.data.begin(), e.data.end());
  }

  double scalar(const std::string& name) const {
    Mat m = mat(name);
    check_shape(m.size() == 1, "archive entry '" + name + "' is not a scalar");
    return m(0, 0);
  }

  std::vector<unsigned char> serialize() const {
    std::vector<unsigned char> payload;
    append_u32(payload, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& [name, e] : entries_) {
      append_u32(payload, static_cast<std::uint32_t>(name.size()));
      payload.insert(payload.end(), name.begin(), name.end());
      payload.push_back(static_cast<unsigned char>(e.dtype));
      append_u64(payload, e.rows);
      append_u64(payload, e.cols);
      payload.insert(payload.end(), e.data.begin(), e.data.end());
    }
    std::vector<unsigned char> out;
    out.insert(out.end(), kMagic, kMagic + 8);
    append_u32(out, kFormatVersion);
    append_u64(out, fnv1a(payload.data(), payload.size()));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
  }

  std::uint64_t content_hash() const {
    auto bytes = serialize();
    return fnv1a(bytes.data(), bytes.size());
  }

  void save(const std::string& path) const {
    auto bytes = serialize();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to '" + path + "'");
  }

  static Archive deserialize(const std::vector<unsigned char>& bytes) {
    Cursor c{bytes.data(), bytes.size(), 0};
    char magic[8];
    c.read(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) throw ParseError("bad archive magic");
    const std::uint32_t version = c.u32();
    if (version != kFormatVersion)
      throw ParseError("archive format version mismatch: file has " + std::to_string(version) +
                       ", reader expects " + std::to_string(kFormatVersion));
    const std::uint64_t stored_hash = c.u64();
    const std::uint64_t actual_hash = fnv1a(bytes.data() + c.pos, bytes.size() - c.pos);
    if (stored_hash != actual_hash) throw ValidationError("archive payload hash mismatch (corrupted file)");

    Archive a;
    const std::uint32_t count = c.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint32_t name_len = c.u32();
      std::string name(name_len, '\0');
      c.read(name.data(), name_len);
      Entry e;
      unsigned char dt;
      c.read(&dt, 1);
      e.dtype = static_cast<Entry::Dtype>(dt);
      e.rows = c.u64();
      e.cols = c.u64();
      const std::size_t elem = e.dtype == Entry::Dtype::Bytes ? 1 : 8;
      const std::size_t n = static_cast<std::size_t>(e.rows) * static_cast<std::size_t>(e.cols) * elem;
      e.data.resize(n);
      c.read(e.data.data(), n);
      a.entries_[name] = std::move(e);
    }
    return a;
  }

  static Archive load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
  }

 private:
  struct Cursor {
    const unsigned char* data;
    std::size_t size;
    std::size_t pos;
    void read(void* dst, std::size_t n) {
      if (pos + n > size) throw ParseError("archive truncated");
      std::memcpy(dst, data + pos, n);
      pos += n;
    }
    std::uint32_t u32() {
      std::uint32_t v;
      read(&v, 4);
      return v;
    }
    std::uint64_t u64() {
      std::uint64_t v;
      read(&v, 8);
      return v;
    }
  };

  static void append_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    out.insert(out.end(), p, p + 4);
  }
  static void append_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    out.insert(out.end(), p, p + 8);
  }

  const Entry& need(const std::string& name, Entry::Dtype want) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ValidationError("archive entry '" + name + "' missing");
    if (it->second.dtype != want) throw ValidationError("archive entry '" + name + "' has wrong dtype");
    return it->second;
  }

  std::map<std::string, Entry> entries_;
};

}  // namespace hgrl
