#ifndef STUN_FILE_IO_HPP_
#define STUN_FILE_IO_HPP_

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "stun/errors.hpp"

namespace stun {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string s((std::istreambuf_iterator<char>(in)),
                std::istreambuf_iterator<char>());
  return s;
}

// Write-to-temp-then-rename so readers never observe a partial file.
inline void write_file_atomic(const std::string& path,
                              const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out.write(contents.data(),
              static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

// Little binary stream helpers (host byte order; files are local artifacts).
struct ByteWriter {
  std::string buf;

  void raw(const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
  }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void i64(std::int64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void f64_array(const std::vector<double>& v) {
    raw(v.data(), v.size() * sizeof(double));
  }
  void i64_array(const std::vector<std::int64_t>& v) {
    raw(v.data(), v.size() * sizeof(std::int64_t));
  }
  void str(const std::string& s) { buf.append(s); }
};

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;

  explicit ByteReader(const std::string& b) : buf(b) {}

  void raw(void* p, std::size_t n) {
    if (pos + n > buf.size()) throw DataError("truncated binary file");
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::int64_t i64() {
    std::int64_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::vector<double> f64_array(std::size_t n) {
    std::vector<double> v(n);
    raw(v.data(), n * sizeof(double));
    return v;
  }
  std::vector<std::int64_t> i64_array(std::size_t n) {
    std::vector<std::int64_t> v(n);
    raw(v.data(), n * sizeof(std::int64_t));
    return v;
  }
  std::string str(std::size_t n) {
    if (pos + n > buf.size()) throw DataError("truncated binary file");
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace stun

#endif  // STUN_FILE_IO_HPP_
