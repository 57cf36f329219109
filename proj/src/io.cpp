#include "invrisk/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "invrisk/errors.hpp"

namespace invrisk {
namespace {

constexpr char kMagic[4] = {'I', 'V', 'T', '1'};
constexpr std::size_t kMaxRank = 32;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

// Cursor over the raw file bytes; every read checks the remaining length and
// reports the file as truncated when it comes up short.
struct ByteReader {
  const std::string& bytes;
  const std::string& path;
  std::size_t pos = 0;

  void require(std::size_t n) {
    if (bytes.size() - pos < n) {
      throw IoError("truncated tensor file: " + path);
    }
  }

  std::uint32_t u32() {
    require(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(bytes[pos + i]))
           << (8 * i);
    }
    pos += 4;
    return v;
  }

  std::uint64_t u64() {
    require(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(bytes[pos + i]))
           << (8 * i);
    }
    pos += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }
};

void append_json(const nlohmann::json& doc, int indent, int depth,
                 std::string& out) {
  const std::string pad(indent > 0 ? static_cast<std::size_t>(indent * depth)
                                   : 0,
                        ' ');
  const std::string pad_in(
      indent > 0 ? static_cast<std::size_t>(indent * (depth + 1)) : 0, ' ');
  const char* nl = indent > 0 ? "\n" : "";
  switch (doc.type()) {
    case nlohmann::json::value_t::object: {
      if (doc.empty()) {
        out += "{}";
        return;
      }
      out += "{";
      out += nl;
      bool first = true;
      for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!first) {
          out += ",";
          out += nl;
        }
        first = false;
        out += pad_in;
        out += nlohmann::json(it.key()).dump();
        out += indent > 0 ? ": " : ":";
        append_json(it.value(), indent, depth + 1, out);
      }
      out += nl;
      out += pad;
      out += "}";
      return;
    }
    case nlohmann::json::value_t::array: {
      if (doc.empty()) {
        out += "[]";
        return;
      }
      out += "[";
      out += nl;
      bool first = true;
      for (const auto& item : doc) {
        if (!first) {
          out += ",";
          out += nl;
        }
        first = false;
        out += pad_in;
        append_json(item, indent, depth + 1, out);
      }
      out += nl;
      out += pad;
      out += "]";
      return;
    }
    case nlohmann::json::value_t::number_float: {
      const double v = doc.get<double>();
      if (!std::isfinite(v)) {
        out += "null";
        return;
      }
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out += buf;
      // %.17g drops the decimal point on integral values; keep the token a
      // float so a round trip preserves the value's type.
      if (out.find_first_of(".eE", out.size() - std::strlen(buf)) ==
          std::string::npos) {
        out += ".0";
      }
      return;
    }
    default:
      out += doc.dump();
      return;
  }
}

}  // namespace

Tensor read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open tensor file: " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();

  ByteReader reader{bytes, path};
  reader.require(4);
  for (std::size_t i = 0; i < 4; ++i) {
    if (bytes[i] != kMagic[i]) {
      throw IoError("bad magic at offset 0 in " + path +
                    " (expected IVT1)");
    }
  }
  reader.pos = 4;

  const std::uint32_t rank = reader.u32();
  if (rank > kMaxRank) {
    throw IoError("tensor dimension overflow in " + path);
  }
  std::vector<std::size_t> shape(rank);
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint64_t dim = reader.u64();
    if (dim > std::numeric_limits<std::size_t>::max() ||
        (dim != 0 && count > std::numeric_limits<std::size_t>::max() /
                                 static_cast<std::size_t>(dim))) {
      throw IoError("tensor dimension overflow in " + path);
    }
    shape[i] = static_cast<std::size_t>(dim);
    count *= shape[i];
  }
  if (count > std::numeric_limits<std::size_t>::max() / sizeof(double)) {
    throw IoError("tensor dimension overflow in " + path);
  }

  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) data[i] = reader.f64();
  if (reader.pos != bytes.size()) {
    throw IoError("trailing bytes after tensor payload in " + path);
  }
  return Tensor(std::move(shape), std::move(data));
}

void write_tensor(const std::string& path, const Tensor& t) {
  std::string out;
  out.reserve(4 + 4 + 8 * t.ndim() + 8 * t.size());
  out.append(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(t.ndim()));
  for (std::size_t dim : t.shape()) {
    put_u64(out, static_cast<std::uint64_t>(dim));
  }
  for (double v : t.data()) put_f64(out, v);
  write_text_file(path, out);
}

std::string dump_json(const nlohmann::json& doc, int indent) {
  std::string out;
  append_json(doc, indent, 0, out);
  if (indent > 0) out += "\n";
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open file: " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open file for writing: " + path);
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) {
    throw IoError("failed writing file: " + path);
  }
}

}  // namespace invrisk
