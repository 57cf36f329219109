#pragma once

#include <string>

#include "invrisk/tensor.hpp"
#include "json.hpp"

namespace invrisk {

// Binary tensor container: the magic "IVT1", a little-endian u32 rank, the
// dimensions as little-endian u64, then the row-major payload as f64. All
// fields are little-endian regardless of host byte order.
Tensor read_tensor(const std::string& path);
void write_tensor(const std::string& path, const Tensor& t);

// Serializes with doubles rendered as %.17g, which is enough digits that a
// reader recovers the exact bit pattern. Non-finite values become null.
std::string dump_json(const nlohmann::json& doc, int indent = 2);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace invrisk
