#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hipass/tensor.hpp"

namespace hipass {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct NamedTensor {
    std::string name;
    Tensor tensor;
    DType dtype = DType::f64;
};

/// VTEN1 binary container.
///
///   "VTEN1"                           5 bytes magic (version in the last byte)
///   u32 record count
///   per record:
///     u32 name length, name bytes (UTF-8)
///     u8  dtype code (0 = f32, 1 = f64)
///     u32 rank, rank x u32 extents
///     raw little-endian element data
///
/// All integers little-endian. f64 records round-trip bitwise; f32 records
/// are rounded on write.
void write_container(std::ostream& os, const std::vector<NamedTensor>& records);
std::vector<NamedTensor> read_container(std::istream& is);

void write_container(const std::filesystem::path& path, const std::vector<NamedTensor>& records);
std::vector<NamedTensor> read_container(const std::filesystem::path& path);

/// Finds a record by name; throws FormatError naming it when absent.
const Tensor& find_record(const std::vector<NamedTensor>& records, const std::string& name);
const NamedTensor* find_record_or_null(const std::vector<NamedTensor>& records, const std::string& name);

/// Plain-text netpbm (P2 grey, P3 colour) with maxval 255. Values are
/// clamped to [0,1] and quantised on write.
void write_pnm(const std::filesystem::path& path, const Tensor& frame);
Tensor read_pnm(const std::filesystem::path& path);

}  // namespace hipass
