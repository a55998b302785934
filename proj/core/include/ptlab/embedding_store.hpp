#pragma once

// PTES container: named binary32 matrices behind a JSON header.
//
//   bytes 0..3    magic "PTES"
//   bytes 4..7    version, u32 little-endian (= 1)
//   bytes 8..11   header length H, u32 little-endian
//   bytes 12..    H bytes of UTF-8 JSON:
//                 {"dim", "classes", "matrices": [{"name","rows","cols","offset"}],
//                  "labels"?, "meta"?}
//   payload       row-major little-endian binary32 matrices; offsets are
//                 relative to the first payload byte.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptlab/tensor.hpp"

namespace ptlab {

inline constexpr std::uint32_t kStoreVersion = 1;

struct NamedMatrix {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;  // rows * cols, row-major
};

struct EmbeddingStore {
  std::size_t dim = 0;
  std::vector<std::string> class_names;
  std::vector<NamedMatrix> matrices;
  std::optional<std::vector<std::vector<double>>> labels;
  nlohmann::json meta;  // null when absent

  /// Narrows `values` to binary32. Replaces an existing matrix of that name.
  void put(std::string name, std::size_t rows, std::size_t cols, std::span<const double> values);
  void put(std::string name, const Tensor& t);

  bool contains(std::string_view name) const;
  /// Throws FormatError when missing.
  const NamedMatrix& matrix(std::string_view name) const;
  /// Matrix widened to 64-bit as a constant tensor of shape rows x cols.
  Tensor tensor(std::string_view name) const;

  /// Throws FormatError when an invariant does not hold: matrix sizes match
  /// their extents, every embedding matrix has `dim` columns, and labels
  /// each sum to 1 within 1e-6. Estimator weights (names starting with
  /// "mi_") are exempt from the column rule.
  void validate() const;
};

std::vector<std::uint8_t> encode_store(const EmbeddingStore& store);
EmbeddingStore decode_store(std::span<const std::uint8_t> bytes);

/// Throws IoError when the file cannot be written.
void save_embedding_store(const EmbeddingStore& store, const std::filesystem::path& path);
/// Throws IoError when the file cannot be read, FormatError when malformed.
EmbeddingStore load_embedding_store(const std::filesystem::path& path);

}  // namespace ptlab
