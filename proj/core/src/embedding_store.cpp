#include "ptlab/embedding_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ptlab/errors.hpp"

namespace ptlab {
namespace {

constexpr char kMagic[4] = {'P', 'T', 'E', 'S'};
constexpr std::size_t kPreamble = 12;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

bool is_estimator_weight(std::string_view name) { return name.starts_with("mi_"); }

}  // namespace

void EmbeddingStore::put(std::string name, std::size_t rows, std::size_t cols,
                         std::span<const double> values) {
  if (values.size() != rows * cols) throw ShapeError("store matrix '" + name + "' size mismatch");
  NamedMatrix m{std::move(name), rows, cols, {}};
  m.data.reserve(values.size());
  for (double v : values) m.data.push_back(static_cast<float>(v));
  for (auto& existing : matrices) {
    if (existing.name == m.name) {
      existing = std::move(m);
      return;
    }
  }
  matrices.push_back(std::move(m));
}

void EmbeddingStore::put(std::string name, const Tensor& t) {
  put(std::move(name), t.rows(), t.cols(), t.values());
}

bool EmbeddingStore::contains(std::string_view name) const {
  for (const auto& m : matrices)
    if (m.name == name) return true;
  return false;
}

const NamedMatrix& EmbeddingStore::matrix(std::string_view name) const {
  for (const auto& m : matrices)
    if (m.name == name) return m;
  throw FormatError("store has no matrix named '" + std::string(name) + "'");
}

Tensor EmbeddingStore::tensor(std::string_view name) const {
  const auto& m = matrix(name);
  return Tensor::constant({m.rows, m.cols}, std::vector<double>(m.data.begin(), m.data.end()));
}

void EmbeddingStore::validate() const {
  if (dim == 0) throw FormatError("store dim must be positive");
  for (const auto& m : matrices) {
    if (m.rows == 0 || m.cols == 0 || m.data.size() != m.rows * m.cols) {
      throw FormatError("matrix '" + m.name + "' has inconsistent extents");
    }
    if (!is_estimator_weight(m.name) && m.cols != dim) {
      throw FormatError("matrix '" + m.name + "' has " + std::to_string(m.cols) +
                        " columns, store dim is " + std::to_string(dim));
    }
  }
  if (labels) {
    for (const auto& row : *labels) {
      double s = 0.0;
      for (double v : row) s += v;
      if (std::abs(s - 1.0) > 1e-6) throw FormatError("label vector does not sum to 1");
    }
  }
}

std::vector<std::uint8_t> encode_store(const EmbeddingStore& store) {
  store.validate();
  nlohmann::json header;
  header["dim"] = store.dim;
  header["classes"] = store.class_names;
  auto mats = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& m : store.matrices) {
    mats.push_back({{"name", m.name}, {"rows", m.rows}, {"cols", m.cols}, {"offset", offset}});
    offset += m.data.size() * sizeof(float);
  }
  header["matrices"] = std::move(mats);
  if (store.labels) header["labels"] = *store.labels;
  if (!store.meta.is_null()) header["meta"] = store.meta;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kPreamble + text.size() + offset);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kStoreVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& m : store.matrices) {
    for (float f : m.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

EmbeddingStore decode_store(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPreamble) throw FormatError("truncated PTES preamble");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad PTES magic");
  const auto version = get_u32(bytes, 4);
  if (version != kStoreVersion) throw FormatError("unsupported PTES version " + std::to_string(version));
  const std::size_t header_len = get_u32(bytes, 8);
  if (bytes.size() < kPreamble + header_len) throw FormatError("truncated PTES header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPreamble, bytes.begin() + kPreamble + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid PTES header: ") + e.what());
  }
  const auto payload = bytes.subspan(kPreamble + header_len);

  EmbeddingStore store;
  try {
    store.dim = header.at("dim").get<std::size_t>();
    store.class_names = header.at("classes").get<std::vector<std::string>>();
    for (const auto& entry : header.at("matrices")) {
      NamedMatrix m;
      m.name = entry.at("name").get<std::string>();
      m.rows = entry.at("rows").get<std::size_t>();
      m.cols = entry.at("cols").get<std::size_t>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const std::size_t count = m.rows * m.cols;
      if (offset > payload.size() || count > (payload.size() - offset) / sizeof(float)) {
        throw FormatError("truncated payload for matrix '" + m.name + "'");
      }
      m.data.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        m.data[i] = std::bit_cast<float>(get_u32(payload, offset + i * sizeof(float)));
      }
      store.matrices.push_back(std::move(m));
    }
    if (header.contains("labels")) {
      store.labels = header.at("labels").get<std::vector<std::vector<double>>>();
    }
    if (header.contains("meta")) store.meta = header.at("meta");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed PTES header: ") + e.what());
  }
  store.validate();
  return store;
}

void save_embedding_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  const auto bytes = encode_store(store);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

EmbeddingStore load_embedding_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_store(bytes);
}

}  // namespace ptlab
