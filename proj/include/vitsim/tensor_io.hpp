#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "vitsim/block_matrix.hpp"

namespace vitsim {

// Binary tensor container, file extension .vsbm.
//
//   magic   "VSBM" (4 bytes)
//   version u32 = 1
//   count   u64 tensor records
//
// Record:
//   name_len u32, name bytes (no terminator)
//   dtype    u32: 0 = float64 (the only code in version 1)
//   layout   u32: 0 = dense-block, 1 = sparse-block
//   rows     u64 true extent
//   cols     u64 true extent
//   block    u32
//   dense:  value_count u64, float64 * value_count
//           (zero-padded block-wise row-major data)
//   sparse: col_count u64 (block columns), then per column:
//           header_len u32, u32 * header_len block-row indices,
//           float64 * header_len*block^2 payload in header order
//
// All integers and floats little-endian. Plain 1-D vectors are stored as
// dense tensors with block = 1 and cols = 1.

static_assert(std::endian::native == std::endian::little,
              "container writer assumes a little-endian host");

enum class TensorLayout : std::uint32_t { DenseBlock = 0, SparseBlock = 1 };

struct TensorRecord {
  std::string name;
  std::variant<BlockDenseMatrix, BlockSparseMatrix> value;
};

namespace detail {

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& ctx) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("truncated container: " + ctx);
  return v;
}

}  // namespace detail

class TensorContainer {
 public:
  void add(std::string name, BlockDenseMatrix m) {
    insert(std::move(name), TensorRecord{"", std::move(m)});
  }
  void add(std::string name, BlockSparseMatrix m) {
    insert(std::move(name), TensorRecord{"", std::move(m)});
  }

  bool contains(const std::string& name) const {
    return index_.count(name) != 0;
  }

  const BlockDenseMatrix& dense(const std::string& name) const {
    const auto& rec = find(name);
    if (!std::holds_alternative<BlockDenseMatrix>(rec.value))
      throw std::invalid_argument("tensor '" + name + "' is not dense-block");
    return std::get<BlockDenseMatrix>(rec.value);
  }

  const BlockSparseMatrix& sparse(const std::string& name) const {
    const auto& rec = find(name);
    if (!std::holds_alternative<BlockSparseMatrix>(rec.value))
      throw std::invalid_argument("tensor '" + name + "' is not sparse-block");
    return std::get<BlockSparseMatrix>(rec.value);
  }

  const std::vector<TensorRecord>& records() const { return records_; }

  void write(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os)
      throw std::runtime_error("cannot open for writing: " + path.string());
    os.write("VSBM", 4);
    detail::write_pod<std::uint32_t>(os, 1);
    detail::write_pod<std::uint64_t>(os, records_.size());
    for (const auto& rec : records_) write_record(os, rec);
    os.flush();
    if (!os) throw std::runtime_error("write failed: " + path.string());
  }

  static TensorContainer read(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
      throw std::runtime_error("cannot open for reading: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "VSBM", 4) != 0)
      throw std::runtime_error("not a VSBM container: " + path.string());
    const auto version = detail::read_pod<std::uint32_t>(is, path.string());
    if (version != 1)
      throw std::runtime_error("unsupported container version in " +
                               path.string());
    const auto count = detail::read_pod<std::uint64_t>(is, path.string());
    TensorContainer c;
    for (std::uint64_t i = 0; i < count; ++i)
      c.append_record(read_record(is, path.string()));
    return c;
  }

 private:
  const TensorRecord& find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw std::invalid_argument("tensor '" + name + "' not in container");
    return records_[it->second];
  }

  void insert(std::string name, TensorRecord rec) {
    if (index_.count(name))
      throw std::invalid_argument("duplicate tensor name '" + name + "'");
    rec.name = name;
    index_[std::move(name)] = records_.size();
    records_.push_back(std::move(rec));
  }

  void append_record(TensorRecord rec) {
    std::string name = rec.name;
    insert(std::move(name), std::move(rec));
  }

  static void write_record(std::ostream& os, const TensorRecord& rec) {
    detail::write_pod<std::uint32_t>(
        os, static_cast<std::uint32_t>(rec.name.size()));
    os.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
    detail::write_pod<std::uint32_t>(os, 0);  // dtype float64
    if (const auto* d = std::get_if<BlockDenseMatrix>(&rec.value)) {
      detail::write_pod<std::uint32_t>(
          os, static_cast<std::uint32_t>(TensorLayout::DenseBlock));
      detail::write_pod<std::uint64_t>(os, d->rows());
      detail::write_pod<std::uint64_t>(os, d->cols());
      detail::write_pod<std::uint32_t>(
          os, static_cast<std::uint32_t>(d->block_size()));
      detail::write_pod<std::uint64_t>(os, d->raw().size());
      os.write(reinterpret_cast<const char*>(d->raw().data()),
               static_cast<std::streamsize>(d->raw().size() * sizeof(double)));
    } else {
      const auto& s = std::get<BlockSparseMatrix>(rec.value);
      detail::write_pod<std::uint32_t>(
          os, static_cast<std::uint32_t>(TensorLayout::SparseBlock));
      detail::write_pod<std::uint64_t>(os, s.rows());
      detail::write_pod<std::uint64_t>(os, s.cols());
      detail::write_pod<std::uint32_t>(
          os, static_cast<std::uint32_t>(s.block_size()));
      detail::write_pod<std::uint64_t>(os, s.block_cols());
      for (std::size_t j = 0; j < s.block_cols(); ++j) {
        const auto& col = s.column(j);
        detail::write_pod<std::uint32_t>(
            os, static_cast<std::uint32_t>(col.header.size()));
        os.write(reinterpret_cast<const char*>(col.header.data()),
                 static_cast<std::streamsize>(col.header.size() *
                                              sizeof(std::uint32_t)));
        os.write(
            reinterpret_cast<const char*>(col.values.data()),
            static_cast<std::streamsize>(col.values.size() * sizeof(double)));
      }
    }
  }

  static TensorRecord read_record(std::istream& is, const std::string& ctx) {
    const auto name_len = detail::read_pod<std::uint32_t>(is, ctx);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw std::runtime_error("truncated container: " + ctx);
    const auto dtype = detail::read_pod<std::uint32_t>(is, ctx);
    if (dtype != 0)
      throw std::runtime_error("unsupported dtype for '" + name + "' in " +
                               ctx);
    const auto layout = detail::read_pod<std::uint32_t>(is, ctx);
    const auto rows = detail::read_pod<std::uint64_t>(is, ctx);
    const auto cols = detail::read_pod<std::uint64_t>(is, ctx);
    const auto block = detail::read_pod<std::uint32_t>(is, ctx);
    if (block == 0 || rows == 0 || cols == 0)
      throw std::runtime_error("bad shape for '" + name + "' in " + ctx);

    TensorRecord rec;
    rec.name = name;
    if (layout == static_cast<std::uint32_t>(TensorLayout::DenseBlock)) {
      BlockDenseMatrix m(rows, cols, block);
      const auto n = detail::read_pod<std::uint64_t>(is, ctx);
      if (n != m.raw().size())
        throw std::runtime_error("payload size mismatch for '" + name +
                                 "' in " + ctx);
      is.read(reinterpret_cast<char*>(m.raw().data()),
              static_cast<std::streamsize>(n * sizeof(double)));
      if (!is) throw std::runtime_error("truncated container: " + ctx);
      rec.value = std::move(m);
    } else if (layout ==
               static_cast<std::uint32_t>(TensorLayout::SparseBlock)) {
      BlockSparseMatrix m(rows, cols, block);
      const auto ncols = detail::read_pod<std::uint64_t>(is, ctx);
      if (ncols != m.block_cols())
        throw std::runtime_error("column count mismatch for '" + name +
                                 "' in " + ctx);
      const std::size_t bb = m.block_size() * m.block_size();
      for (std::size_t j = 0; j < ncols; ++j) {
        auto& col = m.column(j);
        const auto len = detail::read_pod<std::uint32_t>(is, ctx);
        col.header.resize(len);
        is.read(reinterpret_cast<char*>(col.header.data()),
                static_cast<std::streamsize>(len * sizeof(std::uint32_t)));
        col.values.resize(static_cast<std::size_t>(len) * bb);
        is.read(reinterpret_cast<char*>(col.values.data()),
                static_cast<std::streamsize>(col.values.size() *
                                             sizeof(double)));
        if (!is) throw std::runtime_error("truncated container: " + ctx);
      }
      m.validate();
      rec.value = std::move(m);
    } else {
      throw std::runtime_error("unknown layout for '" + name + "' in " + ctx);
    }
    return rec;
  }

  std::vector<TensorRecord> records_;
  std::map<std::string, std::size_t> index_;
};

// 1-D vectors travel as len x 1 dense tensors with block = 1.
inline BlockDenseMatrix vector_tensor(std::span<const double> v) {
  BlockDenseMatrix m(v.size(), 1, 1);
  for (std::size_t i = 0; i < v.size(); ++i) m.at(i, 0) = v[i];
  return m;
}

inline std::vector<double> tensor_vector(const BlockDenseMatrix& m) {
  if (m.cols() != 1)
    throw std::invalid_argument("tensor is not a column vector");
  std::vector<double> v(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) v[i] = m.at(i, 0);
  return v;
}

}  // namespace vitsim
