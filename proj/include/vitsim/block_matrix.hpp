#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vitsim/util.hpp"

namespace vitsim {

// Block-partitioned matrix formats.
//
// A matrix is partitioned into b x b data blocks. Dense matrices store every
// block in block-wise row-major order: the b*b entries of block (i,j) are
// contiguous (row-major within the block) and the blocks of a block-row are
// contiguous. Sparse matrices store only the unpruned blocks, column-major:
// each block-column carries a header listing the block-row indices of the
// present blocks, followed by the block payloads in header order.
//
// Dimensions that are not multiples of b are zero-padded up to the next
// multiple; the pre-padding extent is kept so reports and round trips use the
// true shape. The accumulation order of the multiply kernels (header order
// across blocks, ascending k within a block) is part of the format contract:
// it is what makes the simulator's outputs bit-comparable to the reference.

class BlockDenseMatrix {
 public:
  BlockDenseMatrix() = default;

  BlockDenseMatrix(std::size_t rows, std::size_t cols, std::size_t block)
      : rows_(rows), cols_(cols), block_(block) {
    if (block == 0) throw std::invalid_argument("block size must be positive");
    if (rows == 0 || cols == 0)
      throw std::invalid_argument("matrix dimensions must be positive");
    grid_rows_ = (rows + block - 1) / block;
    grid_cols_ = (cols + block - 1) / block;
    data_.assign(grid_rows_ * grid_cols_ * block * block, 0.0);
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t block_size() const { return block_; }
  std::size_t block_rows() const { return grid_rows_; }
  std::size_t block_cols() const { return grid_cols_; }
  std::size_t padded_rows() const { return grid_rows_ * block_; }
  std::size_t padded_cols() const { return grid_cols_ * block_; }

  std::span<double> block(std::size_t bi, std::size_t bj) {
    return {data_.data() + block_offset(bi, bj), block_ * block_};
  }
  std::span<const double> block(std::size_t bi, std::size_t bj) const {
    return {data_.data() + block_offset(bi, bj), block_ * block_};
  }

  double& at(std::size_t r, std::size_t c) {
    return data_[element_offset(r, c)];
  }
  double at(std::size_t r, std::size_t c) const {
    return data_[element_offset(r, c)];
  }

  std::span<const double> raw() const { return data_; }
  std::span<double> raw() { return data_; }

  // True-extent row-major copy (padding stripped).
  std::vector<double> to_row_major() const {
    std::vector<double> out(rows_ * cols_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) out[r * cols_ + c] = at(r, c);
    return out;
  }

 private:
  std::size_t block_offset(std::size_t bi, std::size_t bj) const {
    return (bi * grid_cols_ + bj) * block_ * block_;
  }
  std::size_t element_offset(std::size_t r, std::size_t c) const {
    const std::size_t bi = r / block_, bj = c / block_;
    return block_offset(bi, bj) + (r % block_) * block_ + (c % block_);
  }

  std::size_t rows_ = 0, cols_ = 0;   // true extent
  std::size_t block_ = 0;
  std::size_t grid_rows_ = 0, grid_cols_ = 0;
  std::vector<double> data_;
};

// Binary keep/prune grid at block granularity.
struct BlockMask {
  std::size_t grid_rows = 0, grid_cols = 0;
  std::vector<std::uint8_t> keep;  // row-major, entries in {0,1}

  BlockMask() = default;
  BlockMask(std::size_t gr, std::size_t gc, std::uint8_t fill = 0)
      : grid_rows(gr), grid_cols(gc), keep(gr * gc, fill) {}

  std::uint8_t at(std::size_t i, std::size_t j) const {
    return keep[i * grid_cols + j];
  }
  std::uint8_t& at(std::size_t i, std::size_t j) {
    return keep[i * grid_cols + j];
  }
  std::size_t ones() const {
    std::size_t n = 0;
    for (auto v : keep) n += v;
    return n;
  }
  double keep_rate() const {
    return keep.empty() ? 0.0 : static_cast<double>(ones()) / keep.size();
  }
};

class BlockSparseMatrix {
 public:
  struct Column {
    std::vector<std::uint32_t> header;  // strictly increasing block rows
    std::vector<double> values;         // header.size() blocks, header order
  };

  BlockSparseMatrix() = default;

  BlockSparseMatrix(std::size_t rows, std::size_t cols, std::size_t block)
      : rows_(rows), cols_(cols), block_(block) {
    if (block == 0) throw std::invalid_argument("block size must be positive");
    if (rows == 0 || cols == 0)
      throw std::invalid_argument("matrix dimensions must be positive");
    grid_rows_ = (rows + block - 1) / block;
    grid_cols_ = (cols + block - 1) / block;
    columns_.resize(grid_cols_);
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t block_size() const { return block_; }
  std::size_t block_rows() const { return grid_rows_; }
  std::size_t block_cols() const { return grid_cols_; }

  const Column& column(std::size_t bj) const { return columns_[bj]; }
  Column& column(std::size_t bj) { return columns_[bj]; }

  std::span<const double> block_at(std::size_t bj, std::size_t slot) const {
    return {columns_[bj].values.data() + slot * block_ * block_,
            block_ * block_};
  }
  std::span<double> block_at(std::size_t bj, std::size_t slot) {
    return {columns_[bj].values.data() + slot * block_ * block_,
            block_ * block_};
  }

  std::size_t present_blocks() const {
    std::size_t n = 0;
    for (const auto& c : columns_) n += c.header.size();
    return n;
  }

  // Format invariants: strictly increasing in-range headers, payload sizes.
  void validate() const {
    for (std::size_t j = 0; j < grid_cols_; ++j) {
      const Column& col = columns_[j];
      if (col.values.size() != col.header.size() * block_ * block_)
        throw internal_error("sparse column payload does not match header");
      for (std::size_t t = 0; t < col.header.size(); ++t) {
        if (col.header[t] >= grid_rows_)
          throw internal_error("sparse header index out of range");
        if (t > 0 && col.header[t] <= col.header[t - 1])
          throw internal_error("sparse header not strictly increasing");
      }
    }
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::size_t block_ = 0;
  std::size_t grid_rows_ = 0, grid_cols_ = 0;
  std::vector<Column> columns_;
};

// Per-column presence profile of a sparse matrix; phi is the retained
// fraction of block rows in a column.
struct ColumnProfile {
  std::vector<std::size_t> counts;
  std::size_t total_block_rows = 0;

  double phi(std::size_t col) const {
    return total_block_rows == 0
               ? 0.0
               : static_cast<double>(counts[col]) / total_block_rows;
  }
};

inline ColumnProfile column_profile(const BlockSparseMatrix& w) {
  ColumnProfile p;
  p.total_block_rows = w.block_rows();
  p.counts.reserve(w.block_cols());
  for (std::size_t j = 0; j < w.block_cols(); ++j)
    p.counts.push_back(w.column(j).header.size());
  return p;
}

// Partition a row-major matrix into b x b blocks, zero-padding the edges.
inline BlockDenseMatrix partition_dense(std::span<const double> data,
                                        std::size_t rows, std::size_t cols,
                                        std::size_t block) {
  if (block == 0) throw std::invalid_argument("block size must be positive");
  if (rows == 0 || cols == 0)
    throw std::invalid_argument("matrix dimensions must be positive");
  if (data.size() != rows * cols)
    throw std::invalid_argument("partition_dense: data length != rows*cols");
  BlockDenseMatrix m(rows, cols, block);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m.at(r, c) = data[r * cols + c];
  return m;
}

// Keep only the masked blocks, column-major with per-column headers.
inline BlockSparseMatrix compress(const BlockDenseMatrix& dense,
                                  const BlockMask& mask) {
  if (mask.grid_rows != dense.block_rows() ||
      mask.grid_cols != dense.block_cols())
    throw std::invalid_argument("compress: mask grid does not match matrix");
  BlockSparseMatrix out(dense.rows(), dense.cols(), dense.block_size());
  const std::size_t bb = dense.block_size() * dense.block_size();
  for (std::size_t j = 0; j < dense.block_cols(); ++j) {
    auto& col = out.column(j);
    for (std::size_t i = 0; i < dense.block_rows(); ++i) {
      if (!mask.at(i, j)) continue;
      col.header.push_back(static_cast<std::uint32_t>(i));
      auto src = dense.block(i, j);
      col.values.insert(col.values.end(), src.begin(), src.begin() + bb);
    }
  }
  return out;
}

// Zero-fill the absent blocks.
inline BlockDenseMatrix decompress(const BlockSparseMatrix& sparse) {
  BlockDenseMatrix out(sparse.rows(), sparse.cols(), sparse.block_size());
  const std::size_t bb = sparse.block_size() * sparse.block_size();
  for (std::size_t j = 0; j < sparse.block_cols(); ++j) {
    const auto& col = sparse.column(j);
    for (std::size_t t = 0; t < col.header.size(); ++t) {
      auto dst = out.block(col.header[t], j);
      auto src = sparse.block_at(j, t);
      for (std::size_t k = 0; k < bb; ++k) dst[k] = src[k];
    }
  }
  return out;
}

inline BlockMask mask_of(const BlockSparseMatrix& sparse) {
  BlockMask m(sparse.block_rows(), sparse.block_cols());
  for (std::size_t j = 0; j < sparse.block_cols(); ++j)
    for (auto i : sparse.column(j).header) m.at(i, j) = 1;
  return m;
}

namespace detail {

// y += a * w for b x b blocks. k ascends innermost per output element, which
// pins the accumulation order shared by every kernel in the library.
inline void block_madd(std::span<const double> a, std::span<const double> w,
                       std::span<double> y, std::size_t b) {
  for (std::size_t r = 0; r < b; ++r) {
    const double* ar = a.data() + r * b;
    double* yr = y.data() + r * b;
    for (std::size_t k = 0; k < b; ++k) {
      const double av = ar[k];
      const double* wk = w.data() + k * b;
      for (std::size_t c = 0; c < b; ++c) yr[c] += av * wk[c];
    }
  }
}

}  // namespace detail

// Y = X * decompress(W), accumulating each output block over the weight
// column's blocks in header order.
inline BlockDenseMatrix sbmm_ref(const BlockDenseMatrix& x,
                                 const BlockSparseMatrix& w) {
  if (x.cols() != w.rows() || x.block_size() != w.block_size())
    throw std::invalid_argument("sbmm_ref: dimension or block-size mismatch");
  BlockDenseMatrix y(x.rows(), w.cols(), x.block_size());
  const std::size_t b = x.block_size();
  for (std::size_t j = 0; j < w.block_cols(); ++j) {
    const auto& col = w.column(j);
    for (std::size_t t = 0; t < col.header.size(); ++t) {
      const std::size_t k = col.header[t];
      auto wblk = w.block_at(j, t);
      for (std::size_t i = 0; i < x.block_rows(); ++i)
        detail::block_madd(x.block(i, k), wblk, y.block(i, j), b);
    }
  }
  return y;
}

// Dense variant: identical accumulation order with every block present.
inline BlockDenseMatrix dbmm_ref(const BlockDenseMatrix& x,
                                 const BlockDenseMatrix& w) {
  if (x.cols() != w.rows() || x.block_size() != w.block_size())
    throw std::invalid_argument("dbmm_ref: dimension or block-size mismatch");
  BlockDenseMatrix y(x.rows(), w.cols(), x.block_size());
  const std::size_t b = x.block_size();
  for (std::size_t j = 0; j < w.block_cols(); ++j) {
    for (std::size_t k = 0; k < w.block_rows(); ++k) {
      auto wblk = w.block(k, j);
      for (std::size_t i = 0; i < x.block_rows(); ++i)
        detail::block_madd(x.block(i, k), wblk, y.block(i, j), b);
    }
  }
  return y;
}

// Blocked transpose (true extents swap; padding stays zero).
inline BlockDenseMatrix transpose(const BlockDenseMatrix& m) {
  BlockDenseMatrix out(m.cols(), m.rows(), m.block_size());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out.at(c, r) = m.at(r, c);
  return out;
}

// Copy a contiguous range of block columns into a standalone matrix.
inline BlockDenseMatrix slice_block_cols(const BlockDenseMatrix& m,
                                         std::size_t first_block_col,
                                         std::size_t block_col_count) {
  VITSIM_CHECK(first_block_col + block_col_count <= m.block_cols(),
               "block column slice out of range");
  const std::size_t b = m.block_size();
  const std::size_t width =
      std::min(m.cols() - first_block_col * b, block_col_count * b);
  BlockDenseMatrix out(m.rows(), width, b);
  for (std::size_t i = 0; i < m.block_rows(); ++i)
    for (std::size_t j = 0; j < block_col_count; ++j) {
      auto src = m.block(i, first_block_col + j);
      auto dst = out.block(i, j);
      for (std::size_t k = 0; k < b * b; ++k) dst[k] = src[k];
    }
  return out;
}

// Write `src` into `dst` starting at the given block column.
inline void paste_block_cols(BlockDenseMatrix& dst, const BlockDenseMatrix& src,
                             std::size_t first_block_col) {
  VITSIM_CHECK(dst.block_size() == src.block_size(), "block size mismatch");
  VITSIM_CHECK(first_block_col + src.block_cols() <= dst.block_cols() &&
                   dst.block_rows() == src.block_rows(),
               "paste range out of bounds");
  const std::size_t bb = dst.block_size() * dst.block_size();
  for (std::size_t i = 0; i < src.block_rows(); ++i)
    for (std::size_t j = 0; j < src.block_cols(); ++j) {
      auto s = src.block(i, j);
      auto d = dst.block(i, first_block_col + j);
      for (std::size_t k = 0; k < bb; ++k) d[k] = s[k];
    }
}

}  // namespace vitsim
