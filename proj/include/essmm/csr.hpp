#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "essmm/error.hpp"

namespace essmm {

using index_t = std::int32_t;   // row / column index
using offset_t = std::int64_t;  // position inside col_ind / values

// Row-major dense matrix of 32-bit reals.
class DenseMatrix {
 public:
  DenseMatrix() = default;

  DenseMatrix(index_t rows, index_t cols)
      : rows_(rows), cols_(cols), data_(checked_size(rows, cols), 0.0f) {}

  DenseMatrix(index_t rows, index_t cols, std::vector<float> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != checked_size(rows, cols)) {
      throw Error(ErrorKind::ShapeMismatch,
                  "dense data has " + std::to_string(data_.size()) + " elements, expected " +
                      std::to_string(rows) + "x" + std::to_string(cols));
    }
  }

  index_t rows() const noexcept { return rows_; }
  index_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  std::span<const float> row(index_t i) const noexcept {
    return {data_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)};
  }
  std::span<float> row(index_t i) noexcept {
    return {data_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)};
  }

  float operator()(index_t i, index_t j) const noexcept {
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }
  float& operator()(index_t i, index_t j) noexcept {
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  static std::size_t checked_size(index_t rows, index_t cols) {
    if (rows < 0 || cols < 0) {
      throw Error(ErrorKind::InvalidArgument, "negative dense matrix dimension");
    }
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  }

  index_t rows_ = 0;
  index_t cols_ = 0;
  std::vector<float> data_;
};

struct CooEntry {
  index_t row;
  index_t col;
  float value;

  friend bool operator==(const CooEntry&, const CooEntry&) = default;
};

enum class ViolationKind {
  RowPtrLength,
  RowPtrStart,
  RowPtrMonotonic,
  RowPtrEnd,
  ValuesLength,
  ColumnRange,
  ColumnOrder,
};

inline const char* to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::RowPtrLength: return "row_ptr length";
    case ViolationKind::RowPtrStart: return "row_ptr start";
    case ViolationKind::RowPtrMonotonic: return "row_ptr monotonic";
    case ViolationKind::RowPtrEnd: return "row_ptr end";
    case ViolationKind::ValuesLength: return "values length";
    case ViolationKind::ColumnRange: return "column range";
    case ViolationKind::ColumnOrder: return "column order";
  }
  return "unknown";
}

struct Violation {
  ViolationKind kind;
  offset_t row;       // -1 when the violation is not tied to a row
  offset_t position;  // index into row_ptr or col_ind, -1 when not applicable
  std::string message;
};

class CsrMatrix;
inline std::vector<Violation> validate(const CsrMatrix& m);

// Compressed sparse row matrix. Immutable once built; within each row the
// column indices are strictly increasing.
class CsrMatrix {
 public:
  CsrMatrix() : row_ptr_{0} {}

  // Builds from raw arrays and throws on the first invariant violation.
  static CsrMatrix from_parts(index_t n_rows, index_t n_cols, std::vector<offset_t> row_ptr,
                              std::vector<index_t> col_ind, std::vector<float> values) {
    CsrMatrix m = from_parts_unchecked(n_rows, n_cols, std::move(row_ptr), std::move(col_ind),
                                       std::move(values));
    if (auto v = validate(m); !v.empty()) {
      throw Error(ErrorKind::InvalidArgument, "invalid CSR: " + v.front().message);
    }
    return m;
  }

  // No checks; used to inspect malformed input through validate().
  static CsrMatrix from_parts_unchecked(index_t n_rows, index_t n_cols,
                                        std::vector<offset_t> row_ptr,
                                        std::vector<index_t> col_ind, std::vector<float> values) {
    CsrMatrix m;
    m.n_rows_ = n_rows;
    m.n_cols_ = n_cols;
    m.row_ptr_ = std::move(row_ptr);
    m.col_ind_ = std::move(col_ind);
    m.values_ = std::move(values);
    return m;
  }

  static CsrMatrix identity(index_t n) {
    std::vector<offset_t> rp(static_cast<std::size_t>(n) + 1);
    std::iota(rp.begin(), rp.end(), offset_t{0});
    std::vector<index_t> ci(static_cast<std::size_t>(n));
    std::iota(ci.begin(), ci.end(), index_t{0});
    std::vector<float> vals(ci.size(), 1.0f);
    return from_parts(n, n, std::move(rp), std::move(ci), std::move(vals));
  }

  index_t n_rows() const noexcept { return n_rows_; }
  index_t n_cols() const noexcept { return n_cols_; }
  offset_t nnz() const noexcept { return static_cast<offset_t>(col_ind_.size()); }

  std::span<const offset_t> row_ptr() const noexcept { return row_ptr_; }
  std::span<const index_t> col_ind() const noexcept { return col_ind_; }
  std::span<const float> values() const noexcept { return values_; }

  offset_t row_begin(index_t i) const noexcept { return row_ptr_[i]; }
  offset_t row_nnz(index_t i) const noexcept { return row_ptr_[i + 1] - row_ptr_[i]; }

  std::span<const index_t> row_cols(index_t i) const noexcept {
    return {col_ind_.data() + row_ptr_[i], static_cast<std::size_t>(row_nnz(i))};
  }
  std::span<const float> row_values(index_t i) const noexcept {
    return {values_.data() + row_ptr_[i], static_cast<std::size_t>(row_nnz(i))};
  }

  offset_t max_row_nnz() const noexcept {
    offset_t best = 0;
    for (index_t i = 0; i < n_rows_; ++i) best = std::max(best, row_nnz(i));
    return best;
  }

  friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;

 private:
  index_t n_rows_ = 0;
  index_t n_cols_ = 0;
  std::vector<offset_t> row_ptr_;
  std::vector<index_t> col_ind_;
  std::vector<float> values_;
};

inline std::vector<Violation> validate(const CsrMatrix& m) {
  std::vector<Violation> out;
  const auto rp = m.row_ptr();
  const auto ci = m.col_ind();
  const auto nnz = static_cast<offset_t>(ci.size());

  auto add = [&](ViolationKind k, offset_t row, offset_t pos, const std::string& detail) {
    std::ostringstream os;
    os << to_string(k);
    if (row >= 0) os << " at row " << row;
    if (pos >= 0) os << " position " << pos;
    os << ": " << detail;
    out.push_back({k, row, pos, os.str()});
  };

  if (m.n_rows() < 0 || m.n_cols() < 0) {
    add(ViolationKind::RowPtrLength, -1, -1, "negative dimension");
    return out;
  }
  if (rp.size() != static_cast<std::size_t>(m.n_rows()) + 1) {
    add(ViolationKind::RowPtrLength, -1, -1,
        "expected " + std::to_string(m.n_rows() + 1) + " offsets, got " +
            std::to_string(rp.size()));
    return out;
  }
  if (rp[0] != 0) add(ViolationKind::RowPtrStart, 0, 0, "row_ptr[0] = " + std::to_string(rp[0]));
  bool monotonic = true;
  for (std::size_t i = 0; i + 1 < rp.size(); ++i) {
    if (rp[i + 1] < rp[i]) {
      monotonic = false;
      add(ViolationKind::RowPtrMonotonic, static_cast<offset_t>(i), static_cast<offset_t>(i + 1),
          "row_ptr decreases from " + std::to_string(rp[i]) + " to " + std::to_string(rp[i + 1]));
    }
  }
  if (rp.back() != nnz) {
    add(ViolationKind::RowPtrEnd, m.n_rows(), static_cast<offset_t>(rp.size() - 1),
        "row_ptr ends at " + std::to_string(rp.back()) + " but col_ind has " +
            std::to_string(nnz) + " entries");
  }
  if (m.values().size() != ci.size()) {
    add(ViolationKind::ValuesLength, -1, -1,
        std::to_string(m.values().size()) + " values for " + std::to_string(nnz) + " columns");
  }
  for (offset_t p = 0; p < nnz; ++p) {
    if (ci[p] < 0 || ci[p] >= m.n_cols()) {
      add(ViolationKind::ColumnRange, -1, p,
          "column " + std::to_string(ci[p]) + " outside [0, " + std::to_string(m.n_cols()) + ")");
    }
  }
  if (!monotonic || rp[0] != 0) return out;
  for (index_t i = 0; i < m.n_rows(); ++i) {
    const offset_t end = std::min(rp[i + 1], nnz);
    for (offset_t p = rp[i] + 1; p < end; ++p) {
      if (ci[p] <= ci[p - 1]) {
        add(ViolationKind::ColumnOrder, i, p,
            "column " + std::to_string(ci[p]) + " does not follow " + std::to_string(ci[p - 1]));
      }
    }
  }
  return out;
}

// Duplicate (row, col) pairs are summed in input order; rows come out
// sorted by column.
inline CsrMatrix from_coo(index_t n_rows, index_t n_cols, std::span<const CooEntry> triples) {
  if (n_rows < 0 || n_cols < 0) throw Error(ErrorKind::InvalidArgument, "negative dimension");
  for (std::size_t t = 0; t < triples.size(); ++t) {
    const auto& e = triples[t];
    if (e.row < 0 || e.row >= n_rows || e.col < 0 || e.col >= n_cols) {
      std::ostringstream os;
      os << "triple #" << t << " (" << e.row << ", " << e.col << ", " << e.value
         << ") outside " << n_rows << "x" << n_cols;
      throw Error(ErrorKind::OutOfRange, os.str());
    }
  }

  // Counting sort by row keeps input order within a row.
  std::vector<offset_t> counts(static_cast<std::size_t>(n_rows) + 1, 0);
  for (const auto& e : triples) ++counts[e.row + 1];
  std::partial_sum(counts.begin(), counts.end(), counts.begin());
  std::vector<std::pair<index_t, float>> by_row(triples.size());
  {
    auto fill = counts;
    for (const auto& e : triples) by_row[fill[e.row]++] = {e.col, e.value};
  }

  std::vector<offset_t> row_ptr(static_cast<std::size_t>(n_rows) + 1, 0);
  std::vector<index_t> col_ind;
  std::vector<float> values;
  col_ind.reserve(triples.size());
  values.reserve(triples.size());
  for (index_t i = 0; i < n_rows; ++i) {
    auto first = by_row.begin() + counts[i];
    auto last = by_row.begin() + counts[i + 1];
    std::stable_sort(first, last, [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto it = first; it != last; ++it) {
      if (static_cast<offset_t>(col_ind.size()) > row_ptr[i] && col_ind.back() == it->first) {
        values.back() += it->second;
      } else {
        col_ind.push_back(it->first);
        values.push_back(it->second);
      }
    }
    row_ptr[i + 1] = static_cast<offset_t>(col_ind.size());
  }
  return CsrMatrix::from_parts_unchecked(n_rows, n_cols, std::move(row_ptr), std::move(col_ind),
                                         std::move(values));
}

inline CsrMatrix from_coo(index_t n_rows, index_t n_cols, std::initializer_list<CooEntry> triples) {
  return from_coo(n_rows, n_cols, std::span<const CooEntry>(triples.begin(), triples.size()));
}

inline std::vector<CooEntry> to_coo(const CsrMatrix& m) {
  std::vector<CooEntry> out;
  out.reserve(static_cast<std::size_t>(m.nnz()));
  for (index_t i = 0; i < m.n_rows(); ++i) {
    const auto cols = m.row_cols(i);
    const auto vals = m.row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k) out.push_back({i, cols[k], vals[k]});
  }
  return out;
}

inline CsrMatrix transpose(const CsrMatrix& m) {
  auto coo = to_coo(m);
  for (auto& e : coo) std::swap(e.row, e.col);
  return from_coo(m.n_cols(), m.n_rows(), coo);
}

}  // namespace essmm
