#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "neurokernel/error.hpp"

namespace neurokernel::tensor {

/// Rank-1 or rank-2 tensor of doubles in row-major order. Immutable once built.
class Tensor {
 public:
  /// Shape {1} holding a single zero.
  Tensor() : shape_{1}, data_{0.0} {}

  /// Rejects empty/zero dimensions, rank > 2, size mismatch and non-finite data.
  static Result<Tensor> create(std::vector<std::size_t> shape, std::vector<double> data);
  static Result<Tensor> zeros(std::vector<std::size_t> shape);
  static Result<Tensor> identity(std::size_t n);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::span<const double> data() const { return data_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  std::size_t rows() const { return shape_[0]; }
  std::size_t cols() const { return shape_.size() == 2 ? shape_[1] : 1; }
  double at(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {}

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(std::span<const std::size_t> shape);

inline constexpr std::size_t kMaxWorkers = 8;

struct MatmulConfig {
  std::size_t block_size = 64;
  std::size_t worker_count = 4;
};

Status validate(const MatmulConfig& cfg);

Status validate_matmul_shapes(const Tensor& a, const Tensor& b);

Result<Tensor> elementwise_sum(const Tensor& a, const Tensor& b);

/// Reference i-j-k triple loop; every other variant must match it bit-for-bit.
Result<Tensor> matmul_naive(const Tensor& a, const Tensor& b);

/// Cache-blocked product. Tiles are visited with ascending k, so each output
/// element sees the same accumulation sequence as matmul_naive.
Result<Tensor> matmul_blocked(const Tensor& a, const Tensor& b, const MatmulConfig& cfg);

/// Row-partitioned product over cfg.worker_count threads. Returns after every
/// worker has signalled completion.
Result<Tensor> matmul_parallel(const Tensor& a, const Tensor& b, const MatmulConfig& cfg);

/// Half-open row range [begin, end).
struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Contiguous split of `rows` over `workers`; earlier workers take the remainder.
std::vector<RowRange> partition_rows(std::size_t rows, std::size_t workers);

// Raw kernels over caller-owned storage. The accelerator runs these directly
// over its device buffer.
namespace kernels {

void sum(std::span<const double> a, std::span<const double> b, std::span<double> out);

/// out[m x n] = a[m x k] * b[k x n]; rows [row_begin, row_end) only.
void matmul_rows(std::span<const double> a, std::span<const double> b, std::span<double> out,
                 std::size_t k, std::size_t n, std::size_t row_begin, std::size_t row_end);

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);

}  // namespace kernels

}  // namespace neurokernel::tensor
