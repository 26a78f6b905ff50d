#include "neurokernel/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <latch>
#include <numeric>
#include <sstream>
#include <thread>

namespace neurokernel::tensor {

namespace {

Status check_finite(std::span<const double> data, const char* what) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      return make_error(ErrorKind::Overflow, std::string(what) + " produced a non-finite value");
    }
  }
  return ok_status();
}

}  // namespace

std::string shape_string(std::span<const std::size_t> shape) {
  std::ostringstream out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  return out.str();
}

Result<Tensor> Tensor::create(std::vector<std::size_t> shape, std::vector<double> data) {
  if (shape.empty() || shape.size() > 2) {
    return make_error(ErrorKind::InvalidArgument, "tensor rank must be 1 or 2");
  }
  std::size_t count = 1;
  for (std::size_t d : shape) {
    if (d == 0) return make_error(ErrorKind::InvalidArgument, "tensor dimensions must be positive");
    count *= d;
  }
  if (count != data.size()) {
    return make_error(ErrorKind::InvalidArgument,
                      "shape " + shape_string(shape) + " needs " + std::to_string(count) +
                          " elements, got " + std::to_string(data.size()));
  }
  for (double v : data) {
    if (!std::isfinite(v)) return make_error(ErrorKind::InvalidArgument, "tensor data must be finite");
  }
  return Tensor(std::move(shape), std::move(data));
}

Result<Tensor> Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t count = 1;
  for (std::size_t d : shape) count *= d;
  return create(std::move(shape), std::vector<double>(count, 0.0));
}

Result<Tensor> Tensor::identity(std::size_t n) {
  std::vector<double> data(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) data[i * n + i] = 1.0;
  return create({n, n}, std::move(data));
}

Status validate(const MatmulConfig& cfg) {
  if (cfg.block_size == 0) return make_error(ErrorKind::InvalidArgument, "block_size must be >= 1");
  if (cfg.worker_count == 0 || cfg.worker_count > kMaxWorkers) {
    return make_error(ErrorKind::InvalidArgument,
                      "worker_count must be in 1..8, got " + std::to_string(cfg.worker_count));
  }
  return ok_status();
}

Status validate_matmul_shapes(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    return make_error(ErrorKind::ShapeMismatch,
                      "cannot multiply " + shape_string(a.shape()) + " by " + shape_string(b.shape()));
  }
  return ok_status();
}

Result<Tensor> elementwise_sum(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    return make_error(ErrorKind::ShapeMismatch,
                      "cannot add " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  std::vector<double> out(a.size());
  kernels::sum(a.data(), b.data(), out);
  NK_RETURN_IF_ERROR(check_finite(out, "elementwise_sum"));
  return Tensor::create(a.shape(), std::move(out));
}

Result<Tensor> matmul_naive(const Tensor& a, const Tensor& b) {
  NK_RETURN_IF_ERROR(validate_matmul_shapes(a, b));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  kernels::matmul(a.data(), b.data(), out, m, k, n);
  NK_RETURN_IF_ERROR(check_finite(out, "matmul"));
  return Tensor::create({m, n}, std::move(out));
}

Result<Tensor> matmul_blocked(const Tensor& a, const Tensor& b, const MatmulConfig& cfg) {
  NK_RETURN_IF_ERROR(validate_matmul_shapes(a, b));
  if (cfg.block_size == 0) return make_error(ErrorKind::InvalidArgument, "block_size must be >= 1");

  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const std::size_t bs = cfg.block_size;
  const auto lhs = a.data();
  const auto rhs = b.data();
  std::vector<double> out(m * n, 0.0);

  for (std::size_t ii = 0; ii < m; ii += bs) {
    const std::size_t i_end = std::min(ii + bs, m);
    for (std::size_t jj = 0; jj < n; jj += bs) {
      const std::size_t j_end = std::min(jj + bs, n);
      // kk must stay ascending: per-element accumulation order is the contract.
      for (std::size_t kk = 0; kk < k; kk += bs) {
        const std::size_t k_end = std::min(kk + bs, k);
        for (std::size_t i = ii; i < i_end; ++i) {
          double* out_row = out.data() + i * n;
          for (std::size_t p = kk; p < k_end; ++p) {
            const double aip = lhs[i * k + p];
            const double* rhs_row = rhs.data() + p * n;
            for (std::size_t j = jj; j < j_end; ++j) {
              out_row[j] += aip * rhs_row[j];
            }
          }
        }
      }
    }
  }
  NK_RETURN_IF_ERROR(check_finite(out, "matmul"));
  return Tensor::create({m, n}, std::move(out));
}

std::vector<RowRange> partition_rows(std::size_t rows, std::size_t workers) {
  std::vector<RowRange> ranges;
  if (workers == 0) return ranges;
  ranges.reserve(workers);
  const std::size_t base = rows / workers;
  const std::size_t extra = rows % workers;
  std::size_t begin = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t len = base + (w < extra ? 1 : 0);
    ranges.push_back({begin, begin + len});
    begin += len;
  }
  return ranges;
}

Result<Tensor> matmul_parallel(const Tensor& a, const Tensor& b, const MatmulConfig& cfg) {
  NK_RETURN_IF_ERROR(validate_matmul_shapes(a, b));
  if (cfg.worker_count == 0 || cfg.worker_count > kMaxWorkers) {
    return make_error(ErrorKind::InvalidArgument,
                      "worker_count must be in 1..8, got " + std::to_string(cfg.worker_count));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  const auto ranges = partition_rows(m, cfg.worker_count);

  std::latch done(static_cast<std::ptrdiff_t>(ranges.size()));
  {
    std::vector<std::jthread> workers;
    workers.reserve(ranges.size());
    for (const RowRange& r : ranges) {
      workers.emplace_back([&, r] {
        kernels::matmul_rows(a.data(), b.data(), out, k, n, r.begin, r.end);
        done.count_down();
      });
    }
    done.wait();
  }
  NK_RETURN_IF_ERROR(check_finite(out, "matmul"));
  return Tensor::create({m, n}, std::move(out));
}

namespace kernels {

void sum(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
}

void matmul_rows(std::span<const double> a, std::span<const double> b, std::span<double> out,
                 std::size_t k, std::size_t n, std::size_t row_begin, std::size_t row_end) {
  for (std::size_t i = row_begin; i < row_end; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += a[i * k + p] * b[p * n + j];
      }
      out[i * n + j] = acc;
    }
  }
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  matmul_rows(a, b, out, k, n, 0, m);
}

}  // namespace kernels

}  // namespace neurokernel::tensor
