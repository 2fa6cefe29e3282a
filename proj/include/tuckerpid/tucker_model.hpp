#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tuckerpid/sparse_tensor.hpp"

namespace tuckerpid {

/// Latent dimensions of the three factor matrices (and the core shape).
struct Ranks {
  std::size_t r1 = 5;
  std::size_t r2 = 5;
  std::size_t r3 = 5;

  std::size_t core_size() const noexcept { return r1 * r2 * r3; }
  friend bool operator==(const Ranks&, const Ranks&) = default;
};

/// Tikhonov weights: lambda1 on the core, lambda2 on factor rows, lambda3 on biases.
struct RegWeights {
  double lambda1 = 0.01;
  double lambda2 = 0.01;
  double lambda3 = 0.01;
};

/// Parameters of the biased Tucker model
///
///   y(i,j,k) ~ mu + sum_{m,n,l} G(m,n,l) U(i,m) D(j,n) T(k,l) + a(i) + b(j) + c(k)
///
/// All matrices are dense and row-major: U is |I| x r1, D is |J| x r2, T is
/// |K| x r3, and G is r1 x r2 x r3 with l varying fastest.
struct TuckerFactors {
  Dims dims;
  Ranks ranks;
  std::vector<double> U;
  std::vector<double> D;
  std::vector<double> T;
  std::vector<double> G;
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> c;
  double mu = 0.0;

  /// All-zero parameters of the right shapes.
  static TuckerFactors zeros(Dims dims, Ranks ranks, double mu = 0.0);

  std::span<const double> u_row(std::size_t i) const { return {U.data() + i * ranks.r1, ranks.r1}; }
  std::span<const double> d_row(std::size_t j) const { return {D.data() + j * ranks.r2, ranks.r2}; }
  std::span<const double> t_row(std::size_t k) const { return {T.data() + k * ranks.r3, ranks.r3}; }
  std::span<double> u_row(std::size_t i) { return {U.data() + i * ranks.r1, ranks.r1}; }
  std::span<double> d_row(std::size_t j) { return {D.data() + j * ranks.r2, ranks.r2}; }
  std::span<double> t_row(std::size_t k) { return {T.data() + k * ranks.r3, ranks.r3}; }

  std::size_t core_offset(std::size_t m, std::size_t n, std::size_t l) const noexcept {
    return (m * ranks.r2 + n) * ranks.r3 + l;
  }
  double& g(std::size_t m, std::size_t n, std::size_t l) { return G[core_offset(m, n, l)]; }
  double g(std::size_t m, std::size_t n, std::size_t l) const { return G[core_offset(m, n, l)]; }

  /// Throws DataError when a buffer length disagrees with dims/ranks or a
  /// value is non-finite.
  void validate() const;

  friend bool operator==(const TuckerFactors&, const TuckerFactors&) = default;
};

/// Random start: U, D, T, G i.i.d. uniform on (0, init_scale], biases zero.
TuckerFactors init_factors(Dims dims, Ranks ranks, double mu, double init_scale, std::uint64_t seed);

/// Biased prediction. Throws DataError if idx is out of bounds.
double predict(const TuckerFactors& f, const EntryIndex& idx);

/// The multilinear term alone, without mu and biases.
double predict_unbiased(const TuckerFactors& f, const EntryIndex& idx);

/// y - predict(f, idx).
double instance_error(const TuckerFactors& f, const EntryIndex& idx, double y);

/// Half the sum over the given entries of the squared error plus the
/// per-instance penalties lambda1 |G|^2 + lambda2 (|u_i|^2 + |d_j|^2 + |t_k|^2)
/// + lambda3 (a_i^2 + b_j^2 + c_k^2). The penalties sit inside the sum, so
/// frequently observed rows are penalised more often.
double regularized_loss(const TuckerFactors& f, std::span<const Entry> entries, const RegWeights& reg);
double regularized_loss(const TuckerFactors& f, const SparseTensor& tensor,
                        std::span<const std::size_t> positions, const RegWeights& reg);

/// Gradient of one instance's term of regularized_loss with respect to the
/// parameters it touches, with `err` standing in for the instance error.
struct InstanceGradient {
  std::vector<double> dU_row;
  std::vector<double> dD_row;
  std::vector<double> dT_row;
  std::vector<double> dG;
  double da = 0.0;
  double db = 0.0;
  double dc = 0.0;
};

InstanceGradient instance_gradient(const TuckerFactors& f, const EntryIndex& idx, double err,
                                   const RegWeights& reg);

/// Allocation-free form; resizes `out` on first use.
void instance_gradient(const TuckerFactors& f, const EntryIndex& idx, double err, const RegWeights& reg,
                       InstanceGradient& out);

/// Dense |I| x |J| x |K| array, row-major with k fastest.
struct DenseTensor {
  Dims dims;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j, std::size_t k) const { return values[(i * dims.j + j) * dims.k + k]; }
};

inline constexpr std::size_t kDenseCellCap = std::size_t{1} << 24;

/// Full reconstruction G x1 U x2 D x3 T plus mu and biases, computed as
/// successive mode products. Test-scale only: throws ConfigError when the
/// grid exceeds `cell_cap` cells.
DenseTensor reconstruct_dense(const TuckerFactors& f, std::size_t cell_cap = kDenseCellCap);

}  // namespace tuckerpid
