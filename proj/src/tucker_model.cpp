#include "tuckerpid/tucker_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "tuckerpid/errors.hpp"

namespace tuckerpid {

namespace {

void check_index(const TuckerFactors& f, const EntryIndex& idx) {
  if (!in_bounds(f.dims, idx)) {
    std::ostringstream os;
    os << "tucker_model: index (" << idx.i << "," << idx.j << "," << idx.k << ") out of bounds for dims ("
       << f.dims.i << "," << f.dims.j << "," << f.dims.k << ")";
    throw DataError(os.str());
  }
}

void check_ranks(const Ranks& r) {
  if (r.r1 == 0 || r.r2 == 0 || r.r3 == 0) throw ConfigError("tucker_model: ranks must be at least 1");
}

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double multilinear(const TuckerFactors& f, const EntryIndex& idx) {
  const auto u = f.u_row(idx.i);
  const auto d = f.d_row(idx.j);
  const auto t = f.t_row(idx.k);
  const Ranks& r = f.ranks;
  double s = 0.0;
  std::size_t off = 0;
  for (std::size_t m = 0; m < r.r1; ++m) {
    for (std::size_t n = 0; n < r.r2; ++n) {
      const double ud = u[m] * d[n];
      for (std::size_t l = 0; l < r.r3; ++l, ++off) s += f.G[off] * ud * t[l];
    }
  }
  return s;
}

}  // namespace

TuckerFactors TuckerFactors::zeros(Dims dims, Ranks ranks, double mu) {
  if (dims.i == 0 || dims.j == 0 || dims.k == 0) throw ConfigError("tucker_model: dimensions must be positive");
  check_ranks(ranks);
  TuckerFactors f;
  f.dims = dims;
  f.ranks = ranks;
  f.U.assign(dims.i * ranks.r1, 0.0);
  f.D.assign(dims.j * ranks.r2, 0.0);
  f.T.assign(dims.k * ranks.r3, 0.0);
  f.G.assign(ranks.core_size(), 0.0);
  f.a.assign(dims.i, 0.0);
  f.b.assign(dims.j, 0.0);
  f.c.assign(dims.k, 0.0);
  f.mu = mu;
  return f;
}

void TuckerFactors::validate() const {
  check_ranks(ranks);
  const bool shapes_ok = U.size() == dims.i * ranks.r1 && D.size() == dims.j * ranks.r2 &&
                         T.size() == dims.k * ranks.r3 && G.size() == ranks.core_size() &&
                         a.size() == dims.i && b.size() == dims.j && c.size() == dims.k;
  if (!shapes_ok) throw DataError("tucker_model: parameter shapes inconsistent with dims and ranks");
  const auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!std::isfinite(mu) || !finite(U) || !finite(D) || !finite(T) || !finite(G) || !finite(a) || !finite(b) ||
      !finite(c)) {
    throw DataError("tucker_model: non-finite parameter value");
  }
}

TuckerFactors init_factors(Dims dims, Ranks ranks, double mu, double init_scale, std::uint64_t seed) {
  if (!(init_scale > 0.0) || !std::isfinite(init_scale)) {
    throw ConfigError("tucker_model: init_scale must be positive");
  }
  TuckerFactors f = TuckerFactors::zeros(dims, ranks, mu);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // unit() is in [0, 1), so scale * (1 - unit()) lands in (0, scale].
  const auto fill = [&](std::vector<double>& v) {
    for (double& x : v) x = init_scale * (1.0 - unit(rng));
  };
  fill(f.U);
  fill(f.D);
  fill(f.T);
  fill(f.G);
  return f;
}

double predict_unbiased(const TuckerFactors& f, const EntryIndex& idx) {
  check_index(f, idx);
  return multilinear(f, idx);
}

double predict(const TuckerFactors& f, const EntryIndex& idx) {
  check_index(f, idx);
  return f.mu + multilinear(f, idx) + f.a[idx.i] + f.b[idx.j] + f.c[idx.k];
}

double instance_error(const TuckerFactors& f, const EntryIndex& idx, double y) { return y - predict(f, idx); }

double regularized_loss(const TuckerFactors& f, std::span<const Entry> entries, const RegWeights& reg) {
  const double core_sq = squared_norm(f.G);
  double total = 0.0;
  for (const Entry& e : entries) {
    const EntryIndex& idx = e.index;
    const double err = instance_error(f, idx, e.value);
    const double factor_sq = squared_norm(f.u_row(idx.i)) + squared_norm(f.d_row(idx.j)) + squared_norm(f.t_row(idx.k));
    const double bias_sq = f.a[idx.i] * f.a[idx.i] + f.b[idx.j] * f.b[idx.j] + f.c[idx.k] * f.c[idx.k];
    total += err * err + reg.lambda1 * core_sq + reg.lambda2 * factor_sq + reg.lambda3 * bias_sq;
  }
  return 0.5 * total;
}

double regularized_loss(const TuckerFactors& f, const SparseTensor& tensor, std::span<const std::size_t> positions,
                        const RegWeights& reg) {
  std::vector<Entry> subset;
  subset.reserve(positions.size());
  for (std::size_t pos : positions) subset.push_back(tensor[pos]);
  return regularized_loss(f, subset, reg);
}

void instance_gradient(const TuckerFactors& f, const EntryIndex& idx, double err, const RegWeights& reg,
                       InstanceGradient& out) {
  check_index(f, idx);
  const Ranks& r = f.ranks;
  out.dU_row.assign(r.r1, 0.0);
  out.dD_row.assign(r.r2, 0.0);
  out.dT_row.assign(r.r3, 0.0);
  out.dG.resize(r.core_size());

  const auto u = f.u_row(idx.i);
  const auto d = f.d_row(idx.j);
  const auto t = f.t_row(idx.k);

  // Partial contractions of the core with the two other factor rows.
  std::size_t off = 0;
  for (std::size_t m = 0; m < r.r1; ++m) {
    for (std::size_t n = 0; n < r.r2; ++n) {
      const double ud = u[m] * d[n];
      for (std::size_t l = 0; l < r.r3; ++l, ++off) {
        const double g = f.G[off];
        out.dU_row[m] += g * d[n] * t[l];
        out.dD_row[n] += g * u[m] * t[l];
        out.dT_row[l] += g * ud;
        out.dG[off] = reg.lambda1 * g - err * (ud * t[l]);
      }
    }
  }
  for (std::size_t m = 0; m < r.r1; ++m) out.dU_row[m] = reg.lambda2 * u[m] - err * out.dU_row[m];
  for (std::size_t n = 0; n < r.r2; ++n) out.dD_row[n] = reg.lambda2 * d[n] - err * out.dD_row[n];
  for (std::size_t l = 0; l < r.r3; ++l) out.dT_row[l] = reg.lambda2 * t[l] - err * out.dT_row[l];
  out.da = reg.lambda3 * f.a[idx.i] - err;
  out.db = reg.lambda3 * f.b[idx.j] - err;
  out.dc = reg.lambda3 * f.c[idx.k] - err;
}

InstanceGradient instance_gradient(const TuckerFactors& f, const EntryIndex& idx, double err,
                                   const RegWeights& reg) {
  InstanceGradient out;
  instance_gradient(f, idx, err, reg, out);
  return out;
}

DenseTensor reconstruct_dense(const TuckerFactors& f, std::size_t cell_cap) {
  const Dims& dims = f.dims;
  const Ranks& r = f.ranks;
  if (dims.cells() > cell_cap) {
    std::ostringstream os;
    os << "tucker_model: dense reconstruction of " << dims.cells() << " cells exceeds the cap of " << cell_cap;
    throw ConfigError(os.str());
  }

  // Mode-1 product: X1(i,n,l) = sum_m U(i,m) G(m,n,l).
  std::vector<double> x1(dims.i * r.r2 * r.r3, 0.0);
  for (std::size_t i = 0; i < dims.i; ++i)
    for (std::size_t m = 0; m < r.r1; ++m) {
      const double uim = f.U[i * r.r1 + m];
      for (std::size_t nl = 0; nl < r.r2 * r.r3; ++nl) x1[i * r.r2 * r.r3 + nl] += uim * f.G[m * r.r2 * r.r3 + nl];
    }

  // Mode-2 product: X2(i,j,l) = sum_n D(j,n) X1(i,n,l).
  std::vector<double> x2(dims.i * dims.j * r.r3, 0.0);
  for (std::size_t i = 0; i < dims.i; ++i)
    for (std::size_t j = 0; j < dims.j; ++j)
      for (std::size_t n = 0; n < r.r2; ++n) {
        const double djn = f.D[j * r.r2 + n];
        for (std::size_t l = 0; l < r.r3; ++l)
          x2[(i * dims.j + j) * r.r3 + l] += djn * x1[(i * r.r2 + n) * r.r3 + l];
      }

  // Mode-3 product plus the bias terms.
  DenseTensor out{dims, std::vector<double>(dims.cells(), 0.0)};
  for (std::size_t i = 0; i < dims.i; ++i)
    for (std::size_t j = 0; j < dims.j; ++j)
      for (std::size_t k = 0; k < dims.k; ++k) {
        double s = 0.0;
        for (std::size_t l = 0; l < r.r3; ++l) s += f.T[k * r.r3 + l] * x2[(i * dims.j + j) * r.r3 + l];
        out.values[(i * dims.j + j) * dims.k + k] = f.mu + s + f.a[i] + f.b[j] + f.c[k];
      }
  return out;
}

}  // namespace tuckerpid
