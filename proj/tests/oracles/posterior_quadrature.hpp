#pragma once

// Numeric-integration reference for the Gaussian-beta measurement update.
// The joint posterior over (depth z, inlier ratio pi),
//
//   post(z, pi) ~ [pi N(d | z, r^2) + (1 - pi) U] * N(z | mu, sigma^2) * Beta(pi | a, b),
//
// is integrated with a tensor-product trapezoid rule on an nz x npi grid.
// moments() accumulates the grid sum through its separable factors (the same
// grid values, orders of magnitude faster); moments_naive() is the literal
// double loop used to validate that factorization on small grids.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "monodense/depth_filter.hpp"

namespace monodense::testing {

struct PosteriorMoments {
  double mean_z = 0.0;
  double var_z = 0.0;
  double mean_pi = 0.0;
};

class PosteriorQuadrature {
 public:
  explicit PosteriorQuadrature(int nz = 2000, int npi = 2000) : nz_(nz), npi_(npi) {
    if (nz_ < 16 || npi_ < 16) throw std::invalid_argument("quadrature grid too coarse");
  }

  PosteriorMoments moments(const Hypothesis& prior, double d, const MeasurementModel& model) const {
    Grid g = make_grid(prior, d, model);

    // pi-axis sums against the Beta kernel
    double s_pi = 0.0, s_pi1 = 0.0, s_pi2 = 0.0, s_1mpi = 0.0, s_pi_1mpi = 0.0;
    for (int j = 0; j < npi_; ++j) {
      const double w = g.wpi[j] * g.beta[j];
      s_pi += w * g.pi[j];
      s_pi2 += w * g.pi[j] * g.pi[j];
      s_1mpi += w * (1.0 - g.pi[j]);
      s_pi_1mpi += w * g.pi[j] * (1.0 - g.pi[j]);
      s_pi1 += w;
    }
    (void)s_pi1;

    // z-axis sums: against likelihood * prior and against the prior alone
    double c0 = 0.0, c1 = 0.0, d0 = 0.0, d1 = 0.0;
    for (int i = 0; i < nz_; ++i) {
      const double wi = g.wz[i];
      const double nn = g.gauss_like[i] * g.gauss_prior[i];
      c0 += wi * nn;
      c1 += wi * g.z[i] * nn;
      d0 += wi * g.gauss_prior[i];
      d1 += wi * g.z[i] * g.gauss_prior[i];
    }

    const double u = 1.0 / (model.z_max - model.z_min);
    const double norm = s_pi * c0 + s_1mpi * u * d0;
    if (!(norm > 0.0)) throw std::runtime_error("quadrature: vanishing posterior mass");

    PosteriorMoments m;
    m.mean_z = (s_pi * c1 + s_1mpi * u * d1) / norm;
    m.mean_pi = (s_pi2 * c0 + s_pi_1mpi * u * d0) / norm;

    double c2c = 0.0, d2c = 0.0;
    for (int i = 0; i < nz_; ++i) {
      const double dz = g.z[i] - m.mean_z;
      c2c += g.wz[i] * dz * dz * g.gauss_like[i] * g.gauss_prior[i];
      d2c += g.wz[i] * dz * dz * g.gauss_prior[i];
    }
    m.var_z = (s_pi * c2c + s_1mpi * u * d2c) / norm;
    return m;
  }

  PosteriorMoments moments_naive(const Hypothesis& prior, double d, const MeasurementModel& model) const {
    Grid g = make_grid(prior, d, model);
    const double u = 1.0 / (model.z_max - model.z_min);

    double norm = 0.0, ez = 0.0, epi = 0.0;
    for (int i = 0; i < nz_; ++i) {
      for (int j = 0; j < npi_; ++j) {
        const double mix = g.pi[j] * g.gauss_like[i] + (1.0 - g.pi[j]) * u;
        const double f = g.wz[i] * g.wpi[j] * mix * g.gauss_prior[i] * g.beta[j];
        norm += f;
        ez += f * g.z[i];
        epi += f * g.pi[j];
      }
    }
    if (!(norm > 0.0)) throw std::runtime_error("quadrature: vanishing posterior mass");
    PosteriorMoments m;
    m.mean_z = ez / norm;
    m.mean_pi = epi / norm;
    double var = 0.0;
    for (int i = 0; i < nz_; ++i) {
      for (int j = 0; j < npi_; ++j) {
        const double mix = g.pi[j] * g.gauss_like[i] + (1.0 - g.pi[j]) * u;
        const double f = g.wz[i] * g.wpi[j] * mix * g.gauss_prior[i] * g.beta[j];
        const double dz = g.z[i] - m.mean_z;
        var += f * dz * dz;
      }
    }
    m.var_z = var / norm;
    return m;
  }

 private:
  struct Grid {
    std::vector<double> z, wz, gauss_like, gauss_prior;
    std::vector<double> pi, wpi, beta;
  };

  Grid make_grid(const Hypothesis& prior, double d, const MeasurementModel& model) const {
    const double sigma = std::sqrt(prior.sigma2);
    const double r = std::sqrt(model.variance_at(d));
    const double z_lo = std::min(prior.mu - 12.0 * sigma, d - 12.0 * r);
    const double z_hi = std::max(prior.mu + 12.0 * sigma, d + 12.0 * r);

    Grid g;
    g.z.resize(nz_);
    g.wz.resize(nz_);
    g.gauss_like.resize(nz_);
    g.gauss_prior.resize(nz_);
    const double hz = (z_hi - z_lo) / (nz_ - 1);
    for (int i = 0; i < nz_; ++i) {
      g.z[i] = z_lo + hz * i;
      g.wz[i] = (i == 0 || i == nz_ - 1) ? hz / 2.0 : hz;
      g.gauss_like[i] = detail::normal_pdf(d, g.z[i], model.variance_at(d));
      g.gauss_prior[i] = detail::normal_pdf(g.z[i], prior.mu, prior.sigma2);
    }

    g.pi.resize(npi_);
    g.wpi.resize(npi_);
    g.beta.resize(npi_);
    const double hp = 1.0 / (npi_ - 1);
    for (int j = 0; j < npi_; ++j) {
      g.pi[j] = hp * j;
      g.wpi[j] = (j == 0 || j == npi_ - 1) ? hp / 2.0 : hp;
      // unnormalized Beta(a, b) kernel; the constant cancels in every ratio
      const double p = g.pi[j];
      g.beta[j] = (p <= 0.0 || p >= 1.0) ? boundary_beta(p, prior.a, prior.b)
                                         : std::exp((prior.a - 1.0) * std::log(p) + (prior.b - 1.0) * std::log1p(-p));
    }
    return g;
  }

  static double boundary_beta(double p, double a, double b) {
    if (p <= 0.0) return a > 1.0 ? 0.0 : (a == 1.0 ? 1.0 : 0.0);
    return b > 1.0 ? 0.0 : (b == 1.0 ? 1.0 : 0.0);
  }

  int nz_;
  int npi_;
};

}  // namespace monodense::testing
