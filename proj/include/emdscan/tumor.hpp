#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "emdscan/fft.hpp"
#include "emdscan/signal.hpp"

namespace emdscan {

inline constexpr double kSpeedOfLight = 2.99792458e8;  // m/s
inline constexpr double kEps0 = 8.854e-12;             // F/m

/// Single-pole Debye dispersion with static conductivity.
struct DebyeParams {
  double eps_inf = 5.0;
  double delta_eps = 5.0;
  double tau = 10e-12;   // s
  double sigma_s = 0.4;  // S/m

  void validate() const {
    if (!(eps_inf >= 1.0)) throw std::invalid_argument("eps_inf must be >= 1");
    if (!(delta_eps >= 0.0)) throw std::invalid_argument("delta_eps must be >= 0");
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
    if (!(sigma_s >= 0.0)) throw std::invalid_argument("sigma_s must be >= 0");
  }

  bool operator==(const DebyeParams&) const = default;
};

/// eps(w) = eps_inf + delta_eps / (1 + j w tau) + sigma_s / (j w eps0)
inline std::complex<double> debye(const DebyeParams& p, double omega) {
  if (!(omega > 0.0)) throw std::invalid_argument("debye: omega must be > 0");
  using namespace std::complex_literals;
  return p.eps_inf + p.delta_eps / (1.0 + 1i * omega * p.tau) + p.sigma_s / (1i * omega * kEps0);
}

/// k = sqrt(eps) w / c on the principal branch. For Im(eps) <= 0 this gives Im(k) <= 0,
/// so exp(-j k d) decays for d >= 0.
inline std::complex<double> wavenumber(std::complex<double> eps, double omega) {
  if (omega < 0.0) throw std::invalid_argument("wavenumber: omega must be >= 0");
  return std::sqrt(eps) * (omega / kSpeedOfLight);
}

/// Hemispherical breast (flat face at z = 0, dome at z < 0) inside a bowl of antennas.
struct Geometry {
  double breast_radius = 0.07;
  std::array<Vec3, kNumAntennas> antennas{};
  double eps_im = 3.0;

  const Vec3& antenna(int one_based) const { return antennas.at(static_cast<std::size_t>(one_based - 1)); }

  bool inside(const Vec3& p) const { return p[2] < 0.0 && std::hypot(p[0], p[1], p[2]) < breast_radius; }

  void validate() const {
    if (!(breast_radius > 0.0)) throw std::invalid_argument("breast radius must be positive");
    if (!(eps_im >= 1.0)) throw std::invalid_argument("eps_im must be >= 1");
    for (std::size_t i = 0; i < antennas.size(); ++i) {
      if (inside(antennas[i])) throw std::invalid_argument("antenna inside the breast");
      for (std::size_t j = 0; j < i; ++j)
        if (antennas[i] == antennas[j]) throw std::invalid_argument("antenna positions must be distinct");
    }
  }
};

/// Two rings of 8 antennas at the given depths on a bowl of radius breast_radius + standoff;
/// the lower ring is rotated by half a step.
inline Geometry make_geometry(double breast_radius = 0.07, double standoff = 0.01, double ring1_z = -0.01,
                              double ring2_z = -0.04, double eps_im = 3.0) {
  Geometry g;
  g.breast_radius = breast_radius;
  g.eps_im = eps_im;
  const double bowl = breast_radius + standoff;
  const double zs[2] = {ring1_z, ring2_z};
  for (int ring = 0; ring < 2; ++ring) {
    const double rho = std::sqrt(std::max(0.0, bowl * bowl - zs[ring] * zs[ring]));
    for (int k = 0; k < 8; ++k) {
      const double phi = (k + 0.5 * ring) * std::numbers::pi / 4.0;
      g.antennas[static_cast<std::size_t>(ring * 8 + k)] = {rho * std::cos(phi), rho * std::sin(phi), zs[ring]};
    }
  }
  g.validate();
  return g;
}

inline double distance(const Vec3& a, const Vec3& b) { return std::hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]); }

struct LegSplit {
  double immersion = 0.0;
  double breast = 0.0;
};

/// Splits the straight segment a->b into the part inside the hemisphere and the rest.
inline LegSplit split_leg(const Vec3& a, const Vec3& b, double radius) {
  const Vec3 d{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  const double len = std::hypot(d[0], d[1], d[2]);
  if (len == 0.0) return {};
  double lo = 0.0, hi = 1.0;
  // |a + t d|^2 <= R^2
  const double qa = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
  const double qb = 2.0 * (a[0] * d[0] + a[1] * d[1] + a[2] * d[2]);
  const double qc = a[0] * a[0] + a[1] * a[1] + a[2] * a[2] - radius * radius;
  const double disc = qb * qb - 4.0 * qa * qc;
  if (disc <= 0.0) return {len, 0.0};
  const double sq = std::sqrt(disc);
  lo = std::max(lo, (-qb - sq) / (2.0 * qa));
  hi = std::min(hi, (-qb + sq) / (2.0 * qa));
  // a_z + t d_z <= 0
  constexpr double kFlat = 1e-15;
  if (std::abs(d[2]) <= kFlat) {
    if (a[2] > kFlat) return {len, 0.0};
  } else if (d[2] > 0.0) {
    hi = std::min(hi, -a[2] / d[2]);
  } else {
    lo = std::max(lo, -a[2] / d[2]);
  }
  const double inside = std::max(0.0, hi - lo) * len;
  return {len - inside, inside};
}

struct PathLengths {
  double d_im_t = 0.0;  // via the tumour, immersion medium
  double d_br_t = 0.0;  // via the tumour, breast tissue
  double d_im_d = 0.0;  // direct, immersion medium
  double d_br_d = 0.0;  // direct, breast tissue
};

inline PathLengths path_lengths(const Geometry& g, const AntennaPairId& pair, const Vec3& p0) {
  if (!pair.valid()) throw std::invalid_argument("invalid antenna pair " + pair.str());
  if (!g.inside(p0)) throw std::invalid_argument("tumour position lies outside the breast");
  const Vec3& tx = g.antenna(pair.tx);
  const Vec3& rx = g.antenna(pair.rx);
  const auto a = split_leg(tx, p0, g.breast_radius);
  const auto b = split_leg(p0, rx, g.breast_radius);
  const auto d = split_leg(tx, rx, g.breast_radius);
  return {a.immersion + b.immersion, a.breast + b.breast, d.immersion, d.breast};
}

/// Half-spectrum (bins 0..N/2) of the transfer factor Gamma * exp(-j(k_im dd_im + k_br dd_br)).
/// The DC bin uses the w -> 0 limit, where both phase terms vanish.
inline std::vector<std::complex<double>> response_factor(std::size_t n, double dt, const PathLengths& pl, double eps_im,
                                                         double gamma, const DebyeParams& breast) {
  using namespace std::complex_literals;
  std::vector<std::complex<double>> h(n / 2 + 1);
  const double dd_im = pl.d_im_t - pl.d_im_d;
  const double dd_br = pl.d_br_t - pl.d_br_d;
  h[0] = gamma;
  for (std::size_t k = 1; k < h.size(); ++k) {
    const double omega = 2.0 * std::numbers::pi * static_cast<double>(k) / (static_cast<double>(n) * dt);
    const auto k_im = wavenumber(eps_im, omega);
    const auto k_br = wavenumber(debye(breast, omega), omega);
    h[k] = gamma * std::exp(-1i * (k_im * dd_im + k_br * dd_br));
  }
  return h;
}

/// The tumour response alone (same length as x). The Nyquist bin of an even-length
/// record is kept real so the output is real.
inline std::vector<double> tumour_response(const TimeSeries& x, const Geometry& g, const AntennaPairId& pair,
                                           const Vec3& p0, double gamma, const DebyeParams& breast) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
  breast.validate();
  const auto pl = path_lengths(g, pair, p0);
  auto spec = RealFft::forward(x.view());
  const auto h = response_factor(x.size(), x.dt, pl, g.eps_im, gamma, breast);
  for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= h[k];
  if (x.size() % 2 == 0) spec.back() = spec.back().real();
  return RealFft::inverse(std::move(spec), x.size());
}

/// x' = x + response: the measurement with a simulated tumour reflection added.
inline TimeSeries inject(const TimeSeries& x, const Geometry& g, const AntennaPairId& pair, const Vec3& p0,
                         double gamma, const DebyeParams& breast) {
  x.validate();
  TimeSeries out = x;
  if (gamma == 0.0) return out;
  const auto r = tumour_response(x, g, pair, p0, gamma, breast);
  for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += r[i];
  return out;
}

}  // namespace emdscan
