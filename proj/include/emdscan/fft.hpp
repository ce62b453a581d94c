#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <mutex>
#include <span>
#include <vector>

namespace emdscan {

// Real <-> half-spectrum transforms of arbitrary length. FFTW planning is not
// thread-safe, so plans are created once per length under a lock and then run
// through the new-array interface, which is.
class RealFft {
 public:
  static std::vector<std::complex<double>> forward(std::span<const double> x) {
    const int n = static_cast<int>(x.size());
    const auto& p = plans(n);
    std::vector<double> in(x.begin(), x.end());
    std::vector<std::complex<double>> out(static_cast<std::size_t>(n / 2 + 1));
    fftw_execute_dft_r2c(p.r2c, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
    return out;
  }

  /// Inverse of forward(), normalised so that inverse(forward(x)) == x.
  static std::vector<double> inverse(std::vector<std::complex<double>> half, std::size_t n) {
    const auto& p = plans(static_cast<int>(n));
    std::vector<double> out(n);
    fftw_execute_dft_c2r(p.c2r, reinterpret_cast<fftw_complex*>(half.data()), out.data());
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& v : out) v *= scale;
    return out;
  }

 private:
  struct Plans {
    fftw_plan r2c = nullptr;
    fftw_plan c2r = nullptr;
  };

  static const Plans& plans(int n) {
    static std::mutex mu;
    static std::map<int, Plans> cache;
    std::lock_guard lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<double> r(static_cast<std::size_t>(n));
    std::vector<std::complex<double>> c(static_cast<std::size_t>(n / 2 + 1));
    auto* cp = reinterpret_cast<fftw_complex*>(c.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    Plans p;
    p.r2c = fftw_plan_dft_r2c_1d(n, r.data(), cp, flags);
    p.c2r = fftw_plan_dft_c2r_1d(n, cp, r.data(), flags);
    return cache.emplace(n, p).first->second;
  }
};

}  // namespace emdscan
