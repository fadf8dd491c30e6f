// SPDX-License-Identifier: Apache-2.0
#include "gsvo/ssim.hpp"

#include <algorithm>
#include <string>

#include "gsvo/error.hpp"

namespace gsvo {

namespace {

// Summed-area table with a zero guard row/column.
class BoxSum {
 public:
  BoxSum(std::span<const double> values, int width, int height)
      : width_(width), table_(static_cast<size_t>(width + 1) * (height + 1), 0.0) {
    for (int y = 0; y < height; ++y) {
      double row = 0.0;
      for (int x = 0; x < width; ++x) {
        row += values[static_cast<size_t>(y) * width + x];
        at(x + 1, y + 1) = at(x + 1, y) + row;
      }
    }
  }

  // Sum over [x0, x1) x [y0, y1).
  double sum(int x0, int y0, int x1, int y1) const {
    return at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0);
  }

 private:
  double at(int x, int y) const { return table_[static_cast<size_t>(y) * (width_ + 1) + x]; }
  double& at(int x, int y) { return table_[static_cast<size_t>(y) * (width_ + 1) + x]; }

  int width_;
  std::vector<double> table_;
};

void check_window(int window) {
  if (window < 1 || window % 2 == 0) {
    throw Error(ErrorCode::kInvalidArgument, "ssim window must be odd and positive, got " +
                                                 std::to_string(window));
  }
}

}  // namespace

int effective_ssim_window(int width, int height, int window) {
  check_window(window);
  int fit = std::min(width, height);
  if (fit % 2 == 0) --fit;
  return std::max(1, std::min(window, fit));
}

SsimGradient ssim_with_gradient(std::span<const double> a, std::span<const double> b, int width,
                                int height, int window) {
  const size_t n_pix = static_cast<size_t>(width) * height;
  if (a.size() != n_pix || b.size() != n_pix) {
    throw Error(ErrorCode::kDimensionMismatch, "ssim inputs differ in size");
  }
  const int win = effective_ssim_window(width, height, window);
  const int nwx = width - win + 1;
  const int nwy = height - win + 1;
  const double inv_n = 1.0 / (static_cast<double>(win) * win);
  const double inv_m = 1.0 / (static_cast<double>(nwx) * nwy);

  std::vector<double> aa(n_pix);
  std::vector<double> bb(n_pix);
  std::vector<double> ab(n_pix);
  for (size_t i = 0; i < n_pix; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const BoxSum sa(a, width, height);
  const BoxSum sb(b, width, height);
  const BoxSum saa(aa, width, height);
  const BoxSum sbb(bb, width, height);
  const BoxSum sab(ab, width, height);

  // Per-window coefficients arranged so identical inputs give an exactly zero gradient.
  const size_t n_win = static_cast<size_t>(nwx) * nwy;
  std::vector<double> k_c(n_win);
  std::vector<double> k_b(n_win);
  std::vector<double> k_a(n_win);
  double total = 0.0;
  for (int wy = 0; wy < nwy; ++wy) {
    for (int wx = 0; wx < nwx; ++wx) {
      const double mu_a = sa.sum(wx, wy, wx + win, wy + win) * inv_n;
      const double mu_b = sb.sum(wx, wy, wx + win, wy + win) * inv_n;
      const double var_a = saa.sum(wx, wy, wx + win, wy + win) * inv_n - mu_a * mu_a;
      const double var_b = sbb.sum(wx, wy, wx + win, wy + win) * inv_n - mu_b * mu_b;
      const double cov_ab = sab.sum(wx, wy, wx + win, wy + win) * inv_n - mu_a * mu_b;
      const double b1 = mu_a * mu_a + mu_b * mu_b + kSsimC1;
      const double b2 = var_a + var_b + kSsimC2;
      const double lum = (2.0 * mu_a * mu_b + kSsimC1) / b1;
      const double cs = (2.0 * cov_ab + kSsimC2) / b2;
      total += lum * cs;

      // dS/da_i = cs dlum/dmu_a / n + q [(b_i - mu_b) - cs (a_i - mu_a)]
      const double dlum_dmu = 2.0 * (mu_b - mu_a * lum) / b1;
      const double q = 2.0 * lum / b2 * inv_n * inv_m;
      const double r = q * cs;
      const size_t w = static_cast<size_t>(wy) * nwx + wx;
      k_c[w] = cs * dlum_dmu * inv_n * inv_m - (q * mu_b - r * mu_a);
      k_b[w] = q;
      k_a[w] = r;
    }
  }

  SsimGradient out;
  out.value = total / static_cast<double>(n_win);
  out.d_first.resize(n_pix);
  const BoxSum kc(k_c, nwx, nwy);
  const BoxSum kb(k_b, nwx, nwy);
  const BoxSum ka(k_a, nwx, nwy);
  for (int y = 0; y < height; ++y) {
    const int wy0 = std::max(0, y - win + 1);
    const int wy1 = std::min(y, nwy - 1) + 1;
    for (int x = 0; x < width; ++x) {
      const int wx0 = std::max(0, x - win + 1);
      const int wx1 = std::min(x, nwx - 1) + 1;
      const size_t i = static_cast<size_t>(y) * width + x;
      if (wx0 >= wx1 || wy0 >= wy1) {
        out.d_first[i] = 0.0;
        continue;
      }
      out.d_first[i] = kc.sum(wx0, wy0, wx1, wy1) + b[i] * kb.sum(wx0, wy0, wx1, wy1) -
                       a[i] * ka.sum(wx0, wy0, wx1, wy1);
    }
  }
  return out;
}

double ssim(const GrayImage& a, const GrayImage& b, int window) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorCode::kDimensionMismatch, "ssim images differ in size");
  }
  return ssim_with_gradient(a.data(), b.data(), a.width(), a.height(), window).value;
}

double ssim(const RgbImage& a, const RgbImage& b, int window) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorCode::kDimensionMismatch, "ssim images differ in size");
  }
  double sum = 0.0;
  for (int c = 0; c < 3; ++c) sum += ssim(a.channel(c), b.channel(c), window);
  return sum / 3.0;
}

}  // namespace gsvo
