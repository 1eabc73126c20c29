#include "hoit/model/positional.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "hoit/errors.hpp"

namespace hoit::model {

namespace {
constexpr double kTemperature = 10000.0;
}

ad::Tensor positional_encoding(std::size_t height, std::size_t width, std::size_t d) {
  if (d == 0 || d % 4 != 0) {
    throw ConfigError("positional encoding needs d divisible by 4, got " + std::to_string(d));
  }
  const std::size_t half = d / 2;
  std::vector<double> inv_freq(half);
  for (std::size_t j = 0; j < half; ++j) {
    inv_freq[j] = 1.0 / std::pow(kTemperature, static_cast<double>(2 * (j / 2)) /
                                                   static_cast<double>(half));
  }
  auto fill = [&](double* out, double pos) {
    for (std::size_t j = 0; j < half; ++j) {
      const double a = pos * inv_freq[j];
      out[j] = (j % 2 == 0) ? std::sin(a) : std::cos(a);
    }
  };
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<double> v(height * width * d);
  for (std::size_t r = 0; r < height; ++r) {
    const double py = static_cast<double>(r + 1) / static_cast<double>(height) * two_pi;
    for (std::size_t c = 0; c < width; ++c) {
      const double px = static_cast<double>(c + 1) / static_cast<double>(width) * two_pi;
      double* row = v.data() + (r * width + c) * d;
      fill(row, py);
      fill(row + half, px);
    }
  }
  return ad::Tensor({height * width, d}, std::move(v));
}

}  // namespace hoit::model
