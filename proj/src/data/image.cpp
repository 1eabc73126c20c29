#include "hoit/data/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "hoit/errors.hpp"

namespace hoit::data {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Parses "<magic> <w> <h> <maxval>" with '#' comments; returns the offset of
// the first raster byte.
std::size_t parse_header(const std::string& bytes, const std::string& magic,
                         const std::filesystem::path& path, std::size_t& w, std::size_t& h) {
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (next_token() != magic) throw InputError(path.string() + ": not a " + magic + " file");
  try {
    w = std::stoul(next_token());
    h = std::stoul(next_token());
    if (std::stoul(next_token()) != 255) throw InputError(path.string() + ": maxval must be 255");
  } catch (const std::logic_error&) {
    throw InputError(path.string() + ": malformed header");
  }
  return pos + 1;  // single whitespace byte after maxval
}

void write_file(const std::filesystem::path& path, const std::string& header,
                const std::vector<unsigned char>& raster) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << header;
  out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!out) throw InputError("write failed for " + path.string());
}

unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::size_t w = 0, h = 0;
  const std::size_t off = parse_header(bytes, "P6", path, w, h);
  if (bytes.size() < off + w * h * 3) throw InputError(path.string() + ": truncated raster");
  Image img(w, h);
  for (std::size_t i = 0; i < w * h * 3; ++i) {
    img.pixels[i] = static_cast<unsigned char>(bytes[off + i]) / 255.0;
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::vector<unsigned char> raster(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), raster.begin(), quantize);
  write_file(path,
             "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n",
             raster);
}

void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               const std::vector<unsigned char>& gray) {
  if (gray.size() != width * height) throw ShapeError("pgm raster size does not match dimensions");
  write_file(path, "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n",
             gray);
}

std::vector<unsigned char> read_pgm(const std::filesystem::path& path, std::size_t& width,
                                    std::size_t& height) {
  const std::string bytes = read_file(path);
  const std::size_t off = parse_header(bytes, "P5", path, width, height);
  if (bytes.size() < off + width * height) throw InputError(path.string() + ": truncated raster");
  return {bytes.begin() + static_cast<std::ptrdiff_t>(off),
          bytes.begin() + static_cast<std::ptrdiff_t>(off + width * height)};
}

Image resize_bilinear(const Image& src, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw ShapeError("resize target must be non-empty");
  if (width == src.width && height == src.height) return src;
  Image dst(width, height);
  const double sx = static_cast<double>(src.width) / static_cast<double>(width);
  const double sy = static_cast<double>(src.height) / static_cast<double>(height);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(src.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(src.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = src.at(x0, y0, c) * (1 - wx) + src.at(x1, y0, c) * wx;
        const double bottom = src.at(x0, y1, c) * (1 - wx) + src.at(x1, y1, c) * wx;
        dst.at(x, y, c) = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return dst;
}

ad::Tensor to_tensor(const Image& image, double mean, double std) {
  std::vector<double> v(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), v.begin(),
                 [&](double p) { return (p - mean) / std; });
  return ad::Tensor({image.height, image.width, 3}, std::move(v));
}

}  // namespace hoit::data
