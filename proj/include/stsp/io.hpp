#pragma once

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stsp/buffers.hpp"
#include "stsp/errors.hpp"
#include "stsp/geometry.hpp"

namespace stsp {

static_assert(std::endian::native == std::endian::little,
              "stsp file formats are little-endian; big-endian hosts unsupported");

namespace detail {

inline std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path);
  return f;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  return f;
}

// Next PNM header token, skipping whitespace and '#' comments.
inline std::string pnm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {}
      continue;
    }
    if (!std::isspace(ch)) {
      tok.push_back(static_cast<char>(ch));
      break;
    }
  }
  while ((ch = in.get()) != EOF && !std::isspace(ch)) tok.push_back(static_cast<char>(ch));
  if (tok.empty()) throw IoError("truncated PNM header");
  return tok;
}

inline int pnm_int(std::istream& in) {
  const std::string tok = pnm_token(in);
  try {
    return std::stoi(tok);
  } catch (...) {
    throw IoError("bad PNM header field: " + tok);
  }
}

}  // namespace detail

// ---- PPM (P6 color / P5 gray), 8-bit, values mapped linearly to [0,1] ----

inline void write_ppm(const std::string& path, const ImageBuffer& img) {
  auto f = detail::open_out(path);
  f << (img.channels() == 3 ? "P6" : "P5") << "\n"
    << img.width() << " " << img.height() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width()) * img.channels());
  for (int i = 0; i < img.height(); ++i) {
    for (int j = 0; j < img.width(); ++j)
      for (int k = 0; k < img.channels(); ++k)
        row[static_cast<std::size_t>(j) * img.channels() + k] =
            static_cast<unsigned char>(std::lround(img(i, j, k) * 255.0f));
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw IoError("short write: " + path);
}

inline ImageBuffer read_ppm_stream(std::istream& f, const std::string& path) {
  const std::string magic = detail::pnm_token(f);
  int channels;
  if (magic == "P6") channels = 3;
  else if (magic == "P5") channels = 1;
  else throw IoError("not a P6/P5 PNM file: " + path);
  const int w = detail::pnm_int(f);
  const int h = detail::pnm_int(f);
  const int maxval = detail::pnm_int(f);
  if (maxval != 255) throw IoError("only 8-bit PNM supported: " + path);
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * channels);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (f.gcount() != static_cast<std::streamsize>(raw.size()))
    throw IoError("truncated PNM payload: " + path);
  std::vector<float> data(raw.size());
  for (std::size_t n = 0; n < raw.size(); ++n) data[n] = static_cast<float>(raw[n]) / 255.0f;
  return ImageBuffer(h, w, channels, std::move(data));
}

inline ImageBuffer read_ppm(const std::string& path) {
  auto f = detail::open_in(path);
  return read_ppm_stream(f, path);
}

// ---- PFM (Pf grayscale, negative scale = little-endian, rows bottom-up) ----

inline void write_pfm(const std::string& path, const DisparityMap& d) {
  auto f = detail::open_out(path);
  f << "Pf\n" << d.width() << " " << d.height() << "\n-1.0\n";
  for (int i = d.height() - 1; i >= 0; --i)
    f.write(reinterpret_cast<const char*>(&d.data()[static_cast<std::size_t>(i) * d.width()]),
            static_cast<std::streamsize>(sizeof(float)) * d.width());
  if (!f) throw IoError("short write: " + path);
}

inline DisparityMap read_pfm_stream(std::istream& f, const std::string& path) {
  const std::string magic = detail::pnm_token(f);
  if (magic != "Pf") throw IoError("not a grayscale Pf PFM file: " + path);
  const int w = detail::pnm_int(f);
  const int h = detail::pnm_int(f);
  const std::string scale_tok = detail::pnm_token(f);
  double scale = 0;
  try {
    scale = std::stod(scale_tok);
  } catch (...) {
    throw IoError("bad PFM scale: " + path);
  }
  if (scale >= 0) throw IoError("big-endian PFM unsupported: " + path);
  std::vector<float> data(static_cast<std::size_t>(w) * h);
  for (int i = h - 1; i >= 0; --i) {
    f.read(reinterpret_cast<char*>(&data[static_cast<std::size_t>(i) * w]),
           static_cast<std::streamsize>(sizeof(float)) * w);
    if (f.gcount() != static_cast<std::streamsize>(sizeof(float)) * w)
      throw IoError("truncated PFM payload: " + path);
  }
  return DisparityMap(h, w, std::move(data));
}

inline DisparityMap read_pfm(const std::string& path) {
  auto f = detail::open_in(path);
  return read_pfm_stream(f, path);
}

// ---- STSP raw tensor: "STSP", u32 version=1, u32 dims=3, u32 (c,h,w), f32 data ----

inline void write_stsp(const std::string& path, const Tensor& t) {
  auto f = detail::open_out(path);
  f.write("STSP", 4);
  const std::uint32_t header[5] = {1u, 3u, static_cast<std::uint32_t>(t.channels()),
                                   static_cast<std::uint32_t>(t.height()),
                                   static_cast<std::uint32_t>(t.width())};
  f.write(reinterpret_cast<const char*>(header), sizeof(header));
  f.write(reinterpret_cast<const char*>(t.data().data()),
          static_cast<std::streamsize>(sizeof(float) * t.size()));
  if (!f) throw IoError("short write: " + path);
}

inline Tensor read_stsp_stream(std::istream& f, const std::string& path) {
  char magic[4];
  f.read(magic, 4);
  if (f.gcount() != 4 || std::memcmp(magic, "STSP", 4) != 0)
    throw IoError("not an STSP tensor file: " + path);
  std::uint32_t header[4];
  f.read(reinterpret_cast<char*>(header), sizeof(header));
  if (f.gcount() != sizeof(header)) throw IoError("truncated STSP header: " + path);
  if (header[0] != 1) throw IoError("unsupported STSP version: " + path);
  if (header[1] != 3) throw IoError("STSP dims must be 3: " + path);
  std::uint32_t w = 0;
  f.read(reinterpret_cast<char*>(&w), sizeof(w));
  if (f.gcount() != sizeof(w)) throw IoError("truncated STSP header: " + path);
  const std::uint32_t c = header[2], h = header[3];
  if (c == 0 || h == 0 || w == 0) throw IoError("degenerate STSP shape: " + path);
  std::vector<float> data(static_cast<std::size_t>(c) * h * w);
  f.read(reinterpret_cast<char*>(data.data()),
         static_cast<std::streamsize>(sizeof(float) * data.size()));
  if (f.gcount() != static_cast<std::streamsize>(sizeof(float) * data.size()))
    throw IoError("truncated STSP payload: " + path);
  return Tensor(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w), std::move(data));
}

inline Tensor read_stsp(const std::string& path) {
  auto f = detail::open_in(path);
  return read_stsp_stream(f, path);
}

// ---- content-sniffing loaders: STSP tensors are accepted anywhere ----

inline std::string sniff_magic(const std::string& path) {
  auto f = detail::open_in(path);
  char buf[4] = {0, 0, 0, 0};
  f.read(buf, 4);
  return std::string(buf, buf + f.gcount());
}

inline ImageBuffer load_image(const std::string& path) {
  const std::string m = sniff_magic(path);
  if (m.rfind("STSP", 0) == 0) return to_image(read_stsp(path));
  if (m.rfind("P6", 0) == 0 || m.rfind("P5", 0) == 0) return read_ppm(path);
  throw IoError("unrecognized image format (want PPM or STSP): " + path);
}

inline DisparityMap load_disparity(const std::string& path) {
  const std::string m = sniff_magic(path);
  if (m.rfind("STSP", 0) == 0) {
    Tensor t = read_stsp(path);
    if (t.channels() != 1) throw IoError("disparity tensor must have 1 channel: " + path);
    return DisparityMap(t.height(), t.width(), t.data());
  }
  if (m.rfind("Pf", 0) == 0) return read_pfm(path);
  throw IoError("unrecognized disparity format (want PFM or STSP): " + path);
}

inline Tensor to_tensor(const ValidityMask& m) {
  Tensor t(1, m.height(), m.width());
  for (int i = 0; i < m.height(); ++i)
    for (int j = 0; j < m.width(); ++j) t.at(0, i, j) = m(i, j) ? 1.0f : 0.0f;
  return t;
}

inline ValidityMask load_mask(const std::string& path) {
  Tensor t = read_stsp(path);
  if (t.channels() != 1) throw IoError("mask tensor must have 1 channel: " + path);
  ValidityMask m(t.height(), t.width());
  for (int i = 0; i < t.height(); ++i)
    for (int j = 0; j < t.width(); ++j) m.set(i, j, t(0, i, j) != 0.0f);
  return m;
}

// ---- plain-text key=value camera files ----

struct CameraFile {
  Camera camera;
  std::optional<double> baseline_m;
};

inline CameraFile read_camera(const std::string& path) {
  auto f = detail::open_in(path);
  std::string line;
  std::map<std::string, double> kv;
  while (std::getline(f, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string item;
    while (ls >> item) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw IoError("camera file: expected key=value, got '" + item + "'");
      const std::string key = item.substr(0, eq);
      try {
        kv[key] = std::stod(item.substr(eq + 1));
      } catch (...) {
        throw IoError("camera file: bad numeric value in '" + item + "'");
      }
    }
  }
  auto need = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw IoError("camera file: missing key '" + key + "': " + path);
    return it->second;
  };
  CameraFile out;
  out.camera.intrinsics.fx = need("fx");
  out.camera.intrinsics.fy = need("fy");
  out.camera.intrinsics.cx = need("cx");
  out.camera.intrinsics.cy = need("cy");
  out.camera.intrinsics.width = static_cast<int>(need("width"));
  out.camera.intrinsics.height = static_cast<int>(need("height"));
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      out.camera.pose.rotation(r, c) = need("r" + std::to_string(r) + std::to_string(c));
  out.camera.pose.translation = Vec3(need("tx"), need("ty"), need("tz"));
  if (kv.count("baseline_m")) out.baseline_m = kv["baseline_m"];
  out.camera.intrinsics.validate();
  out.camera.pose.validate();
  return out;
}

inline void write_camera(const std::string& path, const Camera& cam,
                         std::optional<double> baseline_m = std::nullopt) {
  auto f = detail::open_out(path);
  f.precision(17);
  f << "fx=" << cam.intrinsics.fx << "\nfy=" << cam.intrinsics.fy << "\ncx=" << cam.intrinsics.cx
    << "\ncy=" << cam.intrinsics.cy << "\nwidth=" << cam.intrinsics.width
    << "\nheight=" << cam.intrinsics.height << "\n";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      f << "r" << r << c << "=" << cam.pose.rotation(r, c) << (c == 2 ? "\n" : " ");
  f << "tx=" << cam.pose.translation.x() << " ty=" << cam.pose.translation.y()
    << " tz=" << cam.pose.translation.z() << "\n";
  if (baseline_m) f << "baseline_m=" << *baseline_m << "\n";
  if (!f) throw IoError("short write: " + path);
}

}  // namespace stsp
