#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "jersey/error.hpp"
#include "jersey/imaging.hpp"

namespace jersey::localization {

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double confidence = 1.0;
};

struct TorsoKeypoints {
  Keypoint left_shoulder;
  Keypoint right_shoulder;
  Keypoint left_hip;
  Keypoint right_hip;

  std::array<std::pair<const char*, const Keypoint*>, 4> named() const {
    return {{{"left_shoulder", &left_shoulder},
             {"right_shoulder", &right_shoulder},
             {"left_hip", &left_hip},
             {"right_hip", &right_hip}}};
  }

  void validate() const {
    for (const auto& [name, kp] : named()) {
      if (!std::isfinite(kp->x) || !std::isfinite(kp->y) || kp->x < 0.0 || kp->y < 0.0) {
        throw Error(Errc::InvalidArgument, std::string(name) + " coordinates must be finite and >= 0");
      }
      if (!(kp->confidence >= 0.0 && kp->confidence <= 1.0)) {
        throw Error(Errc::InvalidArgument, std::string(name) + " confidence must be in [0, 1]");
      }
    }
  }
};

struct BBox {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct ImageDims {
  int width = 0;
  int height = 0;
};

/// Axis-aligned box around the four torso points.
inline BBox torso_box(const TorsoKeypoints& kp, double min_confidence = 0.5) {
  kp.validate();
  std::string failing;
  for (const auto& [name, p] : kp.named()) {
    if (p->confidence < min_confidence) failing += (failing.empty() ? "" : ", ") + std::string(name);
  }
  if (!failing.empty()) throw Error(Errc::LowConfidence, "below " + std::to_string(min_confidence) + ": " + failing);
  BBox b{kp.left_shoulder.x, kp.left_shoulder.y, kp.left_shoulder.x, kp.left_shoulder.y};
  for (const auto& [name, p] : kp.named()) {
    b.x0 = std::min(b.x0, p->x);
    b.y0 = std::min(b.y0, p->y);
    b.x1 = std::max(b.x1, p->x);
    b.y1 = std::max(b.y1, p->y);
  }
  if (!(b.x0 < b.x1) || !(b.y0 < b.y1)) throw Error(Errc::DegenerateBox, "torso keypoints span zero width or height");
  return b;
}

/// Grows width and height by `factor` in total (factor / 2 on each side)
/// around the center, then clamps to the image.
inline BBox expand_box(const BBox& b, double factor, ImageDims bounds) {
  if (factor < 0.0) throw Error(Errc::InvalidArgument, "expansion factor must be >= 0");
  const double dx = 0.5 * factor * b.width();
  const double dy = 0.5 * factor * b.height();
  return {std::max(0.0, b.x0 - dx), std::max(0.0, b.y0 - dy), std::min(static_cast<double>(bounds.width), b.x1 + dx),
          std::min(static_cast<double>(bounds.height), b.y1 + dy)};
}

/// Integer pixel rectangle covered by a clamped box (edges rounded to the
/// nearest pixel boundary).
struct PixelRect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

inline PixelRect to_pixels(const BBox& b, ImageDims bounds) {
  const int x0 = std::clamp(static_cast<int>(std::lround(b.x0)), 0, bounds.width);
  const int y0 = std::clamp(static_cast<int>(std::lround(b.y0)), 0, bounds.height);
  const int x1 = std::clamp(static_cast<int>(std::lround(b.x1)), 0, bounds.width);
  const int y1 = std::clamp(static_cast<int>(std::lround(b.y1)), 0, bounds.height);
  if (x1 <= x0 || y1 <= y0) throw Error(Errc::DegenerateBox, "expanded box rounds to an empty pixel rectangle");
  return {x0, y0, x1 - x0, y1 - y0};
}

inline Image crop_torso(const Image& player, const TorsoKeypoints& kp, double factor = 0.6,
                        double min_confidence = 0.5) {
  const ImageDims dims{player.width(), player.height()};
  const BBox box = expand_box(torso_box(kp, min_confidence), factor, dims);
  const PixelRect r = to_pixels(box, dims);
  return crop(player, r.x, r.y, r.width, r.height);
}

// ---------------------------------------------------------------------------
// Keypoint file ingestion (JSON lines)

struct KeypointRecord {
  std::string image;  // relative to the images directory
  TorsoKeypoints keypoints;
};

struct IngestedCrop {
  std::string image;
  Image player;
  TorsoKeypoints keypoints;
};

struct IngestWarning {
  std::size_t line = 0;
  std::string message;
};

inline KeypointRecord parse_keypoint_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  KeypointRecord rec;
  rec.image = j.at("image").get<std::string>();
  const auto& kps = j.at("keypoints");
  auto read = [&](const char* name, Keypoint& out) {
    const auto& v = kps.at(name);
    if (!v.is_array() || v.size() != 3) throw std::invalid_argument(std::string(name) + " must be [x, y, confidence]");
    out = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
  };
  read("left_shoulder", rec.keypoints.left_shoulder);
  read("right_shoulder", rec.keypoints.right_shoulder);
  read("left_hip", rec.keypoints.left_hip);
  read("right_hip", rec.keypoints.right_hip);
  rec.keypoints.validate();
  return rec;
}

/// Reads the keypoint file in order. Lines that fail the schema are skipped
/// and reported through `warnings`; a referenced image that does not exist
/// raises MissingImage.
inline std::vector<IngestedCrop> ingest_keypoints(const std::filesystem::path& file,
                                                  const std::filesystem::path& images_dir,
                                                  std::vector<IngestWarning>* warnings = nullptr,
                                                  PngOptions png = {}) {
  std::ifstream is(file);
  if (!is) throw Error(Errc::FileNotFound, file.string());
  std::vector<IngestedCrop> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    KeypointRecord rec;
    try {
      rec = parse_keypoint_line(line);
    } catch (const std::exception& e) {
      if (warnings) warnings->push_back({line_no, e.what()});
      continue;
    }
    const auto path = images_dir / rec.image;
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
      throw Error(Errc::MissingImage, "line " + std::to_string(line_no) + ": " + path.string());
    }
    out.push_back({rec.image, load_png(path, png), rec.keypoints});
  }
  return out;
}

}  // namespace jersey::localization
