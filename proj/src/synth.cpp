#include "paln/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "paln/check.hpp"
#include "paln/rng.hpp"

namespace paln {
namespace {

// 1/8-pixel grid keeps all box arithmetic (including S - x) exact.
double quantize8(double v) { return std::round(v * 8.0) / 8.0; }

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

DomainParams source_domain_params() { return DomainParams{}; }

DomainParams target_domain_params(double shift) {
  PALN_CHECK(shift >= 0.0, "domain shift must be non-negative, got ", shift);
  DomainParams p = source_domain_params();
  // A different sensor: compressed response, brighter floor, more pixel
  // noise. The scene content distribution stays identical.
  const std::array<double, 3> gain = {0.30, 0.26, 0.33};
  const std::array<double, 3> offset = {0.50, 0.49, 0.45};
  for (int c = 0; c < 3; ++c) {
    p.channel_gain[c] = 1.0 + shift * (gain[c] - 1.0);
    p.channel_offset[c] = shift * offset[c];
  }
  p.noise_sigma += 0.02 * shift;
  return p;
}

Scene generate_scene(const DomainParams& params, std::uint64_t seed) {
  PALN_CHECK(params.image_side >= 8, "image side too small");
  PALN_CHECK(params.vehicle_size_min > 0 &&
                 params.vehicle_size_max >= params.vehicle_size_min,
             "empty vehicle size range");
  PALN_CHECK(params.vehicle_aspect_min > 0 &&
                 params.vehicle_aspect_max >= params.vehicle_aspect_min,
             "empty aspect range");
  PALN_CHECK(params.vehicles_min >= 0 &&
                 params.vehicles_max >= params.vehicles_min,
             "empty vehicle count range");
  const int s = params.image_side;
  Rng rng(seed);

  Scene scene;
  scene.image = Tensor::zeros({3, s, s});
  double* img = scene.image.values().data();
  for (int c = 0; c < 3; ++c) {
    const double base = params.bg_base[static_cast<std::size_t>(c)];
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        const double texture =
            params.texture_amplitude *
            std::sin(kTwoPi * (x + 0.5) / params.texture_period) *
            std::sin(kTwoPi * (y + 0.5) / params.texture_period);
        img[(c * s + y) * s + x] = base + texture;
      }
    }
  }

  const int k = static_cast<int>(
      rng.uniform_int(params.vehicles_min, params.vehicles_max));
  scene.requested_vehicles = k;
  const int attempt_budget = 100 * std::max(k, 1);
  int attempts = 0;
  while (static_cast<int>(scene.boxes.size()) < k && attempts < attempt_budget) {
    ++attempts;
    const double size =
        rng.uniform(params.vehicle_size_min, params.vehicle_size_max);
    const double aspect =
        rng.uniform(params.vehicle_aspect_min, params.vehicle_aspect_max);
    const double root = std::sqrt(aspect);
    const double w = std::max(quantize8(size * root), 0.125);
    const double h = std::max(quantize8(size / root), 0.125);
    if (w > s || h > s) continue;
    const double cx = quantize8(rng.uniform(w / 2.0, s - w / 2.0));
    const double cy = quantize8(rng.uniform(h / 2.0, s - h / 2.0));
    BoxXYXY box = {cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
    if (box.x1 < 0 || box.y1 < 0 || box.x2 > s || box.y2 > s) continue;
    bool overlaps = false;
    for (const GroundTruth& gt : scene.boxes) {
      if (iou(box, gt.box) >= 0.1) {
        overlaps = true;
        break;
      }
    }
    if (overlaps) continue;

    std::array<double, 3> intensity;
    for (int c = 0; c < 3; ++c) {
      intensity[static_cast<std::size_t>(c)] =
          rng.uniform(params.vehicle_lo[static_cast<std::size_t>(c)],
                      params.vehicle_hi[static_cast<std::size_t>(c)]);
    }
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < s; ++y) {
        const double py = y + 0.5;
        if (py < box.y1 || py > box.y2) continue;
        for (int x = 0; x < s; ++x) {
          const double px = x + 0.5;
          if (px < box.x1 || px > box.x2) continue;
          img[(c * s + y) * s + x] = intensity[static_cast<std::size_t>(c)];
        }
      }
    }
    scene.boxes.push_back({box, 1});
  }

  // Sensor response, then pixel noise, then clip.
  for (int c = 0; c < 3; ++c) {
    const double gain = params.channel_gain[static_cast<std::size_t>(c)];
    const double offset = params.channel_offset[static_cast<std::size_t>(c)];
    for (int p = 0; p < s * s; ++p) {
      double v = gain * img[c * s * s + p] + offset;
      v += rng.normal(0.0, params.noise_sigma);
      img[c * s * s + p] = std::clamp(v, 0.0, 1.0);
    }
  }
  return scene;
}

std::vector<Scene> generate_dataset(const DatasetSpec& spec,
                                    const DomainParams& params) {
  PALN_CHECK(spec.count >= 1, "dataset count must be >= 1, got ", spec.count);
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(spec.count));
  const bool is_source = spec.role == DatasetRole::source_train;
  const bool unlabeled = spec.role == DatasetRole::target_train_unlabeled;
  for (int i = 0; i < spec.count; ++i) {
    Scene scene = generate_scene(params, spec.seed + static_cast<std::uint64_t>(i));
    scene.id = i;
    scene.domain = is_source ? "source" : "target";
    scene.labeled = !unlabeled;
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

namespace {

Scene rotate90(const Scene& scene) {
  const int s = scene.image.dim(1);
  Scene out;
  out.image = Tensor::zeros(scene.image.shape());
  const double* src = scene.image.values().data();
  double* dst = out.image.values().data();
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        dst[(c * s + (s - 1 - x)) * s + y] = src[(c * s + y) * s + x];
      }
    }
  }
  out.boxes.reserve(scene.boxes.size());
  for (const GroundTruth& gt : scene.boxes) {
    const BoxXYXY& b = gt.box;
    out.boxes.push_back({{b.y1, s - b.x2, b.y2, s - b.x1}, gt.label});
  }
  out.labeled = scene.labeled;
  out.domain = scene.domain;
  out.id = scene.id;
  out.requested_vehicles = scene.requested_vehicles;
  return out;
}

}  // namespace

Scene rotate_augment(const Scene& scene, int angle_degrees) {
  PALN_CHECK(scene.image.rank() == 3 && scene.image.dim(0) == 3 &&
                 scene.image.dim(1) == scene.image.dim(2),
             "rotation needs a square [3,S,S] image");
  PALN_CHECK(angle_degrees == 90 || angle_degrees == 180 || angle_degrees == 270,
             "unsupported rotation angle ", angle_degrees);
  Scene out = rotate90(scene);
  for (int a = 90; a < angle_degrees; a += 90) out = rotate90(out);
  return out;
}

namespace {

std::string scene_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu.ppm", index);
  return std::string("scenes/") + buf;
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  const int s = image.dim(1);
  std::ofstream f(path, std::ios::binary);
  PALN_CHECK(f.good(), "cannot open ", path.string(), " for writing");
  f << "P6\n" << s << " " << s << "\n255\n";
  const double* v = image.values().data();
  std::vector<unsigned char> bytes(static_cast<std::size_t>(s) * s * 3);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double val = std::clamp(v[(c * s + y) * s + x], 0.0, 1.0);
        bytes[(static_cast<std::size_t>(y) * s + x) * 3 + c] =
            static_cast<unsigned char>(std::lround(val * 255.0));
      }
    }
  }
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  PALN_CHECK(f.good(), "short write to ", path.string());
}

[[noreturn]] void ppm_fail(const std::filesystem::path& path,
                           std::istream& f, const std::string& what) {
  const auto off = f.tellg();
  throw std::runtime_error("malformed PPM " + path.string() + " at byte " +
                           std::to_string(off < 0 ? -1 : static_cast<long long>(off)) +
                           ": " + what);
}

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f.good()) {
    throw std::runtime_error("cannot open image file " + path.string());
  }
  std::string magic;
  f >> magic;
  if (magic != "P6") ppm_fail(path, f, "expected P6 magic");
  long long w = 0, h = 0, maxval = 0;
  if (!(f >> w >> h >> maxval)) ppm_fail(path, f, "bad header");
  if (w <= 0 || h <= 0 || w != h) ppm_fail(path, f, "expected square image");
  if (maxval != 255) ppm_fail(path, f, "expected maxval 255");
  f.get();  // single whitespace before pixel data
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
  f.read(reinterpret_cast<char*>(bytes.data()),
         static_cast<std::streamsize>(bytes.size()));
  if (f.gcount() != static_cast<std::streamsize>(bytes.size())) {
    ppm_fail(path, f, "truncated pixel data");
  }
  const int s = static_cast<int>(w);
  Tensor image = Tensor::zeros({3, s, s});
  double* v = image.values().data();
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      for (int c = 0; c < 3; ++c) {
        v[(c * s + y) * s + x] =
            bytes[(static_cast<std::size_t>(y) * s + x) * 3 + c] / 255.0;
      }
    }
  }
  return image;
}

}  // namespace

void save_dataset(std::span<const Scene> scenes,
                  const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory / "scenes");
  nlohmann::json records = nlohmann::json::array();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const Scene& scene = scenes[i];
    const std::string file = scene_file_name(i);
    write_ppm(directory / file, scene.image);
    nlohmann::json rec;
    rec["id"] = scene.id;
    rec["image"] = file;
    rec["domain"] = scene.domain;
    if (scene.labeled) {
      nlohmann::json boxes = nlohmann::json::array();
      for (const GroundTruth& gt : scene.boxes) {
        boxes.push_back({gt.box.x1, gt.box.y1, gt.box.x2, gt.box.y2, gt.label});
      }
      rec["boxes"] = std::move(boxes);
    } else {
      rec["boxes"] = nullptr;
    }
    records.push_back(std::move(rec));
  }
  std::ofstream f(directory / "annotations.json");
  PALN_CHECK(f.good(), "cannot write annotations in ", directory.string());
  f << records.dump(1) << "\n";
}

std::vector<Scene> load_dataset(const std::filesystem::path& directory) {
  PALN_CHECK(std::filesystem::is_directory(directory), directory.string(),
             " is not a directory");
  const std::filesystem::path ann = directory / "annotations.json";
  if (!std::filesystem::exists(ann)) return {};  // empty dataset directory

  std::ifstream f(ann);
  nlohmann::json records;
  try {
    records = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("malformed " + ann.string() + ": " + e.what());
  }
  PALN_CHECK(records.is_array(), ann.string(), ": expected a top-level list");

  std::vector<Scene> scenes;
  scenes.reserve(records.size());
  for (const nlohmann::json& rec : records) {
    Scene scene;
    scene.id = rec.at("id").get<int>();
    scene.domain = rec.at("domain").get<std::string>();
    const std::string file = rec.at("image").get<std::string>();
    const std::filesystem::path img_path = directory / file;
    if (!std::filesystem::exists(img_path)) {
      throw std::runtime_error("annotation references missing image file " +
                               img_path.string());
    }
    scene.image = read_ppm(img_path);
    const nlohmann::json& boxes = rec.at("boxes");
    if (boxes.is_null()) {
      scene.labeled = false;
    } else {
      scene.labeled = true;
      for (const nlohmann::json& b : boxes) {
        PALN_CHECK(b.is_array() && b.size() == 5, "box record must be [x1,y1,x2,y2,label]");
        scene.boxes.push_back({{b[0].get<double>(), b[1].get<double>(),
                                b[2].get<double>(), b[3].get<double>()},
                               b[4].get<int>()});
      }
    }
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

}  // namespace paln
