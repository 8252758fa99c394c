#ifndef PALN_SYNTH_HPP_
#define PALN_SYNTH_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "paln/geometry.hpp"
#include "paln/tensor.hpp"

namespace paln {

// Scene recipe for one domain. The scene renders in a shared latent
// appearance (background, texture, flat vehicles); a per-channel affine
// sensor response plus pixel noise then produces the domain's look. Vehicle
// geometry is quantized to 1/8 pixel so the rotation augmentation
// round-trips boxes exactly.
struct DomainParams {
  int image_side = 64;
  std::array<double, 3> bg_base = {0.34, 0.36, 0.35};
  double texture_period = 6.0;     // pixels
  double texture_amplitude = 0.06;
  std::array<double, 3> vehicle_lo = {0.72, 0.74, 0.76};
  std::array<double, 3> vehicle_hi = {0.92, 0.94, 0.96};
  double vehicle_size_min = 8.0;   // pixels
  double vehicle_size_max = 16.0;
  double vehicle_aspect_min = 0.75;
  double vehicle_aspect_max = 4.0 / 3.0;
  int vehicles_min = 2;
  int vehicles_max = 6;
  std::array<double, 3> channel_gain = {1.0, 1.0, 1.0};    // sensor response
  std::array<double, 3> channel_offset = {0.0, 0.0, 0.0};
  double noise_sigma = 0.02;       // applied after the sensor response
};

// Source recipe and a target recipe at domain-shift severity `shift`;
// shift = 0 reproduces the source parameters exactly (null experiment).
DomainParams source_domain_params();
DomainParams target_domain_params(double shift);

struct Scene {
  Tensor image;  // [3, S, S], values in [0, 1]
  std::vector<GroundTruth> boxes;
  bool labeled = true;
  std::string domain = "source";
  int id = 0;
  int requested_vehicles = 0;  // may exceed boxes.size() when placement fails

  // What training code may see; empty for unlabeled scenes. The full boxes
  // stay available for audit and evaluation.
  std::span<const GroundTruth> visible_boxes() const {
    return labeled ? std::span<const GroundTruth>(boxes)
                   : std::span<const GroundTruth>();
  }
};

// Background plus non-overlapping (IoU < 0.1) axis-aligned vehicles, fully
// determined by (params, seed). Falls back to fewer vehicles if placement
// fails after 100*k attempts.
Scene generate_scene(const DomainParams& params, std::uint64_t seed);

enum class DatasetRole {
  source_train,
  target_train_unlabeled,
  target_test,
  target_labels,
};

struct DatasetSpec {
  DatasetRole role = DatasetRole::source_train;
  int count = 1;
  std::uint64_t seed = 0;
};

// Scene i uses seed spec.seed + i. Unlabeled roles mark scenes so that
// visible_boxes() is empty.
std::vector<Scene> generate_dataset(const DatasetSpec& spec,
                                    const DomainParams& params);

// Counterclockwise rotation by 90, 180 or 270 degrees. A box (x1,y1,x2,y2)
// maps to (y1, S-x2, y2, S-x1) per 90-degree step; four steps compose to the
// identity bit for bit.
Scene rotate_augment(const Scene& scene, int angle_degrees);

// Directory layout: scenes/NNNNNN.ppm (binary P6, maxval 255) plus
// annotations.json with records {id, image, domain, boxes}; boxes is null in
// the training copy of unlabeled scenes.
void save_dataset(std::span<const Scene> scenes,
                  const std::filesystem::path& directory);
std::vector<Scene> load_dataset(const std::filesystem::path& directory);

}  // namespace paln

#endif  // PALN_SYNTH_HPP_
