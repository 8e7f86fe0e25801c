#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "segdet/augment.hpp"
#include "segdet/proposals.hpp"

namespace segdet {

/// Parameters of the synthetic schematic-face generator.
struct SceneSpec {
  int width = 128;
  int height = 128;
  double face_min = 48.0;       ///< face width range in pixels
  double face_max = 96.0;
  double aspect_min = 1.0;      ///< face height / width
  double aspect_max = 1.2;
  double no_face_fraction = 0.2;
  double occlusion_probability = 0.3;  ///< chance of one TO_* crop, uniform over applicable kinds
  double flip_probability = 0.5;
  bool photometric = true;
  PhotometricConfig photometric_config;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::ordered_json to_json(const SceneSpec& s);
SceneSpec scene_spec_from_json(const nlohmann::json& j);

/// One corpus entry. `gt` is in image coordinates; the face box may extend past the
/// frame when a crop removed part of it. Absent for no-face images.
struct AnnotatedImage {
  std::string image_id;
  Image image;
  std::optional<GroundTruth> gt;

  ImageMeta meta() const { return {image.width(), image.height()}; }
  /// The in-frame part of the face, used as the evaluation target.
  std::optional<BBox> visible_face() const;
};

/// Number of no-face images among the first `n` under deterministic allocation.
std::size_t no_face_count(std::size_t n, double fraction);
bool is_no_face_index(std::size_t i, double fraction);

/// Renders `n` images. Image i uses the seed derived from spec.seed ^ i, so any subset
/// can be regenerated independently.
std::vector<AnnotatedImage> render_synthetic(const SceneSpec& spec, std::size_t n,
                                             const SegmentCatalog& catalog = default_catalog());

AnnotatedImage render_one(const SceneSpec& spec, std::size_t index,
                          const SegmentCatalog& catalog = default_catalog());

/// Draws the schematic face (head ellipse, eyes, nose wedge, mouth bar) into `img`.
void draw_face(Image& img, const BBox& face, float skin, float feature);

struct DetectorNoise {
  double miss_probability = 0.0;
  double center_jitter = 0.0;   ///< pixels, stdev per axis
  double scale_jitter = 0.0;    ///< relative stdev of box size
  double false_positives = 0.0; ///< mean count per image (Poisson)

  void validate() const;
};

/// Simulated weak segment detectors over the 9 proposal segments.
std::vector<SegmentDetection> simulate_segment_detectors(const AnnotatedImage& ai, const DetectorNoise& noise,
                                                         std::uint64_t seed,
                                                         const SegmentCatalog& catalog = default_catalog());

/// One JSON object per line with keys image_id, width, height, face, segments.
nlohmann::ordered_json annotation_to_json(const AnnotatedImage& ai);
/// Parses one annotation line; pixels are left empty.
AnnotatedImage annotation_from_json(const nlohmann::json& j);

void write_annotations(const std::filesystem::path& path, const std::vector<AnnotatedImage>& images);
/// Throws std::runtime_error naming the 1-based line number on malformed input.
std::vector<AnnotatedImage> read_annotations(const std::filesystem::path& path);

/// Corpus directory: images/<id>.pgm, annotations.jsonl, spec.json.
void write_corpus(const std::filesystem::path& dir, const std::vector<AnnotatedImage>& images,
                  const SceneSpec& spec);
std::vector<AnnotatedImage> read_corpus(const std::filesystem::path& dir);

}  // namespace segdet
