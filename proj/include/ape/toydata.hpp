#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ape/field.hpp"
#include "json.hpp"

namespace ape::toydata {

/// Synthetic "lesion vs. background" dataset parameters.
struct ToyConfig {
    std::uint64_t seed = 42;
    int count = 2500;
    int side = 64;
    int lesion_count_min = 1;
    int lesion_count_max = 1;
    double lesion_radius_min = 4.0;
    double lesion_radius_max = 5.0;
    // Peak brightness added by a lesion.
    double lesion_amplitude_min = 0.20;
    double lesion_amplitude_max = 0.25;
    double noise_amplitude = 0.05;

    /// Throws std::invalid_argument describing the first violated constraint.
    void validate() const;
};

struct ToySample {
    Field2D image;    // in [0,1], quantized to 8 bits
    int label = 0;    // 1 = contains at least one lesion
    Field2D gt_mask;  // {0,1}, lesion support
};

struct Lesion {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 0.0;
    double amplitude = 0.0;
    // Boundary r(theta) = radius * (1 + sum_k wobble[k] cos((k+2) theta + phase[k])).
    double wobble[3] = {0.0, 0.0, 0.0};
    double phase[3] = {0.0, 0.0, 0.0};
};

/// Every random draw behind one sample. Rendering a recipe is deterministic.
struct SampleRecipe {
    int side = 0;
    int label = 0;
    Field2D background;  // smooth texture + noise, unclipped
    std::vector<Lesion> lesions;
};

/// Largest boundary radius a lesion can reach relative to its base radius.
inline constexpr double kMaxWobble = 0.3;
/// Minimum gap between any lesion pixel and the image border.
inline constexpr int kBorderMargin = 2;

SampleRecipe describe(const ToyConfig& config, int index);
/// Renders a recipe; with_lesions = false yields the pre-lesion background.
ToySample render(const SampleRecipe& recipe, bool with_lesions = true);

/// Exactly config.count samples; sample i is positive iff i is even.
std::vector<ToySample> generate(const ToyConfig& config);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

/// Seeded shuffle of indices [0, count), first round(fraction * count) go to
/// train. Both sides are non-empty.
Split split(std::size_t count, double train_fraction, std::uint64_t seed);

/// On-disk layout: index.json plus images/<id>.pgm and masks/<id>.pgm.
struct DatasetEntry {
    std::string id;
    std::filesystem::path image;  // absolute
    std::filesystem::path mask;   // absolute
    int label = 0;
};

void write_dataset(const std::filesystem::path& dir, const ToyConfig& config,
                   const std::vector<ToySample>& samples);
std::vector<DatasetEntry> read_index(const std::filesystem::path& dir);
ToyConfig read_dataset_config(const std::filesystem::path& dir);

/// Config file / index schema. Missing keys keep their defaults.
nlohmann::json to_json(const ToyConfig& config);
ToyConfig toy_config_from_json(const nlohmann::json& j);

} // namespace ape::toydata
