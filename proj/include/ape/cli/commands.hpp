#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ape/baseline_mp.hpp"
#include "ape/engine.hpp"
#include "ape/toydata.hpp"
#include "json.hpp"

namespace ape::cli {

namespace fs = std::filesystem;

/// Raised for invalid user-supplied settings (exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GenDataOptions {
    toydata::ToyConfig config;
    fs::path out;
};

struct TrainOptions {
    fs::path data;
    int epochs = 20;
    double lr = 2e-3;
    std::uint64_t seed = 42;
    int batch_size = 32;
    double train_fraction = 0.8;
    fs::path out;
};

/// Which images to process: explicit files, or a slice of a dataset. The
/// dataset split is seeded by the dataset's own seed so that train and
/// explain agree on it.
struct Selection {
    std::vector<fs::path> images;
    std::vector<fs::path> gt_masks;  // optional, aligned with images
    fs::path data;
    std::string split = "validation";  // train | validation | all
    bool positives_only = true;
    int limit = 0;  // 0 = no limit
    double train_fraction = 0.8;
};

struct ExplainOptions {
    fs::path checkpoint;
    Selection input;
    engine::EngineConfig engine;
    int class_index = 1;
    int jobs = 1;
    bool write_trace = false;
    fs::path out;
};

struct BaselineOptions {
    fs::path checkpoint;
    Selection input;
    mp::MpConfig mp;
    int class_index = 1;
    int jobs = 1;
    fs::path out;
};

struct EvaluateOptions {
    std::vector<fs::path> metrics_files;
    fs::path out;  // optional; table is always returned
};

struct TrainSummary {
    double initial_loss = 0.0;
    std::vector<double> epoch_losses;
    double validation_roc_auc = 0.0;
};

struct EvaluateSummary {
    std::string table;
    nlohmann::json rows;
};

void run_gen_data(const GenDataOptions& options);
TrainSummary run_train(const TrainOptions& options);
/// Returns the aggregate report (also written to aggregate.json).
nlohmann::json run_explain(const ExplainOptions& options);
nlohmann::json run_baseline(const BaselineOptions& options);
EvaluateSummary run_evaluate(const EvaluateOptions& options);

/// Replays the command recorded in `manifest` into `out`.
void rerun(const fs::path& manifest, const fs::path& out);

/// Runs fn(0..count-1) on up to `jobs` threads; rethrows the first failure.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

// Option <-> JSON mapping used by manifests.
nlohmann::json to_json(const engine::EngineConfig& c);
engine::EngineConfig engine_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const mp::MpConfig& c);
mp::MpConfig mp_config_from_json(const nlohmann::json& j);

} // namespace ape::cli
