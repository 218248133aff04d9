#include "ape/toydata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

#include "ape/io.hpp"
#include "ape/rng.hpp"
#include "json.hpp"

namespace ape::toydata {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Background: base level plus a few low-frequency plane waves.
constexpr double kBaseMin = 0.25;
constexpr double kBaseMax = 0.45;
constexpr int kWaves = 3;
constexpr double kWaveAmpMax = 0.06;

double boundary_radius(const Lesion& l, double theta) {
    double r = 1.0;
    for (int k = 0; k < 3; ++k) r += l.wobble[k] * std::cos((k + 2) * theta + l.phase[k]);
    return l.radius * r;
}

std::string sample_id(int index) {
    std::string digits = std::to_string(index);
    return "s" + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

} // namespace

void ToyConfig::validate() const {
    if (count < 1) throw std::invalid_argument("toy config: count must be >= 1");
    if (side < 8) throw std::invalid_argument("toy config: side must be >= 8");
    if (lesion_count_min < 1 || lesion_count_max < lesion_count_min) {
        throw std::invalid_argument("toy config: lesion_count_range must be non-empty and >= 1");
    }
    if (!(lesion_radius_min >= 1.0) || lesion_radius_max < lesion_radius_min) {
        throw std::invalid_argument("toy config: lesion_radius_range must be non-empty, radii >= 1");
    }
    if (!(lesion_radius_max < side / 2.0)) {
        throw std::invalid_argument("toy config: lesion radii must be < side/2");
    }
    // Centers need room for the widest boundary plus the border margin.
    const double reach = std::ceil(lesion_radius_max * (1.0 + kMaxWobble)) + kBorderMargin;
    if (2.0 * reach >= side - 1) {
        throw std::invalid_argument("toy config: lesion_radius_max too large for side");
    }
    if (!(lesion_amplitude_min > 0.0) || lesion_amplitude_max < lesion_amplitude_min ||
        lesion_amplitude_max > 1.0) {
        throw std::invalid_argument("toy config: lesion_amplitude_range must be non-empty, in (0, 1]");
    }
    if (!(noise_amplitude >= 0.0 && noise_amplitude <= 0.5)) {
        throw std::invalid_argument("toy config: noise_amplitude must be in [0, 0.5]");
    }
}

SampleRecipe describe(const ToyConfig& config, int index) {
    config.validate();
    Rng rng = Rng::for_stream(config.seed, static_cast<std::uint64_t>(index));
    SampleRecipe recipe;
    recipe.side = config.side;
    recipe.label = index % 2 == 0 ? 1 : 0;

    const int n = config.side;
    const double base = rng.uniform(kBaseMin, kBaseMax);
    double amp[kWaves], fx[kWaves], fy[kWaves], ph[kWaves];
    for (int k = 0; k < kWaves; ++k) {
        amp[k] = rng.uniform(0.0, kWaveAmpMax);
        fx[k] = rng.uniform(-2.0, 2.0);
        fy[k] = rng.uniform(-2.0, 2.0);
        ph[k] = rng.uniform(0.0, kTwoPi);
    }
    recipe.background = Field2D(n, n);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            double v = base;
            for (int k = 0; k < kWaves; ++k) {
                v += amp[k] * std::cos(kTwoPi * (fx[k] * x + fy[k] * y) / n + ph[k]);
            }
            recipe.background(x, y) = v;
        }
    }
    for (double& v : recipe.background.values()) {
        v += rng.uniform(-config.noise_amplitude, config.noise_amplitude);
    }

    if (recipe.label == 1) {
        const auto lesion_count = static_cast<int>(
            rng.uniform_int(config.lesion_count_min, config.lesion_count_max));
        for (int i = 0; i < lesion_count; ++i) {
            Lesion l;
            l.radius = rng.uniform(config.lesion_radius_min, config.lesion_radius_max);
            l.amplitude = rng.uniform(config.lesion_amplitude_min, config.lesion_amplitude_max);
            for (int k = 0; k < 3; ++k) {
                l.wobble[k] = rng.uniform(-kMaxWobble / 3.0, kMaxWobble / 3.0);
                l.phase[k] = rng.uniform(0.0, kTwoPi);
            }
            const double reach = std::ceil(l.radius * (1.0 + kMaxWobble)) + kBorderMargin;
            l.cx = rng.uniform(reach, n - 1 - reach);
            l.cy = rng.uniform(reach, n - 1 - reach);
            recipe.lesions.push_back(l);
        }
    }
    return recipe;
}

ToySample render(const SampleRecipe& recipe, bool with_lesions) {
    const int n = recipe.side;
    ToySample s;
    s.label = recipe.label;
    s.gt_mask = Field2D(n, n, 0.0);
    Field2D image = recipe.background;
    if (with_lesions) {
        for (const Lesion& l : recipe.lesions) {
            for (int y = 0; y < n; ++y) {
                for (int x = 0; x < n; ++x) {
                    const double dx = x - l.cx;
                    const double dy = y - l.cy;
                    const double d = std::sqrt(dx * dx + dy * dy);
                    const double rb = boundary_radius(l, std::atan2(dy, dx));
                    if (d >= rb) continue;
                    const double sigma = 0.75 * rb;
                    image(x, y) += l.amplitude * std::exp(-d * d / (2.0 * sigma * sigma));
                    s.gt_mask(x, y) = 1.0;
                }
            }
        }
    }
    for (double& v : image.values()) v = std::min(1.0, std::max(0.0, v));
    s.image = quantize8(image);
    return s;
}

std::vector<ToySample> generate(const ToyConfig& config) {
    config.validate();
    std::vector<ToySample> out;
    out.reserve(static_cast<std::size_t>(config.count));
    for (int i = 0; i < config.count; ++i) out.push_back(render(describe(config, i)));
    return out;
}

Split split(std::size_t count, double train_fraction, std::uint64_t seed) {
    if (count < 2) throw std::invalid_argument("split: need at least 2 samples");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("split: train_fraction must be in (0, 1)");
    }
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix64(seed ^ 0x5851f42d4c957f2dULL));
    rng.shuffle(std::span<std::size_t>(order));
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(count)));
    n_train = std::clamp<std::size_t>(n_train, 1, count - 1);
    Split s;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    return s;
}

json to_json(const ToyConfig& c) {
    return json{{"seed", c.seed},
                {"count", c.count},
                {"side", c.side},
                {"lesion_count_range", {c.lesion_count_min, c.lesion_count_max}},
                {"lesion_radius_range", {c.lesion_radius_min, c.lesion_radius_max}},
                {"lesion_amplitude_range", {c.lesion_amplitude_min, c.lesion_amplitude_max}},
                {"noise_amplitude", c.noise_amplitude}};
}

ToyConfig toy_config_from_json(const json& j) {
    ToyConfig c;
    c.seed = j.value("seed", c.seed);
    c.count = j.value("count", c.count);
    c.side = j.value("side", c.side);
    if (j.contains("lesion_count_range")) {
        c.lesion_count_min = j.at("lesion_count_range").at(0).get<int>();
        c.lesion_count_max = j.at("lesion_count_range").at(1).get<int>();
    }
    if (j.contains("lesion_radius_range")) {
        c.lesion_radius_min = j.at("lesion_radius_range").at(0).get<double>();
        c.lesion_radius_max = j.at("lesion_radius_range").at(1).get<double>();
    }
    if (j.contains("lesion_amplitude_range")) {
        c.lesion_amplitude_min = j.at("lesion_amplitude_range").at(0).get<double>();
        c.lesion_amplitude_max = j.at("lesion_amplitude_range").at(1).get<double>();
    }
    c.noise_amplitude = j.value("noise_amplitude", c.noise_amplitude);
    return c;
}

void write_dataset(const std::filesystem::path& dir, const ToyConfig& config,
                   const std::vector<ToySample>& samples) {
    json entries = json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string id = sample_id(static_cast<int>(i));
        const std::string image = "images/" + id + ".pgm";
        const std::string mask = "masks/" + id + ".pgm";
        write_pgm(dir / image, samples[i].image);
        write_pgm(dir / mask, samples[i].gt_mask);
        entries.push_back({{"id", id}, {"image", image}, {"mask", mask}, {"label", samples[i].label}});
    }
    json index{{"config", to_json(config)}, {"samples", std::move(entries)}};
    write_file_atomic(dir / "index.json", index.dump(2) + "\n");
}

std::vector<DatasetEntry> read_index(const std::filesystem::path& dir) {
    const auto path = dir / "index.json";
    json index;
    try {
        index = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    std::vector<DatasetEntry> out;
    for (const json& e : index.at("samples")) {
        DatasetEntry d;
        d.id = e.at("id").get<std::string>();
        d.image = std::filesystem::absolute(dir / e.at("image").get<std::string>());
        d.mask = std::filesystem::absolute(dir / e.at("mask").get<std::string>());
        d.label = e.at("label").get<int>();
        out.push_back(std::move(d));
    }
    return out;
}

ToyConfig read_dataset_config(const std::filesystem::path& dir) {
    return toy_config_from_json(json::parse(read_file(dir / "index.json")).at("config"));
}

} // namespace ape::toydata
