// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ape/baseline_mp.hpp"
#include "ape/cli/commands.hpp"
#include "ape/cli/manifest.hpp"
#include "ape/engine.hpp"
#include "ape/io.hpp"
#include "ape/metrics.hpp"
#include "ape/model.hpp"
#include "ape/numerics.hpp"
#include "ape/regularizers.hpp"
#include "ape/rng.hpp"
#include "ape/toydata.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

ape::Field2D random_field(int side, std::uint64_t seed, double lo, double hi) {
    ape::Rng rng(seed);
    ape::Field2D f(side, side);
    for (double& v : f.values()) v = rng.uniform(lo, hi);
    return f;
}

// ---- 1 ---------------------------------------------------------------------

bool straddles_kink(const ape::ScalarFieldFn& f, const ape::Field2D& at, const ape::Field2D& fd) {
    return ape::max_relative_error(fd, ape::finite_diff_gradient(f, at, 1e-6)) > 1e-6;
}

Outcome gradient_oracle() {
    const auto t0 = Clock::now();
    constexpr int kInstances = 30;
    constexpr double kH = 1e-5;
    constexpr double kTol = 1e-4;
    ape::engine::EngineConfig cfg;
    double worst_model = 0.0, worst_loss = 0.0;
    int checked = 0, skipped = 0;
    for (int k = 0; k < kInstances; ++k) {
        const ape::model::ConvNet net(ape::model::ClassifierParams::random(8, 1000 + k));
        const ape::Field2D image = random_field(8, 2000 + k, 0.2, 0.8);
        const int c = k % 2;

        const auto f_model = [&](const ape::Field2D& x) { return net.predict(x).probs[c]; };
        const ape::Field2D g_model = net.input_gradient(image, c);
        const ape::Field2D fd_model = ape::finite_diff_gradient(f_model, image, kH);

        // Perturbation magnitudes span both sides of the dead zone.
        ape::Rng rng(3000 + k);
        ape::Field2D perturbed = image;
        for (double& v : perturbed.values()) {
            v += (rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0) * rng.uniform(0.001, 0.15);
        }
        const auto f_loss = [&](const ape::Field2D& x) {
            return ape::engine::phase1_loss(net, image, x, c, cfg);
        };
        const ape::Field2D g_loss =
            ape::engine::phase1_loss_and_gradient(net, image, perturbed, c, cfg).second;
        const ape::Field2D fd_loss = ape::finite_diff_gradient(f_loss, perturbed, kH);

        // A ReLU or max-pool switch inside the stencil makes the difference
        // quotient meaningless there; such draws are counted, not scored.
        if (straddles_kink(f_model, image, fd_model) || straddles_kink(f_loss, perturbed, fd_loss)) {
            ++skipped;
            continue;
        }
        worst_model = std::max(worst_model, ape::max_relative_error(g_model, fd_model));
        worst_loss = std::max(worst_loss, ape::max_relative_error(g_loss, fd_loss));
        ++checked;
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = checked >= 20 && worst_model <= kTol && worst_loss <= kTol && secs < 60.0;
    o.detail = "instances=" + std::to_string(checked) + " skipped=" + std::to_string(skipped) +
               " max_rel_model=" + fmt("%.2e", worst_model) +
               " max_rel_loss=" + fmt("%.2e", worst_loss) + " runtime=" + fmt("%.1fs", secs);
    return o;
}

// ---- 2 ---------------------------------------------------------------------

Outcome regularizer_exactness() {
    std::vector<std::string> failed;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) failed.push_back(what);
    };
    const ape::BinarizeParams p;
    auto s_at = [&](double diff) {
        const ape::Field2D i(1, 1, 0.5);
        const ape::Field2D h(1, 1, 0.5 + diff);
        return ape::smooth_binarize(i, h, p).values[0];
    };
    const double s_eps = s_at(p.epsilon);
    const double s_zero = s_at(0.0);
    expect(std::abs(s_eps) <= 1e-12, "S(eps)");
    expect(std::abs(s_at(-p.epsilon)) <= 1e-12, "S(-eps)");
    expect(std::abs(s_zero - (-0.1488852)) <= 1e-6, "S(0)");
    {
        const ape::Field2D i(1, 1, 0.0);
        const ape::Field2D h(1, 1, 1.0);
        expect(std::abs(ape::smooth_binarize(i, h, p).values[0] - 1.0) <= 1e-12, "S(1)");
    }

    // total_variation
    expect(ape::total_variation(ape::Field2D(7, 3, 0.37)) == 0.0, "tv constant");
    {
        ape::Field2D f(5, 5, 0.0);
        f(2, 2) = 1.0;
        expect(ape::total_variation(f) == 4.0, "tv single pixel");
    }
    expect(ape::total_variation(ape::Field2D(4, 1, {0, 1, 1, 0})) == 2.0, "tv row");

    // l0
    expect(ape::l0(ape::Field2D(6, 6, 0.0)) == 0, "l0 zero");
    {
        ape::Field2D f(6, 6, 0.0);
        f(0, 0) = 0.2;
        f(3, 1) = -1.0;
        f(5, 5) = 1e-300;
        expect(ape::l0(f) == 3, "l0 three");
    }
    {
        const ape::Field2D img = random_field(9, 5, 0.0, 1.0);
        expect(ape::l0(img - img) == 0, "l0 identity");
    }

    // hard_binarize
    {
        const ape::Field2D b = ape::hard_binarize(ape::Field2D(3, 1, {0.0, 0.5, -0.3}));
        expect(b[0] == 0.0 && b[1] == 1.0 && b[2] == 1.0, "B examples");
        const ape::Field2D z = ape::hard_binarize(ape::Field2D(4, 4, 0.0));
        expect(ape::l0(z) == 0, "B zero");
        const ape::Field2D f = random_field(8, 6, -1.0, 1.0);
        expect(ape::hard_binarize(ape::hard_binarize(f)) == ape::hard_binarize(f), "B idempotent");
    }

    // mask_from_s
    {
        expect(ape::mask_from_s({ape::Field2D(1, 1, 0.0)})[0] == 1.0, "sal at S=0");
        expect(ape::l0(ape::mask_from_s({ape::Field2D(5, 5, -0.3)})) == 0, "sal negative");
        const ape::Field2D img = random_field(16, 7, 0.2, 0.8);
        ape::Field2D pert = img;
        ape::Rng rng(8);
        for (double& v : pert.values()) v += rng.uniform(-0.02, 0.02);
        for (std::size_t k = 0; k < 16; ++k) pert[k] = img[k] + p.epsilon;
        const ape::Field2D sal = ape::mask_from_s(ape::smooth_binarize(img, pert, p));
        bool ok = true;
        for (std::size_t k = 0; k < img.size(); ++k) {
            const bool expected = std::abs(img[k] - pert[k]) >= p.epsilon;
            ok = ok && ((sal[k] == 1.0) == expected);
        }
        expect(ok, "sal iff |d| >= eps");
    }

    Outcome o;
    o.pass = failed.empty();
    o.detail = "S(eps)=" + fmt("%.1e", s_eps) + " S(0)=" + fmt("%.10f", s_zero);
    for (const auto& f : failed) o.detail += " failed:" + f;
    return o;
}

// ---- shared pipeline -------------------------------------------------------

struct Pipeline {
    fs::path data, train, explain;
    double auc = 0.0;
    double seconds = 0.0;
    double explain_seconds = 0.0;
    json aggregate;
};

Pipeline run_pipeline(const fs::path& root) {
    Pipeline p;
    p.data = root / "data";
    p.train = root / "train";
    p.explain = root / "explain_40_120";
    const auto t0 = Clock::now();

    ape::cli::GenDataOptions gen;
    gen.out = p.data;
    ape::cli::run_gen_data(gen);

    ape::cli::TrainOptions tr;
    tr.data = p.data;
    tr.out = p.train;
    p.auc = ape::cli::run_train(tr).validation_roc_auc;

    const auto t1 = Clock::now();
    ape::cli::ExplainOptions ex;
    ex.checkpoint = p.train / "checkpoint.json";
    ex.input.data = p.data;
    ex.input.limit = 50;
    ex.engine.alpha = 40.0;
    ex.engine.beta = 120.0;
    ex.out = p.explain;
    p.aggregate = ape::cli::run_explain(ex);
    p.explain_seconds = seconds_since(t1);
    p.seconds = seconds_since(t0);
    return p;
}

struct Item {
    std::string id;
    ape::Field2D image;
};

std::vector<Item> validation_positives(const fs::path& data, std::size_t limit) {
    const auto entries = ape::toydata::read_index(data);
    const auto config = ape::toydata::read_dataset_config(data);
    auto chosen = ape::toydata::split(entries.size(), 0.8, config.seed).validation;
    std::sort(chosen.begin(), chosen.end());
    std::vector<Item> items;
    for (std::size_t i : chosen) {
        if (entries[i].label != 1) continue;
        if (items.size() >= limit) break;
        items.push_back({entries[i].id, ape::read_pgm(entries[i].image)});
    }
    return items;
}

std::map<std::string, json> read_metrics(const fs::path& file) {
    std::map<std::string, json> rows;
    std::istringstream in(ape::read_file(file));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        rows[j.at("id").get<std::string>()] = j;
    }
    return rows;
}

// ---- 3 and 6 ---------------------------------------------------------------

struct InProcess {
    Outcome confinement;
    Outcome cross_check;
};

InProcess confinement_and_cross_check(const Pipeline& p) {
    const ape::model::ConvNet net(
        ape::model::load_checkpoint(p.train / "checkpoint.json").params);
    const auto items = validation_positives(p.data, 50);
    const auto emitted = read_metrics(p.explain / "metrics.jsonl");
    ape::engine::EngineConfig cfg;
    cfg.alpha = 40.0;
    cfg.beta = 120.0;

    long violations = 0;
    double worst = 0.0;
    bool emitted_match = true;
    for (const Item& it : items) {
        const ape::engine::Explanation e = ape::engine::explain(net, it.image, 1, cfg);
        for (std::size_t k = 0; k < it.image.size(); ++k) {
            if (e.mask[k] == 0.0 && e.perturbed_phase2[k] != it.image[k]) ++violations;
        }
        // Recompute the breakdown from its definition, without the metrics module.
        const double n = static_cast<double>(it.image.size());
        const ape::Field2D diff = it.image - e.perturbed_phase2;
        const double sp = static_cast<double>(ape::l0(diff)) / n;
        const double sm = ape::total_variation(ape::hard_binarize(diff)) / n;
        const double cl = net.predict(e.perturbed_phase2).probs[1];
        worst = std::max({worst, std::abs(sp - e.breakdown.sparsity),
                          std::abs(sm - e.breakdown.smoothness),
                          std::abs(cl - e.breakdown.classification),
                          std::abs(sp + sm + cl - e.breakdown.total)});
        const auto row = emitted.find(it.id);
        if (row == emitted.end()) {
            emitted_match = false;
            continue;
        }
        const json& r = row->second;
        worst = std::max({worst, std::abs(r.at("sparsity").get<double>() - sp),
                          std::abs(r.at("smoothness").get<double>() - sm),
                          std::abs(r.at("classification").get<double>() - cl)});
    }
    InProcess out;
    out.confinement.pass = items.size() == 50 && violations == 0;
    out.confinement.detail =
        "images=" + std::to_string(items.size()) + " violations=" + std::to_string(violations);
    out.cross_check.pass = items.size() == 50 && emitted_match && worst <= 1e-12;
    out.cross_check.detail = "images=" + std::to_string(items.size()) +
                             " max_abs_diff=" + fmt("%.2e", worst) +
                             (emitted_match ? "" : " missing emitted rows");
    return out;
}

// ---- 4 ---------------------------------------------------------------------

Outcome pipeline_outcome(const Pipeline& p) {
    const json& mean = p.aggregate.at("mean");
    const double cl = mean.at("classification").get<double>();
    const double sp = mean.at("sparsity").get<double>();
    const double hit = p.aggregate.at("cc").at("mean_hit_rate").get<double>();
    const std::size_t count = p.aggregate.at("count").get<std::size_t>();
    Outcome o;
    o.pass = count == 50 && p.auc >= 0.95 && cl <= 0.10 && sp <= 0.05 && hit >= 0.80 &&
             p.seconds <= 15 * 60;
    o.detail = "auc=" + fmt("%.4f", p.auc) + " classification=" + fmt("%.4f", cl) +
               " sparsity=" + fmt("%.4f", sp) + " hit_rate=" + fmt("%.3f", hit) +
               " images=" + std::to_string(count) + " runtime=" + fmt("%.0fs", p.seconds);
    return o;
}

// ---- 5 ---------------------------------------------------------------------

Outcome ordering(const Pipeline& p, const fs::path& root) {
    const auto t0 = Clock::now();
    const std::vector<std::pair<double, double>> settings{{0.01, 0.2}, {6.0, 120.0}, {40.0, 120.0}};
    bool pass = true;
    std::string detail;
    for (const auto& [a, b] : settings) {
        const std::string tag = fmt("%g", a) + "_" + fmt("%g", b);
        json ours;
        if (a == 40.0 && b == 120.0) {
            ours = p.aggregate;
        } else {
            ape::cli::ExplainOptions ex;
            ex.checkpoint = p.train / "checkpoint.json";
            ex.input.data = p.data;
            ex.input.limit = 50;
            ex.engine.alpha = a;
            ex.engine.beta = b;
            ex.out = root / ("explain_" + tag);
            ours = ape::cli::run_explain(ex);
        }
        std::map<std::string, json> mp;
        for (auto mode : {ape::mp::DeletionMode::kMinConst, ape::mp::DeletionMode::kBlur}) {
            ape::cli::BaselineOptions bo;
            bo.checkpoint = p.train / "checkpoint.json";
            bo.input.data = p.data;
            bo.input.limit = 50;
            bo.mp.deletion = mode;
            bo.mp.sparsity_coeff = a;
            bo.mp.tv_coeff = b;
            bo.mp.threshold_scan_step = 1e-3;
            bo.out = root / ("mp_" + ape::mp::to_string(mode) + "_" + tag);
            mp[ape::mp::to_string(mode)] = ape::cli::run_baseline(bo);
        }
        auto total = [](const json& agg) { return agg.at("mean").at("total").get<double>(); };
        auto hit = [](const json& agg) { return agg.at("cc").at("mean_hit_rate").get<double>(); };
        const bool ok = total(ours) < total(mp["min"]) && total(ours) < total(mp["blur"]) &&
                        hit(ours) > hit(mp["blur"]);
        pass = pass && ok;
        detail += " (" + fmt("%g", a) + "," + fmt("%g", b) + "): ours=" + fmt("%.4f", total(ours)) +
                  "/" + fmt("%.3f", hit(ours)) + " min=" + fmt("%.4f", total(mp["min"])) + "/" +
                  fmt("%.3f", hit(mp["min"])) + " blur=" + fmt("%.4f", total(mp["blur"])) + "/" +
                  fmt("%.3f", hit(mp["blur"])) + (ok ? "" : " [order violated]") + ";";
    }
    const double secs = seconds_since(t0) + p.explain_seconds;
    Outcome o;
    o.pass = pass && secs <= 30 * 60;
    o.detail = "total/hit_rate" + detail + " runtime=" + fmt("%.0fs", secs);
    return o;
}

// ---- 7 ---------------------------------------------------------------------

bool same_bytes(const fs::path& a, const fs::path& b) {
    return fs::exists(a) && fs::exists(b) && ape::read_file(a) == ape::read_file(b);
}

Outcome determinism(const Pipeline& p, const fs::path& root) {
    long compared = 0;
    std::vector<std::string> differing;
    for (const fs::path& dir : {p.data, p.train, p.explain}) {
        const fs::path replay = root / "rerun" / dir.filename();
        ape::cli::rerun(dir / ape::cli::kManifestName, replay);
        const auto manifest = ape::cli::read_manifest(dir / ape::cli::kManifestName);
        std::vector<std::string> files = manifest.outputs;
        files.push_back(ape::cli::kManifestName);
        for (const std::string& rel : files) {
            ++compared;
            if (!same_bytes(dir / rel, replay / rel)) {
                differing.push_back(dir.filename().string() + "/" + rel);
            }
        }
    }
    Outcome o;
    o.pass = differing.empty() && compared > 0;
    o.detail = "files=" + std::to_string(compared) + " differing=" + std::to_string(differing.size());
    for (std::size_t k = 0; k < differing.size() && k < 5; ++k) o.detail += " " + differing[k];
    return o;
}

// ---- 8 ---------------------------------------------------------------------

Outcome ape_s_sanity() {
    const ape::model::ConvNet net(ape::model::ClassifierParams::random(16, 77));
    const ape::Field2D image = random_field(16, 78, 0.2, 0.8);
    const auto same = ape::metrics::ape_s(net, image, image, 1);
    ape::Field2D flipped = image;
    for (double& v : flipped.values()) v = 1.0 - v;
    const auto all = ape::metrics::ape_s(net, image, flipped, 1);
    Outcome o;
    o.pass = same.sparsity == 1.0 && same.smoothness == 0.0 && same.classification == 0.0 &&
             all.sparsity == 0.0;
    o.detail = "identity=(" + fmt("%g", same.sparsity) + "," + fmt("%g", same.smoothness) + "," +
               fmt("%g", same.classification) + ") full_sparsity=" + fmt("%g", all.sparsity);
    return o;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance checks"};
    fs::path work = "acceptance_work";
    std::vector<int> only;
    app.add_option("--work-dir", work, "scratch directory, wiped first");
    app.add_option("--only", only, "run a subset of criteria")->check(CLI::Range(1, 8));
    CLI11_PARSE(app, argc, argv);

    const std::set<int> wanted = only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7, 8}
                                              : std::set<int>(only.begin(), only.end());
    const char* names[] = {"",
                           "gradient oracle",
                           "regularizer exactness",
                           "support confinement",
                           "desk-scale pipeline",
                           "ordering against MP baselines",
                           "metric cross-check",
                           "determinism from manifests",
                           "APE_S sanity"};
    int failures = 0;
    auto report = [&](int id, const Outcome& o) {
        std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, names[id], o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass) ++failures;
    };
    auto guarded = [&](int id, const std::function<Outcome()>& fn) {
        if (!wanted.count(id)) return;
        try {
            report(id, fn());
        } catch (const std::exception& e) {
            report(id, {false, std::string("exception: ") + e.what()});
        }
    };

    guarded(1, gradient_oracle);
    guarded(2, regularizer_exactness);
    guarded(8, ape_s_sanity);

    const bool needs_pipeline =
        wanted.count(3) || wanted.count(4) || wanted.count(5) || wanted.count(6) || wanted.count(7);
    if (needs_pipeline) {
        std::optional<Pipeline> pipeline;
        std::string error;
        try {
            fs::remove_all(work);
            fs::create_directories(work);
            pipeline = run_pipeline(work);
        } catch (const std::exception& e) {
            error = e.what();
        }
        const int dependent[] = {4, 3, 6, 5, 7};
        if (!pipeline) {
            for (int id : dependent) {
                if (wanted.count(id)) report(id, {false, "pipeline failed: " + error});
            }
        } else {
            guarded(4, [&] { return pipeline_outcome(*pipeline); });
            if (wanted.count(3) || wanted.count(6)) {
                std::optional<InProcess> r;
                try {
                    r = confinement_and_cross_check(*pipeline);
                } catch (const std::exception& e) {
                    error = e.what();
                }
                for (int id : {3, 6}) {
                    if (!wanted.count(id)) continue;
                    if (!r) {
                        report(id, {false, "exception: " + error});
                    } else {
                        report(id, id == 3 ? r->confinement : r->cross_check);
                    }
                }
            }
            guarded(5, [&] { return ordering(*pipeline, work); });
            guarded(7, [&] { return determinism(*pipeline, work); });
        }
    }
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
