#include "ape/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "ape/cli/manifest.hpp"
#include "ape/io.hpp"
#include "ape/metrics.hpp"
#include "ape/model.hpp"

namespace ape::cli {

using nlohmann::json;

namespace {

std::string abs_string(const fs::path& p) {
    return p.empty() ? std::string() : fs::absolute(p).lexically_normal().string();
}

std::vector<std::string> abs_strings(const std::vector<fs::path>& paths) {
    std::vector<std::string> out;
    for (const auto& p : paths) out.push_back(abs_string(p));
    return out;
}

std::vector<fs::path> to_paths(const std::vector<std::string>& strings) {
    return {strings.begin(), strings.end()};
}

std::string shortest(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void require_out(const fs::path& out) {
    if (out.empty()) throw ConfigError("--out is required");
    fs::create_directories(out);
}

// ---- option <-> json ------------------------------------------------------

json selection_to_json(const Selection& s) {
    return json{{"images", abs_strings(s.images)},
                {"gt_masks", abs_strings(s.gt_masks)},
                {"data", abs_string(s.data)},
                {"split", s.split},
                {"positives_only", s.positives_only},
                {"limit", s.limit},
                {"train_fraction", s.train_fraction}};
}

Selection selection_from_json(const json& j) {
    Selection s;
    s.images = to_paths(j.at("images").get<std::vector<std::string>>());
    s.gt_masks = to_paths(j.at("gt_masks").get<std::vector<std::string>>());
    s.data = j.at("data").get<std::string>();
    s.split = j.at("split").get<std::string>();
    s.positives_only = j.at("positives_only").get<bool>();
    s.limit = j.at("limit").get<int>();
    s.train_fraction = j.at("train_fraction").get<double>();
    return s;
}

json options_to_json(const GenDataOptions& o) { return json{{"toy", toydata::to_json(o.config)}}; }

json options_to_json(const TrainOptions& o) {
    return json{{"data", abs_string(o.data)}, {"epochs", o.epochs},
                {"lr", o.lr},                 {"seed", o.seed},
                {"batch_size", o.batch_size}, {"train_fraction", o.train_fraction}};
}

json options_to_json(const ExplainOptions& o) {
    return json{{"checkpoint", abs_string(o.checkpoint)}, {"input", selection_to_json(o.input)},
                {"engine", to_json(o.engine)},           {"class_index", o.class_index},
                {"jobs", o.jobs},                        {"write_trace", o.write_trace}};
}

json options_to_json(const BaselineOptions& o) {
    return json{{"checkpoint", abs_string(o.checkpoint)}, {"input", selection_to_json(o.input)},
                {"mp", to_json(o.mp)},                   {"class_index", o.class_index},
                {"jobs", o.jobs}};
}

json options_to_json(const EvaluateOptions& o) {
    return json{{"metrics_files", abs_strings(o.metrics_files)}};
}

// ---- inputs ----------------------------------------------------------------

struct Item {
    std::string id;
    Field2D image;
    std::optional<Field2D> gt;
};

std::vector<Item> resolve(const Selection& s) {
    std::vector<Item> items;
    if (!s.images.empty()) {
        if (!s.gt_masks.empty() && s.gt_masks.size() != s.images.size()) {
            throw ConfigError("--gt must be given once per --image");
        }
        for (std::size_t i = 0; i < s.images.size(); ++i) {
            Item it;
            it.id = s.images[i].stem().string();
            it.image = read_pgm(s.images[i]);
            if (!s.gt_masks.empty()) {
                it.gt = read_pgm(s.gt_masks[i]);
                require_same_shape(it.image, *it.gt, "ground-truth mask");
            }
            items.push_back(std::move(it));
        }
        return items;
    }
    if (s.data.empty()) throw ConfigError("either --image or --data is required");
    const auto entries = toydata::read_index(s.data);
    const auto config = toydata::read_dataset_config(s.data);
    std::vector<std::size_t> chosen;
    if (s.split == "all") {
        for (std::size_t i = 0; i < entries.size(); ++i) chosen.push_back(i);
    } else if (s.split == "train" || s.split == "validation") {
        const auto sp = toydata::split(entries.size(), s.train_fraction, config.seed);
        chosen = s.split == "train" ? sp.train : sp.validation;
    } else {
        throw ConfigError("--split must be train, validation or all");
    }
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t i : chosen) {
        if (s.positives_only && entries[i].label != 1) continue;
        if (s.limit > 0 && items.size() >= static_cast<std::size_t>(s.limit)) break;
        Item it;
        it.id = entries[i].id;
        it.image = read_pgm(entries[i].image);
        it.gt = read_pgm(entries[i].mask);
        items.push_back(std::move(it));
    }
    if (items.empty()) throw ConfigError("selection matched no images");
    return items;
}

std::vector<std::string> selection_inputs(const Selection& s) {
    std::vector<std::string> in = abs_strings(s.images);
    for (auto& g : abs_strings(s.gt_masks)) in.push_back(g);
    if (!s.data.empty()) in.push_back(abs_string(s.data / "index.json"));
    return in;
}

model::ConvNet load_model(const fs::path& checkpoint) {
    if (checkpoint.empty()) throw ConfigError("--checkpoint is required");
    return model::ConvNet(model::load_checkpoint(checkpoint).params);
}

void check_class_index(int c) {
    if (c < 0 || c >= model::kClasses) throw ConfigError("--class-index must be 0 or 1");
}

// ---- metrics emission ------------------------------------------------------

json metrics_line(const std::string& id, const std::string& method, const json& setting,
                  int class_index, const metrics::ApeBreakdown& b,
                  const std::optional<metrics::CcReport>& cc) {
    json line{{"id", id},
              {"method", method},
              {"setting", setting},
              {"class_index", class_index},
              {"sparsity", b.sparsity},
              {"smoothness", b.smoothness},
              {"classification", b.classification},
              {"total", b.total}};
    if (cc) {
        line["component_count"] = cc->component_count;
        line["hit_count"] = cc->hit_count;
        line["hit_rate"] = cc->hit_rate;
    }
    return line;
}

json aggregate(const std::vector<json>& lines) {
    double sp = 0, sm = 0, cl = 0, tot = 0, rate = 0;
    long components = 0, hits = 0, with_gt = 0;
    for (const json& l : lines) {
        sp += l.at("sparsity").get<double>();
        sm += l.at("smoothness").get<double>();
        cl += l.at("classification").get<double>();
        tot += l.at("total").get<double>();
        if (l.contains("hit_rate")) {
            ++with_gt;
            rate += l.at("hit_rate").get<double>();
            components += l.at("component_count").get<long>();
            hits += l.at("hit_count").get<long>();
        }
    }
    const double n = static_cast<double>(lines.size());
    json agg{{"count", lines.size()},
             {"mean",
              {{"sparsity", sp / n},
               {"smoothness", sm / n},
               {"classification", cl / n},
               {"total", tot / n}}}};
    if (with_gt > 0) {
        agg["cc"] = {{"images_with_gt", with_gt},
                     {"mean_hit_rate", rate / static_cast<double>(with_gt)},
                     {"pooled_hit_rate",
                      components == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(components)},
                     {"components", components},
                     {"hits", hits}};
    }
    return agg;
}

std::string jsonl(const std::vector<json>& lines) {
    std::string out;
    for (const json& l : lines) out += l.dump() + "\n";
    return out;
}

} // namespace

// ---- public json mapping ---------------------------------------------------

json to_json(const engine::EngineConfig& c) {
    return json{{"alpha", c.alpha},
                {"beta", c.beta},
                {"gamma", c.binarize.gamma},
                {"epsilon", c.binarize.epsilon},
                {"lr", c.lr},
                {"phase1_iters", c.phase1_iters},
                {"phase2_iters", c.phase2_iters},
                {"convergence_tol", c.convergence_tol},
                {"seed", c.seed}};
}

engine::EngineConfig engine_config_from_json(const json& j) {
    engine::EngineConfig c;
    c.alpha = j.at("alpha").get<double>();
    c.beta = j.at("beta").get<double>();
    c.binarize.gamma = j.at("gamma").get<double>();
    c.binarize.epsilon = j.at("epsilon").get<double>();
    c.lr = j.at("lr").get<double>();
    c.phase1_iters = j.at("phase1_iters").get<int>();
    c.phase2_iters = j.at("phase2_iters").get<int>();
    c.convergence_tol = j.at("convergence_tol").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

json to_json(const mp::MpConfig& c) {
    return json{{"deletion", mp::to_string(c.deletion)},
                {"blur_sigma", c.blur_sigma},
                {"sparsity_coeff", c.sparsity_coeff},
                {"tv_coeff", c.tv_coeff},
                {"tv_gamma", c.tv_gamma},
                {"lr", c.lr},
                {"iters", c.iters},
                {"threshold_scan_step", c.threshold_scan_step}};
}

mp::MpConfig mp_config_from_json(const json& j) {
    mp::MpConfig c;
    c.deletion = mp::deletion_mode_from_string(j.at("deletion").get<std::string>());
    c.blur_sigma = j.at("blur_sigma").get<double>();
    c.sparsity_coeff = j.at("sparsity_coeff").get<double>();
    c.tv_coeff = j.at("tv_coeff").get<double>();
    c.tv_gamma = j.at("tv_gamma").get<double>();
    c.lr = j.at("lr").get<double>();
    c.iters = j.at("iters").get<int>();
    c.threshold_scan_step = j.at("threshold_scan_step").get<double>();
    return c;
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers =
        std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, jobs)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = count;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

// ---- commands --------------------------------------------------------------

void run_gen_data(const GenDataOptions& options) {
    try {
        options.config.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    require_out(options.out);
    toydata::write_dataset(options.out, options.config, toydata::generate(options.config));
    RunManifest m;
    m.command = "gen-data";
    m.config = options_to_json(options);
    m.seed = options.config.seed;
    write_manifest(options.out, std::move(m));
}

TrainSummary run_train(const TrainOptions& options) {
    if (options.epochs < 1) throw ConfigError("--epochs must be >= 1");
    if (!(options.lr > 0.0)) throw ConfigError("--lr must be > 0");
    if (options.data.empty()) throw ConfigError("--data is required");
    require_out(options.out);

    const auto entries = toydata::read_index(options.data);
    const auto config = toydata::read_dataset_config(options.data);
    const auto sp = toydata::split(entries.size(), options.train_fraction, config.seed);
    auto load = [&](const std::vector<std::size_t>& idx, std::vector<Field2D>& images,
                    std::vector<int>& labels) {
        for (std::size_t i : idx) {
            images.push_back(read_pgm(entries[i].image));
            labels.push_back(entries[i].label);
        }
    };
    std::vector<Field2D> train_images, val_images;
    std::vector<int> train_labels, val_labels;
    load(sp.train, train_images, train_labels);
    load(sp.validation, val_images, val_labels);

    model::TrainConfig tc;
    tc.epochs = options.epochs;
    tc.lr = options.lr;
    tc.seed = options.seed;
    tc.batch_size = options.batch_size;
    const model::TrainReport report = model::train(train_images, train_labels, tc);
    const model::ConvNet net(report.params);

    TrainSummary summary;
    summary.initial_loss = report.initial_loss;
    summary.epoch_losses = report.epoch_losses;
    summary.validation_roc_auc = model::roc_auc(net, val_images, val_labels);

    model::save_checkpoint(options.out / "checkpoint.json",
                           model::Checkpoint{report.params, options.seed, options.epochs});
    const json log{{"initial_loss", summary.initial_loss},
                   {"epoch_losses", summary.epoch_losses},
                   {"train_count", train_images.size()},
                   {"validation_count", val_images.size()},
                   {"validation_roc_auc", summary.validation_roc_auc}};
    write_file_atomic(options.out / "train_log.json", log.dump(2) + "\n");

    RunManifest m;
    m.command = "train";
    m.config = options_to_json(options);
    m.seed = options.seed;
    m.inputs = {abs_string(options.data / "index.json")};
    write_manifest(options.out, std::move(m));
    return summary;
}

json run_explain(const ExplainOptions& options) {
    try {
        options.engine.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    check_class_index(options.class_index);
    require_out(options.out);
    const model::ConvNet net = load_model(options.checkpoint);
    const std::vector<Item> items = resolve(options.input);
    for (const Item& it : items) net.require_input_shape(it.image);

    const json setting{{"sparsity_coeff", options.engine.alpha},
                       {"tv_coeff", options.engine.beta},
                       {"tv_gamma", nullptr}};
    std::vector<json> lines(items.size());
    parallel_for(items.size(), options.jobs, [&](std::size_t i) {
        const Item& it = items[i];
        const engine::Explanation e =
            engine::explain(net, it.image, options.class_index, options.engine);
        write_pgm(options.out / "masks" / (it.id + ".pgm"), e.mask);
        write_pgm(options.out / "perturbed" / (it.id + ".pgm"), e.perturbed_phase2);
        if (options.write_trace) {
            std::string csv = "iteration,loss\n";
            for (std::size_t k = 0; k < e.phase1_loss_trace.size(); ++k) {
                csv += std::to_string(k) + "," + shortest(e.phase1_loss_trace[k]) + "\n";
            }
            write_file_atomic(options.out / "traces" / (it.id + ".csv"), csv);
        }
        std::optional<metrics::CcReport> cc;
        if (it.gt) cc = metrics::cc_hit_rate(e.mask, *it.gt);
        lines[i] = metrics_line(it.id, "ours", setting, options.class_index, e.breakdown, cc);
    });
    write_file_atomic(options.out / "metrics.jsonl", jsonl(lines));
    json agg = aggregate(lines);
    agg["method"] = "ours";
    agg["setting"] = setting;
    write_file_atomic(options.out / "aggregate.json", agg.dump(2) + "\n");

    RunManifest m;
    m.command = "explain";
    m.config = options_to_json(options);
    m.seed = options.engine.seed;
    m.inputs = selection_inputs(options.input);
    m.inputs.push_back(abs_string(options.checkpoint));
    write_manifest(options.out, std::move(m));
    return agg;
}

json run_baseline(const BaselineOptions& options) {
    try {
        options.mp.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    check_class_index(options.class_index);
    require_out(options.out);
    const model::ConvNet net = load_model(options.checkpoint);
    const std::vector<Item> items = resolve(options.input);
    for (const Item& it : items) net.require_input_shape(it.image);

    std::vector<Field2D> images, soft;
    for (const Item& it : items) images.push_back(it.image);
    soft.resize(items.size());
    parallel_for(items.size(), options.jobs, [&](std::size_t i) {
        soft[i] = mp::mp_optimize(net, images[i], options.class_index, options.mp);
    });
    const mp::ThresholdScan scan =
        mp::threshold_and_score(net, images, soft, options.class_index, options.mp);

    const std::string method = "mp-" + mp::to_string(options.mp.deletion);
    const json setting{{"sparsity_coeff", options.mp.sparsity_coeff},
                       {"tv_coeff", options.mp.tv_coeff},
                       {"tv_gamma", options.mp.tv_gamma}};
    std::vector<json> lines;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const mp::MpResult& r = scan.results[i];
        write_pgm(options.out / "masks" / (items[i].id + ".pgm"), r.binary_mask);
        write_pgm(options.out / "perturbed" / (items[i].id + ".pgm"), r.perturbed);
        std::optional<metrics::CcReport> cc;
        if (items[i].gt) cc = metrics::cc_hit_rate(r.binary_mask, *items[i].gt);
        lines.push_back(metrics_line(items[i].id, method, setting, options.class_index,
                                     r.breakdown, cc));
    }
    write_file_atomic(options.out / "metrics.jsonl", jsonl(lines));
    json agg = aggregate(lines);
    agg["method"] = method;
    agg["setting"] = setting;
    agg["threshold"] = scan.best_threshold;
    agg["threshold_scan_step"] = options.mp.threshold_scan_step;
    write_file_atomic(options.out / "aggregate.json", agg.dump(2) + "\n");

    RunManifest m;
    m.command = "baseline";
    m.config = options_to_json(options);
    m.inputs = selection_inputs(options.input);
    m.inputs.push_back(abs_string(options.checkpoint));
    write_manifest(options.out, std::move(m));
    return agg;
}

namespace {

std::vector<json> read_metrics_file(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::vector<json> lines;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            json j = json::parse(line);
            for (const char* key : {"method", "sparsity", "smoothness", "classification", "total"}) {
                if (!j.contains(key)) throw std::runtime_error(std::string("missing ") + key);
            }
            j.at("sparsity").get<double>();
            j.at("smoothness").get<double>();
            j.at("classification").get<double>();
            j.at("total").get<double>();
            lines.push_back(std::move(j));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(number) +
                                     ": malformed metrics line (" + e.what() + ")");
        }
    }
    if (lines.empty()) throw std::runtime_error(path.string() + ": no metrics lines");
    return lines;
}

std::string fmt_cell(const json& v) {
    if (v.is_null()) return "-";
    if (v.is_string()) return v.get<std::string>();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v.get<double>());
    return buf;
}

} // namespace

EvaluateSummary run_evaluate(const EvaluateOptions& options) {
    if (options.metrics_files.empty()) throw ConfigError("at least one metrics file is required");
    EvaluateSummary summary;
    summary.rows = json::array();
    for (const fs::path& file : options.metrics_files) {
        const std::vector<json> lines = read_metrics_file(file);
        const json agg = aggregate(lines);
        const json setting = lines.front().value("setting", json::object());
        json row{{"file", abs_string(file)},
                 {"method", lines.front().at("method")},
                 {"sparsity_coeff", setting.value("sparsity_coeff", json())},
                 {"tv_coeff", setting.value("tv_coeff", json())},
                 {"tv_gamma", setting.value("tv_gamma", json())},
                 {"count", agg.at("count")},
                 {"l0", agg.at("mean").at("sparsity")},
                 {"tv", agg.at("mean").at("smoothness")},
                 {"classification", agg.at("mean").at("classification")},
                 {"ape_d", agg.at("mean").at("total")},
                 {"cc_hit_rate", agg.contains("cc") ? agg.at("cc").at("mean_hit_rate") : json()},
                 {"cc_hit_rate_pooled",
                  agg.contains("cc") ? agg.at("cc").at("pooled_hit_rate") : json()}};
        summary.rows.push_back(std::move(row));
    }

    const std::vector<std::pair<std::string, std::string>> columns = {
        {"Method", "method"},      {"L0 approx. coeff", "sparsity_coeff"},
        {"tv coeff", "tv_coeff"},  {"tv_gamma", "tv_gamma"},
        {"L0", "l0"},              {"tv", "tv"},
        {"classification", "classification"}, {"APE_D", "ape_d"},
        {"CCs hit rate (%)", "cc_hit_rate"}};
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> header;
    for (const auto& c : columns) header.push_back(c.first);
    cells.push_back(header);
    for (const json& row : summary.rows) {
        std::vector<std::string> r;
        for (const auto& c : columns) {
            json v = row.at(c.second);
            if (c.second == "cc_hit_rate" && !v.is_null()) v = 100.0 * v.get<double>();
            r.push_back(fmt_cell(v));
        }
        cells.push_back(std::move(r));
    }
    std::vector<std::size_t> width(columns.size(), 0);
    for (const auto& r : cells) {
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        std::string line;
        for (std::size_t c = 0; c < cells[i].size(); ++c) {
            if (c) line += " | ";
            line += cells[i][c] + std::string(width[c] - cells[i][c].size(), ' ');
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        summary.table += line + "\n";
        if (i == 0) {
            std::string rule;
            for (std::size_t c = 0; c < width.size(); ++c) {
                if (c) rule += "-+-";
                rule += std::string(width[c], '-');
            }
            summary.table += rule + "\n";
        }
    }

    if (!options.out.empty()) {
        fs::create_directories(options.out);
        write_file_atomic(options.out / "table.txt", summary.table);
        write_file_atomic(options.out / "table.json", summary.rows.dump(2) + "\n");
        RunManifest m;
        m.command = "evaluate";
        m.config = options_to_json(options);
        m.inputs = abs_strings(options.metrics_files);
        write_manifest(options.out, std::move(m));
    }
    return summary;
}

void rerun(const fs::path& manifest_path, const fs::path& out) {
    const RunManifest m = read_manifest(manifest_path);
    const json& c = m.config;
    if (m.command == "gen-data") {
        run_gen_data(GenDataOptions{toydata::toy_config_from_json(c.at("toy")), out});
    } else if (m.command == "train") {
        TrainOptions o;
        o.data = c.at("data").get<std::string>();
        o.epochs = c.at("epochs").get<int>();
        o.lr = c.at("lr").get<double>();
        o.seed = c.at("seed").get<std::uint64_t>();
        o.batch_size = c.at("batch_size").get<int>();
        o.train_fraction = c.at("train_fraction").get<double>();
        o.out = out;
        run_train(o);
    } else if (m.command == "explain") {
        ExplainOptions o;
        o.checkpoint = c.at("checkpoint").get<std::string>();
        o.input = selection_from_json(c.at("input"));
        o.engine = engine_config_from_json(c.at("engine"));
        o.class_index = c.at("class_index").get<int>();
        o.jobs = c.at("jobs").get<int>();
        o.write_trace = c.at("write_trace").get<bool>();
        o.out = out;
        run_explain(o);
    } else if (m.command == "baseline") {
        BaselineOptions o;
        o.checkpoint = c.at("checkpoint").get<std::string>();
        o.input = selection_from_json(c.at("input"));
        o.mp = mp_config_from_json(c.at("mp"));
        o.class_index = c.at("class_index").get<int>();
        o.jobs = c.at("jobs").get<int>();
        o.out = out;
        run_baseline(o);
    } else if (m.command == "evaluate") {
        EvaluateOptions o;
        o.metrics_files = to_paths(c.at("metrics_files").get<std::vector<std::string>>());
        o.out = out;
        run_evaluate(o);
    } else {
        throw ConfigError("manifest: unknown command '" + m.command + "'");
    }
}

} // namespace ape::cli
