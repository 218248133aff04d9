#include "ape/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "ape/io.hpp"
#include "ape/numerics.hpp"
#include "ape/rng.hpp"

namespace ape::model {

using nlohmann::json;

namespace {

constexpr int kTaps = kKernel * kKernel;

// 3x3, stride 1, zero padding 1 on square n x n maps.
void conv_forward(const double* in, int cin, int n, const double* w, const double* b, int cout,
                  double* out) {
    const std::size_t plane = static_cast<std::size_t>(n) * n;
    for (int oc = 0; oc < cout; ++oc) {
        double* o = out + oc * plane;
        std::fill(o, o + plane, b[oc]);
        for (int ic = 0; ic < cin; ++ic) {
            const double* src = in + ic * plane;
            const double* k = w + (oc * cin + ic) * kTaps;
            for (int ky = 0; ky < kKernel; ++ky) {
                for (int kx = 0; kx < kKernel; ++kx) {
                    const double wv = k[ky * kKernel + kx];
                    const int x0 = std::max(0, 1 - kx);
                    const int x1 = std::min(n, n + 1 - kx);
                    for (int y = 0; y < n; ++y) {
                        const int iy = y + ky - 1;
                        if (iy < 0 || iy >= n) continue;
                        double* orow = o + y * n;
                        const double* irow = src + iy * n + (kx - 1);
                        for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                    }
                }
            }
        }
    }
}

// Adjoint of conv_forward. Any of gw, gb, gin may be null.
void conv_backward(const double* in, int cin, int n, const double* w, int cout,
                   const double* gout, double* gw, double* gb, double* gin) {
    const std::size_t plane = static_cast<std::size_t>(n) * n;
    for (int oc = 0; oc < cout; ++oc) {
        const double* go = gout + oc * plane;
        if (gb) gb[oc] += std::accumulate(go, go + plane, 0.0);
        for (int ic = 0; ic < cin; ++ic) {
            const double* src = in + ic * plane;
            double* gsrc = gin ? gin + ic * plane : nullptr;
            const double* k = w + (oc * cin + ic) * kTaps;
            double* gk = gw ? gw + (oc * cin + ic) * kTaps : nullptr;
            for (int ky = 0; ky < kKernel; ++ky) {
                for (int kx = 0; kx < kKernel; ++kx) {
                    const double wv = k[ky * kKernel + kx];
                    const int x0 = std::max(0, 1 - kx);
                    const int x1 = std::min(n, n + 1 - kx);
                    double acc = 0.0;
                    for (int y = 0; y < n; ++y) {
                        const int iy = y + ky - 1;
                        if (iy < 0 || iy >= n) continue;
                        const double* grow = go + y * n;
                        if (gk) {
                            const double* irow = src + iy * n + (kx - 1);
                            for (int x = x0; x < x1; ++x) acc += grow[x] * irow[x];
                        }
                        if (gsrc) {
                            double* girow = gsrc + iy * n + (kx - 1);
                            for (int x = x0; x < x1; ++x) girow[x] += wv * grow[x];
                        }
                    }
                    if (gk) gk[ky * kKernel + kx] += acc;
                }
            }
        }
    }
}

// ReLU in place then 2x2 max pooling; idx records the winning input offset.
void relu_pool(std::vector<double>& act, int channels, int n, std::vector<double>& pooled,
               std::vector<int>& idx) {
    for (double& v : act) v = std::max(0.0, v);
    const int h = n / 2;
    pooled.assign(static_cast<std::size_t>(channels) * h * h, 0.0);
    idx.assign(pooled.size(), 0);
    for (int c = 0; c < channels; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < h; ++x) {
                int best = c * n * n + (2 * y) * n + 2 * x;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const int at = c * n * n + (2 * y + dy) * n + 2 * x + dx;
                        if (act[at] > act[best]) best = at;
                    }
                }
                const std::size_t o = static_cast<std::size_t>(c) * h * h + y * h + x;
                pooled[o] = act[best];
                idx[o] = best;
            }
        }
    }
}

// Routes pooled gradients to their argmax and applies the ReLU mask.
std::vector<double> unpool_relu(const std::vector<double>& gpooled, const std::vector<int>& idx,
                                const std::vector<double>& act) {
    std::vector<double> g(act.size(), 0.0);
    for (std::size_t i = 0; i < gpooled.size(); ++i) g[idx[i]] += gpooled[i];
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(act[i] > 0.0)) g[i] = 0.0;
    }
    return g;
}

struct Activations {
    std::vector<double> r1, p1, r2, p2;
    std::vector<int> idx1, idx2;
    std::array<double, kClasses> logits{};
    std::array<double, kClasses> probs{};
};

Activations forward(const ClassifierParams& p, const Field2D& image) {
    const int n = p.side;
    const int h = n / 2;
    Activations a;
    a.r1.resize(static_cast<std::size_t>(kConv1Channels) * n * n);
    conv_forward(image.values().data(), 1, n, p.conv1_w.data(), p.conv1_b.data(), kConv1Channels,
                 a.r1.data());
    relu_pool(a.r1, kConv1Channels, n, a.p1, a.idx1);
    a.r2.resize(static_cast<std::size_t>(kConv2Channels) * h * h);
    conv_forward(a.p1.data(), kConv1Channels, h, p.conv2_w.data(), p.conv2_b.data(),
                 kConv2Channels, a.r2.data());
    relu_pool(a.r2, kConv2Channels, h, a.p2, a.idx2);

    const std::size_t features = a.p2.size();
    for (int c = 0; c < kClasses; ++c) {
        const double* wrow = p.dense_w.data() + c * features;
        double z = p.dense_b[c];
        for (std::size_t i = 0; i < features; ++i) z += wrow[i] * a.p2[i];
        a.logits[c] = z;
    }
    const double zmax = std::max(a.logits[0], a.logits[1]);
    double denom = 0.0;
    for (int c = 0; c < kClasses; ++c) {
        a.probs[c] = std::exp(a.logits[c] - zmax);
        denom += a.probs[c];
    }
    for (double& v : a.probs) v /= denom;
    return a;
}

// Backpropagates d(objective)/d(logits). Writes parameter gradients into
// pgrad (accumulating) and/or the input gradient into gimage when non-null.
void backward(const ClassifierParams& p, const Activations& a, const Field2D& image,
              const std::array<double, kClasses>& dlogits, ClassifierParams* pgrad,
              Field2D* gimage) {
    const int n = p.side;
    const int h = n / 2;
    const std::size_t features = a.p2.size();

    std::vector<double> gp2(features, 0.0);
    for (int c = 0; c < kClasses; ++c) {
        const double d = dlogits[c];
        const double* wrow = p.dense_w.data() + c * features;
        for (std::size_t i = 0; i < features; ++i) gp2[i] += d * wrow[i];
        if (pgrad) {
            double* gw = pgrad->dense_w.data() + c * features;
            for (std::size_t i = 0; i < features; ++i) gw[i] += d * a.p2[i];
            pgrad->dense_b[c] += d;
        }
    }
    const std::vector<double> ga2 = unpool_relu(gp2, a.idx2, a.r2);
    std::vector<double> gp1(a.p1.size(), 0.0);
    conv_backward(a.p1.data(), kConv1Channels, h, p.conv2_w.data(), kConv2Channels, ga2.data(),
                  pgrad ? pgrad->conv2_w.data() : nullptr, pgrad ? pgrad->conv2_b.data() : nullptr,
                  gp1.data());
    const std::vector<double> ga1 = unpool_relu(gp1, a.idx1, a.r1);
    if (gimage) *gimage = Field2D(n, n, 0.0);
    conv_backward(image.values().data(), 1, n, p.conv1_w.data(), kConv1Channels, ga1.data(),
                  pgrad ? pgrad->conv1_w.data() : nullptr, pgrad ? pgrad->conv1_b.data() : nullptr,
                  gimage ? gimage->values().data() : nullptr);
}

void check_class(int class_index) {
    if (class_index < 0 || class_index >= kClasses) {
        throw std::invalid_argument("class index must be 0 or 1");
    }
}

std::array<double, kClasses> prob_logit_jacobian_row(const std::array<double, kClasses>& probs,
                                                     int i) {
    std::array<double, kClasses> d{};
    for (int j = 0; j < kClasses; ++j) d[j] = probs[i] * ((i == j ? 1.0 : 0.0) - probs[j]);
    return d;
}

} // namespace

void Classifier::require_input_shape(const Field2D& image) const {
    if (image.width() != input_width() || image.height() != input_height()) {
        throw std::invalid_argument(
            "classifier: dimension mismatch, expected " + std::to_string(input_width()) + "x" +
            std::to_string(input_height()) + " got " + std::to_string(image.width()) + "x" +
            std::to_string(image.height()));
    }
}

ClassifierParams ClassifierParams::zeros(int side) {
    if (side < 4 || side % 4 != 0) {
        throw std::invalid_argument("classifier side must be a positive multiple of 4");
    }
    ClassifierParams p;
    p.side = side;
    const std::size_t q = static_cast<std::size_t>(side / 4);
    p.conv1_w.assign(kConv1Channels * kTaps, 0.0);
    p.conv1_b.assign(kConv1Channels, 0.0);
    p.conv2_w.assign(kConv2Channels * kConv1Channels * kTaps, 0.0);
    p.conv2_b.assign(kConv2Channels, 0.0);
    p.dense_w.assign(kClasses * kConv2Channels * q * q, 0.0);
    p.dense_b.assign(kClasses, 0.0);
    return p;
}

ClassifierParams ClassifierParams::random(int side, std::uint64_t seed) {
    ClassifierParams p = zeros(side);
    Rng rng(mix64(seed ^ 0x2545f4914f6cdd1dULL));
    const double s1 = std::sqrt(2.0 / kTaps);
    const double s2 = std::sqrt(2.0 / (kConv1Channels * kTaps));
    const double s3 = std::sqrt(1.0 / static_cast<double>(p.dense_w.size() / kClasses));
    for (double& v : p.conv1_w) v = rng.normal(0.0, s1);
    for (double& v : p.conv2_w) v = rng.normal(0.0, s2);
    for (double& v : p.dense_w) v = rng.normal(0.0, s3);
    return p;
}

std::size_t ClassifierParams::parameter_count() const {
    std::size_t n = 0;
    for (auto t : tensors()) n += t.size();
    return n;
}

std::vector<ClassifierParams::TensorRef> ClassifierParams::tensors() {
    const int q = pooled_side();
    return {
        {"conv1.weight", {kConv1Channels, 1, kKernel, kKernel}, &conv1_w},
        {"conv1.bias", {kConv1Channels}, &conv1_b},
        {"conv2.weight", {kConv2Channels, kConv1Channels, kKernel, kKernel}, &conv2_w},
        {"conv2.bias", {kConv2Channels}, &conv2_b},
        {"dense.weight", {kClasses, kConv2Channels * q * q}, &dense_w},
        {"dense.bias", {kClasses}, &dense_b},
    };
}

std::vector<std::span<const double>> ClassifierParams::tensors() const {
    return {conv1_w, conv1_b, conv2_w, conv2_b, dense_w, dense_b};
}

bool ClassifierParams::all_finite() const {
    for (auto t : tensors()) {
        for (double v : t) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

ConvNet::ConvNet(ClassifierParams params) : params_(std::move(params)) {
    const ClassifierParams shape = ClassifierParams::zeros(params_.side);
    auto expected = shape.tensors();
    auto actual = std::as_const(params_).tensors();
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (expected[i].size() != actual[i].size()) {
            throw std::invalid_argument("ConvNet: tensor sizes do not match architecture");
        }
    }
    if (!params_.all_finite()) throw std::invalid_argument("ConvNet: non-finite parameter");
}

Prediction ConvNet::predict(const Field2D& image) const {
    require_input_shape(image);
    return Prediction{forward(params_, image).probs};
}

Field2D ConvNet::input_gradient(const Field2D& image, int class_index) const {
    return predict_with_gradient(image, class_index).second;
}

std::pair<Prediction, Field2D> ConvNet::predict_with_gradient(const Field2D& image,
                                                              int class_index) const {
    require_input_shape(image);
    check_class(class_index);
    const Activations a = forward(params_, image);
    Field2D g;
    backward(params_, a, image, prob_logit_jacobian_row(a.probs, class_index), nullptr, &g);
    return {Prediction{a.probs}, std::move(g)};
}

double ConvNet::loss_and_accumulate(const Field2D& image, int label, ClassifierParams& grad) const {
    require_input_shape(image);
    check_class(label);
    const Activations a = forward(params_, image);
    const double zmax = std::max(a.logits[0], a.logits[1]);
    double lse = 0.0;
    for (double z : a.logits) lse += std::exp(z - zmax);
    const double loss = zmax + std::log(lse) - a.logits[label];
    std::array<double, kClasses> d{};
    for (int c = 0; c < kClasses; ++c) d[c] = a.probs[c] - (c == label ? 1.0 : 0.0);
    backward(params_, a, image, d, &grad, nullptr);
    return loss;
}

TrainReport train(std::span<const Field2D> images, std::span<const int> labels,
                  const TrainConfig& config) {
    if (images.empty()) throw std::invalid_argument("train: empty training set");
    if (images.size() != labels.size()) throw std::invalid_argument("train: labels misaligned");
    if (config.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (config.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(config.lr > 0.0)) throw std::invalid_argument("train: lr must be > 0");
    const int side = images.front().width();
    for (const Field2D& im : images) {
        if (im.width() != side || im.height() != side) {
            throw std::invalid_argument("train: images must be square and equally sized");
        }
    }

    TrainReport report;
    ClassifierParams params = ClassifierParams::random(side, config.seed);
    {
        ClassifierParams scratch = ClassifierParams::zeros(side);
        const ConvNet net(params);
        double total = 0.0;
        for (std::size_t i = 0; i < images.size(); ++i) {
            total += net.loss_and_accumulate(images[i], labels[i], scratch);
        }
        report.initial_loss = total / static_cast<double>(images.size());
    }

    ClassifierParams m = ClassifierParams::zeros(side);
    ClassifierParams v = ClassifierParams::zeros(side);
    const AdamHyper hyper{config.lr, 0.9, 0.999, 1e-8};
    std::size_t step = 0;
    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix64(config.seed ^ 0x9fb21c651e98df25ULL));

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            ClassifierParams grad = ClassifierParams::zeros(side);
            const ConvNet net(params);
            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                batch_loss += net.loss_and_accumulate(images[order[k]], labels[order[k]], grad);
            }
            if (!std::isfinite(batch_loss)) {
                throw std::runtime_error("train: non-finite loss in epoch " +
                                         std::to_string(epoch + 1));
            }
            epoch_loss += batch_loss;
            const double scale = 1.0 / static_cast<double>(end - start);
            ++step;
            auto pt = params.tensors();
            auto gt = grad.tensors();
            auto mt = m.tensors();
            auto vt = v.tensors();
            for (std::size_t t = 0; t < pt.size(); ++t) {
                for (double& g : *gt[t].data) g *= scale;
                adam_update(*mt[t].data, *vt[t].data, *gt[t].data, *pt[t].data, step, hyper);
            }
        }
        report.epoch_losses.push_back(epoch_loss / static_cast<double>(images.size()));
    }
    report.params = std::move(params);
    return report;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: misaligned inputs");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double positive_rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                positive_rank_sum += avg_rank;
                ++positives;
            }
        }
        i = j;
    }
    const std::size_t negatives = scores.size() - positives;
    if (positives == 0 || negatives == 0) {
        throw std::invalid_argument("roc_auc: both classes must be present");
    }
    const double np = static_cast<double>(positives);
    return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(negatives));
}

double roc_auc(const Classifier& model, std::span<const Field2D> images,
               std::span<const int> labels) {
    std::vector<double> scores;
    scores.reserve(images.size());
    for (const Field2D& im : images) scores.push_back(model.predict(im).probs[1]);
    return roc_auc(scores, labels);
}

json to_json(const Checkpoint& checkpoint) {
    ClassifierParams p = checkpoint.params;
    json tensors = json::object();
    for (const auto& t : p.tensors()) {
        tensors[t.name] = {{"shape", t.shape}, {"data", *t.data}};
    }
    return json{{"arch",
                 {{"side", p.side},
                  {"channels", {1, kConv1Channels, kConv2Channels}},
                  {"kernel", kKernel},
                  {"classes", kClasses}}},
                {"tensors", std::move(tensors)},
                {"seed", checkpoint.seed},
                {"epochs", checkpoint.epochs}};
}

Checkpoint checkpoint_from_json(const json& j) {
    const json& arch = j.at("arch");
    if (arch.at("channels") != json{1, kConv1Channels, kConv2Channels} ||
        arch.at("kernel").get<int>() != kKernel || arch.at("classes").get<int>() != kClasses) {
        throw std::runtime_error("checkpoint: unsupported architecture");
    }
    Checkpoint c;
    c.params = ClassifierParams::zeros(arch.at("side").get<int>());
    for (auto& t : c.params.tensors()) {
        const json& entry = j.at("tensors").at(t.name);
        if (entry.at("shape").get<std::vector<int>>() != t.shape) {
            throw std::runtime_error(std::string("checkpoint: shape mismatch for ") + t.name);
        }
        auto data = entry.at("data").get<std::vector<double>>();
        if (data.size() != t.data->size()) {
            throw std::runtime_error(std::string("checkpoint: size mismatch for ") + t.name);
        }
        *t.data = std::move(data);
    }
    c.seed = j.at("seed").get<std::uint64_t>();
    c.epochs = j.at("epochs").get<int>();
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    write_file_atomic(path, to_json(checkpoint).dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    try {
        return checkpoint_from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

} // namespace ape::model
