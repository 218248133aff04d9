#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ape/field.hpp"
#include "json.hpp"

namespace ape::model {

inline constexpr int kClasses = 2;
inline constexpr int kConv1Channels = 8;
inline constexpr int kConv2Channels = 16;
inline constexpr int kKernel = 3;

/// Softmax output over {non-malignant, malignant}.
struct Prediction {
    std::array<double, kClasses> probs{0.5, 0.5};
};

/// A differentiable image classifier with frozen weights.
class Classifier {
public:
    virtual ~Classifier() = default;

    virtual int input_width() const = 0;
    virtual int input_height() const = 0;

    virtual Prediction predict(const Field2D& image) const = 0;

    /// d probs[class_index] / d image.
    virtual Field2D input_gradient(const Field2D& image, int class_index) const = 0;

    /// predict and input_gradient from a single forward pass.
    virtual std::pair<Prediction, Field2D> predict_with_gradient(const Field2D& image,
                                                                 int class_index) const {
        return {predict(image), input_gradient(image, class_index)};
    }

    /// Throws std::invalid_argument when `image` does not fit the input layer.
    void require_input_shape(const Field2D& image) const;
};

/// Weights of the built-in network:
///   conv3x3(1->8) relu maxpool2  conv3x3(8->16) relu maxpool2  dense(->2) softmax
/// Convolutions use stride 1 and zero padding 1. Kernels are stored
/// [out][in][ky][kx]; dense weights [class][channel][y][x].
struct ClassifierParams {
    int side = 0;
    std::vector<double> conv1_w, conv1_b;
    std::vector<double> conv2_w, conv2_b;
    std::vector<double> dense_w, dense_b;

    static ClassifierParams zeros(int side);
    /// He-normal kernels, zero biases.
    static ClassifierParams random(int side, std::uint64_t seed);

    int pooled_side() const { return side / 4; }
    std::size_t parameter_count() const;

    struct TensorRef {
        const char* name;
        std::vector<int> shape;
        std::vector<double>* data;
    };
    std::vector<TensorRef> tensors();
    std::vector<std::span<const double>> tensors() const;

    bool all_finite() const;
    friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

class ConvNet final : public Classifier {
public:
    explicit ConvNet(ClassifierParams params);

    int input_width() const override { return params_.side; }
    int input_height() const override { return params_.side; }

    Prediction predict(const Field2D& image) const override;
    Field2D input_gradient(const Field2D& image, int class_index) const override;
    std::pair<Prediction, Field2D> predict_with_gradient(const Field2D& image,
                                                         int class_index) const override;

    /// Cross-entropy against `label`; adds d loss / d params into `grad`.
    double loss_and_accumulate(const Field2D& image, int label, ClassifierParams& grad) const;

    const ClassifierParams& params() const { return params_; }

private:
    ClassifierParams params_;
};

struct TrainConfig {
    int epochs = 20;
    double lr = 2e-3;
    std::uint64_t seed = 42;
    int batch_size = 32;
};

struct TrainReport {
    ClassifierParams params;
    double initial_loss = 0.0;          // mean cross-entropy before any update
    std::vector<double> epoch_losses;   // mean minibatch cross-entropy per epoch
};

/// Mini-batch Adam on mean cross-entropy. Only images and labels are seen.
/// Deterministic for a fixed seed. Throws std::invalid_argument on an empty
/// set and std::runtime_error on a non-finite loss.
TrainReport train(std::span<const Field2D> images, std::span<const int> labels,
                  const TrainConfig& config);

/// Rank-based ROC-AUC (ties share averaged ranks). Throws if only one class
/// is present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);
double roc_auc(const Classifier& model, std::span<const Field2D> images,
               std::span<const int> labels);

struct Checkpoint {
    ClassifierParams params;
    std::uint64_t seed = 0;
    int epochs = 0;
};

nlohmann::json to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace ape::model
