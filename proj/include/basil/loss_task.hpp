#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "basil/dataset.hpp"
#include "basil/model_vector.hpp"

namespace basil {

enum class TaskKind { quadratic_convex, softmax_regression, mlp_3fc };

std::string to_string(TaskKind k);
TaskKind parse_task_kind(const std::string& s);

class LossTask {
public:
    virtual ~LossTask() = default;

    virtual TaskKind kind() const = 0;
    virtual const Shape& shape() const = 0;
    // Exact for the quadratic task, a supplied bound otherwise.
    virtual double smoothness() const = 0;
    virtual int label_count() const = 0;
    virtual std::size_t input_dim() const = 0;

    virtual ModelVector initial_model(std::uint64_t seed) const = 0;

    // Mean per-sample loss. Callers go through evaluate_loss for validation.
    virtual double loss(const ModelVector& model, std::span<const SampleRef> batch) const = 0;
    // Returns the mean loss and writes the mean gradient into `grad`.
    virtual double loss_and_gradient(const ModelVector& model, std::span<const SampleRef> batch,
                                     ModelVector& grad) const = 0;
    // Predicted class, or -1 for tasks without labels.
    virtual int predict(const ModelVector& model, std::span<const double> x) const;
};

// f(x) = mean_j 1/2 sum_k h_k (x_k - a_jk)^2 where a_j are the sample features.
class QuadraticTask final : public LossTask {
public:
    explicit QuadraticTask(std::vector<double> curvature);

    TaskKind kind() const override { return TaskKind::quadratic_convex; }
    const Shape& shape() const override { return shape_; }
    double smoothness() const override;
    int label_count() const override { return 1; }
    std::size_t input_dim() const override { return h_.size(); }
    ModelVector initial_model(std::uint64_t seed) const override;
    double loss(const ModelVector& model, std::span<const SampleRef> batch) const override;
    double loss_and_gradient(const ModelVector& model, std::span<const SampleRef> batch,
                             ModelVector& grad) const override;

    // Minimiser over the given samples (coordinate-wise mean of targets).
    ModelVector optimum(std::span<const SampleRef> batch) const;
    const std::vector<double>& curvature() const { return h_; }

private:
    std::vector<double> h_;
    Shape shape_;
};

// Multinomial logistic regression: logits = W x + b with W stored {C, D}.
class SoftmaxRegression final : public LossTask {
public:
    SoftmaxRegression(std::size_t input_dim, int classes, double smoothness_bound = 0.0);

    TaskKind kind() const override { return TaskKind::softmax_regression; }
    const Shape& shape() const override { return shape_; }
    double smoothness() const override { return smoothness_; }
    int label_count() const override { return classes_; }
    std::size_t input_dim() const override { return dim_; }
    ModelVector initial_model(std::uint64_t seed) const override;  // zeros
    double loss(const ModelVector& model, std::span<const SampleRef> batch) const override;
    double loss_and_gradient(const ModelVector& model, std::span<const SampleRef> batch,
                             ModelVector& grad) const override;
    int predict(const ModelVector& model, std::span<const double> x) const override;

private:
    std::size_t dim_;
    int classes_;
    double smoothness_;
    Shape shape_;
};

// Three fully connected layers with ReLU between them. Weights are stored
// {fan_in, fan_out} row-major.
class Mlp3Fc final : public LossTask {
public:
    Mlp3Fc(std::size_t input_dim, int classes, std::size_t hidden1 = 100, std::size_t hidden2 = 100,
           double smoothness_bound = 0.0);

    TaskKind kind() const override { return TaskKind::mlp_3fc; }
    const Shape& shape() const override { return shape_; }
    double smoothness() const override { return smoothness_; }
    int label_count() const override { return classes_; }
    std::size_t input_dim() const override { return dim_; }
    // Biases 0, weights uniform in +-1/sqrt(fan_in).
    ModelVector initial_model(std::uint64_t seed) const override;
    double loss(const ModelVector& model, std::span<const SampleRef> batch) const override;
    double loss_and_gradient(const ModelVector& model, std::span<const SampleRef> batch,
                             ModelVector& grad) const override;
    int predict(const ModelVector& model, std::span<const double> x) const override;

private:
    // Forward pass for one sample; fills the activations and returns logits.
    void forward(const ModelVector& m, std::span<const double> x, std::vector<double>& z1, std::vector<double>& z2,
                 std::vector<double>& logits) const;

    std::size_t dim_, h1_, h2_;
    int classes_;
    double smoothness_;
    Shape shape_;
};

struct TaskSpec {
    TaskKind kind = TaskKind::softmax_regression;
    std::size_t input_dim = 0;
    int classes = 0;
    std::size_t hidden1 = 100;
    std::size_t hidden2 = 100;
    std::vector<double> curvature;  // quadratic only
    double smoothness = 0.0;        // optional bound for the learned tasks
};

std::shared_ptr<const LossTask> make_task(const TaskSpec& spec);

// Validated entry points used by every protocol.
double evaluate_loss(const ModelVector& model, const LossTask& task, std::span<const SampleRef> batch);
ModelVector gradient(const ModelVector& model, const LossTask& task, std::span<const SampleRef> batch);
ModelVector sgd_step(const ModelVector& model, const LossTask& task, std::span<const SampleRef> batch, double lr);
// Fraction of correctly classified samples; NaN for tasks without labels.
double accuracy(const ModelVector& model, const LossTask& task, std::span<const SampleRef> batch);

}  // namespace basil
