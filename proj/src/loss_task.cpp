#include "basil/loss_task.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "basil/errors.hpp"
#include "basil/random.hpp"

namespace basil {

std::string to_string(TaskKind k) {
    switch (k) {
        case TaskKind::quadratic_convex: return "quadratic-convex";
        case TaskKind::softmax_regression: return "softmax-regression";
        case TaskKind::mlp_3fc: return "mlp-3fc";
    }
    return "?";
}

TaskKind parse_task_kind(const std::string& s) {
    if (s == "quadratic-convex" || s == "quadratic") return TaskKind::quadratic_convex;
    if (s == "softmax-regression" || s == "softmax") return TaskKind::softmax_regression;
    if (s == "mlp-3fc" || s == "mlp") return TaskKind::mlp_3fc;
    throw ConfigError("unknown task kind '" + s + "'");
}

int LossTask::predict(const ModelVector&, std::span<const double>) const { return -1; }

namespace {

// log(sum exp(v)) and softmax probabilities written into p.
double log_softmax(std::span<const double> logits, std::vector<double>& p) {
    double mx = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    p.resize(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) {
        p[c] = std::exp(logits[c] - mx);
        s += p[c];
    }
    for (auto& v : p) v /= s;
    return mx + std::log(s);
}

int argmax(std::span<const double> v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

// ---- quadratic ----

QuadraticTask::QuadraticTask(std::vector<double> curvature) : h_(std::move(curvature)) {
    if (h_.empty()) throw ConfigError("quadratic task needs at least one coordinate");
    for (double v : h_)
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("quadratic curvature must be positive and finite");
    shape_ = {{"x", {h_.size()}}};
}

double QuadraticTask::smoothness() const { return *std::max_element(h_.begin(), h_.end()); }

ModelVector QuadraticTask::initial_model(std::uint64_t) const { return ModelVector(shape_); }

double QuadraticTask::loss(const ModelVector& model, std::span<const SampleRef> batch) const {
    double total = 0.0;
    for (const auto& s : batch)
        for (std::size_t k = 0; k < h_.size(); ++k) {
            double d = model[k] - s.x[k];
            total += 0.5 * h_[k] * d * d;
        }
    return total / static_cast<double>(batch.size());
}

double QuadraticTask::loss_and_gradient(const ModelVector& model, std::span<const SampleRef> batch,
                                        ModelVector& grad) const {
    grad = ModelVector(shape_);
    double total = 0.0;
    for (const auto& s : batch)
        for (std::size_t k = 0; k < h_.size(); ++k) {
            double d = model[k] - s.x[k];
            total += 0.5 * h_[k] * d * d;
            grad[k] += h_[k] * d;
        }
    double inv = 1.0 / static_cast<double>(batch.size());
    grad *= inv;
    return total * inv;
}

ModelVector QuadraticTask::optimum(std::span<const SampleRef> batch) const {
    if (batch.empty()) throw PreconditionError("optimum of an empty batch");
    ModelVector x(shape_);
    for (const auto& s : batch)
        for (std::size_t k = 0; k < h_.size(); ++k) x[k] += s.x[k];
    x *= 1.0 / static_cast<double>(batch.size());
    return x;
}

// ---- softmax regression ----

SoftmaxRegression::SoftmaxRegression(std::size_t input_dim, int classes, double smoothness_bound)
    : dim_(input_dim), classes_(classes), smoothness_(smoothness_bound > 0 ? smoothness_bound : 1.0) {
    if (input_dim == 0 || classes < 2) throw ConfigError("softmax regression needs input_dim >= 1 and classes >= 2");
    auto c = static_cast<std::size_t>(classes);
    shape_ = {{"weight", {c, dim_}}, {"bias", {c}}};
}

ModelVector SoftmaxRegression::initial_model(std::uint64_t) const { return ModelVector(shape_); }

double SoftmaxRegression::loss(const ModelVector& model, std::span<const SampleRef> batch) const {
    auto c = static_cast<std::size_t>(classes_);
    std::vector<double> logits(c), p;
    double total = 0.0;
    auto w = model.params();
    for (const auto& s : batch) {
        for (std::size_t k = 0; k < c; ++k) {
            double z = w[c * dim_ + k];
            const double* row = &w[k * dim_];
            for (std::size_t j = 0; j < dim_; ++j) z += row[j] * s.x[j];
            logits[k] = z;
        }
        total += log_softmax(logits, p) - logits[static_cast<std::size_t>(s.label)];
    }
    return total / static_cast<double>(batch.size());
}

double SoftmaxRegression::loss_and_gradient(const ModelVector& model, std::span<const SampleRef> batch,
                                            ModelVector& grad) const {
    auto c = static_cast<std::size_t>(classes_);
    grad = ModelVector(shape_);
    std::vector<double> logits(c), p;
    double total = 0.0;
    auto w = model.params();
    auto g = grad.params();
    for (const auto& s : batch) {
        for (std::size_t k = 0; k < c; ++k) {
            double z = w[c * dim_ + k];
            const double* row = &w[k * dim_];
            for (std::size_t j = 0; j < dim_; ++j) z += row[j] * s.x[j];
            logits[k] = z;
        }
        auto y = static_cast<std::size_t>(s.label);
        total += log_softmax(logits, p) - logits[y];
        p[y] -= 1.0;
        for (std::size_t k = 0; k < c; ++k) {
            double* grow = &g[k * dim_];
            for (std::size_t j = 0; j < dim_; ++j) grow[j] += p[k] * s.x[j];
            g[c * dim_ + k] += p[k];
        }
    }
    double inv = 1.0 / static_cast<double>(batch.size());
    grad *= inv;
    return total * inv;
}

int SoftmaxRegression::predict(const ModelVector& model, std::span<const double> x) const {
    auto c = static_cast<std::size_t>(classes_);
    std::vector<double> logits(c);
    auto w = model.params();
    for (std::size_t k = 0; k < c; ++k) {
        double z = w[c * dim_ + k];
        for (std::size_t j = 0; j < dim_; ++j) z += w[k * dim_ + j] * x[j];
        logits[k] = z;
    }
    return argmax(logits);
}

// ---- three-layer MLP ----

Mlp3Fc::Mlp3Fc(std::size_t input_dim, int classes, std::size_t hidden1, std::size_t hidden2, double smoothness_bound)
    : dim_(input_dim), h1_(hidden1), h2_(hidden2), classes_(classes),
      smoothness_(smoothness_bound > 0 ? smoothness_bound : 1.0) {
    if (input_dim == 0 || classes < 2 || hidden1 == 0 || hidden2 == 0)
        throw ConfigError("mlp-3fc needs positive layer widths and at least 2 classes");
    auto c = static_cast<std::size_t>(classes);
    shape_ = {{"fc1.weight", {dim_, h1_}}, {"fc1.bias", {h1_}},  {"fc2.weight", {h1_, h2_}},
              {"fc2.bias", {h2_}},         {"fc3.weight", {h2_, c}}, {"fc3.bias", {c}}};
}

ModelVector Mlp3Fc::initial_model(std::uint64_t seed) const {
    ModelVector m(shape_);
    Rng rng = make_rng(seed, Stream::init);
    for (std::size_t layer = 0; layer < shape_.size(); layer += 2) {
        double bound = 1.0 / std::sqrt(static_cast<double>(shape_[layer].dims[0]));
        for (double& v : m.layer(layer)) v = bound * (2.0 * uniform01(rng) - 1.0);
    }
    return m;
}

void Mlp3Fc::forward(const ModelVector& m, std::span<const double> x, std::vector<double>& z1,
                     std::vector<double>& z2, std::vector<double>& logits) const {
    auto c = static_cast<std::size_t>(classes_);
    auto w1 = m.layer(0), b1 = m.layer(1), w2 = m.layer(2), b2 = m.layer(3), w3 = m.layer(4), b3 = m.layer(5);
    z1.assign(b1.begin(), b1.end());
    for (std::size_t i = 0; i < dim_; ++i) {
        double xi = x[i];
        if (xi == 0.0) continue;
        const double* row = &w1[i * h1_];
        for (std::size_t o = 0; o < h1_; ++o) z1[o] += xi * row[o];
    }
    z2.assign(b2.begin(), b2.end());
    for (std::size_t i = 0; i < h1_; ++i) {
        double a = z1[i] > 0.0 ? z1[i] : 0.0;
        if (a == 0.0) continue;
        const double* row = &w2[i * h2_];
        for (std::size_t o = 0; o < h2_; ++o) z2[o] += a * row[o];
    }
    logits.assign(b3.begin(), b3.end());
    for (std::size_t i = 0; i < h2_; ++i) {
        double a = z2[i] > 0.0 ? z2[i] : 0.0;
        if (a == 0.0) continue;
        const double* row = &w3[i * c];
        for (std::size_t o = 0; o < c; ++o) logits[o] += a * row[o];
    }
}

double Mlp3Fc::loss(const ModelVector& model, std::span<const SampleRef> batch) const {
    std::vector<double> z1, z2, logits, p;
    double total = 0.0;
    for (const auto& s : batch) {
        forward(model, s.x, z1, z2, logits);
        total += log_softmax(logits, p) - logits[static_cast<std::size_t>(s.label)];
    }
    return total / static_cast<double>(batch.size());
}

double Mlp3Fc::loss_and_gradient(const ModelVector& model, std::span<const SampleRef> batch,
                                 ModelVector& grad) const {
    auto c = static_cast<std::size_t>(classes_);
    grad = ModelVector(shape_);
    auto w2 = model.layer(2), w3 = model.layer(4);
    auto gw1 = grad.layer(0), gb1 = grad.layer(1), gw2 = grad.layer(2), gb2 = grad.layer(3), gw3 = grad.layer(4),
         gb3 = grad.layer(5);
    std::vector<double> z1, z2, logits, p, d2(h2_), d1(h1_);
    double total = 0.0;
    for (const auto& s : batch) {
        forward(model, s.x, z1, z2, logits);
        auto y = static_cast<std::size_t>(s.label);
        total += log_softmax(logits, p) - logits[y];
        p[y] -= 1.0;  // dL/dlogits
        for (std::size_t o = 0; o < c; ++o) gb3[o] += p[o];
        for (std::size_t i = 0; i < h2_; ++i) {
            double a = z2[i] > 0.0 ? z2[i] : 0.0;
            const double* wrow = &w3[i * c];
            double* grow = &gw3[i * c];
            double back = 0.0;
            for (std::size_t o = 0; o < c; ++o) {
                grow[o] += a * p[o];
                back += wrow[o] * p[o];
            }
            d2[i] = z2[i] > 0.0 ? back : 0.0;
        }
        for (std::size_t o = 0; o < h2_; ++o) gb2[o] += d2[o];
        for (std::size_t i = 0; i < h1_; ++i) {
            double a = z1[i] > 0.0 ? z1[i] : 0.0;
            const double* wrow = &w2[i * h2_];
            double* grow = &gw2[i * h2_];
            double back = 0.0;
            for (std::size_t o = 0; o < h2_; ++o) {
                grow[o] += a * d2[o];
                back += wrow[o] * d2[o];
            }
            d1[i] = z1[i] > 0.0 ? back : 0.0;
        }
        for (std::size_t o = 0; o < h1_; ++o) gb1[o] += d1[o];
        for (std::size_t i = 0; i < dim_; ++i) {
            double xi = s.x[i];
            if (xi == 0.0) continue;
            double* grow = &gw1[i * h1_];
            for (std::size_t o = 0; o < h1_; ++o) grow[o] += xi * d1[o];
        }
    }
    double inv = 1.0 / static_cast<double>(batch.size());
    grad *= inv;
    return total * inv;
}

int Mlp3Fc::predict(const ModelVector& model, std::span<const double> x) const {
    std::vector<double> z1, z2, logits;
    forward(model, x, z1, z2, logits);
    return argmax(logits);
}

// ---- factory and validated entry points ----

std::shared_ptr<const LossTask> make_task(const TaskSpec& spec) {
    switch (spec.kind) {
        case TaskKind::quadratic_convex: {
            auto h = spec.curvature;
            if (h.empty()) h.assign(spec.input_dim, 1.0);
            return std::make_shared<QuadraticTask>(std::move(h));
        }
        case TaskKind::softmax_regression:
            return std::make_shared<SoftmaxRegression>(spec.input_dim, spec.classes, spec.smoothness);
        case TaskKind::mlp_3fc:
            return std::make_shared<Mlp3Fc>(spec.input_dim, spec.classes, spec.hidden1, spec.hidden2, spec.smoothness);
    }
    throw ConfigError("unknown task kind");
}

namespace {

void check_inputs(const ModelVector& model, const LossTask& task, std::span<const SampleRef> batch) {
    if (model.shape() != task.shape()) throw ConfigError("model shape does not match the task");
    if (batch.empty()) throw PreconditionError("batch must be nonempty");
    for (const auto& s : batch)
        if (s.x.size() != task.input_dim()) throw ConfigError("sample dimension does not match the task");
}

}  // namespace

double evaluate_loss(const ModelVector& model, const LossTask& task, std::span<const SampleRef> batch) {
    check_inputs(model, task, batch);
    return task.loss(model, batch);
}

ModelVector gradient(const ModelVector& model, const LossTask& task, std::span<const SampleRef> batch) {
    check_inputs(model, task, batch);
    ModelVector g;
    task.loss_and_gradient(model, batch, g);
    if (!g.all_finite()) throw NumericFault("non-finite gradient");
    return g;
}

ModelVector sgd_step(const ModelVector& model, const LossTask& task, std::span<const SampleRef> batch, double lr) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and nonnegative");
    ModelVector g = gradient(model, task, batch);
    ModelVector out = model;
    if (lr != 0.0) out.axpy(-lr, g);
    return out;
}

double accuracy(const ModelVector& model, const LossTask& task, std::span<const SampleRef> batch) {
    if (task.kind() == TaskKind::quadratic_convex) return std::numeric_limits<double>::quiet_NaN();
    check_inputs(model, task, batch);
    std::size_t hit = 0;
    for (const auto& s : batch)
        if (task.predict(model, s.x) == s.label) ++hit;
    return static_cast<double>(hit) / static_cast<double>(batch.size());
}

}  // namespace basil
