#include "ptocluster/predictor.hpp"

#include "ptocluster/errors.hpp"

#include <cmath>
#include <random>
#include <string>
#include <utility>

namespace ptoc {

void PredictorShape::validate() const {
  if (n < 1 || window < 1 || gcn_width < 1 || filters < 1 || fc1 < 1 || fc2 < 1) {
    throw ShapeMismatch("predictor dimensions must be positive");
  }
}

ParamTensors ParamTensors::zeros(const PredictorShape& s) {
  ParamTensors p;
  p.gcn_w = Eigen::MatrixXd::Zero(s.window, s.gcn_width);
  p.gcn_b = Eigen::VectorXd::Zero(s.gcn_width);
  p.conv_w = Eigen::MatrixXd::Zero(s.filters, 9);
  p.conv_b = Eigen::VectorXd::Zero(s.filters);
  p.fc1_w = Eigen::MatrixXd::Zero(s.fc1, s.flat());
  p.fc1_b = Eigen::VectorXd::Zero(s.fc1);
  p.fc2_w = Eigen::MatrixXd::Zero(s.fc2, s.fc1);
  p.fc2_b = Eigen::VectorXd::Zero(s.fc2);
  p.fc3_w = Eigen::MatrixXd::Zero(s.n, s.fc2);
  p.fc3_b = Eigen::VectorXd::Zero(s.n);
  return p;
}

namespace {

template <typename Ref, typename Self>
std::array<Ref, ParamTensors::kCount> tensor_refs(Self& p) {
  auto ref = [](std::string_view name, auto& m) {
    return Ref{name, m.data(), m.rows(), m.cols()};
  };
  return {ref("gcn.weight", p.gcn_w), ref("gcn.bias", p.gcn_b),
          ref("conv.weight", p.conv_w), ref("conv.bias", p.conv_b),
          ref("fc1.weight", p.fc1_w), ref("fc1.bias", p.fc1_b),
          ref("fc2.weight", p.fc2_w), ref("fc2.bias", p.fc2_b),
          ref("fc3.weight", p.fc3_w), ref("fc3.bias", p.fc3_b)};
}

}  // namespace

std::array<TensorRef, ParamTensors::kCount> ParamTensors::tensors() {
  return tensor_refs<TensorRef>(*this);
}

std::array<ConstTensorRef, ParamTensors::kCount> ParamTensors::tensors() const {
  return tensor_refs<ConstTensorRef>(*this);
}

void ParamTensors::set_zero() {
  for (auto& t : tensors()) std::fill(t.data, t.data + t.size(), 0.0);
}

ParamTensors& ParamTensors::operator+=(const ParamTensors& other) {
  auto mine = tensors();
  auto theirs = other.tensors();
  for (std::size_t k = 0; k < kCount; ++k) {
    if (mine[k].size() != theirs[k].size()) throw ShapeMismatch("parameter shapes differ");
    for (Eigen::Index i = 0; i < mine[k].size(); ++i) mine[k].data[i] += theirs[k].data[i];
  }
  return *this;
}

bool ParamTensors::operator==(const ParamTensors& other) const {
  auto mine = tensors();
  auto theirs = other.tensors();
  for (std::size_t k = 0; k < kCount; ++k) {
    if (mine[k].rows != theirs[k].rows || mine[k].cols != theirs[k].cols) return false;
    for (Eigen::Index i = 0; i < mine[k].size(); ++i) {
      if (mine[k].data[i] != theirs[k].data[i]) return false;
    }
  }
  return true;
}

PredictorParams init_params(const PredictorShape& shape, std::uint64_t seed) {
  shape.validate();
  PredictorParams p{shape, 1.0, ParamTensors::zeros(shape), ParamTensors::zeros(shape)};
  std::mt19937_64 rng(seed);
  auto xavier = [&rng](Eigen::MatrixXd& w, double fan_in, double fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  };
  xavier(p.value.gcn_w, shape.window, shape.gcn_width);
  xavier(p.value.conv_w, 9.0, 9.0 * shape.filters);
  xavier(p.value.fc1_w, shape.flat(), shape.fc1);
  xavier(p.value.fc2_w, shape.fc1, shape.fc2);
  xavier(p.value.fc3_w, shape.fc2, shape.n);
  return p;
}

std::vector<bool> ForwardTape::activity_pattern() const {
  std::vector<bool> out;
  auto push = [&out](const auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data()[i] > 0.0);
  };
  for (const auto& m : gcn_pre_) push(m);
  push(conv_pre_);
  push(fc1_pre_);
  push(fc2_pre_);
  return out;
}

struct PredictorKernels {
  static void check_shapes(const PredictorParams& params, const Eigen::MatrixXd& a_hat,
                           std::span<const Eigen::MatrixXd> xs) {
    const auto& s = params.shape;
    if (a_hat.rows() != s.n || a_hat.cols() != s.n) {
      throw ShapeMismatch("normalized adjacency must be " + std::to_string(s.n) + "x" +
                          std::to_string(s.n));
    }
    for (const auto& x : xs) {
      if (x.rows() != s.n || x.cols() != s.window) {
        throw ShapeMismatch("history window must be " + std::to_string(s.n) + "x" +
                            std::to_string(s.window));
      }
    }
    if (xs.empty()) throw ShapeMismatch("empty batch");
  }

  // Single-channel n x k image, zero "same" padding, cross-correlation.
  static void conv_forward(const Eigen::MatrixXd& img, const ParamTensors& w, int filters,
                           Eigen::Ref<Eigen::VectorXd> out) {
    const auto rows = img.rows();
    const auto cols = img.cols();
    for (int f = 0; f < filters; ++f) {
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
          double acc = w.conv_b(f);
          for (int dy = 0; dy < 3; ++dy) {
            const auto rr = r + dy - 1;
            if (rr < 0 || rr >= rows) continue;
            for (int dx = 0; dx < 3; ++dx) {
              const auto cc = c + dx - 1;
              if (cc < 0 || cc >= cols) continue;
              acc += w.conv_w(f, 3 * dy + dx) * img(rr, cc);
            }
          }
          out(f * rows * cols + r * cols + c) = acc;
        }
      }
    }
  }

  static BatchForward run(const PredictorParams& params, const Eigen::MatrixXd& a_hat,
                          std::span<const Eigen::MatrixXd> xs) {
    check_shapes(params, a_hat, xs);
    const auto& s = params.shape;
    const auto& w = params.value;
    const int batch = static_cast<int>(xs.size());
    ForwardTape tape;
    tape.conv_pre_.resize(s.flat(), batch);

    for (int b = 0; b < batch; ++b) {
      Eigen::MatrixXd propagated = a_hat * xs[b] / params.input_scale;
      Eigen::MatrixXd pre = propagated * w.gcn_w;
      pre.rowwise() += w.gcn_b.transpose();
      Eigen::MatrixXd out = pre.cwiseMax(0.0);
      conv_forward(out, w, s.filters, tape.conv_pre_.col(b));
      tape.propagated_.push_back(std::move(propagated));
      tape.gcn_pre_.push_back(std::move(pre));
      tape.gcn_out_.push_back(std::move(out));
    }
    tape.conv_out_ = tape.conv_pre_.cwiseMax(0.0);

    tape.fc1_pre_.noalias() = w.fc1_w * tape.conv_out_;
    tape.fc1_pre_.colwise() += w.fc1_b;
    tape.fc1_out_ = tape.fc1_pre_.cwiseMax(0.0);
    tape.fc2_pre_.noalias() = w.fc2_w * tape.fc1_out_;
    tape.fc2_pre_.colwise() += w.fc2_b;
    tape.fc2_out_ = tape.fc2_pre_.cwiseMax(0.0);

    Eigen::MatrixXd y = w.fc3_w * tape.fc2_out_;
    y.colwise() += w.fc3_b;
    y *= params.input_scale;
    return {std::move(y), std::move(tape)};
  }

  static void reverse(PredictorParams& params, ForwardTape& tape, const Eigen::MatrixXd& g_y) {
    if (tape.consumed_) throw TapeReused("forward tape already consumed by a backward pass");
    const auto& s = params.shape;
    if (g_y.rows() != s.n || g_y.cols() != tape.batch()) {
      throw ShapeMismatch("upstream gradient must be n x batch");
    }
    tape.consumed_ = true;
    const auto& w = params.value;
    auto& g = params.grad;
    auto relu_mask = [](const Eigen::MatrixXd& pre) {
      return (pre.array() > 0.0).cast<double>().matrix();
    };

    const Eigen::MatrixXd d3 = g_y * params.input_scale;
    g.fc3_w.noalias() += d3 * tape.fc2_out_.transpose();
    g.fc3_b += d3.rowwise().sum();

    const Eigen::MatrixXd d2 = (w.fc3_w.transpose() * d3).cwiseProduct(relu_mask(tape.fc2_pre_));
    g.fc2_w.noalias() += d2 * tape.fc1_out_.transpose();
    g.fc2_b += d2.rowwise().sum();

    const Eigen::MatrixXd d1 = (w.fc2_w.transpose() * d2).cwiseProduct(relu_mask(tape.fc1_pre_));
    g.fc1_w.noalias() += d1 * tape.conv_out_.transpose();
    g.fc1_b += d1.rowwise().sum();

    const Eigen::MatrixXd d0 =
        (w.fc1_w.transpose() * d1).cwiseProduct(relu_mask(tape.conv_pre_));

    const Eigen::Index rows = s.n;
    const Eigen::Index cols = s.gcn_width;
    for (int b = 0; b < tape.batch(); ++b) {
      const auto& img = tape.gcn_out_[b];
      Eigen::MatrixXd d_img = Eigen::MatrixXd::Zero(rows, cols);
      for (int f = 0; f < s.filters; ++f) {
        for (Eigen::Index r = 0; r < rows; ++r) {
          for (Eigen::Index c = 0; c < cols; ++c) {
            const double go = d0(f * rows * cols + r * cols + c, b);
            if (go == 0.0) continue;
            g.conv_b(f) += go;
            for (int dy = 0; dy < 3; ++dy) {
              const auto rr = r + dy - 1;
              if (rr < 0 || rr >= rows) continue;
              for (int dx = 0; dx < 3; ++dx) {
                const auto cc = c + dx - 1;
                if (cc < 0 || cc >= cols) continue;
                g.conv_w(f, 3 * dy + dx) += go * img(rr, cc);
                d_img(rr, cc) += go * w.conv_w(f, 3 * dy + dx);
              }
            }
          }
        }
      }
      const Eigen::MatrixXd d_pre = d_img.cwiseProduct(relu_mask(tape.gcn_pre_[b]));
      g.gcn_w.noalias() += tape.propagated_[b].transpose() * d_pre;
      g.gcn_b += d_pre.colwise().sum().transpose();
    }
  }
};

BatchForward forward_batch(const PredictorParams& params, const Eigen::MatrixXd& a_hat,
                           std::span<const Eigen::MatrixXd> xs) {
  return PredictorKernels::run(params, a_hat, xs);
}

SampleForward forward(const PredictorParams& params, const Eigen::MatrixXd& a_hat,
                      const Eigen::MatrixXd& x) {
  auto out = PredictorKernels::run(params, a_hat, std::span<const Eigen::MatrixXd>(&x, 1));
  return {out.y.col(0), std::move(out.tape)};
}

Eigen::MatrixXd predict_batch(const PredictorParams& params, const Eigen::MatrixXd& a_hat,
                              std::span<const Eigen::MatrixXd> xs) {
  return PredictorKernels::run(params, a_hat, xs).y;
}

void backward(PredictorParams& params, ForwardTape& tape, const Eigen::MatrixXd& g_y) {
  PredictorKernels::reverse(params, tape, g_y);
}

double mse(const Eigen::VectorXd& y, const Eigen::VectorXd& target) {
  if (y.size() != target.size()) throw ShapeMismatch("mse: length mismatch");
  if (y.size() == 0) return 0.0;
  return (y - target).squaredNorm() / static_cast<double>(y.size());
}

AdamState AdamState::for_params(const PredictorParams& params, double lr) {
  AdamState st;
  st.m = ParamTensors::zeros(params.shape);
  st.v = ParamTensors::zeros(params.shape);
  st.lr = lr;
  return st;
}

void adam_step(PredictorParams& params, AdamState& st) {
  ++st.step;
  const double t = static_cast<double>(st.step);
  const double bc1 = 1.0 - std::pow(st.beta1, t);
  const double bc2 = 1.0 - std::pow(st.beta2, t);
  auto values = params.value.tensors();
  auto grads = std::as_const(params.grad).tensors();
  auto ms = st.m.tensors();
  auto vs = st.v.tensors();
  for (std::size_t k = 0; k < ParamTensors::kCount; ++k) {
    if (grads[k].size() != values[k].size()) throw ShapeMismatch("gradient shape mismatch");
    const auto len = values[k].size();
    Eigen::Map<const Eigen::ArrayXd> g(grads[k].data, len);
    Eigen::Map<Eigen::ArrayXd> m(ms[k].data, len);
    Eigen::Map<Eigen::ArrayXd> v(vs[k].data, len);
    Eigen::Map<Eigen::ArrayXd> w(values[k].data, len);
    m = st.beta1 * m + (1.0 - st.beta1) * g;
    v = st.beta2 * v + (1.0 - st.beta2) * g.square();
    w -= st.lr * (m / bc1) / ((v / bc2).sqrt() + st.eps);
  }
}

}  // namespace ptoc
