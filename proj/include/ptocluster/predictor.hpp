#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace ptoc {

struct PredictorShape {
  int n = 35;          // AOIs
  int window = 10;     // history weeks per sample
  int gcn_width = 10;  // graph convolution output channels
  int filters = 8;     // 3x3 convolution filters
  int fc1 = 1024;
  int fc2 = 512;

  int flat() const { return filters * n * gcn_width; }
  void validate() const;
  bool operator==(const PredictorShape&) const = default;
};

// Named, contiguous view of one parameter tensor (column-major storage).
template <typename T>
struct BasicTensorRef {
  std::string_view name;
  T* data;
  Eigen::Index rows;
  Eigen::Index cols;

  Eigen::Index size() const { return rows * cols; }
  T& at(Eigen::Index r, Eigen::Index c) const { return data[c * rows + r]; }
};

using TensorRef = BasicTensorRef<double>;
using ConstTensorRef = BasicTensorRef<const double>;

struct ParamTensors {
  Eigen::MatrixXd gcn_w;   // window x gcn_width
  Eigen::VectorXd gcn_b;   // gcn_width
  Eigen::MatrixXd conv_w;  // filters x 9, column = 3 * dy + dx
  Eigen::VectorXd conv_b;  // filters
  Eigen::MatrixXd fc1_w;   // fc1 x flat
  Eigen::VectorXd fc1_b;
  Eigen::MatrixXd fc2_w;   // fc2 x fc1
  Eigen::VectorXd fc2_b;
  Eigen::MatrixXd fc3_w;   // n x fc2
  Eigen::VectorXd fc3_b;

  static constexpr std::size_t kCount = 10;
  static ParamTensors zeros(const PredictorShape& shape);

  std::array<TensorRef, kCount> tensors();
  std::array<ConstTensorRef, kCount> tensors() const;
  void set_zero();
  ParamTensors& operator+=(const ParamTensors& other);
  bool operator==(const ParamTensors& other) const;
};

// theta: all trainable weights plus gradient buffers of matching shape.
// Inputs are divided by input_scale before the first layer and outputs are
// multiplied by it, so the network itself works on O(1) values.
struct PredictorParams {
  PredictorShape shape;
  double input_scale = 1.0;
  ParamTensors value;
  ParamTensors grad;

  void zero_grad() { grad.set_zero(); }
};

// Xavier-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
PredictorParams init_params(const PredictorShape& shape, std::uint64_t seed);

// Activations of one (batched) forward pass. backward() consumes it.
class ForwardTape {
 public:
  int batch() const { return static_cast<int>(propagated_.size()); }
  bool consumed() const { return consumed_; }

  // ReLU activity pattern of every hidden unit, used to detect kink
  // crossings in finite-difference checks.
  std::vector<bool> activity_pattern() const;

 private:
  friend struct PredictorKernels;

  std::vector<Eigen::MatrixXd> propagated_;  // A_hat * X / scale, n x window
  std::vector<Eigen::MatrixXd> gcn_pre_;     // n x gcn_width
  std::vector<Eigen::MatrixXd> gcn_out_;     // n x gcn_width
  Eigen::MatrixXd conv_pre_;                 // flat x batch
  Eigen::MatrixXd conv_out_;
  Eigen::MatrixXd fc1_pre_;                  // fc1 x batch
  Eigen::MatrixXd fc1_out_;
  Eigen::MatrixXd fc2_pre_;
  Eigen::MatrixXd fc2_out_;
  bool consumed_ = false;
};

struct BatchForward {
  Eigen::MatrixXd y;  // n x batch
  ForwardTape tape;
};

struct SampleForward {
  Eigen::VectorXd y;
  ForwardTape tape;
};

SampleForward forward(const PredictorParams& params, const Eigen::MatrixXd& a_hat,
                      const Eigen::MatrixXd& x);
BatchForward forward_batch(const PredictorParams& params, const Eigen::MatrixXd& a_hat,
                           std::span<const Eigen::MatrixXd> xs);

// Forward without recording activations.
Eigen::MatrixXd predict_batch(const PredictorParams& params, const Eigen::MatrixXd& a_hat,
                              std::span<const Eigen::MatrixXd> xs);

// Accumulates dL/dtheta into params.grad given dL/dy (n x batch).
void backward(PredictorParams& params, ForwardTape& tape, const Eigen::MatrixXd& g_y);

double mse(const Eigen::VectorXd& y, const Eigen::VectorXd& target);

struct AdamState {
  ParamTensors m;
  ParamTensors v;
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const PredictorParams& params, double lr);
};

// One Adam update using params.grad.
void adam_step(PredictorParams& params, AdamState& state);

}  // namespace ptoc
