#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grunt/common.hpp"

namespace grunt {

enum class Architecture { lstm_rnn, crnn };
std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view s);

struct ConvBlock {
  int filters = 0;
  int kernel = 0;
  int pool = 2;
  double dropout = 0.5;

  bool operator==(const ConvBlock&) const = default;
};

struct NetConfig {
  Architecture architecture = Architecture::crnn;
  int time_steps = 0;  // input T
  int features = 0;    // input D (conv input channels)
  std::vector<ConvBlock> conv_blocks;
  int lstm_hidden = 64;
  int lstm_layers = 2;
  bool bidirectional = true;
  int n_classes = 2;

  /// Throws ArgumentError when the invariants of the architecture fail.
  void validate() const;
  /// Time steps reaching the recurrent stack.
  int recurrent_steps() const;

  bool operator==(const NetConfig&) const = default;
};

/// Input families with their published convolution stacks.
enum class SequenceFeature { mfcc, spectrogram, lld };

/// CRNN: filters 10/20/40 with kernels 6/8/10 (MFCC, spectrogram) or
/// filters 30/30/40 with kernels 10/8/10 (LLD); bidirectional LSTMs.
NetConfig crnn_config(SequenceFeature feature, int time_steps, int features, int lstm_hidden = 64);
/// Two stacked unidirectional LSTMs on raw frames.
NetConfig lstm_rnn_config(int time_steps, int features, int lstm_hidden = 64);

/// Length after a 'same'-padded convolution and a non-overlapping max pool.
inline int pooled_length(int t, int pool) { return t / pool; }

struct TensorSlot {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;
};

/// All weights and biases of one network, stored contiguously so that the
/// parameter vector, its gradient and optimizer state share one layout.
class NetParams {
 public:
  NetParams() = default;
  explicit NetParams(const NetConfig& config);

  const NetConfig& config() const { return config_; }
  const std::vector<TensorSlot>& slots() const { return slots_; }
  Eigen::Index size() const { return data_.size(); }

  Vector& flat() { return data_; }
  const Vector& flat() const { return data_; }

  Eigen::Map<Eigen::MatrixXd> tensor(std::size_t i);
  Eigen::Map<const Eigen::MatrixXd> tensor(std::size_t i) const;
  std::size_t slot_index(std::string_view name) const;

  /// A zero-filled object of the same layout (used for gradients).
  NetParams zeros_like() const;

 private:
  NetConfig config_;
  std::vector<TensorSlot> slots_;
  Vector data_;
};

/// Glorot-uniform conv and dense weights, uniform +-1/sqrt(H) recurrent
/// weights (input and hidden), zero biases except forget gates at +1.
NetParams net_init(const NetConfig& config, std::uint64_t seed);

enum class Mode { train, eval };

/// Activations kept by a train-mode forward pass for `net_backward`.
struct ForwardCache {
  struct Conv {
    Eigen::MatrixXd patches;    // T x (K * C_in), im2col of the zero-padded input
    Eigen::MatrixXd pre;        // T x F before ReLU
    std::vector<int> argmax;    // pooled T' x F, flattened row-major: source row
    Eigen::MatrixXd dropout;    // T' x F mask scaled by 1 / keep, empty in eval mode
    int in_rows = 0;
    int in_cols = 0;
  };
  struct Lstm {
    Eigen::MatrixXd input;   // T x in, in processing order
    Eigen::MatrixXd gates;   // T x 4H activated (i, f, g, o)
    Eigen::MatrixXd cells;   // (T + 1) x H, row 0 is the initial state
    Eigen::MatrixXd hidden;  // (T + 1) x H
  };
  bool valid = false;
  std::vector<Conv> conv;
  std::vector<std::vector<Lstm>> lstm;  // [layer][direction]
  Vector representation;
  Vector logits;
  Vector probs;
  /// Hash of ReLU on/off states and pooling choices.
  std::uint64_t signature = 0;
};

/// Class logits for one T x D input. With a cache, records what
/// `net_backward` needs; in train mode inverted dropout is applied with
/// masks drawn from `dropout_seed`.
Vector net_forward(const NetParams& params, const RowMatrix& x, Mode mode, std::uint64_t dropout_seed = 0,
                   ForwardCache* cache = nullptr);

Vector softmax(const Vector& logits);
double cross_entropy(const Vector& logits, int label);

/// Gradient of the softmax cross-entropy of one sample w.r.t. every
/// parameter, laid out like `params`.
NetParams net_backward(const NetParams& params, const ForwardCache& cache, int label);

/// argmax with ties resolved to the lower class id.
int predict_class(const Vector& logits);

enum class Optimizer { adam, sgd };
std::string_view to_string(Optimizer o);

struct TrainConfig {
  int batch_size = 16;
  double learning_rate = 5e-5;
  int epochs = 30;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::adam;
  double clip_norm = 5.0;  // global gradient norm; 0 disables
};

struct TrainResult {
  NetParams params;
  std::vector<double> loss_history;  // mean training loss per epoch
};

/// Mini-batch training with seeded per-epoch shuffling. Adam uses
/// beta1 0.9, beta2 0.999, eps 1e-8. Throws on a non-finite loss.
TrainResult net_train(const NetConfig& config, const TrainConfig& train, std::span<const RowMatrix> inputs,
                      std::span<const int> labels,
                      const std::function<void(int epoch, double loss)>& on_epoch = {});

struct GradCheckReport {
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;  // perturbation crossed a ReLU / pool switch
  int trials = 0;
  bool finite = true;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor of |a - n| / max(|a|, |n|, floor). Central
  /// differences at h = 1e-5 carry roundoff near eps * |loss| / h ~ 1e-11,
  /// so gradients much smaller than 1e-6 cannot be resolved to 1e-4.
  double floor = 1e-6;
  bool include_zero_input = true;
};

/// Compares `net_backward` with central differences on randomized params
/// and inputs (train mode with a fixed dropout mask). Trial 0 uses an
/// all-zero input when `include_zero_input` is set.
GradCheckReport grad_check(const NetConfig& config, int n_trials, std::uint64_t seed,
                           const GradCheckOptions& options = {});

}  // namespace grunt
