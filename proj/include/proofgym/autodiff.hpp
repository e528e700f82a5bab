#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "proofgym/rng.hpp"

namespace proofgym {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Named row-major parameter tensor with its gradient.
struct Tensor {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<double> value;
  std::vector<double> grad;

  std::size_t size() const { return value.size(); }
  double* row(int r) { return value.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols); }
  const double* row(int r) const { return value.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols); }
};

using ParamId = int;

class ParamStore {
 public:
  /// Uniform(-scale, scale) initialization; scale 0 gives zeros.
  ParamId add(const std::string& name, int rows, int cols, Rng& rng, double scale);
  ParamId find(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.contains(name); }

  Tensor& operator[](ParamId id) { return tensors_.at(static_cast<std::size_t>(id)); }
  const Tensor& operator[](ParamId id) const { return tensors_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tensors_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();

  /// Text container, one tensor per line: "name rows cols v0 v1 ..." with
  /// hexfloat values so that save/load round-trips bitwise.
  std::string serialize() const;
  /// Replaces values of existing tensors; shapes and names must match.
  void deserialize(const std::string& text);

 private:
  std::vector<Tensor> tensors_;
  std::map<std::string, ParamId> index_;
};

struct Adam {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long t = 0;
  std::vector<std::vector<double>> m, v;

  void step(ParamStore& params);
};

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = 0xffffffffu;

enum class Op : std::uint8_t {
  Input,     // constant vector
  ParamVec,  // a whole (vector) parameter
  Gather,    // one row of a parameter table
  MatVec,    // W x
  Add,       // n-ary elementwise sum, summed left to right
  Mul,       // elementwise product
  Sigmoid,
  Tanh,
  OneMinus,
  Concat,
  Dropout,      // input dropout, mask fixed at construction
  SoftmaxXent,  // weight * -log softmax(logits)[target], scalar
  SumAll,       // sum of one vector, scalar
  WeightedSum,  // scale * sum of scalar inputs, scalar
};

const char* to_string(Op op);

struct Node {
  Op op = Op::Input;
  int size = 0;
  int depth = 0;
  ParamId param = -1;
  int row = -1;      // Gather row / SoftmaxXent target
  double scalar = 1;  // SoftmaxXent weight / WeightedSum scale / dropout rate
  std::vector<NodeId> ins;
  std::size_t offset = 0;  // into the value and gradient arenas
  std::size_t mask = 0;    // Dropout: offset into the mask arena
};

struct GraphOptions {
  /// Hash-cons structurally identical nodes (same op, inputs, parameter).
  bool share = true;
  /// Dropout applied to MatVec weights, one mask per matrix per graph.
  double weight_dropout = 0;
  std::uint64_t dropout_seed = 0;
};

namespace detail {

struct ShareKey {
  Op op;
  ParamId param;
  int row;
  double scalar;
  std::vector<NodeId> ins;

  bool operator==(const ShareKey&) const = default;
};

struct ShareKeyHash {
  std::size_t operator()(const ShareKey& k) const noexcept;
};

}  // namespace detail

struct ExecStats {
  std::size_t kernel_calls = 0;  // one per bucket (batched) or node (naive)
  std::size_t buckets = 0;
  int depth = 0;  // number of depth levels executed
  std::map<int, std::size_t> calls_per_depth;
};

/// Reverse-mode computation graph over a parameter store. Nodes are
/// appended in topological order and evaluated lazily. Parameter values
/// must not change while a graph is alive.
class Graph {
 public:
  Graph(ParamStore& params, GraphOptions options = {});

  NodeId input(std::span<const double> values);
  NodeId param(ParamId p);
  NodeId gather(ParamId table, int row);
  NodeId matvec(ParamId w, NodeId x);
  NodeId add(std::span<const NodeId> xs);
  NodeId add(NodeId a, NodeId b) { return add(std::vector<NodeId>{a, b}); }
  NodeId mul(NodeId a, NodeId b);
  NodeId sigmoid(NodeId x);
  NodeId tanh(NodeId x);
  NodeId one_minus(NodeId x);
  NodeId concat(std::span<const NodeId> xs);
  NodeId dropout(NodeId x, double rate);
  NodeId softmax_xent(NodeId logits, int target, double weight = 1);
  NodeId sum_all(NodeId x);
  NodeId weighted_sum(std::span<const NodeId> scalars, double scale);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  ParamStore& params() { return params_; }

  /// Evaluates every node not yet evaluated. Naive: node by node in
  /// creation order. Batched: nodes grouped by (depth, op, size, param);
  /// each group runs as one stacked kernel.
  ExecStats forward(bool batched = true);
  /// Gradients of a scalar node into the parameter store (accumulated).
  ExecStats backward(NodeId loss, bool batched = true);

  std::span<const double> value(NodeId id) const;
  std::span<const double> grad(NodeId id) const;
  double scalar(NodeId id) const { return value(id)[0]; }

 private:
  NodeId push(Node node, bool shareable);
  const std::vector<double>& weights(ParamId w);
  void eval_node(NodeId id);
  void eval_matvec_bucket(const std::vector<NodeId>& bucket);
  void back_node(NodeId id);
  void back_matvec_bucket(const std::vector<NodeId>& bucket);

  ParamStore& params_;
  GraphOptions options_;
  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<double> masks_;
  std::size_t evaluated_ = 0;
  std::unordered_map<detail::ShareKey, NodeId, detail::ShareKeyHash> share_index_;
  std::unordered_map<ParamId, std::vector<double>> masked_weights_;
  std::unordered_map<ParamId, std::vector<double>> weight_masks_;
};

struct GradCheck {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::string worst;  // "tensor[index]"
};

/// Central finite differences against backward(). `build` constructs the
/// scalar loss on a fresh graph; it must be deterministic. At most
/// `max_scalars` parameter entries are checked, spread evenly. The relative
/// error is |a - n| / max(|a|, |n|, floor).
GradCheck check_gradients(ParamStore& params, const std::function<NodeId(Graph&)>& build, double h = 1e-5,
                          std::size_t max_scalars = 500, bool batched = true, double floor = 1e-6);

}  // namespace proofgym
